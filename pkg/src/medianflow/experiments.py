"""Experiment presets, configuration loading and the run driver.

A configuration is a flat mapping of dotted keys (``solver.tau``,
``image_gen.noise_sigma``, ``run.init`` ...).  It starts from the preset's
defaults, is updated from an optional TOML file and finally from
``key=value`` overrides, then resolved into typed objects.
"""
from __future__ import annotations

import copy
import logging
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io
from .filters import SolverConfig
from .grid import ConfigurationError, Grid2D
from .segmentation import (
    SegmentationRun,
    cone,
    jaccard,
    lif_sigma_default,
    segment,
    square_indicator,
)
from .stokes import FlowCase
from .synthetic import ImageSpec, generate_synthetic_image, ground_truth
from .topopt import (
    contraction_case,
    double_pipe_case,
    fluid_connectivity,
    optimize_topology,
)

logger = logging.getLogger(__name__)

PRESETS = ("pinning_compare", "sharpness", "quadratic_demo", "lif_demo",
           "stokes_contraction", "stokes_double_pipe", "custom")
FLOW_CASES = ("contraction", "double_pipe", "custom")
INIT_KINDS = ("cone", "square", "random", "disk")

TAU_LADDER = [9e-4, 7e-4, 5e-4, 3e-4, 1e-4]


def _pinning_scene(margin=0.2, corner_radius=0.1, center_radius=0.15):
    # disks on the corners of the initial square plus one at the center
    a, b = margin, 1.0 - margin
    shapes = [{"kind": "disk", "center": [x, y], "radius": corner_radius}
              for x in (a, b) for y in (a, b)]
    shapes.append({"kind": "disk", "center": [0.5, 0.5], "radius": center_radius})
    return shapes


_BASE = {
    "output_dir": "runs",
    "grid.n": 128,
    "grid.boundary": "mirror",
    "run.model": "cv",
    "run.init": "cone",
    "run.init_margin": 0.1,
    "run.init_radius": 0.3,
    "run.seed": 0,
    "run.snapshot_every": 0,
    "run.snapshot_iters": [],
    "run.histogram_iters": [],
    "run.lif_sigma": None,
}

PRESET_DEFAULTS: dict[str, dict] = {
    "pinning_compare": {
        "solver.tau": 1e-4, "solver.lambda_tilde": 0.6, "solver.K_max": 200, "solver.M": 32,
        "image_gen.shapes": _pinning_scene(), "image_gen.contrast": 0.6,
        "image_gen.noise_sigma": 0.1, "image_gen.seed": 7,
        "run.init": "square", "run.init_margin": 0.2,
        "run.tau_ladder": TAU_LADDER,
        # threshold dynamics uses the sampled heat kernel, the median filter the circle
        "run.methods": ["binary_td:gaussian", "weighted_quantile:circle"],
    },
    "sharpness": {
        "solver.tau": 1e-3, "solver.lambda_tilde": 0.6, "solver.K_max": 200,
        "image_gen.shapes": [{"kind": "disk", "center": [0.5, 0.5], "radius": 0.3}],
        "image_gen.contrast": 1.0, "image_gen.noise_sigma": 0.0, "image_gen.seed": 0,
        "run.init": "cone", "run.histogram_iters": [0, 2, 5, -1],
    },
    "quadratic_demo": {
        "solver.tau": 5e-4, "solver.lambda_tilde": 0.6, "solver.K_max": 90,
        "solver.epsilon": 1e-9, "solver.filter_kind": "quadratic",
        "image_gen.shapes": [
            {"kind": "disk", "center": [0.3, 0.3], "radius": 0.15},
            {"kind": "rect", "center": [0.68, 0.65], "size": [0.35, 0.3]},
            {"kind": "disk", "center": [0.3, 0.75], "radius": 0.1},
        ],
        "image_gen.contrast": 0.8, "image_gen.noise_sigma": 0.1, "image_gen.seed": 5,
        "run.init": "cone", "run.snapshot_iters": [20, 40, 60, 90],
    },
    "lif_demo": {
        "solver.tau": 2e-4, "solver.lambda_tilde": 0.1, "solver.K_max": 150,
        "image_gen.shapes": [
            {"kind": "disk", "center": [0.3, 0.3], "radius": 0.15},
            {"kind": "rect", "center": [0.68, 0.65], "size": [0.35, 0.3]},
        ],
        "image_gen.contrast": 0.6, "image_gen.noise_sigma": 0.05, "image_gen.bias": 0.9,
        "image_gen.seed": 3,
        "run.model": "lif", "run.init": "square", "run.init_margin": 0.1,
        "run.compare_cv": True,
    },
    "stokes_contraction": {
        "grid.n": 96, "solver.tau": 2e-4, "solver.lambda_tilde": 100.0, "solver.K_max": 200,
        "flow.case": "contraction", "flow.beta": 0.45, "run.init": "random", "run.seed": 0,
    },
    "stokes_double_pipe": {
        "grid.n": 96, "solver.tau": 2e-4, "solver.lambda_tilde": 100.0, "solver.K_max": 200,
        "flow.case": "double_pipe", "flow.beta": 0.35, "run.init": "random", "run.seed": 0,
    },
    "custom": {},
}


def preset_defaults(preset: str) -> dict:
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {PRESETS}")
    out = dict(copy.deepcopy(_BASE))
    for f in fields(SolverConfig):
        out[f"solver.{f.name}"] = f.default
    out.update(copy.deepcopy(PRESET_DEFAULTS[preset]))
    out["preset"] = preset
    return out


def flatten(tree: dict, prefix: str = "") -> dict:
    """Nested tables to dotted keys; lists (of tables too) stay values."""
    out = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        try:
            return flatten(tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with a TOML literal value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    if not key:
        raise ConfigurationError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    preset: str
    solver: SolverConfig
    grid: Grid2D
    output_dir: Path
    image_gen: ImageSpec | None = None
    flow: FlowCase | None = None
    options: dict = field(default_factory=dict)
    flat: dict = field(default_factory=dict)

    @property
    def is_topopt(self) -> bool:
        return self.flow is not None


def resolve(flat: dict) -> ExperimentConfig:
    """Type-check a flat mapping and build the config objects."""
    flat = dict(flat)
    preset = flat.get("preset")
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {PRESETS}")
    known_prefixes = ("solver.", "grid.", "image_gen.", "flow.", "run.")
    for key in flat:
        if key not in ("preset", "output_dir") and not key.startswith(known_prefixes):
            raise ConfigurationError(f"unknown configuration key {key!r}")

    solver_names = {f.name for f in fields(SolverConfig)}
    solver_kw = {}
    for key, value in flat.items():
        if key.startswith("solver."):
            name = key[len("solver."):]
            if name not in solver_names:
                raise ConfigurationError(f"unknown solver key {key!r}")
            solver_kw[name] = value
    for name in ("M", "K_max"):
        solver_kw[name] = _as_int(solver_kw[name], f"solver.{name}")
    for name in ("tau", "lambda_tilde", "epsilon", "truncation"):
        solver_kw[name] = _as_float(solver_kw[name], f"solver.{name}")
    solver = SolverConfig(**solver_kw)

    n = _as_int(flat.get("grid.n"), "grid.n")
    grid = Grid2D.unit_square(n, boundary=flat.get("grid.boundary", "mirror"))

    image = None
    flow = None
    flow_keys = [k for k in flat if k.startswith("flow.")]
    if flow_keys:
        flow = _resolve_flow(flat)
    else:
        for key in [k for k in flat if k.startswith("image_gen.")]:
            if key[len("image_gen."):] not in {f.name for f in fields(ImageSpec)}:
                raise ConfigurationError(f"unknown image_gen key {key!r}")
        if flat.get("image_gen.seed") is None:
            raise ConfigurationError("image_gen.seed is required")
        image = ImageSpec(
            shapes=list(flat.get("image_gen.shapes", [])),
            contrast=_as_float(flat.get("image_gen.contrast", 1.0), "image_gen.contrast"),
            noise_sigma=_as_float(flat.get("image_gen.noise_sigma", 0.0), "image_gen.noise_sigma"),
            bias=_as_float(flat.get("image_gen.bias", 0.0), "image_gen.bias"),
            seed=_as_int(flat["image_gen.seed"], "image_gen.seed"),
        )
        # fail early on overlapping or malformed shapes
        ground_truth(image.shapes, grid)

    options = {k[len("run."):]: v for k, v in flat.items() if k.startswith("run.")}
    if options.get("init") not in INIT_KINDS:
        raise ConfigurationError(f"run.init must be one of {INIT_KINDS}")
    if options.get("model") not in ("cv", "lif", "curvature"):
        raise ConfigurationError("run.model must be cv, lif or curvature")
    if options.get("init") == "random" and options.get("seed") is None:
        raise ConfigurationError("run.seed is required for a random initial field")
    for m in options.get("methods", []):
        kind, _, kernel = str(m).partition(":")
        SolverConfig(filter_kind=kind, kernel=kernel or solver.kernel)
    return ExperimentConfig(preset, solver, grid, Path(flat.get("output_dir", "runs")),
                            image, flow, options, flat)


def _resolve_flow(flat):
    case = flat.get("flow.case", "custom")
    if case not in FLOW_CASES:
        raise ConfigurationError(f"flow.case must be one of {FLOW_CASES}")
    kw = {}
    for name in ("eta", "alpha_bar", "beta"):
        if flat.get(f"flow.{name}") is not None:
            kw[name] = _as_float(flat[f"flow.{name}"], f"flow.{name}")
    allowed = {"flow.case", "flow.eta", "flow.alpha_bar", "flow.beta", "flow.segments"}
    for key in flat:
        if key.startswith("flow.") and key not in allowed:
            raise ConfigurationError(f"unknown flow key {key!r}")
    if case == "contraction":
        return contraction_case(**kw)
    if case == "double_pipe":
        return double_pipe_case(**kw)
    segments = flat.get("flow.segments")
    if not segments:
        raise ConfigurationError("flow.case = 'custom' needs flow.segments")
    return FlowCase(segments=list(segments), **kw)


def _as_int(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigurationError(f"{key} must be an integer, got {v!r}")
    return int(v)


def _as_float(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"{key} must be a finite number, got {v!r}")
    return float(v)


def build_config(preset: str | None = None, config_file=None, overrides=(),
                 output_dir=None, seed: int | None = None) -> ExperimentConfig:
    """Layer preset defaults, a TOML file and ``key=value`` overrides, then resolve."""
    file_values = load_toml(config_file) if config_file else {}
    preset = preset or file_values.get("preset")
    if preset is None:
        raise ConfigurationError("no preset given (use --preset or a 'preset' key)")
    flat = preset_defaults(preset)
    flat.update(file_values)
    flat["preset"] = preset
    for item in overrides:
        key, value = parse_override(item)
        flat[key] = value
    if output_dir is not None:
        flat["output_dir"] = str(output_dir)
    if seed is not None:
        if any(k.startswith("flow.") for k in flat):
            flat["run.seed"] = seed
        else:
            flat["image_gen.seed"] = seed
    return resolve(flat)


# -- running -----------------------------------------------------------------

def initial_field(cfg: ExperimentConfig) -> np.ndarray:
    grid, opt = cfg.grid, cfg.options
    kind = opt["init"]
    if kind == "cone":
        return cone(grid)
    if kind == "square":
        return square_indicator(grid, float(opt["init_margin"]))
    if kind == "disk":
        x, y = grid.coordinates()
        return ((x - 0.5) ** 2 + (y - 0.5) ** 2 < float(opt["init_radius"]) ** 2).astype(float)
    return np.random.default_rng(int(opt["seed"])).random(grid.shape)


@dataclass
class RunRecord:
    """Outcome of one solver run inside an experiment."""

    name: str
    rows: list
    phi0: np.ndarray
    phi: np.ndarray
    converged: bool
    seconds: float
    metrics: dict = field(default_factory=dict)


def _segmentation_run(cfg, solver, image, phi0, out: Path, name: str, model=None,
                      truth=None, snapshot_iters=(), snapshot_every=0, histogram_iters=()):
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid
    io.write_pgm(out / "phi_initial.pgm", phi0)
    snaps = set(int(k) for k in snapshot_iters)
    hist_iters = [int(k) for k in histogram_iters]
    if 0 in hist_iters:
        io.write_histogram(out / "histogram_iter0000.csv", phi0)

    def callback(k, phi):
        if k in snaps or (snapshot_every and k % snapshot_every == 0):
            io.write_pgm(out / f"phi_iter{k:04d}.pgm", phi)
        if k in hist_iters:
            io.write_histogram(out / f"histogram_iter{k:04d}.csv", phi)

    run = SegmentationRun(solver, image, phi0, grid, model=model or cfg.options["model"],
                          lif_sigma=cfg.options.get("lif_sigma"))
    start = time.perf_counter()
    segment(run, callback)
    seconds = time.perf_counter() - start
    phi = run.phi_final
    rows = io.trace_rows(run.trace, run.changes, run.wall_ms)
    io.write_trace_csv(out / "trace.csv", rows)
    io.write_pgm(out / "phi_final.pgm", phi)
    io.write_pgm(out / "mask_final.pgm", (phi >= 0.5).astype(float))
    io.write_histogram(out / "histogram.csv", phi)
    if -1 in hist_iters:
        io.write_histogram(out / "histogram_final.csv", phi)
    metrics = {
        "iterations": len(rows),
        "converged": run.converged,
        "binary_fraction": float(np.mean(np.minimum(phi, 1.0 - phi) <= 0.05)),
        "sym_diff_initial": float(np.mean((phi >= 0.5) != (phi0 >= 0.5))),
    }
    if truth is not None:
        metrics["jaccard_truth"] = jaccard(phi >= 0.5, truth)
    return RunRecord(name, rows, phi0, phi, run.converged, seconds, metrics)


def _run_segmentation(cfg: ExperimentConfig, out: Path) -> list[RunRecord]:
    grid = cfg.grid
    image = generate_synthetic_image(cfg.image_gen, grid)
    truth = ground_truth(cfg.image_gen.shapes, grid) if cfg.image_gen.shapes else None
    io.write_pgm(out / "image.pgm", image)
    phi0 = initial_field(cfg)
    opt = cfg.options
    records = []

    if cfg.preset == "pinning_compare" or opt.get("tau_ladder"):
        ladder = [float(t) for t in opt.get("tau_ladder") or [cfg.solver.tau]]
        methods = opt.get("methods") or [f"{cfg.solver.filter_kind}:{cfg.solver.kernel}"]
        summary = []
        for method in methods:
            kind, _, kernel = str(method).partition(":")
            kernel = kernel or cfg.solver.kernel
            for tau in ladder:
                solver = _replace(cfg.solver, tau=tau, filter_kind=kind, kernel=kernel)
                name = f"{kind}_tau{tau:.0e}"
                rec = _segmentation_run(cfg, solver, image, phi0, out / name, name, truth=truth)
                records.append(rec)
                summary.append({"method": kind, "kernel": kernel, "tau": tau,
                                "iterations": rec.metrics["iterations"],
                                "sym_diff_initial": rec.metrics["sym_diff_initial"],
                                "jaccard_truth": rec.metrics.get("jaccard_truth", float("nan")),
                                "final_total": rec.rows[-1]["total"] if rec.rows else float("nan"),
                                "seconds": rec.seconds})
                logger.info("%s: %s", name, rec.metrics)
        io.write_rows_csv(out / "summary.csv", ("method", "kernel", "tau", "iterations",
                                                "sym_diff_initial", "jaccard_truth",
                                                "final_total", "seconds"), summary)
        return records

    rec = _segmentation_run(cfg, cfg.solver, image, phi0, out, cfg.preset, truth=truth,
                            snapshot_iters=opt.get("snapshot_iters", []),
                            snapshot_every=int(opt.get("snapshot_every") or 0),
                            histogram_iters=opt.get("histogram_iters", []))
    records.append(rec)
    if opt.get("compare_cv") and opt["model"] != "cv":
        records.append(_segmentation_run(cfg, cfg.solver, image, phi0, out / "cv_reference",
                                         "cv_reference", model="cv", truth=truth))
    return records


def _run_topopt(cfg: ExperimentConfig, out: Path) -> list[RunRecord]:
    grid = cfg.grid
    phi0 = initial_field(cfg)
    io.write_pgm(out / "phi_initial.pgm", phi0)
    opt = cfg.options
    snaps = set(int(k) for k in opt.get("snapshot_iters", []))
    every = int(opt.get("snapshot_every") or 0)

    def callback(k, phi):
        if k in snaps or (every and k % every == 0):
            io.write_pgm(out / f"phi_iter{k:04d}.pgm", phi)

    start = time.perf_counter()
    res = optimize_topology(cfg.flow, grid, cfg.solver, phi0=phi0, callback=callback)
    seconds = time.perf_counter() - start
    rows = io.trace_rows(res.trace, res.changes, res.wall_ms)
    for row, rep in zip(rows, res.trace):
        row["linearized_fidelity"] = rep.linearized
    io.write_trace_csv(out / "trace.csv", rows, extra=("linearized_fidelity",))
    io.write_pgm(out / "phi_final.pgm", res.phi)
    io.write_pgm(out / "mask_final.pgm", (res.phi >= 0.5).astype(float))
    io.write_histogram(out / "histogram.csv", res.phi)
    speed = np.sqrt(res.state.cell_speed_sq())
    metrics = {
        "iterations": len(rows),
        "converged": res.converged,
        "connected": fluid_connectivity(res.phi, cfg.flow, grid),
        "max_volume_error": max((abs(r["volume"] - cfg.flow.beta * grid.area) for r in rows),
                                default=0.0),
        "binary_fraction": float(np.mean(np.minimum(res.phi, 1.0 - res.phi) <= 0.05)),
        "stokes_residual": res.state.residual,
        "max_divergence": res.state.divergence,
        "max_speed": float(speed.max()),
    }
    return [RunRecord(cfg.preset, rows, phi0, res.phi, res.converged, seconds, metrics)]


def _replace(solver: SolverConfig, **changes) -> SolverConfig:
    kw = {f.name: getattr(solver, f.name) for f in fields(SolverConfig)}
    kw.update(changes)
    return SolverConfig(**kw)


def execute(cfg: ExperimentConfig) -> list[RunRecord]:
    """Run the experiment and write every output file; returns the run records."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    records = _run_topopt(cfg, out) if cfg.is_topopt else _run_segmentation(cfg, out)
    manifest = dict(cfg.flat)
    manifest["grid.h"] = cfg.grid.h
    if cfg.flow is not None:
        manifest["flow.alpha_bar_resolved"] = cfg.flow.resolved_alpha_bar(cfg.grid)
        manifest["flow.eta"] = cfg.flow.eta
        manifest["flow.segments_resolved"] = [vars(s) for s in cfg.flow.segments]
    if cfg.options.get("model") == "lif" and not cfg.is_topopt:
        manifest["run.lif_sigma_resolved"] = (cfg.options.get("lif_sigma")
                                              or lif_sigma_default(cfg.grid))
    manifest["result.seconds"] = round(time.perf_counter() - start, 3)
    for rec in records:
        for key, value in rec.metrics.items():
            manifest[f"result.{rec.name}.{key}"] = value
    manifest["versions.numpy"] = np.__version__
    io.write_manifest(out / "manifest.txt", manifest)
    return records


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run and report; returns a process exit status."""
    try:
        execute(cfg)
    except (ConfigurationError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0

"""Experiment configuration read from a TOML file.

Every key is optional; unknown keys are errors so that typos do not pass
silently. Errors name the file, the line and the offending field.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mesh import BoundaryMarker, MeshError, channel_mesh, load_gmsh
from .metrics import MetricConfig, lame_from_young
from .optimizer import OptimizerConfig
from .stokes import parabolic_inflow, uniform_inflow

CHANNEL = "channel-with-circle"

# desk scale: ~2,400 triangles and 160 obstacle edges
DESK_MESH = {"n_obstacle": 160, "h_max": 0.36, "grading": 0.22, "symmetric": True}
# fine scale: 633 obstacle edges (odd, so the mirrored construction is unavailable)
FINE_MESH = {"n_obstacle": 633, "h_max": 0.3, "grading": 0.17, "symmetric": False}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeshConfig:
    source: str = CHANNEL
    box: tuple = (-3.0, 6.0, -2.0, 2.0)
    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    n_obstacle: int = DESK_MESH["n_obstacle"]
    h_max: float = DESK_MESH["h_max"]
    grading: float = DESK_MESH["grading"]
    symmetric: bool = DESK_MESH["symmetric"]
    markers: dict | None = None

    def build(self, base_dir=Path(".")):
        if self.source == CHANNEL:
            return channel_mesh(self.box, radius=self.radius, center=self.center, n_obstacle=self.n_obstacle,
                                h_max=self.h_max, grading=self.grading, symmetric=self.symmetric)
        path = Path(self.source)
        if not path.is_absolute():
            path = base_dir / path
        return load_gmsh(path, self.markers)


@dataclass(frozen=True)
class InflowConfig:
    profile: str = "uniform"
    magnitude: float = 1.0

    def function(self, box):
        if self.profile == "uniform":
            return uniform_inflow(self.magnitude)
        return parabolic_inflow(self.magnitude, box[2], box[3])


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    snapshots: int = 0
    timing: bool = True


@dataclass(frozen=True)
class LegConfig:
    name: str
    metric: str
    memory: int


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    inflow: InflowConfig = field(default_factory=InflowConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    fixed_multipliers: tuple | None = None
    legs: tuple = (LegConfig("gs", "steklov_poincare", 3), LegConfig("g1", "laplace_beltrami", 0))
    seed: int = 0
    source_text: str = ""
    source_path: str = ""

    @property
    def metric(self):
        return self.optimizer.metric

    def with_overrides(self, output=None, snapshots=None, fine=False):
        cfg = self
        if output is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=str(output)))
        if snapshots is not None:
            if snapshots < 0:
                raise ConfigError("--snapshots must be nonnegative")
            cfg = replace(cfg, output=replace(cfg.output, snapshots=int(snapshots)))
        if fine:
            cfg = replace(cfg, mesh=replace(cfg.mesh, **FINE_MESH))
        return cfg

    def inflow_function(self):
        return self.inflow.function(self.mesh.box)

    def build_mesh(self):
        base = Path(self.source_path).parent if self.source_path else Path(".")
        try:
            return self.mesh.build(base)
        except (MeshError, OSError) as exc:
            raise ConfigError(f"[mesh]: {exc}") from exc


# -- parsing ---------------------------------------------------------------------------------

def _line_of(text, section, key):
    """1-based line of ``key`` inside ``[section]``, or of the section header."""
    current = ""
    header_line = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$", line)
        if m:
            current = m.group(1)
            if current == section and header_line is None:
                header_line = i
            continue
        if current == section and key is not None and re.match(rf"\s*\"?{re.escape(key)}\"?\s*=", line):
            return i
    return header_line


class _Reader:
    def __init__(self, path, text):
        self.path = path
        self.text = text

    def fail(self, section, key, message):
        line = _line_of(self.text, section, key)
        where = f"{self.path}:{line}" if line else str(self.path)
        name = f"[{section}] {key}" if section else str(key)
        raise ConfigError(f"{where}: {name}: {message}")

    def take(self, table, section, allowed):
        unknown = sorted(set(table) - set(allowed))
        if unknown:
            self.fail(section, unknown[0], f"unknown key (allowed: {', '.join(sorted(allowed))})")
        out = {}
        for key, kind in allowed.items():
            if key in table:
                out[key] = self.convert(table[key], kind, section, key)
        return out

    def convert(self, value, kind, section, key):
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(section, key, f"expected a number, got {value!r}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(section, key, f"expected an integer, got {value!r}")
            return value
        if kind is bool:
            if not isinstance(value, bool):
                self.fail(section, key, f"expected true or false, got {value!r}")
            return value
        if kind is str:
            if not isinstance(value, str):
                self.fail(section, key, f"expected a string, got {value!r}")
            return value
        if isinstance(kind, tuple):
            n = kind[0]
            if not isinstance(value, list) or (n is not None and len(value) != n):
                self.fail(section, key, f"expected a list of {n or 'some'} numbers, got {value!r}")
            return tuple(self.convert(v, float, section, key) for v in value)
        if kind is dict:
            if not isinstance(value, dict):
                self.fail(section, key, "expected a table")
            return dict(value)
        raise AssertionError(kind)


_MESH_KEYS = {"source": str, "box": (4,), "center": (2,), "radius": float, "n_obstacle": int, "h_max": float,
              "grading": float, "symmetric": bool, "markers": dict}
_INFLOW_KEYS = {"profile": str, "magnitude": float}
_METRIC_KEYS = {"kind": str, "A": float, "mu_min": float, "mu_max": float, "lambda_elas": float,
                "young": float, "poisson": float}
_OPT_KEYS = {"memory": int, "step_tol": float, "constraint_tol": float, "penalty": float,
             "penalty_increase": float, "multiplier_tol": float, "max_inner": int, "max_outer": int,
             "initial_scale": float, "max_step": float, "backtrack": float, "max_backtracks": int,
             "quality_cap": float, "armijo": float, "keep_memory": bool, "fixed_multipliers": (3,)}
_OUTPUT_KEYS = {"directory": str, "snapshots": int, "timing": bool}
_LEG_KEYS = {"name": str, "metric": str, "memory": int}


def parse_config(text, path="<config>"):
    """Validate TOML text into an :class:`ExperimentConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    r = _Reader(path, text)
    top = r.take({k: v for k, v in data.items() if not isinstance(v, dict)}, "", {"seed": int})
    sections = {k: v for k, v in data.items() if isinstance(v, dict)}
    unknown = sorted(set(sections) - {"mesh", "inflow", "metric", "optimizer", "output", "compare"})
    if unknown:
        r.fail("", unknown[0], "unknown section")

    mesh_kw = r.take(sections.get("mesh", {}), "mesh", _MESH_KEYS)
    if "markers" in mesh_kw:
        markers = {}
        for tag, name in mesh_kw["markers"].items():
            try:
                markers[int(tag) if str(tag).lstrip("-").isdigit() else tag] = BoundaryMarker.parse(name)
            except (ValueError, KeyError):
                r.fail("mesh.markers", tag, f"unknown boundary marker {name!r}")
        mesh_kw["markers"] = markers
    mesh = MeshConfig(**mesh_kw)
    if mesh.source == CHANNEL:
        if not mesh.radius > 0:
            r.fail("mesh", "radius", "must be positive")
        if mesh.n_obstacle < 3:
            r.fail("mesh", "n_obstacle", "need at least 3 obstacle edges")
        if mesh.symmetric and mesh.n_obstacle % 2:
            if "symmetric" in mesh_kw:
                r.fail("mesh", "symmetric", "needs an even n_obstacle")
            r.fail("mesh", "n_obstacle", "odd counts need symmetric = false")
        if not (mesh.h_max > 0 and mesh.grading > 0):
            r.fail("mesh", "h_max", "h_max and grading must be positive")
        x0, x1, y0, y1 = mesh.box
        if not (x0 < x1 and y0 < y1):
            r.fail("mesh", "box", "expected [xmin, xmax, ymin, ymax] with min < max")

    inflow = InflowConfig(**r.take(sections.get("inflow", {}), "inflow", _INFLOW_KEYS))
    if inflow.profile not in ("uniform", "parabolic"):
        r.fail("inflow", "profile", "expected 'uniform' or 'parabolic'")

    mkw = r.take(sections.get("metric", {}), "metric", _METRIC_KEYS)
    young, poisson = mkw.pop("young", None), mkw.pop("poisson", None)
    if (young is None) != (poisson is None):
        r.fail("metric", "young" if young is None else "poisson", "young and poisson must be given together")
    if young is not None:
        try:
            lam, mu = lame_from_young(young, poisson)
        except ValueError as exc:
            r.fail("metric", "young", str(exc))
        # explicit Lamé input takes precedence
        mkw.setdefault("lambda_elas", lam)
        mkw.setdefault("mu_min", mu)
        mkw.setdefault("mu_max", mu)
    try:
        metric = MetricConfig(**mkw)
    except ValueError as exc:
        r.fail("metric", next(iter(mkw), "kind"), str(exc))

    okw = r.take(sections.get("optimizer", {}), "optimizer", _OPT_KEYS)
    fixed = okw.pop("fixed_multipliers", None)
    try:
        opt = OptimizerConfig(metric=metric, **okw)
    except ValueError as exc:
        r.fail("optimizer", _guess_key(str(exc), okw), str(exc))
    for key in ("max_step", "initial_scale", "quality_cap", "armijo"):
        if not getattr(opt, key) > 0:
            r.fail("optimizer", key, "must be positive")

    out = OutputConfig(**r.take(sections.get("output", {}), "output", _OUTPUT_KEYS))
    if out.snapshots < 0:
        r.fail("output", "snapshots", "must be nonnegative")

    legs = ExperimentConfig.legs
    compare = sections.get("compare", {})
    if compare:
        if set(compare) - {"runs"} or not isinstance(compare.get("runs"), list):
            r.fail("compare", next(iter(set(compare) - {"runs"}), "runs"), "expected [[compare.runs]] tables")
        legs = []
        for leg in compare["runs"]:
            kw = r.take(leg, "compare.runs", _LEG_KEYS)
            if set(kw) != set(_LEG_KEYS):
                r.fail("compare.runs", sorted(set(_LEG_KEYS) - set(kw))[0], "missing key")
            try:
                kind = MetricConfig(kw["metric"]).kind
            except ValueError as exc:
                r.fail("compare.runs", "metric", str(exc))
            if kw["memory"] < 0:
                r.fail("compare.runs", "memory", "must be >= 0")
            legs.append(LegConfig(kw["name"], kind, kw["memory"]))
        names = [leg.name for leg in legs]
        if len(set(names)) != len(names) or not names:
            r.fail("compare.runs", "name", "run names must be unique and nonempty")
        legs = tuple(legs)

    return ExperimentConfig(mesh, inflow, opt, out, fixed, legs, top.get("seed", 0), text, str(path))


def _guess_key(message, given):
    name = message.split(":", 1)[0]
    return name if name in _OPT_KEYS else next(iter(given), "optimizer")


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    return parse_config(text, path)

"""Run configuration: INI text with sections, lossless round trip, content hash."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

from .dynamics import SchemeConfig
from .grid import GEOMETRIES, MIN_CELLS, ConfigurationError
from .motility import DEFAULT_S_MIN, KINDS, Motility

INITIAL_KINDS = ("constant", "gaussian_bump", "perturbed", "blowup", "steady")
EXPERIMENTS = ("run", "construct", "steady", "asymptotics")


@dataclass(frozen=True)
class GridSpec:
    geometry: str = "disk"
    extent: float = 1.0
    n_cells: int = 512


@dataclass(frozen=True)
class MotilitySpec:
    # c0 = 1, k = 1 are defaults of convenience for the power families
    kind: str = "exp"
    c0: float = 1.0
    k: float = 1.0
    s_min: float = DEFAULT_S_MIN

    def build(self) -> Motility:
        return Motility(self.kind, self.c0, self.k, self.s_min)


@dataclass(frozen=True)
class InitialSpec:
    """Initial density.  ``mass`` (if > 0) rescales standard profiles.

    ``blowup`` uses ``Lambda, lam, r, r1``; ``steady`` starts from the
    converged mean-field state of mass ``mass`` (Newton from the constant).
    """

    kind: str = "gaussian_bump"
    c: float = 1.0
    amp: float = 1.0
    width: float = 0.3
    eps: float = 0.0
    mass: float = 0.0
    Lambda: float = 10 * math.pi
    lam: float = 100.0
    r: float = 0.5
    r1: float = 0.25


@dataclass(frozen=True)
class DiagnosticsSpec:
    every: int = 100
    alphas: tuple = (1.0,)
    p_values: tuple = (2.0,)
    snapshot_times: tuple = ()
    checkpoint_every: int = 0


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "run"
    lambdas: tuple = (100.0, 1000.0, 10000.0)
    Lambda_start: float = math.pi
    Lambda_end: float = 3 * math.pi
    steps: int = 8
    # reserved; nothing in the core draws random numbers
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    motility: MotilitySpec = field(default_factory=MotilitySpec)
    mu: float = 0.0
    initial: InitialSpec = field(default_factory=InitialSpec)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    output_dir: str = "out"

    def validate(self):
        g = self.grid
        if g.geometry not in GEOMETRIES:
            raise ConfigurationError(f"grid.geometry must be one of {GEOMETRIES}")
        if g.n_cells < MIN_CELLS or not (math.isfinite(g.extent) and g.extent > 0):
            raise ConfigurationError(f"grid needs n_cells >= {MIN_CELLS} and a finite extent > 0")
        if self.motility.kind not in KINDS:
            raise ConfigurationError(f"motility.kind must be one of {KINDS}")
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ConfigurationError("model.mu must be finite and >= 0")
        if self.initial.kind not in INITIAL_KINDS:
            raise ConfigurationError(f"initial.kind must be one of {INITIAL_KINDS}")
        if self.experiment.kind not in EXPERIMENTS:
            raise ConfigurationError(f"experiment.kind must be one of {EXPERIMENTS}")
        d = self.diagnostics
        if d.every < 1 or d.checkpoint_every < 0:
            raise ConfigurationError("diagnostics.every must be >= 1 and checkpoint_every >= 0")
        if any(t < 0 for t in d.snapshot_times):
            raise ConfigurationError("diagnostics.snapshot_times must be >= 0")
        if not d.alphas or not d.p_values or any(p < 1 for p in d.p_values):
            raise ConfigurationError("diagnostics needs alphas and p_values >= 1")
        ex = self.experiment
        if ex.steps < 1 or not ex.lambdas:
            raise ConfigurationError("experiment needs steps >= 1 and a non-empty lambdas list")
        try:
            self.motility.build()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        return self

    # -- serialisation ----------------------------------------------------------
    def to_ini(self) -> str:
        sections = {
            "grid": self.grid,
            "motility": self.motility,
            "model": {"mu": self.mu},
            "initial": self.initial,
            "scheme": self.scheme,
            "diagnostics": self.diagnostics,
            "experiment": self.experiment,
            "output": {"directory": self.output_dir},
        }
        lines = []
        for name, obj in sections.items():
            lines.append(f"[{name}]")
            items = obj.items() if isinstance(obj, dict) else (
                (f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj))
            for key, value in items:
                lines.append(f"{key} = {_fmt(value)}")
            lines.append("")
        return "\n".join(lines)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse config: {exc}") from exc
        known = {"grid", "motility", "model", "initial", "scheme", "diagnostics", "experiment", "output"}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigurationError(f"unknown config sections: {sorted(extra)}")

        def build(kind, section):
            if not cp.has_section(section):
                return kind()
            return _from_section(kind, cp[section], section)

        model = cp["model"] if cp.has_section("model") else {}
        unknown = set(model) - {"mu"}
        if unknown:
            raise ConfigurationError(f"unknown keys in [model]: {sorted(unknown)}")
        try:
            mu = float(model.get("mu", 0.0))
        except ValueError as exc:
            raise ConfigurationError(f"model.mu: {exc}") from exc
        out = cp["output"] if cp.has_section("output") else {}
        unknown = set(out) - {"directory"}
        if unknown:
            raise ConfigurationError(f"unknown keys in [output]: {sorted(unknown)}")
        cfg = cls(
            grid=build(GridSpec, "grid"),
            motility=build(MotilitySpec, "motility"),
            mu=mu,
            initial=build(InitialSpec, "initial"),
            scheme=build(SchemeConfig, "scheme"),
            diagnostics=build(DiagnosticsSpec, "diagnostics"),
            experiment=build(ExperimentSpec, "experiment"),
            output_dir=out.get("directory", "out"),
        )
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_ini(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def _parse(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    return raw


def _from_section(kind, section, name):
    defaults = kind()
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(section) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    kwargs = {}
    for key, raw in section.items():
        try:
            kwargs[key] = _parse(raw, getattr(defaults, key))
        except ValueError as exc:
            raise ConfigurationError(f"{name}.{key}: {exc}") from exc
    try:
        return kind(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{name}]: {exc}") from exc

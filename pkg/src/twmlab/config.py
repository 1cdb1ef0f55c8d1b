"""Experiment configuration: INI files with sections, overridable from the CLI.

Values may be plain numbers or small arithmetic expressions using ``pi`` and
``sqrt`` (e.g. ``r3 = 6/sqrt(2)``).  ``r3 = netr`` selects the
no-energy-transfer amplitude; ``stop = auto`` picks the plateau run length.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .classical import netr_amplitude
from .ensemble import plateau_time
from .quantum import DEFAULT_EPS_TRUNC, DEFAULT_MAX_DIM, DEGENERATE, NONDEGENERATE, ModelKind


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and field."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}


def eval_number(text: str) -> float:
    """Evaluate a numeric literal or a small arithmetic expression."""
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"not a number: {text!r}")
    try:
        return float(ev(ast.parse(text.strip(), mode="eval")))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def parse_list(text: str) -> tuple[float, ...]:
    """Comma-separated numbers, or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = [eval_number(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n <= 0:
            raise ValueError(f"empty range {text!r}")
        return tuple(start + i * step for i in range(n))
    return tuple(eval_number(p) for p in text.split(","))


@dataclass
class ModelSection:
    kind: str = NONDEGENERATE
    g: float = 1.0
    g_prime: float = 1.0 / math.sqrt(2.0)


@dataclass
class InitialSection:
    r1: float = 0.0
    r2: float = 0.0
    r3: object = 0.0  # float or "netr"
    phi1: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0


@dataclass
class TimeSection:
    start: float = 0.0
    stop: object = 1.0  # float or "auto"
    count: int = 101


@dataclass
class QuantumSection:
    eps_trunc: float = DEFAULT_EPS_TRUNC
    max_dim: int = DEFAULT_MAX_DIM
    snapshots: tuple = ()
    q_points: int = 101


@dataclass
class EnsembleSection:
    n_traj: int = 10_000
    seed: int = 0
    sigma2: float = 0.25
    snapshots: tuple = ()
    cloud_points: int = 10_000
    chunk: int = 500
    tol: float = 1e-10


@dataclass
class ClassicalSection:
    tol: float = 1e-10
    atol: float = 0.0  # 0 selects the integrator default
    check: str = "none"


@dataclass
class SweepSection:
    amplitudes: tuple = (2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    regime: str = "zero"
    points: int = 301
    weighting: str = "y"


@dataclass
class RunSection:
    workers: int = 1
    out: str = "out"
    format: str = "csv"


SECTIONS = {
    "model": ModelSection,
    "initial": InitialSection,
    "time": TimeSection,
    "quantum": QuantumSection,
    "ensemble": EnsembleSection,
    "classical": ClassicalSection,
    "sweep": SweepSection,
    "run": RunSection,
}

_CHOICES = {
    ("model", "kind"): (NONDEGENERATE, DEGENERATE),
    ("classical", "check"): ("none", "tanh2", "sech2", "netr", "exact"),
    ("sweep", "regime"): ("zero", "netr"),
    ("sweep", "weighting"): ("y", "yx2"),
    ("run", "format"): ("csv", "json"),
}


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    initial: InitialSection = field(default_factory=InitialSection)
    time: TimeSection = field(default_factory=TimeSection)
    quantum: QuantumSection = field(default_factory=QuantumSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    classical: ClassicalSection = field(default_factory=ClassicalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)
    sources: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("sources")
        return d

    # derived quantities -------------------------------------------------
    def model_kind(self) -> ModelKind:
        if self.model.kind == NONDEGENERATE:
            return ModelKind.nondegenerate(self.model.g)
        return ModelKind.degenerate(self.model.g_prime)

    @property
    def coupling(self) -> float:
        return self.model.g if self.model.kind == NONDEGENERATE else self.model.g_prime

    def moduli(self) -> tuple[float, float, float]:
        r1, r2, r3 = self.initial.r1, self.initial.r2, self.initial.r3
        if r3 == "netr":
            if self.model.kind == DEGENERATE:
                # alpha1' = alpha2 and alpha3 = sqrt(2) alpha3' map onto r1 = r2
                r3 = netr_amplitude(r1, r1) / math.sqrt(2.0)
            else:
                r3 = netr_amplitude(r1, r2)
        return float(r1), float(r2), float(r3)

    def amplitudes(self) -> tuple[complex, ...]:
        """Initial complex amplitudes of the model's modes."""
        r1, r2, r3 = self.moduli()
        i = self.initial
        a1 = r1 * complex(math.cos(i.phi1), math.sin(i.phi1))
        a2 = r2 * complex(math.cos(i.phi2), math.sin(i.phi2))
        a3 = r3 * complex(math.cos(i.phi3), math.sin(i.phi3))
        return (a1, a2, a3) if self.model.kind == NONDEGENERATE else (a1, a3)

    def time_grid(self) -> np.ndarray:
        t = self.time
        stop = t.stop
        if stop == "auto":
            stop = plateau_time([abs(a) for a in self.amplitudes()], self.coupling)
        if t.count < 1:
            raise ConfigError("[time] count: empty time grid")
        if stop < t.start:
            raise ConfigError("[time] stop must not precede start")
        return np.linspace(t.start, stop, t.count)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every key, for error messages."""
    where, section = {}, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        for sep in ("=", ":"):
            if sep in line:
                where[(section, line.split(sep, 1)[0].strip().lower())] = lineno
                break
    return where


def _convert(section: str, key: str, raw: str, default):
    raw = raw.strip()
    choices = _CHOICES.get((section, key))
    if choices is not None:
        if raw not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {raw!r}")
        return raw
    if (section, key) == ("initial", "r3") and raw == "netr":
        return raw
    if (section, key) == ("time", "stop") and raw == "auto":
        return raw
    if isinstance(default, tuple):
        return parse_list(raw)
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        v = eval_number(raw)
        if v != int(v):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(v)
    if isinstance(default, float) or default is None:
        return eval_number(raw)
    return raw


def _validate(section: str, key: str, value):
    positive = {("model", "g"), ("model", "g_prime"), ("quantum", "eps_trunc"),
                ("quantum", "max_dim"), ("ensemble", "sigma2"), ("ensemble", "chunk"),
                ("classical", "tol"), ("sweep", "points"), ("run", "workers"),
                ("quantum", "q_points")}
    nonneg = {("initial", "r1"), ("initial", "r2"), ("initial", "r3"), ("time", "start"),
              ("ensemble", "cloud_points"), ("classical", "atol"), ("time", "count")}
    if (section, key) in positive and not value > 0:
        raise ValueError(f"must be positive, got {value!r}")
    if (section, key) in nonneg and isinstance(value, (int, float)) and value < 0:
        raise ValueError(f"must be non-negative, got {value!r}")
    if (section, key) == ("ensemble", "n_traj") and value < 2:
        raise ValueError("needs at least 2 trajectories")
    if (section, key) == ("sweep", "amplitudes") and (not value or min(value) <= 0):
        raise ValueError("needs at least one positive amplitude")


def apply_setting(cfg: ExperimentConfig, section: str, key: str, raw: str, origin: str):
    section, key = section.strip().lower(), key.strip().lower()
    if section not in SECTIONS:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    target = getattr(cfg, section)
    names = {f.name for f in fields(target)}
    if key not in names:
        raise ConfigError(f"{origin}: [{section}] unknown key {key!r}")
    default = getattr(SECTIONS[section](), key)
    try:
        value = _convert(section, key, raw, default)
        _validate(section, key, value)
    except ValueError as exc:
        raise ConfigError(f"{origin}: [{section}] {key}: {exc}") from None
    setattr(target, key, value)


def load_text(cfg: ExperimentConfig, text: str, name: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from None
    lines = _key_lines(text)
    for section in parser.sections():
        for key, raw in parser.items(section):
            line = lines.get((section, key), "?")
            apply_setting(cfg, section, key, raw, f"{name}:{line}")
    cfg.sources.append(name)
    return cfg


def load_file(cfg: ExperimentConfig, path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return load_text(cfg, text, str(path))


def preset_names() -> list[str]:
    root = resources.files("twmlab") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_preset(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    res = resources.files("twmlab") / "presets" / f"{name}.ini"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return load_text(cfg, res.read_text(), f"preset:{name}")


def apply_override(cfg: ExperimentConfig, spec: str) -> ExperimentConfig:
    """``section.key=value`` from the command line."""
    if "=" not in spec or "." not in spec.split("=", 1)[0]:
        raise ConfigError(f"--set {spec!r}: expected section.key=value")
    lhs, raw = spec.split("=", 1)
    section, key = lhs.split(".", 1)
    apply_setting(cfg, section, key, raw, f"--set {lhs}")
    return cfg

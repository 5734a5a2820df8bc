"""Regime configuration files.

A regime file is flat ``key = value`` text; ``#`` starts a comment. The
circuit keys are required, ``a``/``b`` (observation scale and shift) and
``notes`` are optional.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import DimensionlessParams, PhysicalSetup, to_dimensionless
from .preprocess import ObservationModel

REQUIRED_KEYS = (
    "omega_rg_hz", "m", "omega_0_hz", "n", "omega_h_rad_s",
    "r1_ohm", "c1_f", "r2_ohm", "c2_f",
)
_SETUP_FIELDS = {
    "omega_rg_hz": "omega_rg", "m": "m", "omega_0_hz": "omega_0", "n": "n",
    "omega_h_rad_s": "omega_h", "r1_ohm": "r1", "c1_f": "c1", "r2_ohm": "r2", "c2_f": "c2",
}
_INT_KEYS = {"m", "n"}


class ConfigError(ValueError):
    """Malformed regime file; carries the file and offending field."""

    def __init__(self, path, message, key=None, line=None):
        where = str(path)
        if line is not None:
            where += f":{line}"
        if key is not None:
            where += f" [{key}]"
        super().__init__(f"{where}: {message}")
        self.path, self.key, self.line = path, key, line


@dataclass(frozen=True)
class RegimeConfig:
    name: str
    physical: PhysicalSetup
    observation: ObservationModel = field(default_factory=ObservationModel)
    notes: str = ""
    source: str | None = None
    digest: str | None = None

    def params(self) -> DimensionlessParams:
        """Model parameters with the detuning oriented so the phase drifts forward."""
        return to_dimensionless(self.physical).canonical()

    def raw_params(self) -> DimensionlessParams:
        return to_dimensionless(self.physical)


def parse_regime(text: str, path="<string>") -> RegimeConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(path, f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(path, "duplicate key", key=key, line=lineno)
        values[key] = (value, lineno)

    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(path, f"missing keys: {', '.join(missing)}")

    kwargs = {}
    for key in REQUIRED_KEYS:
        text_value, lineno = values[key]
        try:
            num = float(text_value)
            if key in _INT_KEYS:
                if num != int(num):
                    raise ValueError
                num = int(num)
        except ValueError:
            raise ConfigError(path, f"not a valid number: {text_value!r}", key=key, line=lineno) from None
        kwargs[_SETUP_FIELDS[key]] = num
    try:
        physical = PhysicalSetup(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None

    obs = {}
    for key in ("a", "b"):
        if key in values:
            text_value, lineno = values[key]
            try:
                obs[key] = float(text_value)
            except ValueError:
                raise ConfigError(path, f"not a valid number: {text_value!r}", key=key, line=lineno) from None
    try:
        observation = ObservationModel(**obs)
    except ValueError as exc:
        raise ConfigError(path, str(exc), key="a") from None

    name = values.get("name", (Path(str(path)).stem, None))[0]
    notes = values.get("notes", ("", None))[0]
    return RegimeConfig(
        name=name,
        physical=physical,
        observation=observation,
        notes=notes,
        source=str(path),
        digest=hashlib.sha256(text.encode()).hexdigest(),
    )


def load_regime(path) -> RegimeConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc.strerror}") from None
    return parse_regime(text, path)


def dump_regime(cfg: RegimeConfig) -> str:
    p = cfg.physical
    lines = [
        f"name = {cfg.name}",
        f"omega_rg_hz = {p.omega_rg!r}",
        f"m = {p.m}",
        f"omega_0_hz = {p.omega_0!r}",
        f"n = {p.n}",
        f"omega_h_rad_s = {p.omega_h!r}",
        f"r1_ohm = {p.r1!r}",
        f"c1_f = {p.c1!r}",
        f"r2_ohm = {p.r2!r}",
        f"c2_f = {p.c2!r}",
        f"a = {cfg.observation.a!r}",
        f"b = {cfg.observation.b!r}",
    ]
    if cfg.notes:
        lines.append(f"notes = {cfg.notes}")
    return "\n".join(lines) + "\n"


def bundled_dir() -> Path:
    return Path(str(resources.files("pllident") / "regimes"))


BUNDLED_ORDER = ("1b", "2c", "3d", "4", "5e", "6", "C_f")


def load_bundle(path=None) -> list[RegimeConfig]:
    """Load every ``*.cfg`` in a directory (default: the bundled regimes)."""
    directory = bundled_dir() if path is None else Path(path)
    configs = [load_regime(p) for p in sorted(directory.glob("*.cfg"))]
    names = [c.name for c in configs]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ConfigError(directory, f"duplicate regime names: {sorted(dupes)}")
    rank = {n: i for i, n in enumerate(BUNDLED_ORDER)}
    configs.sort(key=lambda c: (rank.get(c.name, len(rank)), c.name))
    return configs


def load_configs(path=None) -> list[RegimeConfig]:
    """A single file, a directory of files, or the bundled set."""
    if path is not None and Path(path).is_file():
        return [load_regime(path)]
    return load_bundle(path)


def bundled_regime(name: str) -> RegimeConfig:
    for cfg in load_bundle():
        if cfg.name == name:
            return cfg
    raise KeyError(name)

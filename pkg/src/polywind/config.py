"""Experiment configuration: flat key=value files, flag overrides, hashing.

Grammar of a config file: one `key=value` per line; blank lines and lines
starting with '#' are ignored; inline comments are not supported (an '=' is
split only once, the remainder is the value).  Keys use the same names as
the CLI flags.  Unknown keys, type mismatches, and out-of-range values are
rejected with the key name (and line number for file input).

The configuration hash covers exactly the inputs that determine the numbers
in the results: experiment, physics and lattice parameters, replica count,
and seed.  Output location and thread count are excluded so that re-running
elsewhere or with different parallelism reproduces the same hash (and must
reproduce the same bytes).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .grid import GridSpec

EXPERIMENTS = (
    "kernel-check",
    "sigma",
    "sigma-stationary",
    "mixing",
    "clt",
    "stationary-check",
    "tails",
    "ratio-stationarity",
    "moments",
    "cf-compare",
    "sweep-L",
)


class ConfigError(ValueError):
    """A configuration value is missing, unknown, malformed, or out of range."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run needs, with validated ranges."""

    experiment: str
    beta: float = 1.0
    n_units: int = 64
    replicas: int = 100
    seed: int = 1
    points_per_unit: int = 128
    steps_per_unit: int = 1000
    winding_blocks: int = 4
    circumference: int = 1
    threads: int = 0
    output_dir: str = "runs"
    assert_gates: bool = False

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            points_per_unit=self.points_per_unit,
            steps_per_unit=self.steps_per_unit,
            winding_blocks=self.winding_blocks,
            circumference=self.circumference,
            noise_strength=self.beta,
        )

    def canonical(self) -> str:
        """Stable textual form of the hash-relevant parameters."""
        items = [
            ("experiment", self.experiment),
            ("beta", repr(float(self.beta))),
            ("N", str(self.n_units)),
            ("M", str(self.points_per_unit)),
            ("L", str(self.circumference)),
            ("J", str(self.winding_blocks)),
            ("steps", str(self.steps_per_unit)),
            ("replicas", str(self.replicas)),
            ("seed", str(self.seed)),
        ]
        return "\n".join(f"{k}={v}" for k, v in items)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


# key -> (attribute, parser, validator description)
_INT_KEYS = {
    "N": ("n_units", 1, None),
    "M": ("points_per_unit", 8, None),
    "L": ("circumference", 1, None),
    "J": ("winding_blocks", 2, None),
    "steps": ("steps_per_unit", 100, None),
    "replicas": ("replicas", 2, None),
    "seed": ("seed", 0, None),
    "threads": ("threads", 0, None),
}


def read_config_file(path) -> dict:
    """Parse a flat key=value file into raw string values.

    Returns {key: (value, line_number)}; duplicate keys keep the last
    occurrence (documented), unknown keys raise immediately.
    """
    values: dict[str, tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if key not in _valid_keys():
                raise ConfigError(
                    f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                    + ", ".join(sorted(_valid_keys()))
                )
            values[key] = (value, lineno)
    return values


def _valid_keys():
    return set(_INT_KEYS) | {"experiment", "beta", "out", "assert"}


def build_config(file_values: dict | None = None, flags: dict | None = None) -> ExperimentConfig:
    """Merge file values and flag overrides into a validated config.

    `file_values` is the mapping from read_config_file; `flags` maps the
    same key names to already-typed values (None entries are ignored).
    Flags take precedence over the file.
    """
    merged: dict[str, object] = {}
    origin: dict[str, str] = {}
    for key, (text, lineno) in (file_values or {}).items():
        merged[key] = _parse_value(key, text, f"line {lineno}")
        origin[key] = f"line {lineno}"
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in _valid_keys():
            raise ConfigError(f"unknown key {key!r}")
        merged[key] = value
        origin[key] = "flag"

    experiment = merged.get("experiment")
    if experiment is None:
        raise ConfigError(
            "missing experiment; valid values: " + ", ".join(EXPERIMENTS)
        )
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; valid values: " + ", ".join(EXPERIMENTS)
        )

    kwargs: dict[str, object] = {"experiment": experiment}
    if "beta" in merged:
        beta = float(merged["beta"])  # already typed via _parse_value or flags
        if beta < 0:
            raise ConfigError(f"beta must be >= 0, got {beta} ({origin.get('beta', 'flag')})")
        kwargs["beta"] = beta
    for key, (attr, low, _) in _INT_KEYS.items():
        if key in merged:
            value = int(merged[key])
            if value < low:
                raise ConfigError(
                    f"{key} must be >= {low}, got {value} ({origin.get(key, 'flag')})"
                )
            kwargs[attr] = value
    if "out" in merged:
        kwargs["output_dir"] = str(merged["out"])
    if "assert" in merged:
        kwargs["assert_gates"] = bool(merged["assert"])
    try:
        config = ExperimentConfig(**kwargs)
        config.grid_spec()  # surface lattice-level range errors with context
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return config


def _parse_value(key: str, text: str, where: str):
    if key == "experiment":
        return text
    if key == "out":
        return text
    if key == "assert":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"assert must be boolean, got {text!r} ({where})")
    if key == "beta":
        try:
            return float(text)
        except ValueError as err:
            raise ConfigError(f"beta must be a number, got {text!r} ({where})") from err
    if key in _INT_KEYS:
        try:
            return int(text)
        except ValueError as err:
            raise ConfigError(f"{key} must be an integer, got {text!r} ({where})") from err
    raise ConfigError(f"unknown key {key!r} ({where})")

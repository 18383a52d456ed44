"""Plain-text run configuration: namespaced key=value pairs.

Unknown keys are rejected. Every run resolves the full schema (defaults
plus file plus --set overrides), logs the resolved text, and derives a
12-hex-digit hash from it that names the run directory and is embedded in
the artifacts it produces.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _intlist(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _choice(*options: str):
    def parse(text: str) -> str:
        if text not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return text
    return parse


def _ranged(kind, lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(text: str):
        value = kind(text)
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise ConfigError(f"value {value} below minimum {lo}")
        if hi is not None and (value >= hi if hi_open else value > hi):
            raise ConfigError(f"value {value} above maximum {hi}")
        return value
    return parse


# key -> (parser, default as text)
SCHEMA: dict[str, tuple] = {
    "dataset.manifest": (str, ""),
    "dataset.scenario": (_choice("s1", "s2", "s3", "s4", "full"), "s1"),
    "dataset.complete": (_bool, "true"),
    "dataset.completion_seed": (int, "0"),
    "dataset.k_folds": (_ranged(int, lo=2), "4"),
    "dataset.split_seed": (int, "0"),
    "dataset.subject_folds": (_bool, "false"),
    "preprocess.sigma": (_ranged(float, lo=0.0, lo_open=True), "2.0"),
    "preprocess.threshold": (_ranged(float, lo=0.0), "0.15"),
    "preprocess.min_blob": (_ranged(int, lo=0), "10"),
    "preprocess.connectivity": (_ranged(int, lo=4, hi=8), "4"),
    "features.cell": (_ranged(int, lo=1), "8"),
    "features.block": (_ranged(int, lo=1), "2"),
    "features.bins": (_ranged(int, lo=2), "9"),
    "features.voting": (_choice("bilinear", "nearest"), "bilinear"),
    "features.variability": (_ranged(float, lo=0.0, hi=0.99, lo_open=True), "0.75"),
    "features.fit_scope": (_choice("all", "train"), "all"),
    "reservoir.n": (_ranged(int, lo=1), "600"),
    "reservoir.alpha": (float, "1.5"),
    "reservoir.beta": (float, "0.0032"),
    "reservoir.reset": (_bool, "true"),
    "reservoir.reset_mode": (_choice("hard_zero", "washout"), "hard_zero"),
    "reservoir.washout_steps": (_ranged(int, lo=0), "2"),
    "reservoir.strict_ring": (_bool, "false"),
    "readout.toi": (_intlist, "1,5,8,9,10"),
    "readout.lambda": (_ranged(float, lo=0.0), "0.22"),
    "hyperopt.budget": (_ranged(int, lo=1), "200"),
    "hyperopt.seed": (int, "0"),
    "hyperopt.fit_starts": (_ranged(int, lo=1), "16"),
    "hyperopt.alpha_min": (float, "0.1"),
    "hyperopt.alpha_max": (float, "2.5"),
    "hyperopt.sigma_input_min": (_ranged(float, lo=0.0, lo_open=True), "1e-4"),
    "hyperopt.sigma_input_max": (_ranged(float, lo=0.0, lo_open=True), "1.0"),
    "hyperopt.lambda_rescaled_min": (_ranged(float, lo=0.0, lo_open=True), "1e-5"),
    "hyperopt.lambda_rescaled_max": (_ranged(float, lo=0.0, lo_open=True), "1e2"),
    "eval.mask_seeds": (_intlist, "1,2,3,4,5"),
    "eval.throughput": (_bool, "true"),
    "eval.min_frames": (_ranged(int, lo=1), "1000"),
    "eval.runs": (_ranged(int, lo=1), "5"),
    "toi_search.size": (_ranged(int, lo=1, hi=10), "3"),
    "toi_search.mode": (_choice("ranked", "exhaustive"), "ranked"),
    "run.seed": (int, "0"),
    "run.cache_dir": (str, "cache"),
    "run.out_dir": (str, "runs"),
}

# Output/cache locations do not change what a run computes.
_NON_SEMANTIC = ("run.out_dir", "run.cache_dir")


class RunConfig:
    """Fully resolved configuration with typed access by key."""

    def __init__(self, raw: dict[str, str]):
        for key in raw:
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
        self._text: dict[str, str] = {}
        self._values: dict[str, object] = {}
        for key, (parser, default) in SCHEMA.items():
            text = raw.get(key, default)
            try:
                self._values[key] = parser(text)
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from None
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
            self._text[key] = text

    def __getitem__(self, key: str):
        return self._values[key]

    def text(self, key: str) -> str:
        return self._text[key]

    def keys(self):
        return self._text.keys()

    def resolved_text(self) -> str:
        return "".join(f"{k}={self._text[k]}\n" for k in sorted(self._text))

    @property
    def hash(self) -> str:
        semantic = "".join(f"{k}={self._text[k]}\n" for k in sorted(self._text)
                           if k not in _NON_SEMANTIC)
        return hashlib.sha256(semantic.encode()).hexdigest()[:12]


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    raw: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config(path: str | Path | None = None,
                overrides: list[str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus key=value overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        raw = parse_config_text(p.read_text(encoding="utf-8"), str(p))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()
    return RunConfig(raw)

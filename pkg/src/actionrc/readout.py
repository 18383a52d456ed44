"""Timesteps-Of-Interest readout: concatenate reservoir states at selected
timesteps, train one ridge-regression output per class, classify by argmax.

Training solves w = (X^T X + lambda I)^{-1} X^T y_onehot through a Cholesky
factorization shared by all class columns. When there are fewer samples than
design columns (and lambda > 0) the algebraically identical dual form
w = X^T (X X^T + lambda I)^{-1} y_onehot is used instead.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg

from .dataset import ACTIONS
from .errors import CacheError, ConfigError, DataError, NumericError
from .reservoir import Trajectory

N_TIMESTEPS = 10


@dataclass(frozen=True)
class ToiSet:
    """A strictly increasing, nonempty subset of timesteps 1..10."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise ConfigError("TOI set must not be empty")
        if len(idx) > N_TIMESTEPS or any(not 1 <= i <= N_TIMESTEPS for i in idx):
            raise ConfigError(f"TOI indices {idx} outside 1..{N_TIMESTEPS}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigError(f"TOI indices {idx} not strictly increasing")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "ToiSet":
        return cls(tuple(sorted(set(int(i) for i in indices))))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass
class DesignMatrix:
    X: np.ndarray        # (samples, T*N)
    targets: np.ndarray  # (samples, C) one-hot

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.X.ndim != 2 or self.targets.ndim != 2:
            raise DataError("design matrix and targets must be 2-D")
        if self.X.shape[0] != self.targets.shape[0]:
            raise DataError(f"{self.X.shape[0]} samples vs "
                            f"{self.targets.shape[0]} target rows")


@dataclass
class ReadoutModel:
    weights: np.ndarray  # (C, T*N)
    toi: ToiSet
    lam: float
    class_names: tuple[str, ...] = ACTIONS

    @property
    def state_size(self) -> int:
        return self.weights.shape[1] // len(self.toi)


def one_hot(labels: Sequence[int], n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
        raise DataError(f"labels outside 0..{n_classes - 1}")
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def concat_toi(traj: Trajectory | np.ndarray, toi: ToiSet) -> np.ndarray:
    """States at the selected timesteps, concatenated in ascending order.

    Accepts one trajectory (T, N) or a batch (S, T, N); timestep t maps to
    state row t-1 (rows are x(1)..x(T)).
    """
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    rows = [i - 1 for i in toi]
    if states.ndim == 2:
        if max(rows) >= states.shape[0]:
            raise DataError(f"TOI {tuple(toi)} out of range for {states.shape[0]} steps")
        return states[rows].reshape(-1)
    if states.ndim == 3:
        if max(rows) >= states.shape[1]:
            raise DataError(f"TOI {tuple(toi)} out of range for {states.shape[1]} steps")
        return states[:, rows, :].reshape(states.shape[0], -1)
    raise DataError(f"expected (T, N) or (S, T, N) states, got {states.shape}")


def train_ridge(design: DesignMatrix, lam: float, toi: ToiSet | None = None,
                class_names: tuple[str, ...] = ACTIONS) -> ReadoutModel:
    """Closed-form ridge regression, one weight row per class."""
    if lam < 0:
        raise ConfigError(f"lambda must be nonnegative, got {lam}")
    X, Y = design.X, design.targets
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise NumericError("non-finite training data")
    n_samples, n_dim = X.shape
    try:
        if lam > 0 and n_samples < n_dim:
            gram = X @ X.T
            gram[np.diag_indices_from(gram)] += lam
            weights = (X.T @ linalg.cho_solve(linalg.cho_factor(gram), Y)).T
        else:
            normal = X.T @ X
            if lam > 0:
                normal[np.diag_indices_from(normal)] += lam
            weights = linalg.cho_solve(linalg.cho_factor(normal), X.T @ Y).T
    except linalg.LinAlgError as exc:
        raise NumericError(f"ridge system singular (lambda={lam}): {exc}") from None
    if toi is None:
        toi = ToiSet((1,))  # bare-matrix training: whole row is one "timestep"
    return ReadoutModel(weights, toi, lam, class_names)


def classify(model: ReadoutModel, v: np.ndarray) -> int:
    """Winner-takes-all over the class outputs; ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.weights.shape[1]:
        raise DataError(f"vector length {v.shape[-1]} does not match model "
                        f"columns {model.weights.shape[1]}")
    return int(np.argmax(model.weights @ v))


def classify_batch(model: ReadoutModel, V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.shape[-1] != model.weights.shape[1]:
        raise DataError(f"vector length {V.shape[-1]} does not match model "
                        f"columns {model.weights.shape[1]}")
    return np.argmax(V @ model.weights.T, axis=-1)


# --- TOI subset search -----------------------------------------------------

# Heuristic seed families, in priority order: sample the end, the start,
# and the middle of the 10-step window.
_TOI_FAMILIES = ((10, 9), (1, 2), (5, 4, 6))


def _heuristic_seeds(t: int) -> list[tuple[int, ...]]:
    families = _TOI_FAMILIES[:min(t, 3)]
    seeds = []
    for combo in itertools.product(*families):
        seeds.append(tuple(sorted(combo)))
    return seeds


def toi_search(eval_fn: Callable[[ToiSet], float], t: int,
               mode: str = "exhaustive") -> list[tuple[ToiSet, float]]:
    """Score TOI subsets of size t and return them ranked by accuracy.

    Exhaustive mode scores all C(10, t) subsets. Ranked mode scores the
    heuristic last/first/middle family first, then grows the best seed
    greedily one timestep at a time. Ties order lexicographically.
    """
    if not 1 <= t <= N_TIMESTEPS:
        raise ConfigError(f"subset size {t} outside 1..{N_TIMESTEPS}")
    if mode not in ("exhaustive", "ranked"):
        raise ConfigError(f"unknown search mode {mode!r}")
    scored: dict[tuple[int, ...], float] = {}

    def score(subset: tuple[int, ...]) -> float:
        if subset not in scored:
            scored[subset] = float(eval_fn(ToiSet(subset)))
        return scored[subset]

    if mode == "exhaustive":
        for combo in itertools.combinations(range(1, N_TIMESTEPS + 1), t):
            score(combo)
    else:
        seeds = _heuristic_seeds(t)
        for seed in seeds:
            score(seed)
        if t > 3:
            current = max(seeds, key=lambda s: (score(s), tuple(-i for i in s)))
            while len(current) < t:
                candidates = []
                for extra in range(1, N_TIMESTEPS + 1):
                    if extra in current:
                        continue
                    grown = tuple(sorted(current + (extra,)))
                    candidates.append((score(grown), grown))
                current = max(candidates, key=lambda c: (c[0], tuple(-i for i in c[1])))[1]
    ranked = sorted(((ToiSet(s), acc) for s, acc in scored.items() if len(s) == t),
                    key=lambda item: (-item[1], item[0].indices))
    return ranked


# --- model file ------------------------------------------------------------
#
# ASCII header "C T N lambda toi...", then weights row-major little-endian
# float64. A sidecar <path>.meta.json records the producing config hash.


def save_model(path: str | Path, model: ReadoutModel,
               config_hash: str | None = None) -> None:
    weights = np.ascontiguousarray(model.weights, dtype="<f8")
    c = weights.shape[0]
    t = len(model.toi)
    n = weights.shape[1] // t
    toi_text = " ".join(str(i) for i in model.toi)
    with open(path, "wb") as fh:
        fh.write(f"{c} {t} {n} {model.lam!r} {toi_text}\n".encode())
        fh.write(weights.tobytes())
    meta = {"class_names": list(model.class_names)}
    if config_hash is not None:
        meta["config_hash"] = config_hash
    Path(str(path) + ".meta.json").write_text(json.dumps(meta), encoding="utf-8")


def load_model(path: str | Path, expect_config_hash: str | None = None) -> ReadoutModel:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) < 5:
            raise CacheError(f"{path}: malformed model header")
        c, t, n = int(header[0]), int(header[1]), int(header[2])
        lam = float(header[3])
        toi = ToiSet(tuple(int(v) for v in header[4:]))
        if len(toi) != t:
            raise CacheError(f"{path}: header T={t} but {len(toi)} TOI entries")
        data = np.frombuffer(fh.read(c * t * n * 8), dtype="<f8")
        if data.size != c * t * n:
            raise CacheError(f"{path}: truncated model file")
    class_names = ACTIONS
    meta_path = Path(str(path) + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        class_names = tuple(meta.get("class_names", ACTIONS))
        stored = meta.get("config_hash")
        if expect_config_hash is not None and stored != expect_config_hash:
            raise CacheError(f"{path}: model was trained under config {stored}, "
                             f"expected {expect_config_hash}; refusing to reuse")
    return ReadoutModel(data.reshape(c, t * n).copy(), toi, lam, class_names)

"""Discrete-time ring-topology reservoir with a sinusoidal nonlinearity.

State update: node 0 reads the last node's state one step further back than
its neighbors do,

    x_0(n+1) = sin(alpha * x_{N-1}(n-1) + beta * (M u(n))_0)
    x_i(n+1) = sin(alpha * x_{i-1}(n)   + beta * (M u(n))_i),   i = 1..N-1

with input mask M drawn i.i.d. uniform on [-1, 1]. A strict-ring variant
(node 0 reads x_{N-1}(n)) is available behind a flag for ablations. All
states live in [-1, 1] by construction.

Masks come from numpy's Philox counter-based generator, so a given
mask_seed reproduces bit-identical masks across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CacheError, ConfigError, DataError, NumericError

RESET_MODES = ("hard_zero", "washout")


@dataclass(frozen=True)
class ReservoirConfig:
    n: int
    alpha: float
    beta: float
    mask_seed: int = 0
    reset_mode: str = "hard_zero"
    washout_steps: int = 2
    strict_ring: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"reservoir size must be >= 1, got {self.n}")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ConfigError("alpha and beta must be finite")
        if self.reset_mode not in RESET_MODES:
            raise ConfigError(f"unknown reset mode {self.reset_mode!r}")


@dataclass
class Trajectory:
    states: np.ndarray  # (T, N), rows are x(1)..x(T)
    record_id: str = ""


def generate_mask(n: int, k: int, mask_seed: int) -> np.ndarray:
    """N x K input mask, i.i.d. uniform on [-1, 1] from a Philox stream."""
    if n < 1 or k < 1:
        raise ConfigError(f"mask dimensions must be positive, got {n}x{k}")
    rng = np.random.Generator(np.random.Philox(mask_seed))
    return rng.uniform(-1.0, 1.0, size=(n, k))


def step(x_curr: np.ndarray, x_prev: np.ndarray, u: np.ndarray,
         cfg: ReservoirConfig, mask: np.ndarray) -> np.ndarray:
    """One update from state history (x(n), x(n-1)) and input u(n)."""
    x_curr = np.asarray(x_curr, dtype=np.float64)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if not np.isfinite(u).all():
        raise NumericError("non-finite reservoir input")
    injection = cfg.beta * (mask @ u)
    shifted = np.roll(x_curr, 1)
    if not cfg.strict_ring:
        shifted[..., 0] = x_prev[..., -1]
    return np.sin(cfg.alpha * shifted + injection)


def _advance(x_curr: np.ndarray, x_prev: np.ndarray, injection,
             cfg: ReservoirConfig) -> np.ndarray:
    # Batched form of `step`: x_curr, x_prev, injection all (..., N).
    shifted = np.roll(x_curr, 1, axis=-1)
    if not cfg.strict_ring:
        shifted[..., 0] = x_prev[..., -1]
    return np.sin(cfg.alpha * shifted + injection)


def run_sequence(cfg: ReservoirConfig, mask: np.ndarray, inputs: np.ndarray,
                 reset: bool = True,
                 history: tuple[np.ndarray, np.ndarray] | None = None,
                 record_id: str = "") -> Trajectory:
    """Drive the reservoir with a (T, K) input block and record x(1)..x(T).

    With reset=True the state history is zeroed (hard_zero) or, in washout
    mode, driven with null input for washout_steps starting from ``history``.
    With reset=False the run continues from ``history`` (zeros if omitted).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != mask.shape[1]:
        raise DataError(f"inputs shape {inputs.shape} incompatible with mask "
                        f"{mask.shape}")
    if not np.isfinite(inputs).all():
        raise NumericError("non-finite reservoir input")
    if history is None:
        x_curr = np.zeros(cfg.n)
        x_prev = np.zeros(cfg.n)
    else:
        x_curr, x_prev = (np.array(h, dtype=np.float64) for h in history)
    if reset:
        if cfg.reset_mode == "hard_zero":
            x_curr = np.zeros(cfg.n)
            x_prev = np.zeros(cfg.n)
        else:
            for _ in range(cfg.washout_steps):
                x_curr, x_prev = _advance(x_curr, x_prev, 0.0, cfg), x_curr
    injections = cfg.beta * (inputs @ mask.T)
    states = np.empty((len(inputs), cfg.n))
    for t in range(len(inputs)):
        x_curr, x_prev = _advance(x_curr, x_prev, injections[t], cfg), x_curr
        states[t] = x_curr
    return Trajectory(states, record_id)


def run_dataset(cfg: ReservoirConfig, mask: np.ndarray, inputs: np.ndarray,
                reset: bool = True) -> np.ndarray:
    """Trajectories for a whole dataset of (S, T, K) input blocks.

    With reset=True and hard_zero, sequences are independent and are stepped
    as one batch; the result is bitwise identical to per-sequence runs. With
    reset=False (or washout resets), sequences are chained in the given
    order, carrying state across sequence boundaries.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[2] != mask.shape[1]:
        raise DataError(f"inputs shape {inputs.shape} incompatible with mask "
                        f"{mask.shape}")
    if not np.isfinite(inputs).all():
        raise NumericError("non-finite reservoir input")
    n_seq, n_steps, _ = inputs.shape
    if reset and cfg.reset_mode == "hard_zero":
        injections = cfg.beta * (inputs @ mask.T)  # (S, T, N)
        x_curr = np.zeros((n_seq, cfg.n))
        x_prev = np.zeros((n_seq, cfg.n))
        states = np.empty((n_seq, n_steps, cfg.n))
        for t in range(n_steps):
            x_curr, x_prev = _advance(x_curr, x_prev, injections[:, t, :], cfg), x_curr
            states[:, t, :] = x_curr
        return states
    states = np.empty((n_seq, n_steps, cfg.n))
    history = None
    for s in range(n_seq):
        traj = run_sequence(cfg, mask, inputs[s], reset=reset, history=history)
        states[s] = traj.states
        if len(traj.states) >= 2:
            history = (traj.states[-1], traj.states[-2])
        else:
            prev = history[0] if history is not None else np.zeros(cfg.n)
            history = (traj.states[-1], prev)
    return states


# --- trajectory cache ------------------------------------------------------
#
# ASCII header "T N mask_seed alpha beta reset_mode", then little-endian
# float64 states, row-major, for any number of stacked trajectories.


def save_trajectories(path: str | Path, states: np.ndarray,
                      cfg: ReservoirConfig) -> None:
    states = np.asarray(states, dtype="<f8")
    if states.ndim == 2:
        states = states[None]
    n_steps, n = states.shape[1], states.shape[2]
    if n != cfg.n:
        raise DataError(f"states width {n} does not match config n={cfg.n}")
    with open(path, "wb") as fh:
        fh.write(f"{n_steps} {n} {cfg.mask_seed} {cfg.alpha!r} {cfg.beta!r} "
                 f"{cfg.reset_mode}\n".encode())
        fh.write(np.ascontiguousarray(states).tobytes())


def load_trajectories(path: str | Path,
                      expect_cfg: ReservoirConfig | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise CacheError(f"{path}: malformed trajectory cache header")
        n_steps, n = int(header[0]), int(header[1])
        mask_seed = int(header[2])
        alpha, beta = float(header[3]), float(header[4])
        reset_mode = header[5].decode()
        if expect_cfg is not None:
            stored = (n, alpha, beta, mask_seed, reset_mode)
            wanted = (expect_cfg.n, expect_cfg.alpha, expect_cfg.beta,
                      expect_cfg.mask_seed, expect_cfg.reset_mode)
            if stored != wanted:
                raise CacheError(f"{path}: cache config {stored} does not match "
                                 f"{wanted}; refusing to reuse")
        raw = fh.read()
    data = np.frombuffer(raw, dtype="<f8")
    if data.size % (n_steps * n):
        raise CacheError(f"{path}: truncated trajectory cache")
    return data.reshape(-1, n_steps, n).copy()

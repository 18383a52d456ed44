"""Bayesian optimization of (alpha, beta, lambda) for the reservoir.

A Gaussian-process surrogate with a squared-exponential kernel (one length
scale per dimension) models classification accuracy over the search box;
expected improvement picks the next point. beta and lambda are searched in
log-space. The initial design is every {low, mid, high} combination per
parameter (27 points in 3-D), after which fit/acquire/evaluate iterations
run until the evaluation budget (200 by default) is spent.

Also provides the scale-free diagnostics sigma(beta*M*u) and
lambda/VAR(x) used to report operating points independently of input and
state scaling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.special import ndtr

from .errors import ConfigError, NumericError

NOISE_FLOOR = 1e-6  # variance floor on the accuracy scale when noise is optimized
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HyperBounds:
    """Closed search intervals; beta and lambda are explored in log-space."""

    alpha: tuple[float, float] = (0.1, 2.5)
    beta: tuple[float, float] = (1e-4, 1.0)
    lam: tuple[float, float] = (1e-5, 1e2)

    def __post_init__(self):
        for name, (lo, hi) in zip(("alpha", "beta", "lam"),
                                  (self.alpha, self.beta, self.lam)):
            if not lo < hi:
                raise ConfigError(f"{name} bounds ({lo}, {hi}) need lower < upper")
        if self.beta[0] <= 0 or self.lam[0] <= 0:
            raise ConfigError("log-scale bounds must be positive")

    @property
    def log_flags(self) -> tuple[bool, bool, bool]:
        return (False, True, True)

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty_like(points)
        for d, ((lo, hi), is_log) in enumerate(zip(self._intervals(), self.log_flags)):
            x = points[:, d]
            if is_log:
                out[:, d] = (np.log(x) - np.log(lo)) / (np.log(hi) - np.log(lo))
            else:
                out[:, d] = (x - lo) / (hi - lo)
        return out

    def from_unit(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        out = np.empty_like(z)
        for d, ((lo, hi), is_log) in enumerate(zip(self._intervals(), self.log_flags)):
            if is_log:
                out[:, d] = np.exp(np.log(lo) + z[:, d] * (np.log(hi) - np.log(lo)))
            else:
                out[:, d] = lo + z[:, d] * (hi - lo)
        return out

    def contains(self, point: Sequence[float], rtol: float = 1e-9) -> bool:
        for x, (lo, hi) in zip(point, self._intervals()):
            slack = rtol * (hi - lo)
            if not lo - slack <= x <= hi + slack:
                return False
        return True

    def _intervals(self):
        return (self.alpha, self.beta, self.lam)


def default_bounds(mask_input_std: float = 1.0,
                   state_variance: float = 1.0) -> HyperBounds:
    """Bounds bracketing the useful operating region.

    beta is chosen so the injected-signal std sigma(beta*M*u) spans
    [1e-4, 1] given the std of M*u at beta=1; lambda so lambda/VAR(x) spans
    [1e-5, 1e2] given a representative state variance.
    """
    if mask_input_std <= 0 or state_variance <= 0:
        raise ConfigError("scale estimates must be positive")
    return HyperBounds(alpha=(0.1, 2.5),
                       beta=(1e-4 / mask_input_std, 1.0 / mask_input_std),
                       lam=(1e-5 * state_variance, 1e2 * state_variance))


@dataclass(frozen=True)
class Observation:
    point: tuple[float, ...]
    score: float

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(x) for x in self.point))
        if not 0.0 <= self.score <= 1.0:
            raise ConfigError(f"score {self.score} outside [0, 1]")


@dataclass
class HyperDiagnostics:
    sigma_input: float
    lambda_rescaled: float


# --- Gaussian process ------------------------------------------------------


def _sq_dists(A: np.ndarray, B: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    # (m, n, d) scaled squared distances, summed over d.
    diff = (A[:, None, :] - B[None, :, :]) / length_scales
    return np.einsum("mnd,mnd->mn", diff, diff)


def _kernel(A: np.ndarray, B: np.ndarray, length_scales: np.ndarray,
            signal_var: float) -> np.ndarray:
    return signal_var * np.exp(-0.5 * _sq_dists(A, B, length_scales))


@dataclass
class GpModel:
    observations: list[Observation]
    bounds: HyperBounds | None
    X: np.ndarray               # (n, d) model coordinates (unit cube if bounds)
    length_scales: np.ndarray   # (d,)
    signal_var: float           # on the standardized-score scale
    noise_var: float            # on the standardized-score scale
    y_mean: float
    y_scale: float
    chol: np.ndarray = field(repr=False)
    alpha_vec: np.ndarray = field(repr=False)

    def _to_model_coords(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.bounds.to_unit(points) if self.bounds is not None else points

    def predict_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Z = self._to_model_coords(points)
        k_star = _kernel(Z, self.X, self.length_scales, self.signal_var)
        mean = self.y_mean + self.y_scale * (k_star @ self.alpha_vec)
        v = linalg.solve_triangular(self.chol, k_star.T, lower=True)
        var = self.signal_var - np.einsum("nm,nm->m", v, v)
        std = self.y_scale * np.sqrt(np.maximum(var, 0.0))
        return mean, std


def _neg_lml(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
             fixed_noise: float | None) -> tuple[float, np.ndarray]:
    n, d = X.shape
    length_scales = np.exp(theta[:d])
    signal_var = np.exp(theta[d])
    noise_var = fixed_noise if fixed_noise is not None else np.exp(theta[d + 1])
    sq = _sq_dists(X, X, length_scales)
    K_se = signal_var * np.exp(-0.5 * sq)
    K = K_se + (noise_var + 1e-12 * signal_var) * np.eye(n)
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        return np.inf, np.zeros_like(theta)
    alpha = linalg.cho_solve((L, True), y)
    lml = (-0.5 * y @ alpha - np.sum(np.log(np.diag(L)))
           - 0.5 * n * math.log(2.0 * math.pi))
    K_inv = linalg.cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - K_inv
    grad = np.empty_like(theta)
    # d K / d log(ls_i) = K_se * scaled_sq_dist_i
    diff = X[:, None, :] - X[None, :, :]
    for i in range(d):
        dK = K_se * (diff[:, :, i] / length_scales[i]) ** 2
        grad[i] = 0.5 * np.sum(M * dK)
    grad[d] = 0.5 * np.sum(M * K_se)  # d K / d log(sf2) = K_se
    if fixed_noise is None:
        grad[d + 1] = 0.5 * np.trace(M) * noise_var
    return -lml, -grad


def gp_fit(observations: Sequence[Observation], bounds: HyperBounds | None = None,
           noise_variance: float | None = None, n_starts: int = 16,
           seed: int = 0) -> GpModel:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood
    from ``n_starts`` seeded starts (L-BFGS-B on log-parameters).

    noise_variance: None optimizes the noise level with a floor of
    NOISE_FLOOR; an explicit value (e.g. 0.0 for noiseless interpolation)
    is held fixed.
    """
    observations = list(observations)
    if len(observations) < 2:
        raise ConfigError("GP fit needs at least 2 observations")
    points = np.array([obs.point for obs in observations], dtype=np.float64)
    y_raw = np.array([obs.score for obs in observations])
    X = bounds.to_unit(points) if bounds is not None else points
    n, d = X.shape
    if noise_variance is not None and noise_variance <= 0:
        seen: dict[tuple, float] = {}
        for row, score in zip(map(tuple, X), y_raw):
            if row in seen and seen[row] != score:
                raise NumericError(f"duplicate point {row} with conflicting scores "
                                   "at zero noise")
            seen[row] = score
    y_mean = float(y_raw.mean())
    y_scale = float(y_raw.std())
    if y_scale < 1e-12:
        y_scale = 1.0
    y = (y_raw - y_mean) / y_scale

    span = np.maximum(X.max(axis=0) - X.min(axis=0), 1e-3)
    ls_lo, ls_hi = np.log(0.05 * span), np.log(10.0 * span)
    sf_lo, sf_hi = math.log(1e-3), math.log(1e2)
    fixed_noise = None
    if noise_variance is not None:
        fixed_noise = noise_variance / y_scale ** 2
        n_params = d + 1
        box = list(zip(ls_lo, ls_hi)) + [(sf_lo, sf_hi)]
    else:
        floor = NOISE_FLOOR / y_scale ** 2
        sn_lo, sn_hi = math.log(floor), math.log(max(1.0, floor * 10))
        n_params = d + 2
        box = list(zip(ls_lo, ls_hi)) + [(sf_lo, sf_hi), (sn_lo, sn_hi)]
    rng = np.random.Generator(np.random.Philox(seed))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    starts = [0.5 * (lo + hi)]
    starts += list(lo + rng.random((n_starts - 1, n_params)) * (hi - lo))
    best = None
    for x0 in starts:
        res = optimize.minimize(_neg_lml, x0, args=(X, y, fixed_noise),
                                jac=True, method="L-BFGS-B", bounds=box,
                                options={"maxiter": 60})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NumericError("GP hyperparameter search failed for every start")
    theta = best.x
    length_scales = np.exp(theta[:d])
    signal_var = float(np.exp(theta[d]))
    noise_var = fixed_noise if fixed_noise is not None else float(np.exp(theta[d + 1]))
    K = _kernel(X, X, length_scales, signal_var)
    K[np.diag_indices_from(K)] += noise_var + 1e-12 * signal_var
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(f"GP Gram matrix not positive definite: {exc}") from None
    alpha_vec = linalg.cho_solve((L, True), y)
    return GpModel(observations, bounds, X, length_scales, signal_var,
                   noise_var, y_mean, y_scale, L, alpha_vec)


def gp_predict(model: GpModel, point: Sequence[float]) -> tuple[float, float]:
    """Posterior mean and standard deviation at one point."""
    if model.bounds is not None and not model.bounds.contains(point):
        raise ConfigError(f"point {tuple(point)} outside the search bounds")
    mean, std = model.predict_batch(np.asarray(point, dtype=np.float64)[None, :])
    return float(mean[0]), float(std[0])


def expected_improvement(model: GpModel, point: Sequence[float],
                         best: float) -> float:
    """Expected positive exceedance of the posterior over ``best``."""
    mean, std = gp_predict(model, point)
    return float(_ei_from_moments(np.array([mean]), np.array([std]), best)[0])


def _ei_from_moments(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    improve = mean - best
    out = np.maximum(improve, 0.0)
    ok = std > 0.0
    z = np.divide(improve, std, out=np.zeros_like(improve), where=ok)
    ei = improve * ndtr(z) + std * np.exp(-0.5 * z * z) / _SQRT_2PI
    out[ok] = np.maximum(ei[ok], 0.0)
    return out


# --- optimization loop -----------------------------------------------------


def _initial_design(bounds: HyperBounds) -> np.ndarray:
    grid = np.array(list(itertools.product((0.0, 0.5, 1.0), repeat=3)))
    return bounds.from_unit(grid)


def _maximize_ei(model: GpModel, bounds: HyperBounds, best: float,
                 rng: np.random.Generator, n_candidates: int = 512,
                 n_refine: int = 8) -> np.ndarray:
    z_cand = rng.random((n_candidates, 3))
    mean, std = model.predict_batch(bounds.from_unit(z_cand))
    ei = _ei_from_moments(mean, std, best)
    order = np.argsort(ei)[::-1][:n_refine]

    def neg_ei(z):
        m, s = model.predict_batch(bounds.from_unit(z[None, :]))
        return -_ei_from_moments(m, s, best)[0]

    best_z, best_val = z_cand[order[0]], -ei[order[0]]
    for idx in order:
        res = optimize.minimize(neg_ei, z_cand[idx], method="L-BFGS-B",
                                bounds=[(0.0, 1.0)] * 3,
                                options={"maxiter": 40})
        if res.fun < best_val:
            best_z, best_val = res.x, res.fun
    return bounds.from_unit(best_z[None, :])[0]


def bayes_optimize(objective: Callable[[np.ndarray], float], bounds: HyperBounds,
                   seed: int, budget: int = 200,
                   noise_variance: float | None = None, fit_starts: int = 16,
                   initial: Sequence[Observation] = (),
                   on_evaluation: Callable[[int, Observation], None] | None = None,
                   ) -> tuple[np.ndarray, float, list[Observation]]:
    """Run Bayesian optimization until ``budget`` total evaluations.

    The trace includes the initial three-level design (27 points in 3-D).
    Passing previously recorded observations as ``initial`` resumes a run:
    design points already present are not re-evaluated and the budget counts
    the resumed observations.
    """
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    rng = np.random.Generator(np.random.Philox(seed))
    trace: list[Observation] = list(initial)
    done = {obs.point for obs in trace}

    def evaluate(point: np.ndarray) -> None:
        try:
            score = float(objective(np.asarray(point)))
        except Exception as exc:
            raise NumericError(f"objective failed at point {tuple(point)}: "
                               f"{exc}") from exc
        obs = Observation(tuple(point), score)
        trace.append(obs)
        done.add(obs.point)
        if on_evaluation is not None:
            on_evaluation(len(trace) - 1, obs)

    for point in _initial_design(bounds):
        if len(trace) >= budget:
            break
        if tuple(point) in done:
            continue
        evaluate(point)
    iteration = 0
    while len(trace) < budget:
        fit_seed = int(rng.integers(2 ** 62))
        model = gp_fit(trace, bounds=bounds, noise_variance=noise_variance,
                       n_starts=fit_starts, seed=fit_seed)
        best_score = max(obs.score for obs in trace)
        candidate = _maximize_ei(model, bounds, best_score, rng)
        evaluate(candidate)
        iteration += 1
    best_obs = max(trace, key=lambda obs: obs.score)
    return np.array(best_obs.point), best_obs.score, trace


# --- rescaled diagnostics ---------------------------------------------------


def rescaled_diagnostics(beta: float, mask: np.ndarray, inputs: np.ndarray,
                         states: np.ndarray, lam: float) -> HyperDiagnostics:
    """Scale-free operating point: std of the injected signal beta*M*u over
    all training injections, and lambda divided by the variance of all
    reservoir state entries."""
    inputs = np.asarray(inputs, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    if inputs.size == 0 or states.size == 0:
        raise NumericError("empty inputs or states")
    injected = beta * (inputs.reshape(-1, inputs.shape[-1]) @ np.asarray(mask).T)
    sigma_input = float(injected.std())
    state_var = float(states.var())
    if state_var == 0.0:
        raise NumericError("zero state variance: diagnostics undefined")
    return HyperDiagnostics(sigma_input, lam / state_var)


# --- trace file --------------------------------------------------------------
#
# One line per evaluation: "iter alpha beta lambda score". Plain text,
# append-friendly, resumable.


def append_trace(path: str | Path, index: int, obs: Observation) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        a, b, l = obs.point
        fh.write(f"{index} {a!r} {b!r} {l!r} {obs.score!r}\n")


def load_trace(path: str | Path) -> list[Observation]:
    observations = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(f"{path}: malformed trace line {line!r}")
        observations.append(Observation((float(parts[1]), float(parts[2]),
                                         float(parts[3])), float(parts[4])))
    return observations

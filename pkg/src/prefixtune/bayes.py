"""Bayesian-optimization tuner: Gaussian-process surrogate with Expected Improvement."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from scipy.stats import norm

from .backends import INVALID, OK, Backend, Measurement
from .errors import NoFeasibleConfigError, UntrainableModelError, ValidationError
from .space import Candidate, SearchSpace, candidate_from_dict, encode

log = logging.getLogger(__name__)

WINDOW_STALLED = "window_stalled"
BUDGET_EXHAUSTED = "budget_exhausted"
SPACE_EXHAUSTED = "space_exhausted"

PENALTY_FACTOR = 10.0
NOISE_FLOOR = 1e-8


@dataclass(frozen=True)
class Evaluation:
    config: Candidate
    time: float
    status: str = OK
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_dict(self) -> dict[str, Any]:
        doc = {"config": self.config.to_dict(), "time": self.time, "status": self.status}
        if self.detail:
            doc["detail"] = self.detail
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Evaluation":
        return cls(candidate_from_dict(doc["config"]), float(doc["time"]), doc["status"],
                   doc.get("detail", ""))


@dataclass(frozen=True)
class TuningRun:
    algorithm: str
    n_size: int
    history: tuple[Evaluation, ...]
    stop_reason: str
    seed: Optional[int] = None
    method: str = "bo"
    unit: str = "units"
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def evaluations_used(self) -> int:
        return len(self.history)

    @property
    def best(self) -> Optional[Evaluation]:
        ok = [e for e in self.history if e.ok]
        return min(ok, key=lambda e: e.time) if ok else None

    def best_trajectory(self) -> list[float]:
        out, best = [], math.inf
        for e in self.history:
            if e.ok:
                best = min(best, e.time)
            out.append(best)
        return out

    def to_dict(self) -> dict[str, Any]:
        best = self.best
        return {
            "algorithm": self.algorithm,
            "N": self.n_size,
            "method": self.method,
            "seed": self.seed,
            "unit": self.unit,
            "stop_reason": self.stop_reason,
            "evaluations_used": self.evaluations_used,
            "best": None if best is None else {"config": best.config.to_dict(), "time": best.time},
            "history": [e.to_dict() for e in self.history],
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "TuningRun":
        known = {"algorithm", "N", "method", "seed", "unit", "stop_reason", "evaluations_used",
                 "best", "history"}
        return cls(doc["algorithm"], int(doc["N"]),
                   tuple(Evaluation.from_dict(e) for e in doc["history"]),
                   doc["stop_reason"], doc.get("seed"), doc.get("method", "bo"),
                   doc.get("unit", "units"), {k: v for k, v in doc.items() if k not in known})


# -- surrogate ------------------------------------------------------------------

def _sq_dists(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    d = (a[:, None, :] - b[None, :, :]) / lengthscales
    return np.sum(d * d, axis=-1)


@dataclass
class SurrogateModel:
    """Gaussian process over encoded configurations (anisotropic squared exponential)."""

    x_train: np.ndarray
    y_train: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise: float = NOISE_FLOOR
    log_target: bool = False
    x_offset: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = 0.0
    y_std: float = 1.0
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    def transform(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return np.log(t) if self.log_target else t

    def _unit(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.x_offset) / self.x_scale

    def _factor(self) -> None:
        xu = self._unit(self.x_train)
        k = self.signal_var * np.exp(-0.5 * _sq_dists(xu, xu, self.lengthscales))
        jitter = self.noise
        while True:
            try:
                self._chol = cholesky(k + jitter * np.eye(len(k)), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter *= 10
                if jitter > 1.0:
                    raise UntrainableModelError("covariance matrix is not positive definite")
        z = (self.y_train - self.y_mean) / self.y_std
        self._alpha = cho_solve((self._chol, True), z)

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and standard deviation, in the (possibly log) target scale."""
        if self._chol is None:
            self._factor()
        xs = self._unit(np.asarray(x, dtype=float))
        ks = self.signal_var * np.exp(-0.5 * _sq_dists(xs, self._unit(self.x_train), self.lengthscales))
        mean = ks @ self._alpha
        v = cho_solve((self._chol, True), ks.T)
        var = np.maximum(self.signal_var - np.sum(ks * v.T, axis=1), 0.0)
        return mean * self.y_std + self.y_mean, np.sqrt(var) * self.y_std


def _neg_log_likelihood(theta: np.ndarray, xu: np.ndarray, z: np.ndarray, noise: float):
    d = xu.shape[1]
    ls = np.exp(theta[:d])
    sf2 = math.exp(theta[d])
    diffs = (xu[:, None, :] - xu[None, :, :]) ** 2
    kf = sf2 * np.exp(-0.5 * np.sum(diffs / ls ** 2, axis=-1))
    k = kf + noise * np.eye(len(z))
    try:
        chol = cholesky(k, lower=True)
    except np.linalg.LinAlgError:
        return 1e10, np.zeros_like(theta)
    alpha = cho_solve((chol, True), z)
    nll = 0.5 * z @ alpha + np.sum(np.log(np.diag(chol))) + 0.5 * len(z) * math.log(2 * math.pi)
    inner = np.outer(alpha, alpha) - cho_solve((chol, True), np.eye(len(z)))
    grad = np.empty_like(theta)
    for j in range(d):
        dk = kf * diffs[:, :, j] / ls[j] ** 2
        grad[j] = -0.5 * np.sum(inner * dk)
    grad[d] = -0.5 * np.sum(inner * kf)
    return nll, grad


def fit_surrogate(x, times, log_target: bool = False, noise: float = NOISE_FLOOR,
                  bounds_x: Optional[np.ndarray] = None) -> SurrogateModel:
    """Fit GP hyperparameters by maximum marginal likelihood from a few fixed starting points.

    `bounds_x` (rows of candidate encodings) fixes the feature scaling; it defaults
    to the training inputs themselves.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    times = np.asarray(times, dtype=float)
    if len(x) != len(times):
        raise ValidationError("inputs and targets differ in length")
    if len(np.unique(x, axis=0)) < 2:
        raise UntrainableModelError("need at least two distinct evaluated configurations")
    if log_target and np.any(times <= 0):
        raise UntrainableModelError("log targets need positive times")

    ref = x if bounds_x is None else np.atleast_2d(bounds_x)
    lo, hi = ref.min(axis=0), ref.max(axis=0)
    scale = np.where(hi > lo, hi - lo, 1.0)
    y = np.log(times) if log_target else times
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    z = (y - y_mean) / y_std
    xu = (x - lo) / scale

    d = x.shape[1]
    bounds = [(math.log(0.05), math.log(20.0))] * d + [(math.log(0.05), math.log(20.0))]
    best = None
    for ls0 in (0.3, 1.0, 3.0):
        theta0 = np.array([math.log(ls0)] * d + [0.0])
        res = minimize(_neg_log_likelihood, theta0, args=(xu, z, noise), jac=True,
                       method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x
    model = SurrogateModel(x, y, np.exp(theta[:d]), float(math.exp(theta[d])), noise, log_target,
                           lo, scale, y_mean, y_std)
    model._factor()
    return model


def expected_improvement(model: SurrogateModel, candidate, best_time: float) -> np.ndarray:
    """EI for minimization at encoded candidate(s); `best_time` is in time units."""
    x = candidate if isinstance(candidate, np.ndarray) else encode(candidate)
    mu, sigma = model.predict(x)
    best = float(model.transform(best_time))
    return ei_closed_form(mu, sigma, best)


def ei_closed_form(mu, sigma, best: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gain = best - mu
    out = np.maximum(gain, 0.0)
    pos = sigma > 0
    with np.errstate(over="ignore"):  # tiny sigma: z**2 overflows, pdf correctly underflows to 0
        z = gain[pos] / sigma[pos]
        out[pos] = gain[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)


# -- search loop ----------------------------------------------------------------

def initial_sample_size(space_size: int, budget: int) -> int:
    return min(max(3, math.ceil(space_size / 10)), budget, space_size)


def encode_space(space: SearchSpace, occupancy_features: bool = True) -> np.ndarray:
    width = max((getattr(c, "kernel_count", 1) for c in space), default=1)
    arch = space.arch if occupancy_features else None
    return np.array([encode(c, width, space.algorithm, arch) for c in space])


def tune_bo(space: SearchSpace, backend: Backend, budget: int = 40, window: int = 5,
            seed: int = 0, workers: int = 1, occupancy_features: bool = True) -> TuningRun:
    """Seeded random sample, then Expected Improvement until `window` evaluations stall."""
    if len(space) == 0:
        raise NoFeasibleConfigError(f"empty search space for {space.algorithm} N={space.n_size}")
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    if window < 1:
        raise ValidationError("window must be at least 1")

    candidates = list(space)
    features = encode_space(space, occupancy_features)
    rng = np.random.default_rng(seed)
    history: list[Evaluation] = []
    evaluated: list[int] = []

    def record(idx: int, m) -> Evaluation:
        ok_times = [e.time for e in history if e.ok]
        if m.status == OK:
            e = Evaluation(candidates[idx], float(m.time), OK)
        else:
            penalty = PENALTY_FACTOR * max(ok_times) if ok_times else backend.default_penalty
            e = Evaluation(candidates[idx], penalty, m.status, m.detail)
        history.append(e)
        evaluated.append(idx)
        return e

    def run_one(idx: int):
        try:
            return backend.evaluate(candidates[idx], space.algorithm, space.n_size)
        except Exception as exc:  # a failing backend must not abort the search
            return Measurement(None, INVALID, f"backend error: {exc}")

    n_init = initial_sample_size(len(candidates), budget)
    init = [int(i) for i in rng.choice(len(candidates), size=n_init, replace=False)]
    if workers > 1 and backend.concurrency_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, init))
    else:
        results = [run_one(i) for i in init]
    for idx, m in zip(init, results):
        record(idx, m)

    best = min((e.time for e in history if e.ok), default=math.inf)
    stall = 0
    while True:
        if len(evaluated) == len(candidates):
            reason = SPACE_EXHAUSTED
            break
        if len(history) >= budget:
            reason = BUDGET_EXHAUSTED
            break
        if stall >= window:
            reason = WINDOW_STALLED
            break
        idx = _next_candidate(features, evaluated, history, best, rng)
        e = record(idx, run_one(idx))
        if e.ok and e.time < best:
            best, stall = e.time, 0
        else:
            stall += 1
    return TuningRun(space.algorithm, space.n_size, tuple(history), reason, seed, "bo",
                     getattr(backend, "unit", "units"))


def _next_candidate(features: np.ndarray, evaluated: Sequence[int], history: Sequence[Evaluation],
                    best: float, rng: np.random.Generator) -> int:
    remaining = np.setdiff1d(np.arange(len(features)), evaluated)
    ok_idx = {i for i, e in zip(evaluated, history) if e.ok}
    if len(ok_idx) < 2 or not math.isfinite(best):
        return int(rng.choice(remaining))
    times = np.array([e.time for e in history])
    try:
        model = fit_surrogate(features[list(evaluated)], times, log_target=True, bounds_x=features)
    except UntrainableModelError as exc:
        log.debug("surrogate unavailable (%s); sampling at random", exc)
        return int(rng.choice(remaining))
    scores = expected_improvement(model, features[remaining], best)
    return int(remaining[int(np.argmax(scores))])

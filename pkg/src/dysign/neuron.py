"""Leaky integrate-and-fire primitives.

All functions are pure: they take arrays (any shape, broadcast elementwise)
and return new arrays.  Randomness only enters through an explicit seed or
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

RESET_MODES = ("soft", "hard")


@dataclass(frozen=True)
class NeuronConfig:
    v_th: float = 1.0
    lam: float = 1.0
    K: int = 8
    reset_mode: str = "soft"
    gamma: Optional[float] = None  # surrogate half-width; None means v_th / 2

    def __post_init__(self):
        if not self.v_th > 0:
            raise ValidationError(f"v_th must be positive, got {self.v_th}")
        if not 0 < self.lam <= 1.2:
            raise ValidationError(f"lam must lie in (0, 1.2], got {self.lam}")
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError(f"K must be a positive integer, got {self.K}")
        if self.reset_mode not in RESET_MODES:
            raise ValidationError(f"reset_mode must be one of {RESET_MODES}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")

    @property
    def width(self):
        return self.v_th / 2 if self.gamma is None else self.gamma

    @property
    def normalizer(self):
        """``C = sum_{tau=1..K} lam**(K - tau)``."""
        return rate_normalizer(self.lam, self.K)


def rate_normalizer(lam, K):
    return float(np.sum(lam ** np.arange(K, dtype=np.float64)))


def heaviside(u, v_th):
    """Spike wherever the potential reaches the threshold (``u == v_th`` fires)."""
    return (np.asarray(u) >= v_th).astype(np.float64)


def lif_step(u, s_prev, current, cfg):
    """One discrete LIF update; returns ``(u_next, s_next)``.

    Soft reset subtracts ``v_th`` after a spike, hard reset zeroes the
    membrane.
    """
    u = np.asarray(u, dtype=np.float64)
    s_prev = np.asarray(s_prev, dtype=np.float64)
    if cfg.reset_mode == "soft":
        u_next = cfg.lam * (u - cfg.v_th * s_prev) + current
    else:
        u_next = cfg.lam * u * (1.0 - s_prev) + current
    return u_next, heaviside(u_next, cfg.v_th)


def surrogate_derivative(u, cfg):
    """Rectangular pseudo-derivative of the spike function, height ``1 / (2 gamma)``."""
    gamma = cfg.width
    inside = np.abs(np.asarray(u, dtype=np.float64) - cfg.v_th) <= gamma
    return inside / (2.0 * gamma)


def clamp_sigma(x):
    return np.clip(x, 0.0, 1.0)


def _check_unit_interval(X):
    X = np.asarray(X, dtype=np.float64)
    if not np.all((X >= 0.0) & (X <= 1.0)):
        raise ValidationError("Bernoulli probabilities must lie in [0, 1]")
    return X


def bernoulli_encode(X, K, rng_seed):
    """Draw ``K`` independent Bernoulli(X) spike slices, shape ``(K,) + X.shape``."""
    X = _check_unit_interval(X)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return (rng.random((K,) + X.shape) < X).astype(np.float64)


@dataclass(frozen=True, eq=False)
class RateAccumulator:
    """Leaky spike counter over one latency window.

    ``weighted_sum`` and ``trace`` obey the same recursion; the first is the
    numerator of the firing rate, the second the presynaptic trace used by
    the trace-form gradient.  They are kept apart so that either can be
    consumed without aliasing the other.
    """

    weighted_sum: np.ndarray
    trace: np.ndarray
    normalizer: float = 0.0
    steps: int = 0

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def rate(self):
        if self.steps == 0:
            return np.zeros_like(self.weighted_sum)
        return self.weighted_sum / self.normalizer


def rate_update(acc, s, lam):
    return RateAccumulator(
        weighted_sum=lam * acc.weighted_sum + s,
        trace=lam * acc.trace + s,
        normalizer=lam * acc.normalizer + 1.0,
        steps=acc.steps + 1,
    )


def concentration_check(w, x, K, eps, rng_seed, trials=1000, chunk=64):
    """Monte-Carlo check of how far a latency-averaged spike input strays
    from its expectation.

    For each trial, ``K`` Bernoulli slices of ``x`` are drawn and the
    weighted input ``z = w @ x_tilde`` is averaged over the window.  Reports
    the fraction of trials deviating from ``w @ x`` by more than ``eps``
    together with the exponential tail bounds evaluated with the empirical
    variance of the averaged input.
    """
    w = np.asarray(w, dtype=np.float64)
    x = _check_unit_interval(x)
    if w.shape != x.shape or w.ndim != 1:
        raise ValidationError("w and x must be vectors of equal length")
    if K < 100:
        raise ValidationError(f"K must be at least 100, got {K}")
    if not eps > 0:
        raise ValidationError("eps must be positive")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    expected = float(w @ x)
    means = np.empty(trials)
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        spikes = rng.random((stop - start, K, x.size)) < x
        means[start:stop] = (spikes @ w).mean(axis=1)
    dev = means - expected
    sigma = float(means.var())
    w_hat = float(w.max()) if w.size else 0.0
    upper_denom = 2.0 * (sigma + w_hat * eps / 3.0)
    return {
        "expected": expected,
        "empirical_exceed_rate": float(np.mean(np.abs(dev) > eps)),
        "empirical_upper_rate": float(np.mean(dev > eps)),
        "empirical_lower_rate": float(np.mean(dev < -eps)),
        "sigma": sigma,
        "bound_value": float(np.exp(-eps**2 / upper_denom)) if upper_denom > 0 else 0.0,
        "lower_bound_value": float(np.exp(-eps**2 / (2.0 * sigma))) if sigma > 0 else 0.0,
        "trials": trials,
        "K": K,
        "eps": eps,
    }

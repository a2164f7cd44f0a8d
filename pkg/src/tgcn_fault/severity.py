"""Severity index over threshold exceedances.

For exceedances ``e_k = max(0, S_k - tau)`` and fault count ``n_t``::

    mu_t    = sum(e_k) / n_t
    sigma_t = sqrt(sum(e_k**2) / n_t - mu_t**2)
    index   = mu_t + m * sigma_t

Before the first fault (``n_t == 0``) all three are 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

SEVERITY_HEADER = "t,node,score,threshold,flag,mu,sigma,index"
DEFAULT_WEIGHT = 2.0


def _check_weight(m):
    if not m >= 0:
        raise ContractError(f"severity weight m must be >= 0, got {m}")


@dataclass
class SeverityState:
    """Running sums for one node."""

    tau: float
    m: float = DEFAULT_WEIGHT
    n: int = 0
    sum_exc: float = 0.0
    sum_exc_sq: float = 0.0

    def __post_init__(self):
        _check_weight(self.m)

    def update(self, s: float) -> tuple[float, float, float]:
        """Fold one score in; returns ``(mu, sigma, index)`` after it."""
        if not s >= 0:
            raise ContractError(f"anomaly scores are squared errors, got {s}")
        if s > self.tau:
            e = s - self.tau
            self.n += 1
            self.sum_exc += e
            self.sum_exc_sq += e * e
        return self.current()

    def current(self) -> tuple[float, float, float]:
        if self.n == 0:
            return 0.0, 0.0, 0.0
        mu = self.sum_exc / self.n
        sigma = math.sqrt(max(0.0, self.sum_exc_sq / self.n - mu * mu))
        return mu, sigma, mu + self.m * sigma

    def set_weight(self, m: float) -> "SeverityState":
        _check_weight(m)
        self.m = m
        return self

    def reset(self) -> None:
        self.n = 0
        self.sum_exc = self.sum_exc_sq = 0.0


@dataclass
class SeveritySeries:
    mu: np.ndarray
    sigma: np.ndarray
    index: np.ndarray
    count: np.ndarray


def streaming_severity(scores, tau: float, m: float = DEFAULT_WEIGHT) -> SeveritySeries:
    state = SeverityState(tau, m)
    out = np.array([state.update(float(s)) + (state.n,) for s in scores]).reshape(-1, 4)
    return SeveritySeries(out[:, 0], out[:, 1], out[:, 2], out[:, 3].astype(int))


def batch_severity(scores, tau: float, m: float = DEFAULT_WEIGHT) -> SeveritySeries:
    """Closed-form cumulative sums over the whole sequence at once."""
    _check_weight(m)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ContractError("anomaly scores must be non-negative")
    hit = s > tau
    exc = np.where(hit, s - tau, 0.0)
    n = np.cumsum(hit)
    safe = np.maximum(n, 1)
    mu = np.where(n > 0, np.cumsum(exc) / safe, 0.0)
    var = np.where(n > 0, np.cumsum(exc * exc) / safe - mu * mu, 0.0)
    sigma = np.sqrt(np.maximum(var, 0.0))
    return SeveritySeries(mu, sigma, mu + m * sigma, n)


def node_severity(scores: np.ndarray, tau: np.ndarray, m: float = DEFAULT_WEIGHT) -> list[SeveritySeries]:
    """Independent severity series for every row of an (N, T) score matrix."""
    return [batch_severity(row, float(t), m) for row, t in zip(scores, tau)]


def to_csv(series, labels, m: float = DEFAULT_WEIGHT) -> str:
    """Severity table for an :class:`~tgcn_fault.detection.AnomalySeries`."""
    sev = node_severity(series.scores, series.threshold, m)
    flags = series.scores > series.threshold[:, None]
    lines = [SEVERITY_HEADER]
    for j, t in enumerate(series.times):
        for i, label in enumerate(labels):
            r = sev[i]
            lines.append(
                f"{int(t)},{label},{float(series.scores[i, j])!r},{float(series.threshold[i])!r},"
                f"{int(flags[i, j])},{float(r.mu[j])!r},{float(r.sigma[j])!r},{float(r.index[j])!r}"
            )
    return "\n".join(lines) + "\n"


def mean_abs_step(values, mask=None) -> float:
    """Mean |x_t - x_{t-1}| over steps ``t`` where ``mask[t]`` holds (all steps by default)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(v) < 2:
        return 0.0
    steps = np.abs(np.diff(v))
    if mask is not None:
        steps = steps[np.asarray(mask, dtype=bool)[1:]]
    return float(steps.mean()) if len(steps) else 0.0


def fluctuation(scores, tau: float, m: float = DEFAULT_WEIGHT, mask=None) -> dict:
    """Step-to-step variation of the raw exceedance versus the severity index."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    exc = np.maximum(0.0, s - tau)
    idx = batch_severity(s, tau, m).index
    return {"exceedance": mean_abs_step(exc, mask), "index": mean_abs_step(idx, mask)}

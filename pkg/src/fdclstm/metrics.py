"""Hydrologic skill and signature metrics.

All metrics return a MetricValue rather than a bare float so degenerate
inputs (constant observations, too few points, everything masked) surface as
tagged undefined values instead of NaN poisoning downstream medians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllUndefined, LengthMismatch, NegativeFlow

ZERO_VARIANCE_OBS = "zero-variance-obs"
ZERO_VARIANCE_SIM = "zero-variance-sim"
ZERO_MEAN_OBS = "zero-mean-obs"
INSUFFICIENT_DATA = "insufficient-data"
ALL_MASKED = "all-masked"


@dataclass(frozen=True)
class MetricValue:
    value: float | None
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    @classmethod
    def of(cls, value: float) -> "MetricValue":
        return cls(float(value), None)

    @classmethod
    def undefined(cls, reason: str) -> "MetricValue":
        return cls(None, reason)


def _aligned(obs, sim, mask):
    obs = np.asarray(obs, dtype=np.float64)
    sim = np.asarray(sim, dtype=np.float64)
    if obs.shape != sim.shape:
        raise LengthMismatch(f"obs shape {obs.shape} vs sim shape {sim.shape}")
    if mask is None:
        mask = np.ones(obs.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != obs.shape:
            raise LengthMismatch(f"mask shape {mask.shape} vs obs shape {obs.shape}")
    return obs[mask], sim[mask]


def nse(obs, sim, mask=None) -> MetricValue:
    """Nash-Sutcliffe efficiency over unmasked entries."""
    o, s = _aligned(obs, sim, mask)
    if o.size == 0:
        return MetricValue.undefined(ALL_MASKED)
    if o.size < 2:
        return MetricValue.undefined(INSUFFICIENT_DATA)
    ss_obs = float(np.sum((o - o.mean()) ** 2))
    if ss_obs == 0.0:
        return MetricValue.undefined(ZERO_VARIANCE_OBS)
    ss_res = float(np.sum((s - o) ** 2))
    return MetricValue.of(1.0 - ss_res / ss_obs)


def kge(obs, sim, mask=None) -> MetricValue:
    """Kling-Gupta efficiency, 2009 formulation.

    1 - sqrt((r-1)^2 + (sd_s/sd_o - 1)^2 + (mu_s/mu_o - 1)^2). The variance
    and mean ratios are undefined for constant or zero-mean observations.
    """
    o, s = _aligned(obs, sim, mask)
    if o.size == 0:
        return MetricValue.undefined(ALL_MASKED)
    if o.size < 2:
        return MetricValue.undefined(INSUFFICIENT_DATA)
    mu_o, mu_s = float(o.mean()), float(s.mean())
    sd_o, sd_s = float(o.std(ddof=1)), float(s.std(ddof=1))
    if sd_o == 0.0:
        return MetricValue.undefined(ZERO_VARIANCE_OBS)
    if mu_o == 0.0:
        return MetricValue.undefined(ZERO_MEAN_OBS)
    if sd_s == 0.0:
        return MetricValue.undefined(ZERO_VARIANCE_SIM)
    r = float(np.mean((o - mu_o) * (s - mu_s))) / (float(o.std(ddof=0)) * float(s.std(ddof=0)))
    alpha = sd_s / sd_o
    beta = mu_s / mu_o
    return MetricValue.of(1.0 - float(np.sqrt((r - 1.0) ** 2 + (alpha - 1.0) ** 2 + (beta - 1.0) ** 2)))


def acf1(series, mask=None) -> MetricValue:
    """Lag-1 autocorrelation: Pearson r of (x_t, x_{t+1}) over unmasked adjacent pairs."""
    x = np.asarray(series, dtype=np.float64)
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape:
            raise LengthMismatch(f"mask shape {m.shape} vs series shape {x.shape}")
    pair = m[:-1] & m[1:]
    a, b = x[:-1][pair], x[1:][pair]
    if a.size < 3:
        return MetricValue.undefined(INSUFFICIENT_DATA)
    sa, sb = a.std(ddof=0), b.std(ddof=0)
    if sa == 0.0 or sb == 0.0:
        return MetricValue.undefined(ZERO_VARIANCE_OBS)
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return MetricValue.of(r)


LH_ALPHA = 0.925


def _lh_pass(x: np.ndarray) -> np.ndarray:
    # one Lyne-Hollick sweep: quickflow filter with the clamped baseflow fed
    # back into the recursion
    n = x.size
    b = np.empty(n)
    b[0] = x[0]
    q_prev = x[0] - b[0]
    for t in range(1, n):
        q = LH_ALPHA * q_prev + 0.5 * (1.0 + LH_ALPHA) * (x[t] - x[t - 1])
        bt = x[t] - q
        bt = min(max(bt, 0.0), x[t])
        b[t] = bt
        q_prev = x[t] - bt
    return b


def baseflow_index(series, mask=None) -> MetricValue:
    """Lyne-Hollick BFI (alpha = 0.925, three passes: forward, backward, forward).

    Runs on the longest contiguous unmasked stretch, which must span at least
    90 days. Baseflow is clamped to [0, flow] at every step.
    """
    x = np.asarray(series, dtype=np.float64)
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape:
            raise LengthMismatch(f"mask shape {m.shape} vs series shape {x.shape}")

    best_lo = best_hi = 0
    lo = None
    padded = np.concatenate([m, [False]])
    for i, ok in enumerate(padded):
        if ok and lo is None:
            lo = i
        elif not ok and lo is not None:
            if i - lo > best_hi - best_lo:
                best_lo, best_hi = lo, i
            lo = None
    run = x[best_lo:best_hi]
    if run.size < 90:
        return MetricValue.undefined(INSUFFICIENT_DATA)
    if np.any(run < 0.0):
        raise NegativeFlow(f"negative flow in BFI input (min {run.min()})")
    total = float(run.sum())
    if total == 0.0:
        return MetricValue.undefined(ZERO_VARIANCE_OBS)
    b = _lh_pass(run)
    b = _lh_pass(b[::-1])[::-1]
    b = _lh_pass(b)
    return MetricValue.of(float(b.sum()) / total)


def median(values: list[MetricValue]) -> tuple[float, int]:
    """Median of defined values plus the count excluded as undefined."""
    defined = [v.value for v in values if v.defined]
    n_undefined = len(values) - len(defined)
    if not defined:
        raise AllUndefined(f"no defined values among {len(values)}")
    return float(np.median(defined)), n_undefined

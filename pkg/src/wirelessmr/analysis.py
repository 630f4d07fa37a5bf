"""Normalized communication load: closed forms and Monte-Carlo estimates.

Closed forms are exact Fractions whenever mu and alpha are rational; an
infinite load (ZF with useless CSI) is ``math.inf``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import SystemConfig, validate_config
from .shuffle import Scheme, System, prepare_system

__all__ = [
    "NclEstimate",
    "NclValue",
    "SweepRow",
    "alpha_grid",
    "closed_form",
    "convergence_sweep",
    "empirical_ncl",
    "fig3_table",
    "ncl_cm",
    "ncl_sp",
    "ncl_timesharing",
    "ncl_zf",
]

Real = Union[Fraction, float]


@dataclass(frozen=True)
class NclValue:
    value: Real
    scheme: str
    params: Tuple[Real, int, Optional[Real]]

    def __float__(self):
        return float(self.value)

    @property
    def is_infinite(self) -> bool:
        return self.value == math.inf

    def __str__(self):
        return "inf" if self.is_infinite else repr(float(self.value))


def _check_mu(mu, K) -> Fraction:
    mu = Fraction(mu)
    if mu <= 0 or (mu * K).denominator != 1:
        raise ValueError(f"mu*K must be a positive integer, got mu={mu}, K={K}")
    return mu


def _exact(alpha) -> Real:
    if isinstance(alpha, float):
        return alpha
    return Fraction(alpha)


def ncl_cm(mu, K: int) -> NclValue:
    mu = _check_mu(mu, K)
    return NclValue((1 - mu) / (mu * K), "cm", (mu, K, None))


def ncl_zf(mu, K: int, alpha) -> NclValue:
    mu, alpha = _check_mu(mu, K), _exact(alpha)
    if mu == 1:
        return NclValue(Fraction(0), "zf", (mu, K, alpha))
    if alpha == 0:
        return NclValue(math.inf, "zf", (mu, K, alpha))
    return NclValue((1 - mu) / (alpha * K * min(1, 2 * mu)), "zf", (mu, K, alpha))


def ncl_sp(mu, K: int, alpha) -> NclValue:
    mu, alpha = _check_mu(mu, K), _exact(alpha)
    denom = (1 - alpha) * mu * K + alpha * K * min(1, 2 * mu)
    return NclValue((1 - mu) / denom, "sp", (mu, K, alpha))


def ncl_timesharing(mu, K: int, alpha) -> Tuple[NclValue, int]:
    """Best mix gamma*CM + (1-gamma)*ZF; affine in gamma, so an endpoint wins.

    Returns the load and gamma (1 on ties).
    """
    cm, zf = ncl_cm(mu, K), ncl_zf(mu, K, alpha)
    if cm.value <= zf.value:
        return NclValue(cm.value, "ts", zf.params), 1
    return NclValue(zf.value, "ts", zf.params), 0


def closed_form(cfg: SystemConfig, scheme) -> NclValue:
    scheme = Scheme(scheme)
    if scheme is Scheme.CM:
        return ncl_cm(cfg.mu, cfg.K)
    if scheme is Scheme.ZF:
        return ncl_zf(cfg.mu, cfg.K, cfg.alpha)
    return ncl_sp(cfg.mu, cfg.K, cfg.alpha)


@dataclass
class NclEstimate:
    value: float
    stderr: float
    trials: int
    closed_form: NclValue
    successes: int
    samples: List[float] = field(repr=False, default_factory=list)

    @property
    def gap(self) -> float:
        return abs(self.value - float(self.closed_form.value))


def empirical_ncl(
    cfg: SystemConfig,
    scheme,
    trials: int,
    *,
    oracle: bool = False,
    base: float = 2.0,
    system: Optional[System] = None,
) -> NclEstimate:
    """Mean shuffle time, normalized by NQF / log(P), over independent trials.

    Trial ``i`` draws its channels from ``default_rng([seed, i])``, so runs
    at different P share the same underlying fading realizations.
    """
    validate_config(cfg)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    system = system or prepare_system(cfg, scheme)
    scale = math.log(cfg.P) / math.log(base) / (cfg.N * cfg.Q * cfg.F)
    samples = []
    successes = 0
    for i in range(trials):
        rng = None if oracle else np.random.default_rng([cfg.seed, i])
        result = system.shuffle(rng, oracle=oracle, base=base, cfg=cfg)
        samples.append(result.total_duration * scale)
        successes += result.success
    arr = np.asarray(samples)
    value = float(math.fsum(samples) / trials)
    stderr = float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 and np.isfinite(arr).all() else 0.0
    return NclEstimate(value, stderr, trials, closed_form(cfg, scheme), successes, samples)


@dataclass
class SweepRow:
    P: float
    estimate: float
    stderr: float
    gap: float
    closed_form: NclValue
    trials: int
    seconds: float = 0.0


def convergence_sweep(cfg: SystemConfig, scheme, powers: Sequence[float], trials: int = 200):
    """Estimate the load at each power; returns ``(rows, status)``.

    ``status`` is ``"converging"`` when the absolute gap to the closed form is
    non-increasing over the last three powers, ``"divergent"`` when the closed
    form is infinite, and ``"not-converging"`` otherwise.
    """
    powers = list(powers)
    if powers != sorted(powers):
        raise ValueError("powers must be sorted ascending")
    if len(powers) < 3 or math.log10(powers[-1] / powers[0]) < 3 - 1e-9:
        raise ValueError("sweep must span at least three decades of P")
    system = prepare_system(cfg, scheme)
    rows = []
    for P in powers:
        tic = time.perf_counter()
        est = empirical_ncl(cfg.with_(P=float(P)), scheme, trials, system=system)
        elapsed = time.perf_counter() - tic
        rows.append(SweepRow(float(P), est.value, est.stderr, est.gap, est.closed_form, trials, elapsed))
    if rows[-1].closed_form.is_infinite:
        status = "divergent"
    else:
        tail = [r.gap for r in rows[-3:]]
        status = "converging" if all(b <= a for a, b in zip(tail, tail[1:])) else "not-converging"
    return rows, status


def alpha_grid(step: Fraction = Fraction(1, 100)) -> List[Fraction]:
    count = int(1 / step)
    return [i * step for i in range(count + 1)]


def fig3_table(mu, K: int, alphas: Sequence) -> List[dict]:
    """Closed-form loads of all schemes over an alpha grid."""
    rows = []
    for a in alphas:
        ts, _ = ncl_timesharing(mu, K, a)
        rows.append(
            {
                "alpha": a,
                "delta_cm": ncl_cm(mu, K),
                "delta_zf": ncl_zf(mu, K, a),
                "delta_sp": ncl_sp(mu, K, a),
                "delta_ts": ts,
            }
        )
    return rows

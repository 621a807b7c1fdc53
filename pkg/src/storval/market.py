"""Two-settlement market: imbalance cost, pathwise profit, SAA expected profit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import map_chunks
from .storage import StorageType, _next_state, simulate_batch, simulate_policy, threshold_policy
from .wind_process import WindProcessSpec, sample_paths

__all__ = [
    "AssumptionViolation",
    "MarketPrices",
    "ProfitEstimate",
    "stage_cost",
    "path_profit",
    "path_profits",
    "policy_cost",
    "expected_profit",
    "estimate",
]


class AssumptionViolation(ValueError):
    """Market data breaks a modelling assumption (e.g. ``p > m_alpha``)."""


@dataclass(frozen=True)
class MarketPrices:
    """Day-ahead price ``p`` and mean shortfall/surplus imbalance prices.

    Random imbalance prices enter only through their means: the stage
    cost is linear in them and they are independent of supply.
    """

    p: float
    m_alpha: float
    m_beta: float

    def __post_init__(self):
        for name in ("p", "m_alpha", "m_beta"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite nonnegative number, got {v}")

    def check(self) -> None:
        """Raise unless ``p <= m_alpha`` (no incentive to over-contract)."""
        if self.p > self.m_alpha:
            raise AssumptionViolation(
                f"Assumption 1 violated: day-ahead price p={self.p} exceeds mean shortfall price m_alpha={self.m_alpha}"
            )

    @property
    def gamma(self) -> float:
        """Critical ratio ``(p + m_beta) / (m_alpha + m_beta)``."""
        denom = self.m_alpha + self.m_beta
        if denom <= 0:
            raise AssumptionViolation("critical ratio undefined: m_alpha + m_beta must be positive")
        g = (self.p + self.m_beta) / denom
        if g == 0:
            raise AssumptionViolation("critical ratio is zero (p = m_beta = 0); the quantile is degenerate")
        return g

    def to_dict(self) -> dict:
        return {"p": self.p, "m_alpha": self.m_alpha, "m_beta": self.m_beta}


@dataclass(frozen=True)
class ProfitEstimate:
    mean: float
    std_error: float
    paths: int
    seed: int | None

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "paths": self.paths, "seed": self.seed}


def stage_cost(x, u, xi, prices: MarketPrices):
    """Imbalance cost of one period after storage input ``u``."""
    return prices.m_alpha * max(x - xi - u, 0) + prices.m_beta * max(xi + u - x, 0)


def _stage_costs(x, u: np.ndarray, paths: np.ndarray, prices: MarketPrices) -> np.ndarray:
    return prices.m_alpha * np.maximum(x - paths - u, 0.0) + prices.m_beta * np.maximum(paths + u - x, 0.0)


def path_profit(x, theta: StorageType, path, prices: MarketPrices) -> float:
    """Revenue ``N*p*x`` minus summed imbalance cost under the threshold policy."""
    traj = simulate_policy(x, theta, path)
    costs = [stage_cost(x, u, float(xi), prices) for u, xi in zip(traj.inputs, path)]
    return len(costs) * prices.p * x - sum(costs)


def policy_cost(x, theta: StorageType, path, prices: MarketPrices):
    """Total imbalance cost of the threshold policy along one path.

    Unlike :func:`path_profit` this never converts to float: feed it
    :class:`fractions.Fraction` (or ``gmpy2.mpq``) values and every
    operation is exact, which is what pathwise comparisons with zero
    tolerance need.
    """
    z = 0
    total = 0
    for xi in path:
        u = threshold_policy(x, theta, z, xi)
        total = total + stage_cost(x, u, xi, prices)
        z = _next_state(theta, z, u)
    return total


def path_costs(x, theta: StorageType, paths: np.ndarray, prices: MarketPrices) -> np.ndarray:
    """Per-period imbalance costs, shape ``(M, N)``."""
    u = simulate_batch(x, theta, paths)
    return _stage_costs(x, u, paths, prices)


def path_profits(x, theta: StorageType, paths: np.ndarray, prices: MarketPrices) -> np.ndarray:
    """Vectorized :func:`path_profit` over the rows of ``paths``."""
    paths = np.asarray(paths, dtype=float)
    n = paths.shape[1]
    costs = path_costs(x, theta, paths, prices)
    return n * prices.p * x - _row_sum(costs)


def _row_sum(a: np.ndarray) -> np.ndarray:
    # left-to-right accumulation, matching builtin sum() in path_profit, so a
    # path's profit does not depend on which batch it was evaluated in
    out = np.zeros(a.shape[0])
    for k in range(a.shape[1]):
        out = out + a[:, k]
    return out


def estimate(values: np.ndarray, seed: int | None = None) -> ProfitEstimate:
    """Sample mean and standard error of per-path values."""
    values = np.asarray(values, dtype=float)
    m = values.size
    mean = math.fsum(values) / m
    se = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return ProfitEstimate(mean=mean, std_error=se, paths=m, seed=seed)


def expected_profit(
    x: float,
    theta: StorageType,
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int = 10_000,
    seed: int = 0,
) -> ProfitEstimate:
    """Sample-average estimate of expected profit under the threshold policy."""
    prices.check()
    if paths < 2:
        raise ValueError("paths must be >= 2")
    xi = sample_paths(spec, seed, paths)
    values = np.concatenate(
        map_chunks(lambda lo, hi: path_profits(x, theta, xi[lo:hi], prices), paths, chunk=8192)
    )
    return estimate(values, seed)

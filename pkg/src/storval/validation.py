"""Property checks shared by the ``validate`` command and the test suite.

Each check returns a :class:`CheckResult` carrying a pass flag and the
statistics it was decided on, so a failure can be diagnosed from the
JSON report alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .crossings import finite_difference_marginal_value, marginal_value, verify_lemma2
from .market import MarketPrices, path_profits
from .optimize import DiscreteProcess, dp_reference_value, exact_policy_value
from .storage import StorageType
from .wind_process import WindProcessSpec, sample_paths

__all__ = [
    "CheckResult",
    "DiscreteInstance",
    "random_discrete_instance",
    "check_lemma2",
    "check_threshold_vs_dp",
    "check_concavity",
    "check_marginal_value_vs_fd",
]

# lattice for the exact DP instances: supply values, capacities, rates and
# contracts are all multiples of this, so every reachable state is too
LATTICE = Fraction(1, 20)
# a grid that misses most lattice states, for the discretization bound
OFF_GRID = Fraction(1, 30)
# slack for float rounding in midpoint comparisons that are exactly tight
FLOAT_SLACK = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        # wall-clock time stays off the report so repeated runs are byte-identical
        return {"name": self.name, "passed": self.passed, "stats": self.stats}


@dataclass(frozen=True)
class DiscreteInstance:
    x: Fraction
    theta: StorageType
    process: DiscreteProcess
    prices: MarketPrices


def random_discrete_instance(rng: np.random.Generator, max_horizon: int = 4, max_support: int = 9) -> DiscreteInstance:
    """Small exact-arithmetic instance with independent periods.

    Horizon ``<= max_horizon``, per-period support of at most
    ``max_support`` lattice points, ``b, r <= 0.4`` and rational prices
    obeying ``p <= m_alpha``.
    """
    n = int(rng.integers(1, max_horizon + 1))
    grid = [k * LATTICE for k in range(21)]
    values, probs = [], []
    for _ in range(n):
        s = int(rng.integers(1, max_support + 1))
        idx = np.sort(rng.choice(len(grid), size=s, replace=False))
        w = [int(v) for v in rng.integers(1, 6, size=s)]
        values.append(tuple(grid[i] for i in idx))
        probs.append(tuple(Fraction(v, sum(w)) for v in w))
    m_alpha = Fraction(int(rng.integers(0, 5)))
    m_beta = Fraction(int(rng.integers(0 if m_alpha > 0 else 1, 5)))
    p = Fraction(int(rng.integers(0, 4 * int(m_alpha) + 1)), 4)
    theta = StorageType(int(rng.integers(1, 9)) * LATTICE, int(rng.integers(1, 9)) * LATTICE)
    x = int(rng.integers(0, 21)) * LATTICE
    return DiscreteInstance(x, theta, DiscreteProcess(tuple(values), tuple(probs)), MarketPrices(p, m_alpha, m_beta))


def _timed(name: str, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, stats = fn()
    return CheckResult(name, bool(passed), stats, round(time.perf_counter() - t0, 3))


def check_lemma2(spec: WindProcessSpec, prices: MarketPrices, paths: int, seed: int, z_max: float = 3.0) -> CheckResult:
    """Shortfall frequency equals ``gamma`` and no path ties the contract."""

    def run():
        rep = verify_lemma2(spec, prices, paths, seed)
        ok = abs(rep.below_z) <= z_max and abs(rep.above_z) <= z_max and rep.identity_fraction == 1.0
        return ok, rep.to_dict()

    return _timed("lemma2", run)


def check_threshold_vs_dp(instances: int, seed: int) -> CheckResult:
    """Threshold policy against backward induction on random exact instances.

    On the lattice grid (which holds every reachable state) the two values
    must be equal as rationals; on an off-lattice grid the DP may lose at
    most ``step * (m_alpha + m_beta) * N``.
    """

    def run():
        equal = within = 0
        worst_gap = Fraction(0)
        for i in range(instances):
            inst = random_discrete_instance(np.random.default_rng([seed, i]))
            n = inst.process.horizon
            thr = exact_policy_value(inst.x, inst.theta, inst.process, inst.prices)
            dp = dp_reference_value(inst.x, inst.theta, inst.process, inst.prices, LATTICE)
            coarse = dp_reference_value(inst.x, inst.theta, inst.process, inst.prices, OFF_GRID)
            bound = OFF_GRID * (inst.prices.m_alpha + inst.prices.m_beta) * n
            equal += thr == dp
            within += coarse - bound <= thr and thr >= coarse
            worst_gap = max(worst_gap, abs(thr - dp))
        stats = {
            "instances": instances,
            "exact_match": equal,
            "within_bound": within,
            "max_abs_gap": float(worst_gap),
        }
        return equal == instances and within == instances, stats

    return _timed("threshold_vs_dp", run)


def check_concavity(
    theta: StorageType,
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int,
    seed: int,
    points: int = 11,
    z_max: float = 3.0,
) -> CheckResult:
    """Midpoint concavity of the sampled objective on a uniform contract grid.

    Every pair ``(i, j)`` with an on-grid midpoint ``m`` is tested with the
    per-path statistic ``J_m - (J_i + J_j)/2`` (common random numbers), so
    the standard error accounts for the correlation between grid points.
    """

    def run():
        xi = sample_paths(spec, seed, paths)
        xs = np.linspace(0.0, 1.0, points)
        prof = np.stack([path_profits(float(x), theta, xi, prices) for x in xs])
        worst = math.inf
        violations = pairs = 0
        for i in range(points):
            for j in range(i + 2, points, 2):
                m = (i + j) // 2
                d = prof[m] - 0.5 * (prof[i] + prof[j])
                se = float(np.std(d, ddof=1) / math.sqrt(paths))
                slack = float(d.mean()) + z_max * se + FLOAT_SLACK
                worst = min(worst, slack)
                violations += slack < 0
                pairs += 1
        stats = {"pairs": pairs, "violations": violations, "min_slack": worst, "grid": xs.tolist()}
        return violations == 0, stats

    return _timed("concavity", run)


def check_marginal_value_vs_fd(
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int,
    seed: int,
    epsilon: float = 1e-3,
    r: float = 1.0,
    rel_tol: float = 0.05,
    z_max: float = 3.0,
) -> CheckResult:
    """Crossing formula against a finite difference of the optimal value (ideal storage)."""

    def run():
        mv = marginal_value(spec, prices, paths=paths, seed=seed)
        fd = finite_difference_marginal_value(spec, prices, epsilon=epsilon, paths=paths, seed=seed, r=r)
        gap = abs(fd.value - mv.formula_value)
        se = math.hypot(fd.std_error, mv.formula_se)
        allowed = max(rel_tol * abs(mv.formula_value), z_max * se)
        stats = {
            "formula": mv.formula_value,
            "formula_se": mv.formula_se,
            "method": mv.method,
            "finite_difference": fd.value,
            "finite_difference_se": fd.std_error,
            "epsilon": epsilon,
            "abs_gap": gap,
            "allowed_gap": allowed,
        }
        return gap <= allowed, stats

    return _timed("marginal_value_vs_fd", run)

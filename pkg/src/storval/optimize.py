"""Contract sizing, optimal value, storage sizing and a DP reference oracle.

The expected profit is concave in the contract size, so a golden-section
search over [0, 1] suffices once the sample paths are frozen (common
random numbers make the sampled objective a deterministic function of
``x``). Contracts above 1 are never better: supply is normalized to
nameplate and ``p <= m_alpha`` means each extra contracted unit earns
``p`` but is certainly short, costing ``m_alpha`` in expectation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._parallel import map_chunks
from .market import (
    MarketPrices,
    ProfitEstimate,
    estimate,
    expected_profit,
    path_profits,
    stage_cost,
)
from .storage import StorageType, _next_state, threshold_policy
from .wind_process import WindProcessSpec, quantile, sample_paths

__all__ = [
    "GoldenResult",
    "golden_section_max",
    "ContractSolution",
    "SizingResult",
    "DiscreteProcess",
    "saa_objective",
    "optimal_contract_no_storage",
    "optimize_contract",
    "optimal_value",
    "supply_function",
    "optimize_storage_size",
    "dp_reference_value",
    "exact_policy_value",
]

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class GoldenResult:
    x: float
    fx: float
    bracket: tuple[float, float]
    evaluations: int

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]


def golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-4,
    prefer: str = "left",
) -> GoldenResult:
    """Maximize a unimodal ``f`` on ``[lo, hi]`` until the bracket is ``<= tol`` wide.

    The answer is the best of the final bracket's edges and midpoint and the
    two domain endpoints (so monotone objectives land exactly on the
    boundary). Exact ties go to the smallest point when ``prefer='left'``
    and to the largest when ``prefer='right'``; ties inside the search loop
    are broken the same way.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if prefer not in ("left", "right"):
        raise ValueError("prefer must be 'left' or 'right'")
    cache: dict[float, float] = {}

    def ev(x: float) -> float:
        if x not in cache:
            cache[x] = float(f(x))
        return cache[x]

    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    while b - a > tol:
        fc, fd = ev(c), ev(d)
        go_right = fc < fd or (fc == fd and prefer == "right")
        if go_right:
            a, c = c, d
            d = a + INV_PHI * (b - a)
        else:
            b, d = d, c
            c = b - INV_PHI * (b - a)
    mid = 0.5 * (a + b)
    candidates = sorted({float(lo), a, mid, b, float(hi)})
    if prefer == "right":
        candidates.reverse()
    best = max(candidates, key=ev)  # max() keeps the first of equal maxima
    return GoldenResult(x=best, fx=ev(best), bracket=(a, b), evaluations=len(cache))


@dataclass(frozen=True)
class ContractSolution:
    x_star: float
    value: float
    value_se: float
    method: str
    bracket_width: float
    paths: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star,
            "value": self.value,
            "value_se": self.value_se,
            "method": self.method,
            "bracket_width": self.bracket_width,
            "paths": self.paths,
            "seed": self.seed,
        }


def saa_objective(
    theta: StorageType, spec: WindProcessSpec, prices: MarketPrices, paths: int, seed: int
) -> Callable[[float], ProfitEstimate]:
    """Memoized ``x -> ProfitEstimate`` on one frozen path set."""
    xi = sample_paths(spec, seed, paths)
    memo: dict[float, ProfitEstimate] = {}

    def objective(x: float) -> ProfitEstimate:
        if x not in memo:
            vals = np.concatenate(
                map_chunks(lambda lo, hi: path_profits(x, theta, xi[lo:hi], prices), paths, chunk=8192)
            )
            memo[x] = estimate(vals, seed)
        return memo[x]

    return objective


def optimal_contract_no_storage(
    spec: WindProcessSpec, prices: MarketPrices, paths: int = 10_000, seed: int = 0
) -> ContractSolution:
    """Newsvendor contract: the ``gamma``-quantile of the time-averaged CDF."""
    prices.check()
    x = quantile(spec, prices.gamma)
    est = expected_profit(x, StorageType(), spec, prices, paths, seed)
    return ContractSolution(x, est.mean, est.std_error, "quantile-closed-form", 0.0, paths, seed)


def optimize_contract(
    theta: StorageType,
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int = 10_000,
    seed: int = 0,
    tol: float = 1e-4,
) -> ContractSolution:
    """Golden-section maximization of the sampled expected profit over ``x in [0, 1]``."""
    prices.check()
    if paths < 2:
        raise ValueError("paths must be >= 2")
    obj = saa_objective(theta, spec, prices, paths, seed)
    res = golden_section_max(lambda x: obj(x).mean, 0.0, 1.0, tol=tol, prefer="left")
    est = obj(res.x)
    return ContractSolution(res.x, est.mean, est.std_error, "golden-section-saa", res.width, paths, seed)


def optimal_value(
    theta: StorageType,
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int = 10_000,
    seed: int = 0,
    tol: float = 1e-4,
) -> ProfitEstimate:
    """Sampled maximum expected profit for storage type ``theta``."""
    sol = optimize_contract(theta, spec, prices, paths, seed, tol)
    return ProfitEstimate(sol.value, sol.value_se, paths, seed)


def supply_function(
    spec: WindProcessSpec, m_alpha: float, m_beta: float, grid: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Storage-free optimal contract as a function of the day-ahead price.

    Returns ``(prices, contracts)``; raises if any grid price breaks
    ``p <= m_alpha`` or gives a zero critical ratio.
    """
    ps = np.asarray(sorted(float(p) for p in grid))
    xs = []
    for p in ps:
        prices = MarketPrices(float(p), m_alpha, m_beta)
        prices.check()
        xs.append(quantile(spec, prices.gamma))
    xs = np.asarray(xs)
    if np.any(np.diff(xs) < 0):  # pragma: no cover - quantile of a nondecreasing ratio
        raise RuntimeError("supply function is not monotone")
    return ps, xs


@dataclass(frozen=True)
class SizingResult:
    b: float
    r: float
    net_value: float
    gross_value: float
    value_at_origin: float
    marginal_value_at_origin: float
    invest: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def optimize_storage_size(
    spec: WindProcessSpec,
    prices: MarketPrices,
    c_b: float,
    c_r: float,
    b_max: float = 1.0,
    r_max: float = 1.0,
    losses: StorageType | None = None,
    paths: int = 2_000,
    seed: int = 0,
    tol: float = 1e-3,
    x_tol: float = 1e-6,
    rounds: int = 4,
) -> SizingResult:
    """Maximize ``J*(b, r) - c_b*b - c_r*r`` over ``[0, b_max] x [0, r_max]``.

    Coordinate ascent with a golden-section line search per coordinate on
    the frozen-path concave surface, starting from the far corner (at
    ``b = 0`` or ``r = 0`` the surface is flat in the other coordinate).
    Ties prefer larger storage. The origin is always a candidate, so the
    net value never falls below ``J*(0)``.
    """
    from .crossings import marginal_value

    if b_max <= 0 or r_max <= 0:
        raise ValueError("box bounds b_max and r_max must be positive")
    if c_b < 0 or c_r < 0:
        raise ValueError("capital costs must be nonnegative")
    prices.check()
    base = losses or StorageType()

    memo: dict[tuple[float, float], float] = {}

    def jstar(b: float, r: float) -> float:
        if b == 0 or r == 0:
            b, r = 0.0, 0.0
        if (b, r) not in memo:
            memo[(b, r)] = optimize_contract(base.with_capacity(b, r), spec, prices, paths, seed, x_tol).value
        return memo[(b, r)]

    def net(b: float, r: float) -> float:
        return jstar(b, r) - c_b * b - c_r * r

    b, r = b_max, r_max
    for _ in range(rounds):
        prev = (b, r)
        b = golden_section_max(lambda t: net(t, r), 0.0, b_max, tol, prefer="right").x
        r = golden_section_max(lambda t: net(b, t), 0.0, r_max, tol, prefer="right").x
        if (b, r) == prev:
            break
    if net(0.0, 0.0) > net(b, r):
        b, r = 0.0, 0.0
    mv = marginal_value(spec, prices, paths=max(paths, 2), seed=seed, storage=base).formula_value
    return SizingResult(
        b=b,
        r=r,
        net_value=net(b, r),
        gross_value=jstar(b, r),
        value_at_origin=jstar(0.0, 0.0),
        marginal_value_at_origin=mv,
        invest=mv > c_b,
    )


# ---------------------------------------------------------------------------
# exact oracles on finite-support independent processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteProcess:
    """Independent periods with finite support ``values[k]`` and weights ``probs[k]``.

    Values may be floats or :class:`~fractions.Fraction` (for exact
    arithmetic); probabilities of each period must sum to one.
    """

    values: tuple[tuple, ...]
    probs: tuple[tuple, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must list the same (nonzero) number of periods")
        for v, p in zip(self.values, self.probs):
            if len(v) != len(p) or not v:
                raise ValueError("each period needs matching nonempty values and probs")
            if abs(sum(p) - 1) > 1e-12:
                raise ValueError("period probabilities must sum to one")

    @property
    def horizon(self) -> int:
        return len(self.values)

    @classmethod
    def iid(cls, values: Sequence, probs: Sequence | None = None, horizon: int = 1) -> "DiscreteProcess":
        values = tuple(values)
        if probs is None:
            w = Fraction(1, len(values)) if all(isinstance(v, Fraction) for v in values) else 1 / len(values)
            probs = (w,) * len(values)
        return cls((values,) * horizon, (tuple(probs),) * horizon)


def exact_policy_value(x, theta: StorageType, process: DiscreteProcess, prices: MarketPrices):
    """Expected profit of the threshold policy by enumerating every path."""
    n = process.horizon
    total_cost = 0
    for combo in itertools.product(*(range(len(v)) for v in process.values)):
        weight = 1
        z = 0
        cost = 0
        for k, i in enumerate(combo):
            xi = process.values[k][i]
            weight = weight * process.probs[k][i]
            u = threshold_policy(x, theta, z, xi)
            cost = cost + stage_cost(x, u, xi, prices)
            z = _next_state(theta, z, u)
        total_cost = total_cost + weight * cost
    return n * prices.p * x - total_cost


def dp_reference_value(
    x, theta: StorageType, process: DiscreteProcess, prices: MarketPrices, z_step
):
    """Optimal expected profit by backward induction on a uniform state grid.

    States are ``j * z_step`` for ``0 <= j * z_step <= b``; inputs move
    between grid states within the rate limit. The supply is observed
    before the input is chosen. Ideal storage only. The result is a lower
    bound on the true optimum and is within ``z_step*(m_alpha+m_beta)*N``
    of it.
    """
    if not theta.ideal:
        raise ValueError("dynamic-programming oracle covers ideal storage only")
    if z_step <= 0:
        raise ValueError("z_step must be positive")
    if theta.b > 0 and theta.r > 0 and z_step > min(theta.b, theta.r):
        raise ValueError(
            f"grid step {z_step} exceeds min(b, r) = {min(theta.b, theta.r)}; no nonzero feasible input on the grid"
        )
    n = process.horizon
    top = int(theta.b // z_step) if theta.b > 0 else 0
    while (top + 1) * z_step <= theta.b:
        top += 1
    max_move = int(theta.r // z_step) if theta.r > 0 else 0
    while (max_move + 1) * z_step <= theta.r:
        max_move += 1
    max_move = min(max_move, top)
    levels = [j * z_step for j in range(top + 1)]

    future = [0] * (top + 1)  # expected cost-to-go, indexed by grid state
    for k in reversed(range(n)):
        current = []
        for j in range(top + 1):
            z = levels[j]
            acc = 0
            for xi, w in zip(process.values[k], process.probs[k]):
                best = None
                for jn in range(max(0, j - max_move), min(top, j + max_move) + 1):
                    c = stage_cost(x, z - levels[jn], xi, prices) + future[jn]
                    if best is None or c < best:
                        best = c
                acc = acc + w * best
            current.append(acc)
        future = current
    return n * prices.p * x - future[0]

"""Strict level crossings and the marginal value of storage capacity at b = 0.

The marginal value of the first unit of energy capacity is

    (rho*m_alpha + m_beta) * E[downcrossings of x*] + m_beta * P{xi_{N-1} > x*}

with ``x*`` the storage-free optimal contract and ``rho`` the round-trip
efficiency (1 for ideal storage). Each strict downcrossing is one
arbitrage opportunity: charge on the surplus side, discharge right after.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import map_chunks
from .market import MarketPrices, estimate, path_profits
from .optimize import optimize_contract
from .storage import StorageType
from .wind_process import (
    WindProcessSpec,
    empirical_quantile,
    quantile,
    sample_paths,
)

__all__ = [
    "CrossingStats",
    "MarginalValueReport",
    "Lemma2Report",
    "FiniteDifferenceResult",
    "crossing_stats",
    "crossing_counts",
    "verify_lemma2",
    "marginal_value",
    "marginal_value_iid_closed_form",
    "estimate_marginal_value_from_data",
    "finite_difference_marginal_value",
]


@dataclass(frozen=True)
class CrossingStats:
    """Strict crossing bookkeeping of one path against a level.

    Ties (``xi_k == x``) are neither above nor below and never form part
    of a crossing. Without ties, crossings alternate, so up- and
    downcrossing counts differ by at most one.
    """

    downcrossings: int
    upcrossings: int
    above_count: int
    below_count: int
    tie_count: int
    last_period_above: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def crossing_stats(x: float, path) -> CrossingStats:
    a = np.asarray(path, dtype=float)
    above = a > x
    below = a < x
    return CrossingStats(
        downcrossings=int(np.count_nonzero(above[:-1] & below[1:])),
        upcrossings=int(np.count_nonzero(below[:-1] & above[1:])),
        above_count=int(np.count_nonzero(above)),
        below_count=int(np.count_nonzero(below)),
        tie_count=int(np.count_nonzero(a == x)),
        last_period_above=bool(above[-1]),
    )


def crossing_counts(x: float, paths: np.ndarray) -> dict[str, np.ndarray]:
    """Row-wise crossing statistics of a path matrix."""
    above = paths > x
    below = paths < x
    return {
        "down": np.count_nonzero(above[:, :-1] & below[:, 1:], axis=1),
        "up": np.count_nonzero(below[:, :-1] & above[:, 1:], axis=1),
        "above": np.count_nonzero(above, axis=1),
        "below": np.count_nonzero(below, axis=1),
        "last_above": above[:, -1],
    }


# ---------------------------------------------------------------------------


def _zscore(diff: float, se: float) -> float:
    if se > 0:
        return diff / se
    return 0.0 if diff == 0 else math.copysign(math.inf, diff)


@dataclass(frozen=True)
class Lemma2Report:
    gamma: float
    x_star: float
    paths: int
    below_fraction: float
    below_se: float
    below_z: float
    above_fraction: float
    above_se: float
    above_z: float
    identity_fraction: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_lemma2(
    spec: WindProcessSpec, prices: MarketPrices, paths: int = 100_000, seed: int = 0
) -> Lemma2Report:
    """Monte Carlo check that the supply falls short of ``x* = F^-1(gamma)`` a
    fraction ``gamma`` of the time and exceeds it a fraction ``1 - gamma``.

    ``identity_fraction`` is the share of paths on which the below and
    above counts add up to the horizon exactly.
    """
    if not spec.is_continuous:
        raise ValueError("shortfall-frequency identities need a continuous process; empirical traces can tie")
    prices.check()
    gamma = prices.gamma
    x = quantile(spec, gamma)
    xi = sample_paths(spec, seed, paths)
    n = spec.horizon
    below = np.count_nonzero(xi < x, axis=1) / n
    above = np.count_nonzero(xi > x, axis=1) / n
    eb, ea = estimate(below), estimate(above)
    ident = np.count_nonzero(np.count_nonzero(xi < x, axis=1) + np.count_nonzero(xi > x, axis=1) == n)
    return Lemma2Report(
        gamma=gamma,
        x_star=x,
        paths=paths,
        below_fraction=eb.mean,
        below_se=eb.std_error,
        below_z=_zscore(eb.mean - gamma, eb.std_error),
        above_fraction=ea.mean,
        above_se=ea.std_error,
        above_z=_zscore(ea.mean - (1 - gamma), ea.std_error),
        identity_fraction=ident / paths,
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginalValueReport:
    formula_value: float
    formula_se: float
    expected_downcrossings: float
    downcrossings_se: float
    tail_probability: float
    tail_se: float
    x_star_used: float
    rho: float
    method: str
    paths: int | None = None
    tie_count: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _assemble(prices: MarketPrices, rho: float, down: float, tail: float) -> float:
    return (rho * prices.m_alpha + prices.m_beta) * down + prices.m_beta * tail


def marginal_value(
    spec: WindProcessSpec,
    prices: MarketPrices,
    paths: int = 100_000,
    seed: int = 0,
    storage: StorageType | None = None,
    method: str = "auto",
) -> MarginalValueReport:
    """Marginal value of energy capacity at the origin.

    ``method``:

    * ``"exact"``: sum ``(1 - Phi_k(x*)) * Phi_{k+1}(x*)`` over adjacent
      periods (independent parametric periods only);
    * ``"mc"``: Monte Carlo over ``paths`` sample paths;
    * ``"auto"``: exact for iid, Monte Carlo for nonstationary, plug-in
      trace estimator for empirical processes.

    Loss parameters, if given via ``storage``, enter only through the
    round-trip factor ``rho``.
    """
    prices.check()
    gamma = prices.gamma
    rho = storage.rho if storage is not None else 1.0
    if method == "auto":
        if spec.kind == "empirical":
            return estimate_marginal_value_from_data(spec.traces, prices, seed=seed, storage=storage)
        method = "exact" if spec.kind == "iid" else "mc"
    x = quantile(spec, gamma)
    n = spec.horizon

    if method == "exact":
        if not spec.is_continuous:
            raise ValueError("exact crossing expectation needs parametric independent periods")
        phi = [float(spec.marginal(k).cdf(x)) for k in range(n)]
        down = math.fsum((1.0 - phi[k]) * phi[k + 1] for k in range(n - 1))
        tail = 1.0 - phi[-1]
        return MarginalValueReport(
            formula_value=_assemble(prices, rho, down, tail),
            formula_se=0.0,
            expected_downcrossings=down,
            downcrossings_se=0.0,
            tail_probability=tail,
            tail_se=0.0,
            x_star_used=x,
            rho=rho,
            method="exact",
        )
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")

    xi = sample_paths(spec, seed, paths)
    counts = crossing_counts(x, xi)
    lam = counts["down"].astype(float)
    last = counts["last_above"].astype(float)
    e_down, e_tail = estimate(lam), estimate(last)
    e_val = estimate((rho * prices.m_alpha + prices.m_beta) * lam + prices.m_beta * last)
    return MarginalValueReport(
        formula_value=e_val.mean,
        formula_se=e_val.std_error,
        expected_downcrossings=e_down.mean,
        downcrossings_se=e_down.std_error,
        tail_probability=e_tail.mean,
        tail_se=e_tail.std_error,
        x_star_used=x,
        rho=rho,
        method="mc",
        paths=paths,
        tie_count=int(np.count_nonzero(xi == x)),
    )


def marginal_value_iid_closed_form(prices: MarketPrices, horizon: int) -> float:
    """Distribution-free marginal value at the origin for an iid supply process."""
    g = prices.gamma
    return (horizon - 1) * (prices.m_alpha + prices.m_beta) * (1 - g) * g + prices.m_beta * (1 - g)


_ONE_SIGMA_PCT = 34.134474606854294  # 100 * (Phi(1) - 1/2)


def _plug_in(traces: np.ndarray, gamma: float) -> tuple[float, float, float, int]:
    x = empirical_quantile(traces, gamma)
    c = crossing_counts(x, traces)
    ties = int(np.count_nonzero(traces == x))
    return x, float(np.mean(c["down"])), float(np.mean(c["last_above"])), ties


def estimate_marginal_value_from_data(
    traces,
    prices: MarketPrices,
    n_boot: int = 1000,
    seed: int = 0,
    storage: StorageType | None = None,
) -> MarginalValueReport:
    """Plug-in estimate from recorded sample paths (one row per path).

    The contract level is the pooled empirical ``gamma``-quantile; the
    downcrossing expectation and the last-period tail probability are row
    averages at that level. Standard errors come from a row bootstrap
    that re-estimates the quantile in every replicate (percentile
    half-widths, robust to the discreteness of crossing counts).
    """
    t = np.asarray(traces, dtype=float)
    if t.ndim != 2 or t.shape[0] < 2 or t.shape[1] < 1:
        raise ValueError("traces must be a matrix with at least 2 rows")
    if not np.all(np.isfinite(t)):
        raise ValueError("traces contain non-finite values")
    prices.check()
    gamma = prices.gamma
    rho = storage.rho if storage is not None else 1.0
    m = t.shape[0]

    x, down, tail, ties = _plug_in(t, gamma)
    # the pooled quantile is itself a trace value, so one tie is inevitable;
    # only a repeated value at the level means the data are genuinely atomic
    if ties > 1:
        warnings.warn(
            f"{ties} trace values equal the estimated contract level; ties count as no crossing",
            stacklevel=2,
        )
    value = _assemble(prices, rho, down, tail)

    se_down = se_tail = se_val = 0.0
    if n_boot > 0:
        def replicate(lo: int, hi: int) -> np.ndarray:
            out = np.empty((hi - lo, 3))
            for i, rep in enumerate(range(lo, hi)):
                idx = np.random.default_rng([int(seed), rep]).integers(m, size=m)
                _, d, q, _ = _plug_in(t[idx], gamma)
                out[i] = d, q, _assemble(prices, rho, d, q)
            return out

        reps = np.concatenate(map_chunks(replicate, n_boot, chunk=64), axis=0)
        if n_boot > 1:
            # percentile SE: half-width of the central 68.27% band, which is
            # one standard deviation for a normal sampling distribution
            lo_q, hi_q = np.percentile(reps, [50 - _ONE_SIGMA_PCT, 50 + _ONE_SIGMA_PCT], axis=0)
            se_down, se_tail, se_val = (float(s) for s in 0.5 * (hi_q - lo_q))

    return MarginalValueReport(
        formula_value=value,
        formula_se=se_val,
        expected_downcrossings=down,
        downcrossings_se=se_down,
        tail_probability=tail,
        tail_se=se_tail,
        x_star_used=x,
        rho=rho,
        method="plug-in",
        paths=m,
        tie_count=ties,
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteDifferenceResult:
    value: float
    std_error: float
    epsilon: float
    x_star_zero: float
    x_star_eps: float
    violation_fraction: float
    paths: int
    seed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def finite_difference_marginal_value(
    spec: WindProcessSpec,
    prices: MarketPrices,
    epsilon: float = 1e-3,
    paths: int = 200_000,
    seed: int = 0,
    r: float = 1.0,
    storage: StorageType | None = None,
    tol: float = 1e-6,
) -> FiniteDifferenceResult:
    """Forward difference ``(J*(eps) - J*(0)) / eps`` on one frozen path set.

    Both optimal values re-optimize the contract. ``storage`` supplies
    loss parameters for the ``b = eps`` system. ``violation_fraction`` is
    the share of paths that come within ``eps`` of the storage-free
    contract somewhere, where the small-capacity dispatch pattern (full
    charge/discharge at each crossing) need not hold.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if epsilon > r:
        raise ValueError(f"epsilon={epsilon} exceeds the rate limit r={r}")
    prices.check()
    base = storage or StorageType()
    theta_eps = base.with_capacity(epsilon, r)
    theta_0 = StorageType()
    sol0 = optimize_contract(theta_0, spec, prices, paths, seed, tol)
    sol1 = optimize_contract(theta_eps, spec, prices, paths, seed, tol)
    xi = sample_paths(spec, seed, paths)

    def diff(lo: int, hi: int) -> np.ndarray:
        blk = xi[lo:hi]
        return (path_profits(sol1.x_star, theta_eps, blk, prices)
                - path_profits(sol0.x_star, theta_0, blk, prices)) / epsilon

    d = estimate(np.concatenate(map_chunks(diff, paths, chunk=8192)))
    near = np.min(np.abs(xi - sol0.x_star), axis=1) < epsilon
    return FiniteDifferenceResult(
        value=d.mean,
        std_error=d.std_error,
        epsilon=epsilon,
        x_star_zero=sol0.x_star,
        x_star_eps=sol1.x_star,
        violation_fraction=float(np.mean(near)),
        paths=paths,
        seed=seed,
    )

"""Intermittent supply process: marginals, CDFs, quantiles, sampling and traces.

Supply is normalized to nameplate, so every realization lies in [0, 1].
A process is one of three kinds:

* ``iid``: one marginal shared by every period;
* ``nonstationary``: one (independent) marginal per period;
* ``empirical``: a matrix of recorded sample paths, resampled row-wise.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import stats

from ._parallel import map_chunks

__all__ = [
    "Uniform",
    "Beta",
    "TruncatedNormal",
    "PiecewiseLinear",
    "Marginal",
    "WindProcessSpec",
    "TraceFormatError",
    "cdf",
    "time_avg_cdf",
    "quantile",
    "empirical_quantile",
    "sample_path",
    "sample_paths",
    "read_trace_csv",
    "write_trace_csv",
]


# ---------------------------------------------------------------------------
# marginal families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.a < self.b <= 1.0):
            raise ValueError(f"uniform needs 0 <= a < b <= 1, got a={self.a}, b={self.b}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, size)

    def to_dict(self) -> dict:
        return {"family": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Beta:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"beta shape parameters must be positive, got {self.alpha}, {self.beta}")

    def cdf(self, x):
        return stats.beta.cdf(np.asarray(x, dtype=float), self.alpha, self.beta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.alpha, self.beta, size)

    def to_dict(self) -> dict:
        return {"family": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mu, sigma) conditioned on [0, 1]; sampled by rejection."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self._mass < 1e-6:
            raise ValueError("truncated normal puts (almost) no mass on [0, 1]")

    @property
    def _mass(self) -> float:
        return float(stats.norm.cdf(1.0, self.mu, self.sigma) - stats.norm.cdf(0.0, self.mu, self.sigma))

    def cdf(self, x):
        a = (0.0 - self.mu) / self.sigma
        b = (1.0 - self.mu) / self.sigma
        return stats.truncnorm.cdf(np.asarray(x, dtype=float), a, b, loc=self.mu, scale=self.sigma)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        filled = 0
        # batch size tracks the acceptance rate so few rounds are needed
        batch = max(8, int(math.ceil(size / self._mass * 1.2)))
        while filled < size:
            draw = rng.normal(self.mu, self.sigma, batch)
            draw = draw[(draw >= 0.0) & (draw <= 1.0)]
            take = min(size - filled, draw.size)
            out[filled:filled + take] = draw[:take]
            filled += take
        return out

    def to_dict(self) -> dict:
        return {"family": "truncnorm", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class PiecewiseLinear:
    """CDF given by linear interpolation between knots ``(xs[i], fs[i])``.

    ``xs`` must be strictly increasing inside [0, 1]; ``fs`` nondecreasing
    from 0 to 1.
    """

    xs: tuple[float, ...]
    fs: tuple[float, ...]

    def __post_init__(self):
        xs, fs = np.asarray(self.xs, float), np.asarray(self.fs, float)
        if xs.ndim != 1 or xs.size < 2 or xs.size != fs.size:
            raise ValueError("piecewise-linear CDF needs >= 2 knots with matching xs and fs")
        if xs[0] < 0 or xs[-1] > 1 or np.any(np.diff(xs) <= 0):
            raise ValueError("knot positions must be strictly increasing within [0, 1]")
        if fs[0] != 0.0 or fs[-1] != 1.0 or np.any(np.diff(fs) < 0):
            raise ValueError("knot CDF values must be nondecreasing from 0 to 1")

    def cdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.fs, left=0.0, right=1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        xs, fs = np.asarray(self.xs), np.asarray(self.fs)
        u = rng.random(size)
        j = np.clip(np.searchsorted(fs, u, side="left"), 1, xs.size - 1)
        lo_f, hi_f = fs[j - 1], fs[j]
        w = np.where(hi_f > lo_f, (u - lo_f) / np.where(hi_f > lo_f, hi_f - lo_f, 1.0), 0.0)
        return xs[j - 1] + w * (xs[j] - xs[j - 1])

    def to_dict(self) -> dict:
        return {"family": "piecewise", "xs": list(self.xs), "fs": list(self.fs)}


Marginal = Union[Uniform, Beta, TruncatedNormal, PiecewiseLinear]


def marginal_from_dict(d: dict) -> Marginal:
    family = d.get("family")
    if family == "uniform":
        return Uniform(float(d.get("a", 0.0)), float(d.get("b", 1.0)))
    if family == "beta":
        return Beta(float(d["alpha"]), float(d["beta"]))
    if family in ("truncnorm", "truncated-normal"):
        return TruncatedNormal(float(d["mu"]), float(d["sigma"]))
    if family in ("piecewise", "piecewise-linear"):
        return PiecewiseLinear(tuple(map(float, d["xs"])), tuple(map(float, d["fs"])))
    raise ValueError(f"unknown marginal family {family!r}")


# ---------------------------------------------------------------------------
# process specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WindProcessSpec:
    """Generative model of the supply process over ``horizon`` periods.

    Build instances with :meth:`iid`, :meth:`nonstationary` or
    :meth:`empirical` rather than the raw constructor.
    """

    horizon: int
    kind: str
    marginals: tuple[Marginal, ...] = ()
    traces: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be an integer >= 1, got {self.horizon}")
        if self.kind == "iid":
            if len(self.marginals) != 1:
                raise ValueError("iid process carries exactly one marginal")
        elif self.kind == "nonstationary":
            if len(self.marginals) != self.horizon:
                raise ValueError(
                    f"nonstationary process needs {self.horizon} marginals, got {len(self.marginals)}"
                )
        elif self.kind == "empirical":
            t = self.traces
            if t is None or t.ndim != 2 or t.shape[0] < 2 or t.shape[1] != self.horizon:
                raise ValueError("empirical process needs a trace matrix with >= 2 rows of length horizon")
            if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
                raise ValueError("trace entries must lie in [0, 1]")
        else:
            raise ValueError(f"unknown process kind {self.kind!r}")

    @classmethod
    def iid(cls, marginal: Marginal, horizon: int) -> "WindProcessSpec":
        return cls(horizon=horizon, kind="iid", marginals=(marginal,))

    @classmethod
    def nonstationary(cls, marginals: Sequence[Marginal]) -> "WindProcessSpec":
        return cls(horizon=len(marginals), kind="nonstationary", marginals=tuple(marginals))

    @classmethod
    def empirical(cls, traces) -> "WindProcessSpec":
        t = np.array(traces, dtype=float)
        if t.ndim != 2:
            raise ValueError("trace matrix must be two-dimensional")
        t.setflags(write=False)
        return cls(horizon=t.shape[1], kind="empirical", traces=t)

    @property
    def is_continuous(self) -> bool:
        """True when ties with a fixed level have probability zero."""
        return self.kind != "empirical"

    def marginal(self, k: int) -> Marginal:
        return self.marginals[0] if self.kind == "iid" else self.marginals[k]

    @cached_property
    def pooled(self) -> np.ndarray:
        """Sorted pooled trace values (empirical kind only)."""
        return np.sort(self.traces, axis=None)

    @cached_property
    def key(self) -> str:
        """Content digest, used to cache sampled path sets."""
        h = hashlib.sha1(f"{self.kind}|{self.horizon}|{self.marginals!r}".encode())
        if self.traces is not None:
            h.update(np.ascontiguousarray(self.traces).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "horizon": self.horizon}
        if self.kind == "iid":
            d["marginal"] = self.marginals[0].to_dict()
        elif self.kind == "nonstationary":
            d["marginals"] = [m.to_dict() for m in self.marginals]
        else:
            d["rows"] = int(self.traces.shape[0])
        return d


# ---------------------------------------------------------------------------
# distribution functions
# ---------------------------------------------------------------------------


def _check_period(spec: WindProcessSpec, k: int) -> None:
    if not (0 <= k < spec.horizon):
        raise IndexError(f"period index {k} outside [0, {spec.horizon})")


def cdf(spec: WindProcessSpec, k: int, x: float) -> float:
    """Per-period CDF ``P{xi_k <= x}``."""
    _check_period(spec, k)
    if x < 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if spec.kind == "empirical":
        col = spec.traces[:, k]
        return np.count_nonzero(col <= x) / col.size
    return float(spec.marginal(k).cdf(x))


def time_avg_cdf(spec: WindProcessSpec, x: float) -> float:
    """Average of the per-period CDFs at ``x``."""
    if x < 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if spec.kind == "empirical":
        # pooled count, so that it agrees with the order-statistic quantile
        pooled = spec.pooled
        return np.searchsorted(pooled, x, side="right") / pooled.size
    if spec.kind == "iid":
        return float(spec.marginals[0].cdf(x))
    return math.fsum(float(m.cdf(x)) for m in spec.marginals) / spec.horizon


def _bits(x: float) -> int:
    return int(np.float64(x).view(np.int64))


def _from_bits(i: int) -> float:
    return float(np.int64(i).view(np.float64))


def order_stat_rank(gamma: float, n: int) -> int:
    """Smallest rank ``j`` (1-based) with ``j / n >= gamma``."""
    j = max(1, math.ceil(gamma * n))
    # gamma * n can round up past an exact ratio
    while j > 1 and (j - 1) / n >= gamma:
        j -= 1
    while j / n < gamma:
        j += 1
    return j


def empirical_quantile(values, gamma: float) -> float:
    """Left-continuous inverse of the empirical CDF of ``values`` (any shape)."""
    v = np.asarray(values, dtype=float).ravel()
    j = order_stat_rank(gamma, v.size)
    return float(np.partition(v, j - 1)[j - 1])


def quantile(spec: WindProcessSpec, gamma: float) -> float:
    """Left-continuous inverse ``inf{x : F(x) >= gamma}`` of the time-averaged CDF.

    For parametric kinds this bisects over the bit patterns of the
    nonnegative doubles in [0, 1], so the result is the smallest double
    with ``F(x) >= gamma`` (well inside the 1e-12 target). The empirical
    kind uses order statistics of the pooled trace values.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if spec.kind == "empirical":
        pooled = spec.pooled
        return float(pooled[order_stat_rank(gamma, pooled.size) - 1])

    if time_avg_cdf(spec, 0.0) >= gamma:
        return 0.0
    lo, hi = _bits(0.0), _bits(1.0)  # invariant: F(lo) < gamma <= F(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if time_avg_cdf(spec, _from_bits(mid)) >= gamma:
            hi = mid
        else:
            lo = mid
    return _from_bits(hi)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _path_rng(seed: int, index: int) -> np.random.Generator:
    # SeedSequence hashes (seed, index) into an independent substream
    return np.random.default_rng([int(seed), int(index)])


def _draw(spec: WindProcessSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.horizon
    if spec.kind == "empirical":
        return spec.traces[rng.integers(spec.traces.shape[0])].copy()
    if spec.kind == "iid":
        out = spec.marginals[0].sample(rng, n)
    else:
        out = np.empty(n)
        groups: dict = {}
        for k, m in enumerate(spec.marginals):
            groups.setdefault(m, []).append(k)
        for m, ks in groups.items():
            out[ks] = m.sample(rng, len(ks))
    return np.clip(out, 0.0, 1.0)


def sample_path(spec: WindProcessSpec, seed: int, index: int) -> np.ndarray:
    """One realization ``xi_0 .. xi_{N-1}``, a pure function of ``(seed, index)``."""
    path = _draw(spec, _path_rng(seed, index))
    path.setflags(write=False)
    return path


@lru_cache(maxsize=16)
def _sample_block(key: str, spec: WindProcessSpec, seed: int, paths: int) -> np.ndarray:
    def fill(lo: int, hi: int) -> np.ndarray:
        return np.stack([_draw(spec, _path_rng(seed, i)) for i in range(lo, hi)])

    out = np.concatenate(map_chunks(fill, paths, chunk=2048), axis=0)
    out.setflags(write=False)
    return out


def sample_paths(spec: WindProcessSpec, seed: int, paths: int) -> np.ndarray:
    """Matrix of shape ``(paths, horizon)`` whose row ``i`` is ``sample_path(spec, seed, i)``.

    Results are cached, so repeated calls with the same arguments hand back
    the identical (read-only) path set; this is what makes comparisons
    across contracts and storage types use common random numbers.
    """
    if paths < 1:
        raise ValueError(f"paths must be >= 1, got {paths}")
    return _sample_block(spec.key, spec, int(seed), int(paths))


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


class TraceFormatError(ValueError):
    """Malformed trace CSV; the message names the offending line."""


def parse_trace_csv(text: str) -> np.ndarray:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("trace file is empty") from None
    n = len(header)
    expected = [f"t{k}" for k in range(n)]
    if [h.strip() for h in header] != expected:
        raise TraceFormatError(f"line 1: header must be {','.join(expected[:3])},... (t0..t{{N-1}})")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n:
            raise TraceFormatError(f"line {lineno}: expected {n} values, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-numeric value") from None
        if not all(0.0 <= v <= 1.0 for v in vals):
            raise TraceFormatError(f"line {lineno}: values must lie in [0, 1]")
        rows.append(vals)
    if len(rows) < 2:
        raise TraceFormatError("trace file needs at least 2 data rows")
    return np.array(rows, dtype=float)


def read_trace_csv(path: str | Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace_csv(fh.read())


def write_trace_csv(path: str | Path, traces) -> None:
    t = np.asarray(traces, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"t{k}" for k in range(t.shape[1])])
        for row in t:
            w.writerow([repr(float(v)) for v in row])

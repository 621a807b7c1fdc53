"""Storage state evolution and the threshold dispatch policy.

Sign convention: ``u > 0`` extracts energy from storage (covers a
shortfall), ``u < 0`` injects energy (absorbs a surplus). The state ``z``
is the stored energy at the start of a period and starts at zero.

Lossy storage follows ``z' = lam*z - u+/eta_out - eta_in*u-`` where
``u+ = max(u, 0)`` and ``u- = min(u, 0)``. With all three loss
parameters equal to one this is the ideal balance ``z' = z - u`` bit for
bit.

The scalar functions use builtin ``min``/``max`` so they also work on
:class:`fractions.Fraction` inputs (the exact-arithmetic oracles rely on
this). :func:`simulate_batch` is the vectorized equivalent used for Monte
Carlo; it performs the same floating-point operations in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StorageType",
    "Trajectory",
    "InfeasibleInput",
    "step",
    "feasible_input",
    "threshold_policy",
    "simulate_policy",
    "simulate_batch",
    "small_b_control_sequence",
]


class InfeasibleInput(ValueError):
    pass


@dataclass(frozen=True)
class StorageType:
    """Energy capacity ``b``, rate limit ``r`` and loss parameters."""

    # integer defaults keep Fraction arithmetic exact
    b: float = 0
    r: float = 0
    lam: float = 1
    eta_in: float = 1
    eta_out: float = 1

    def __post_init__(self):
        if self.b < 0 or self.r < 0:
            raise ValueError(f"capacity and rate must be >= 0, got b={self.b}, r={self.r}")
        for name in ("lam", "eta_in", "eta_out"):
            v = getattr(self, name)
            if not (0 < v <= 1):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @property
    def rho(self) -> float:
        """Round-trip efficiency ``lam * eta_in * eta_out``."""
        return self.lam * self.eta_in * self.eta_out

    @property
    def ideal(self) -> bool:
        return self.lam == 1 and self.eta_in == 1 and self.eta_out == 1

    def with_capacity(self, b: float | None = None, r: float | None = None) -> "StorageType":
        return StorageType(
            self.b if b is None else b,
            self.r if r is None else r,
            self.lam,
            self.eta_in,
            self.eta_out,
        )

    def to_dict(self) -> dict:
        return {"b": self.b, "r": self.r, "lambda": self.lam, "eta_in": self.eta_in, "eta_out": self.eta_out}


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # z_0 .. z_N
    inputs: np.ndarray  # u_0 .. u_{N-1}


def feasible_input(theta: StorageType, z):
    """Interval ``(u_min, u_max)`` of inputs keeping the next state in [0, b]."""
    if not (0 <= z <= theta.b):
        raise InfeasibleInput(f"state {z} outside [0, {theta.b}]")
    u_max = min(theta.eta_out * (theta.lam * z), theta.r)
    u_min = -min(_div(theta.b - theta.lam * z, theta.eta_in), theta.r)
    return u_min, u_max


def step(theta: StorageType, z, u):
    """Next storage state after applying input ``u`` at state ``z``."""
    u_min, u_max = feasible_input(theta, z)
    if not (u_min <= u <= u_max):
        raise InfeasibleInput(f"input {u} outside feasible interval [{u_min}, {u_max}] at z={z}")
    return _next_state(theta, z, u)


def _div(a, d):
    # int / int is a float in Python; dividing by one is the identity
    # anyway, so skip it and keep Fraction arithmetic exact
    return a if d == 1 else a / d


def _next_state(theta: StorageType, z, u):
    # branch rather than max(u, 0)/eta_out so an exact input never meets a
    # float zero
    if u >= 0:
        zn = theta.lam * z - _div(u, theta.eta_out)
    else:
        zn = theta.lam * z - theta.eta_in * u
    # rounding can leave the state an ulp outside the box
    return min(max(zn, 0), theta.b)


def threshold_policy(x, theta: StorageType, z, xi):
    """Myopic threshold rule: discharge toward a deficit, charge away a surplus.

    For ideal storage this is exactly ``min(x - xi, z, r)`` when
    ``xi <= x`` and ``-min(xi - x, b - z, r)`` otherwise. For lossy storage
    the state-headroom terms become ``eta_out*lam*z`` and
    ``(b - lam*z)/eta_in`` (a greedy heuristic, not a proven optimum).
    """
    if xi <= x:
        return min(x - xi, theta.eta_out * (theta.lam * z), theta.r)
    return -min(xi - x, _div(theta.b - theta.lam * z, theta.eta_in), theta.r)


def simulate_policy(x, theta: StorageType, path) -> Trajectory:
    """Roll the threshold policy forward along one path from ``z_0 = 0``."""
    z = 0.0
    states = [z]
    inputs = []
    for xi in path:
        u = threshold_policy(x, theta, z, float(xi))
        z = _next_state(theta, z, u)
        inputs.append(u)
        states.append(z)
    return Trajectory(np.array(states, dtype=float), np.array(inputs, dtype=float))


def simulate_batch(x, theta: StorageType, paths: np.ndarray, return_states: bool = False):
    """Threshold-policy inputs for every row of ``paths`` (shape ``(M, N)``).

    Returns the ``(M, N)`` input matrix, plus the ``(M, N+1)`` state matrix
    when ``return_states`` is set.
    """
    paths = np.asarray(paths, dtype=float)
    m, n = paths.shape
    u = np.zeros((m, n))
    states = np.zeros((m, n + 1)) if return_states else None
    if theta.b == 0 or theta.r == 0:
        return (u, states) if return_states else u
    z = np.zeros(m)
    b, r, lam, ein, eout = theta.b, theta.r, theta.lam, theta.eta_in, theta.eta_out
    for k in range(n):
        xi = paths[:, k]
        deficit = xi <= x
        discharge = np.minimum(np.minimum(x - xi, eout * (lam * z)), r)
        charge = -np.minimum(np.minimum(xi - x, (b - lam * z) / ein), r)
        uk = np.where(deficit, discharge, charge)
        zn = lam * z - np.maximum(uk, 0.0) / eout - ein * np.minimum(uk, 0.0)
        z = np.minimum(np.maximum(zn, 0.0), b)
        u[:, k] = uk
        if return_states:
            states[:, k + 1] = z
    return (u, states) if return_states else u


def small_b_control_sequence(x, epsilon, path, r) -> np.ndarray:
    """Closed-form threshold-policy inputs for a tiny ideal storage ``b = epsilon``.

    When ``epsilon <= min(r, |xi_k - x|)`` for all k, the storage fills
    completely (``-epsilon``) on the first surplus period and right after
    every strict upcrossing of ``x``, and empties completely
    (``+epsilon``) right after every strict downcrossing; otherwise it is
    idle.

    Works on floats or exact rationals; the result has the element type of
    the inputs (a float array, or an object array of Fractions).
    """
    a = [xi for xi in (path.tolist() if isinstance(path, np.ndarray) else path)]
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if any(xi == x for xi in a):
        raise ValueError("path touches the contract level; crossings are not strict")
    gap = min(abs(xi - x) for xi in a)
    if epsilon > r or epsilon > gap:
        raise ValueError(f"epsilon={epsilon} exceeds min(r, min |xi_k - x|) = {min(r, gap)}")
    zero = epsilon - epsilon
    u = [-epsilon if a[0] > x else zero]
    for prev, cur in zip(a[:-1], a[1:]):
        if prev > x > cur:
            u.append(epsilon)
        elif prev < x < cur:
            u.append(-epsilon)
        else:
            u.append(zero)
    return np.array(u, dtype=float if isinstance(epsilon, float) else object)

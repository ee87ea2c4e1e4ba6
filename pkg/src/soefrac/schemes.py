"""Time steppers for the modal system induced by a sum-of-exponentials kernel.

A problem plugs in as a SplitOperator with F = F_minus + F_plus (decreasing
plus increasing part).  One step solves a single implicit equation of the
original problem size and then updates the m decoupled modes; the history
enters only through u0 + sum gamma_k u_k, so cost and storage per step are
constant in n.

Three steppers share the machinery and differ only in their coefficient
tables: the one-parameter theta scheme (full F implicit), Implicit Euler and
the modified Crank-Nicolson exponential integrator (both splitting-based,
unconditionally stable per mode).

A SolverState belongs to one logical thread at a time; coefficient tables and
kernels are immutable and shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .kernel import RationalKernel
from .specfun import gamma_fn

__all__ = [
    "Field",
    "SplitOperator",
    "SchemeCoefficients",
    "SolverState",
    "RunRecord",
    "theta_coefficients",
    "ie_coefficients",
    "mcn_coefficients",
    "adams_moulton_reference",
    "initial_state",
    "step",
    "run",
]

Field = Union[float, np.ndarray]


class SplitOperator:
    """Behavioral contract for a split right-hand side F = F_minus + F_plus.

    ``solve_implicit(beta, rhs)`` must return u with u - beta*F_minus(u) = rhs.
    Operators with a nontrivial explicit part that also want to support the
    theta scheme must override ``solve_implicit_full``.
    """

    def apply_minus(self, t: float, u: Field) -> Field:
        raise NotImplementedError

    def apply_plus(self, t: float, u: Field) -> Field:
        raise NotImplementedError

    def solve_implicit(self, beta: float, rhs: Field) -> Field:
        raise NotImplementedError

    def apply_full(self, t: float, u: Field) -> Field:
        return self.apply_minus(t, u) + self.apply_plus(t, u)

    def solve_implicit_full(self, beta: float, rhs: Field) -> Field:
        """Solve u - beta*F(u) = rhs with the full operator (theta scheme only)."""
        raise NotImplementedError(
            f"{type(self).__name__} does not provide a full-F implicit solve"
        )


@dataclass(frozen=True)
class SchemeCoefficients:
    """Per-mode update weights (gamma_k, beta1_k, beta2_k) plus their aggregates."""

    scheme_id: str
    h: float
    gamma: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    beta1_total: float
    beta2_total: float
    beta_total: float
    theta: float | None = None

    @property
    def m(self) -> int:
        return int(self.gamma.size)


def theta_coefficients(k: RationalKernel, h: float, theta: float) -> SchemeCoefficients:
    """Standard theta-scheme table: theta=1 is Implicit Euler, theta=1/2 Crank-Nicolson.

    beta1_k = c_k*theta*h/(1 + theta*d_k*h), beta2_k = c_k*(1-theta)*h/(1 + theta*d_k*h),
    gamma_k = (1 - (1-theta)*d_k*h)/(1 + theta*d_k*h); the Dirac weight joins the
    implicit aggregate beta1.
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must be in [0, 1], got {theta!r}")
    if h <= 0.0:
        raise ValueError(f"h must be > 0, got {h!r}")
    den = 1.0 + theta * k.d * h
    beta1 = k.c * theta * h / den
    beta2 = k.c * (1.0 - theta) * h / den
    gamma = (1.0 - (1.0 - theta) * k.d * h) / den
    b1 = float(np.sum(beta1)) + k.c_inf
    b2 = float(np.sum(beta2))
    return SchemeCoefficients(
        scheme_id="theta", h=h, gamma=gamma, beta1=beta1, beta2=beta2,
        beta1_total=b1, beta2_total=b2, beta_total=b1 + b2, theta=theta,
    )


def ie_coefficients(k: RationalKernel, h: float) -> SchemeCoefficients:
    """Implicit Euler table: gamma_k = 1/(1 + d_k*h), beta_k = c_k*h/(1 + d_k*h)."""
    if h <= 0.0:
        raise ValueError(f"h must be > 0, got {h!r}")
    den = 1.0 + k.d * h
    beta1 = k.c * h / den
    gamma = 1.0 / den
    b1 = float(np.sum(beta1)) + k.c_inf
    return SchemeCoefficients(
        scheme_id="ie", h=h, gamma=gamma, beta1=beta1, beta2=np.zeros_like(beta1),
        beta1_total=b1, beta2_total=0.0, beta_total=b1,
    )


# Below this d*h the closed-form mCN weights lose digits to cancellation and a
# 3-term Taylor expansion takes over (branch error < 1e-12 at the switch).
_MCN_TAYLOR_SWITCH = 1e-4


def mcn_coefficients(k: RationalKernel, h: float) -> SchemeCoefficients:
    """Modified Crank-Nicolson table: gamma_k = exp(-d_k*h) with exact mode integrals.

    beta1_k = c_k*(gamma_k - (1 - d_k*h))/(d_k^2*h),
    beta2_k = c_k*(1 - (1 + d_k*h)*gamma_k)/(d_k^2*h),
    beta = sum c_k*(1 - gamma_k)/d_k + c_inf.
    """
    if h <= 0.0:
        raise ValueError(f"h must be > 0, got {h!r}")
    x = k.d * h
    gamma = np.exp(-x)
    beta1 = np.empty_like(x)
    beta2 = np.empty_like(x)
    beta_sum = np.empty_like(x)
    small = x < _MCN_TAYLOR_SWITCH
    big = ~small
    xs = x[small]
    beta1[small] = k.c[small] * h * (0.5 - xs / 6.0 + xs * xs / 24.0)
    beta2[small] = k.c[small] * h * (0.5 - xs / 3.0 + xs * xs / 8.0)
    beta_sum[small] = k.c[small] * h * (1.0 - 0.5 * xs + xs * xs / 6.0)
    xb = x[big]
    gb = gamma[big]
    beta1[big] = k.c[big] * (gb - (1.0 - xb)) / (k.d[big] ** 2 * h)
    beta2[big] = k.c[big] * (1.0 - (1.0 + xb) * gb) / (k.d[big] ** 2 * h)
    beta_sum[big] = k.c[big] * (1.0 - gb) / k.d[big]
    b1 = float(np.sum(beta1)) + k.c_inf
    b2 = float(np.sum(beta2))
    return SchemeCoefficients(
        scheme_id="mcn", h=h, gamma=gamma, beta1=beta1, beta2=beta2,
        beta1_total=b1, beta2_total=b2, beta_total=float(np.sum(beta_sum)) + k.c_inf,
    )


def adams_moulton_reference(alpha: float, h: float) -> tuple[float, float]:
    """Second-order fractional Adams-Moulton pair (h^a/Gamma(a+2), a*h^a/Gamma(a+2))."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")
    if h < 0.0:
        raise ValueError(f"h must be >= 0, got {h!r}")
    g = gamma_fn(alpha + 2.0)
    return h**alpha / g, alpha * h**alpha / g


def build_coefficients(k: RationalKernel, scheme_id: str, h: float,
                       theta: float | None = None) -> SchemeCoefficients:
    """Dispatch on scheme_id in {'theta', 'ie', 'mcn'}."""
    if scheme_id == "theta":
        if theta is None:
            raise ValueError("theta scheme requires a theta value")
        return theta_coefficients(k, h, theta)
    if scheme_id == "ie":
        return ie_coefficients(k, h)
    if scheme_id == "mcn":
        return mcn_coefficients(k, h)
    raise ValueError(f"unknown scheme {scheme_id!r}")


@dataclass
class SolverState:
    """Mutable-by-replacement state of a run at step n (modes all zero at n = 0)."""

    t: float
    n: int
    u: Field
    modes: np.ndarray  # shape (m,) + shape(u)
    f_prev: Field      # cached full F[u^n]
    u0: Field          # initial value, enters every history term


def initial_state(u0: Field, F: SplitOperator, m: int) -> SolverState:
    u0 = np.asarray(u0, dtype=float) if np.ndim(u0) else float(u0)
    modes = np.zeros((m,) + np.shape(u0))
    return SolverState(t=0.0, n=0, u=u0, modes=modes,
                       f_prev=F.apply_full(0.0, u0), u0=u0)


def _history(state: SolverState, gamma: np.ndarray) -> Field:
    """u0 + sum_k gamma_k u_k, accumulated in ascending-d (storage) order."""
    h = np.copy(state.u0) if np.ndim(state.u0) else state.u0
    for k in range(gamma.size):
        h = h + gamma[k] * state.modes[k]
    return h


def step(state: SolverState, F: SplitOperator, coeffs: SchemeCoefficients) -> SolverState:
    """Advance one step: implicit solve for u^{n+1}, then the m mode updates."""
    if coeffs.m != state.modes.shape[0]:
        raise ValueError(
            f"coefficients carry {coeffs.m} modes but state has {state.modes.shape[0]}"
        )
    t_next = (state.n + 1) * coeffs.h
    hist = _history(state, coeffs.gamma)
    f_n = state.f_prev
    if coeffs.scheme_id == "theta":
        rhs = coeffs.beta2_total * f_n + hist
        u_next = F.solve_implicit_full(coeffs.beta1_total, rhs)
    else:
        rhs = coeffs.beta_total * F.apply_plus(state.t, state.u) + hist
        u_next = F.solve_implicit(coeffs.beta_total, rhs)
    f_next = F.apply_full(t_next, u_next)

    bshape = (coeffs.m,) + (1,) * np.ndim(u_next)
    g = coeffs.gamma.reshape(bshape)
    b1 = coeffs.beta1.reshape(bshape)
    modes = g * state.modes + b1 * np.asarray(f_next)
    if coeffs.scheme_id != "ie":
        modes = modes + coeffs.beta2.reshape(bshape) * np.asarray(f_n)
    return SolverState(t=t_next, n=state.n + 1, u=u_next, modes=modes,
                       f_prev=f_next, u0=state.u0)


@dataclass
class RunRecord:
    """Per-step time series of a run plus optional field snapshots and metadata."""

    t: np.ndarray
    columns: dict[str, np.ndarray]
    snapshots: dict[float, Field] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def snapshot_at(self, t: float, tol: float = 1e-9) -> Field:
        for key, value in self.snapshots.items():
            if abs(key - t) <= tol * max(1.0, abs(t)):
                return value
        raise KeyError(f"no snapshot stored at t={t!r}")

    def to_csv(self) -> str:
        """CSV text: header t,norm,energy,err; absent columns stay empty."""
        names = ["norm", "energy", "err"]
        lines = ["t,norm,energy,err"]
        for i, ti in enumerate(self.t):
            cells = [format(float(ti), ".17g")]
            for name in names:
                col = self.columns.get(name)
                cells.append("" if col is None else format(float(col[i]), ".17g"))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _default_norm(u: Field) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(u, dtype=float)))))


def run(u0: Field, F: SplitOperator, k: RationalKernel, scheme_id: str,
        h: float, T: float, theta: float | None = None,
        observers: dict[str, Callable[[float, Field], float]] | None = None,
        snapshot_times: list[float] | None = None) -> RunRecord:
    """Run N = T/h steps from u0, sampling observers (and the norm) every step.

    T/h must be an integer up to floating-point slack.  Observers map a column
    name to a callable (t, u) -> float; a 'norm' column is always present.
    """
    if h <= 0.0 or T < 0.0:
        raise ValueError(f"need h > 0 and T >= 0, got h={h!r}, T={T!r}")
    n_float = T / h
    n_steps = int(round(n_float))
    if abs(n_float - n_steps) > 4.0 * np.spacing(max(n_float, 1.0)):
        raise ValueError(f"T/h = {n_float!r} is not an integer step count")

    obs: dict[str, Callable[[float, Field], float]] = {"norm": lambda t, u: _default_norm(u)}
    if observers:
        obs.update(observers)

    snap_idx: dict[int, float] = {}
    for ts in snapshot_times or ():
        idx = int(round(ts / h))
        if not (0 <= idx <= n_steps) or abs(idx * h - ts) > 1e-9 * max(1.0, abs(ts)):
            raise ValueError(f"snapshot time {ts!r} is not on the step grid")
        snap_idx[idx] = idx * h

    coeffs = build_coefficients(k, scheme_id, h, theta)
    state = initial_state(u0, F, k.m)
    times = [0.0]
    columns: dict[str, list[float]] = {name: [fn(0.0, state.u)] for name, fn in obs.items()}
    snapshots: dict[float, Field] = {}
    if 0 in snap_idx:
        snapshots[0.0] = np.copy(state.u) if np.ndim(state.u) else state.u

    for _ in range(n_steps):
        state = step(state, F, coeffs)
        times.append(state.t)
        for name, fn in obs.items():
            columns[name].append(fn(state.t, state.u))
        if state.n in snap_idx:
            snapshots[snap_idx[state.n]] = np.copy(state.u) if np.ndim(state.u) else state.u

    return RunRecord(
        t=np.asarray(times),
        columns={name: np.asarray(vals) for name, vals in columns.items()},
        snapshots=snapshots,
        meta={"scheme": scheme_id, "theta": theta, "h": h, "T": T, "alpha": k.alpha},
    )

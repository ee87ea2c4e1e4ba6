"""Independent reference solver and the a-priori error bound diagnostic.

The reference integrates the Volterra form u = u0 + K * F[u] directly with an
implicit product-rectangle rule.  Its weights telescope exactly (a built-in
correctness assertion) and it shares no code path with the kernel-compression
pipeline: history is summed at O(N^2) cost and the implicit equation is
solved by plain full-F fixed-point iteration, using only SplitOperator
application.  Single-threaded; the history sum runs in ascending-j order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .schemes import Field, RunRecord, SplitOperator, _default_norm
from .specfun import MLParams, gamma_fn, mittag_leffler

__all__ = ["BoundInputs", "volterra_reference", "convolution_weights", "theorem_bound"]

_FIXED_POINT_TOL = 1e-12
_FIXED_POINT_MAX_ITER = 100


def convolution_weights(alpha: float, h: float, n: int) -> np.ndarray:
    """Product-rectangle weights a_{n,j} = [(t_n-t_{j-1})^a - (t_n-t_j)^a]/Gamma(a+1), j=1..n.

    They telescope: sum_j a_{n,j} = t_n^a / Gamma(a+1).
    """
    j = np.arange(1, n + 1)
    tn = n * h
    g = gamma_fn(alpha + 1.0)
    return ((tn - (j - 1) * h) ** alpha - (tn - j * h) ** alpha) / g


def volterra_reference(u0: Field, F: SplitOperator, alpha: float, h: float, T: float,
                       observers=None) -> RunRecord:
    """Direct convolution-quadrature solution of u = u0 + K_alpha * F[u].

    u^n solves u^n = u0 + sum_{j<=n} a_{n,j} F(u^j); the diagonal weight is
    h^alpha/Gamma(alpha+1) and the implicit equation is solved by fixed-point
    iteration on the full operator (tolerance 1e-12, at most 100 iterations).
    """
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must be in (0, 1], got {alpha!r}")
    n_float = T / h
    n_steps = int(round(n_float))
    if abs(n_float - n_steps) > 4.0 * np.spacing(max(n_float, 1.0)):
        raise ValueError(f"T/h = {n_float!r} is not an integer step count")
    if n_steps > 100_000:
        raise ValueError("oracle is O(N^2); refusing N > 1e5 steps")

    obs = {"norm": lambda t, u: _default_norm(u)}
    if observers:
        obs.update(observers)

    u0 = np.asarray(u0, dtype=float) if np.ndim(u0) else float(u0)
    us: list[Field] = [u0]
    fs: list[Field] = []
    times = [0.0]
    columns = {name: [fn(0.0, u0)] for name, fn in obs.items()}

    for n in range(1, n_steps + 1):
        t = n * h
        w = convolution_weights(alpha, h, n)
        hist = np.copy(u0) if np.ndim(u0) else u0
        for j in range(n - 1):
            hist = hist + w[j] * fs[j]
        a_diag = w[-1]
        u = us[-1]  # warm start from the previous step
        for _ in range(_FIXED_POINT_MAX_ITER):
            u_new = hist + a_diag * F.apply_full(t, u)
            delta = _default_norm(u_new - u)
            u = u_new
            if delta <= _FIXED_POINT_TOL * max(1.0, _default_norm(u)):
                break
        else:
            raise ConvergenceError(
                f"oracle fixed point stalled at t={t} (last delta {delta:.3e})"
            )
        us.append(u)
        fs.append(F.apply_full(t, u))
        times.append(t)
        for name, fn in obs.items():
            columns[name].append(fn(t, u))

    record = RunRecord(
        t=np.asarray(times),
        columns={name: np.asarray(v) for name, v in columns.items()},
        meta={"scheme": "volterra", "alpha": alpha, "h": h, "T": T},
    )
    record.meta["u_final"] = us[-1]
    record.meta["u_series"] = us
    return record


@dataclass(frozen=True)
class BoundInputs:
    """Constants of the a-priori estimate: kernel bound, operator Lipschitz data."""

    C_alpha: float
    C1: float
    C2: float
    h: float
    T: float
    alpha: float
    rhs_norm: float

    def __post_init__(self) -> None:
        for name in ("C_alpha", "C1", "C2", "h", "T", "alpha", "rhs_norm"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be non-negative")


def theorem_bound(b: BoundInputs) -> float:
    """Continuum error estimate h^(1+a) * 2*C_a * E_{a,1}(C1*T^a) * (C2 + rhs_norm).

    Requires the smallness condition C1 * C_alpha * h^(1+alpha) <= 1/2 under
    which the estimate holds.
    """
    if b.C1 * b.C_alpha * b.h ** (1.0 + b.alpha) > 0.5:
        raise DomainError(
            "bound precondition violated: C1*C_alpha*h^(1+alpha) > 1/2"
        )
    growth = mittag_leffler(MLParams(b.alpha, 1.0), b.C1 * b.T**b.alpha)
    return b.h ** (1.0 + b.alpha) * 2.0 * b.C_alpha * growth * (b.C2 + b.rhs_norm)

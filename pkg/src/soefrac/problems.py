"""Concrete problems, error metrics and the convergence-study harness.

Three SplitOperator instances: a scalar linear mode, the 1D heat equation
with homogeneous Dirichlet walls (finite differences, tridiagonal implicit
solve), and the 2D Cahn-Hilliard equation with homogeneous Neumann walls
(5-point stencil, implicit solve diagonalized exactly in the cosine
eigenbasis of the stencil).  Space discretization is finite differences
throughout; the temporal claims under test do not depend on it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft
import scipy.linalg

from .errors import GridMismatchError, SoefracError
from .kernel import RationalKernel, build_kernel
from .schemes import Field, RunRecord, SplitOperator, run
from .specfun import MLParams, mittag_leffler

__all__ = [
    "ScalarLinear",
    "Heat1D",
    "CHParams",
    "ErrorMetric",
    "scalar_operator",
    "scalar_analytic",
    "heat_operator",
    "heat_analytic",
    "ch_operator",
    "ch_initial",
    "ch_energy",
    "relative_error",
    "error_observers",
    "convergence_study",
    "ConvergenceResult",
]


# --- scalar linear problem ---------------------------------------------------

@dataclass(frozen=True)
class ScalarLinear:
    """du^alpha/dt = lambda * u with lambda <= 0 (so F = F_minus, F_plus = 0)."""

    lam: float

    def __post_init__(self) -> None:
        if self.lam > 0.0:
            raise ValueError(f"lambda must be <= 0, got {self.lam!r}")


class _ScalarOperator(SplitOperator):
    def __init__(self, lam: float):
        self.lam = lam

    def apply_minus(self, t, u):
        return self.lam * u

    def apply_plus(self, t, u):
        return 0.0 * u

    def solve_implicit(self, beta, rhs):
        return rhs / (1.0 - beta * self.lam)

    solve_implicit_full = solve_implicit

    @staticmethod
    def norm(u) -> float:
        return abs(float(u))


def scalar_operator(p: ScalarLinear) -> SplitOperator:
    return _ScalarOperator(p.lam)


def scalar_analytic(alpha: float, lam: float, t: float, u0: float = 1.0) -> float:
    """u(t) = u0 * E_{alpha,1}(lambda * t^alpha)."""
    return u0 * mittag_leffler(MLParams(alpha, 1.0), lam * t**alpha)


# --- 1D fractional heat equation --------------------------------------------

@dataclass(frozen=True)
class Heat1D:
    """Interior grid of the unit interval with zero Dirichlet boundary values."""

    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 3:
            raise ValueError(f"need at least 3 interior points, got {self.n_cells!r}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_cells + 1)

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 1.0) * self.dx


class _HeatOperator(SplitOperator):
    def __init__(self, p: Heat1D):
        self.p = p
        self.dx2 = p.dx * p.dx

    def apply_minus(self, t, u):
        out = -2.0 * u
        out[:-1] += u[1:]
        out[1:] += u[:-1]
        return out / self.dx2

    def apply_plus(self, t, u):
        return np.zeros_like(u)

    def solve_implicit(self, beta, rhs):
        if beta == 0.0:
            return rhs.copy()
        n = rhs.size
        r = beta / self.dx2
        ab = np.empty((3, n))
        ab[0, :] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[2, :] = -r
        return scipy.linalg.solve_banded((1, 1), ab, rhs)

    solve_implicit_full = solve_implicit

    def norm(self, u) -> float:
        return float(math.sqrt(self.p.dx * np.sum(u * u)))


def heat_operator(p: Heat1D) -> _HeatOperator:
    return _HeatOperator(p)


def heat_analytic(alpha: float, t: float, grid: np.ndarray) -> np.ndarray:
    """u(t, x) = E_{alpha,1}(-pi^2 t^alpha) sin(pi x)."""
    amp = mittag_leffler(MLParams(alpha, 1.0), -math.pi**2 * t**alpha)
    return amp * np.sin(math.pi * grid)


# --- 2D fractional Cahn-Hilliard ----------------------------------------------

_CH_CENTERS = ((0.3, 0.3), (0.3, 0.7), (0.7, 0.7), (0.7, 0.3))
_CH_RADIUS = 0.15


@dataclass(frozen=True)
class CHParams:
    """Cell-centered nx x ny grid of the unit square, Neumann walls."""

    nx: int
    ny: int
    M: float = 0.05
    eps: float = 0.03

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid must be at least 8 x 8")
        if self.M <= 0.0 or self.eps <= 0.0:
            raise ValueError("mobility and surface parameter must be positive")

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return 1.0 / self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")


class _CHOperator(SplitOperator):
    """Mass-flux form F[u] = M * Lap(psi(u) - eps^2 * Lap u).

    The convex-concave splitting psi_plus(u) = 2u, psi_minus(u) = u^3 - 3u
    puts F_minus[u] = M*Lap(2u - eps^2*Lap u) implicitly (linear) and
    F_plus[u] = M*Lap(psi_minus(u)) explicitly, so each step costs one cosine
    transform pair.  ``linear_chemistry`` replaces psi by its linearization
    -u (keeping psi_plus = 2u) for eigenmode cross-checks in tests.
    """

    def __init__(self, p: CHParams, linear_chemistry: bool = False):
        self.p = p
        self.linear_chemistry = linear_chemistry
        lx = -4.0 / p.dx**2 * np.sin(np.pi * np.arange(p.nx) / (2.0 * p.nx)) ** 2
        ly = -4.0 / p.dy**2 * np.sin(np.pi * np.arange(p.ny) / (2.0 * p.ny)) ** 2
        self.eigenvalues = lx[:, None] + ly[None, :]

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        pad = np.pad(u, 1, mode="edge")  # ghost = edge value: zero-flux walls
        return (
            (pad[2:, 1:-1] - 2.0 * u + pad[:-2, 1:-1]) / self.p.dx**2
            + (pad[1:-1, 2:] - 2.0 * u + pad[1:-1, :-2]) / self.p.dy**2
        )

    def psi_minus(self, u: np.ndarray) -> np.ndarray:
        if self.linear_chemistry:
            return -3.0 * u
        return u**3 - 3.0 * u

    def chemical_potential(self, u: np.ndarray) -> np.ndarray:
        psi = 2.0 * u + self.psi_minus(u)
        return psi - self.p.eps**2 * self.laplacian(u)

    def apply_minus(self, t, u):
        return self.p.M * self.laplacian(2.0 * u - self.p.eps**2 * self.laplacian(u))

    def apply_plus(self, t, u):
        return self.p.M * self.laplacian(self.psi_minus(u))

    def solve_implicit(self, beta, rhs):
        if beta == 0.0:
            return rhs.copy()
        bm = beta * self.p.M
        symbol = 1.0 - 2.0 * bm * self.eigenvalues + bm * self.p.eps**2 * self.eigenvalues**2
        if np.any(symbol <= 0.0):
            raise SoefracError("implicit symbol lost positivity (cannot happen for lam <= 0)")
        hat = scipy.fft.dctn(rhs, type=2, norm="ortho")
        return scipy.fft.idctn(hat / symbol, type=2, norm="ortho")

    def norm(self, u) -> float:
        return float(math.sqrt(self.p.dx * self.p.dy * np.sum(u * u)))

    @staticmethod
    def mean(u) -> float:
        return float(np.mean(u))


def ch_operator(p: CHParams, linear_chemistry: bool = False) -> _CHOperator:
    return _CHOperator(p, linear_chemistry)


def ch_initial(p: CHParams, r: float = _CH_RADIUS,
               centers=_CH_CENTERS) -> np.ndarray:
    """Four-bubble initial state sum_i tanh((r - |x - x_i|)/(sqrt(2) eps)) + 3."""
    X, Y = p.cell_centers()
    u = np.full_like(X, 3.0)
    for cx, cy in centers:
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise ValueError(f"bubble center ({cx}, {cy}) outside the unit square")
        dist = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2)
        u += np.tanh((r - dist) / (math.sqrt(2.0) * p.eps))
    return u


def ch_energy(p: CHParams, u: np.ndarray) -> float:
    """Ginzburg-Landau energy: midpoint rule for the double well 0.25*(u^2-1)^2
    plus forward-difference gradient energy (zero flux across the walls)."""
    area = p.dx * p.dy
    bulk = float(np.sum(0.25 * (u * u - 1.0) ** 2))
    gx = (u[1:, :] - u[:-1, :]) / p.dx
    gy = (u[:, 1:] - u[:, :-1]) / p.dy
    grad = float(np.sum(gx * gx)) + float(np.sum(gy * gy))
    return area * (bulk + 0.5 * p.eps**2 * grad)


# --- error metric and convergence harness ------------------------------------

@dataclass(frozen=True)
class ErrorMetric:
    """Relative error spec: tail window start (usually T/3) and the reference,
    either a callable t -> field or a finer-resolution RunRecord."""

    t_start: float
    reference: object


def error_observers(reference: Callable[[float], Field], u0: Field,
                    norm: Callable[[Field], float], t_start: float = 0.0) -> dict:
    """Per-step observers feeding relative_error: distance to the reference and
    the reference's own excursion from u0 (the denominator weight).  Steps
    before t_start record NaN; a windowed reference (e.g. a finer run stored
    only on the comparison window) need not exist there."""
    slack = 1e-12 * max(1.0, abs(t_start))

    def err(t, u):
        if t < t_start - slack:
            return math.nan
        return norm(reference(t) - u)

    def errden(t, u):
        if t < t_start - slack:
            return math.nan
        return norm(reference(t) - u0)

    return {"err": err, "errden": errden}


def record_reference(record: RunRecord) -> Callable[[float], Field]:
    """Adapter: subsample a finer run's snapshots at coinciding times."""

    def ref(t: float) -> Field:
        try:
            return record.snapshot_at(t)
        except KeyError as exc:
            raise GridMismatchError(
                f"reference run has no state at t={t!r}; grids are incompatible"
            ) from exc

    return ref


def relative_error(run_record: RunRecord, metric: ErrorMetric) -> float:
    """E_r = l2-in-time of ||ref - u|| over t >= t_start, normalized by
    the same norm of ||ref - u0||.  Requires err/errden columns collected
    during the run (see error_observers)."""
    if "err" not in run_record.columns or "errden" not in run_record.columns:
        raise GridMismatchError("run was recorded without err/errden observers")
    t = run_record.t
    mask = t >= metric.t_start - 1e-12 * max(1.0, abs(metric.t_start))
    num = float(np.sqrt(np.sum(run_record.columns["err"][mask] ** 2)))
    den = float(np.sqrt(np.sum(run_record.columns["errden"][mask] ** 2)))
    if den == 0.0:
        raise GridMismatchError("reference never leaves the initial state on the window")
    return num / den


@dataclass(frozen=True)
class ConvergenceResult:
    h: np.ndarray
    err: np.ndarray
    slope: float
    records: tuple = field(default=(), repr=False)


def _fit_slope(h: np.ndarray, err: np.ndarray) -> float:
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def convergence_study(problem, scheme_id: str, alpha: float, h_list,
                      T: float, theta: float | None = None,
                      kernel_tol: float | None = None,
                      n_samples: int = 100,
                      kernel: RationalKernel | None = None,
                      keep_records: bool = False,
                      max_workers: int = 1) -> ConvergenceResult:
    """Run the step-size sweep for one problem/scheme/alpha and fit the slope.

    One kernel is built at the finest step of the study and reused across the
    sweep.  Scalar and heat runs measure against the analytic Mittag-Leffler
    solution; Cahn-Hilliard self-references a run at a 4x finer step.  With
    max_workers > 1 the sweep's runs execute concurrently; results are merged
    keyed by h, so the output does not depend on scheduling.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 4:
        raise ValueError("need at least 4 step sizes")
    if any(b >= a for a, b in zip(h_list[:-1], h_list[1:])):
        raise ValueError("h_list must be strictly descending")
    t_start = T / 3.0

    if isinstance(problem, ScalarLinear):
        if kernel is None:
            kernel = build_kernel(alpha, min(h_list), T, kernel_tol or 1e-13, n_samples)
        op = scalar_operator(problem)
        u0 = 1.0
        reference = lambda t: scalar_analytic(alpha, problem.lam, t, u0)
        norm = op.norm
    elif isinstance(problem, Heat1D):
        if kernel is None:
            kernel = build_kernel(alpha, min(h_list), T, kernel_tol or 1e-13, n_samples)
        op = heat_operator(problem)
        grid = problem.grid
        u0 = np.sin(math.pi * grid)
        reference = lambda t: heat_analytic(alpha, t, grid)
        norm = op.norm
    elif isinstance(problem, CHParams):
        h_ref = min(h_list) / 4.0
        if kernel is None:
            kernel = build_kernel(alpha, h_ref, T, kernel_tol or 1e-12, n_samples)
        op = ch_operator(problem)
        u0 = ch_initial(problem)
        snap_times = sorted(
            {i * min(h_list) for i in range(int(round(T / min(h_list))) + 1)
             if i * min(h_list) >= t_start - 1e-12}
        )
        ref_run = run(u0, op, kernel, scheme_id, h_ref, T, theta=theta,
                      snapshot_times=snap_times)
        reference = record_reference(ref_run)
        norm = op.norm
    else:
        raise TypeError(f"unsupported problem type {type(problem).__name__}")

    metric = ErrorMetric(t_start=t_start, reference=reference)
    obs_start = t_start if isinstance(problem, CHParams) else 0.0

    def one_run(h: float) -> RunRecord:
        obs = error_observers(reference, u0, norm, t_start=obs_start)
        obs["norm"] = lambda t, u: norm(u)
        return run(u0, op, kernel, scheme_id, h, T, theta=theta, observers=obs)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(h_list))) as pool:
            by_h = dict(zip(h_list, pool.map(one_run, h_list)))
        recs = [by_h[h] for h in h_list]
    else:
        recs = [one_run(h) for h in h_list]
    errs = [relative_error(rec, metric) for rec in recs]

    h_arr = np.asarray(h_list)
    e_arr = np.asarray(errs)
    return ConvergenceResult(h=h_arr, err=e_arr, slope=_fit_slope(h_arr, e_arr),
                             records=tuple(recs) if keep_records else ())

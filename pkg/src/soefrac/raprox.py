"""Real-valued AAA barycentric rational approximation.

Greedy fitting on a fixed sample grid, barycentric evaluation, and
pole/residue extraction via the arrowhead generalized eigenvalue pencil.
Everything is real arithmetic; a fit whose pole pencil produces genuinely
complex eigenvalues is rejected with ComplexPoleError because the downstream
kernel construction requires real exponents.

Fitted objects are immutable and may be shared freely between threads; the
greedy loop itself is sequential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ComplexPoleError, DegenerateSamplesError

__all__ = [
    "SampleSet",
    "BarycentricRational",
    "PoleResidueForm",
    "aaa_fit",
    "eval_rational",
    "extract_poles",
]

# Generalized eigenvalues above this multiple of the support scale are the
# pencil's structural at-infinity pair and are discarded.
_INF_EIGENVALUE_FACTOR = 1e13
# Below this value of |sum(w)|/||w|| the approximant has polynomial growth
# and the constant-at-infinity formula is bypassed.
_WEIGHT_SUM_DEGENERACY = 1e-12


@dataclass(frozen=True)
class SampleSet:
    """Sample grid (strictly increasing points) and function values to fit."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        if pts.ndim != 1 or vals.shape != pts.shape:
            raise DegenerateSamplesError("points and values must be 1-D arrays of equal length")
        if pts.size < 3:
            raise DegenerateSamplesError(f"need at least 3 sample points, got {pts.size}")
        if not np.all(np.diff(pts) > 0.0):
            raise DegenerateSamplesError("sample points must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise DegenerateSamplesError("sample values must be finite")


@dataclass(frozen=True)
class BarycentricRational:
    """Barycentric rational interpolant r(z) = N(z)/D(z) on real support points.

    ``residual_log`` records the max absolute residual over the sample grid
    after each greedy iteration; ``grid`` keeps the sample points the fit was
    computed on (used by diagnostics and the degenerate-pole branch).
    """

    support: np.ndarray
    fvals: np.ndarray
    weights: np.ndarray
    converged: bool = True
    residual_log: np.ndarray = field(default_factory=lambda: np.empty(0))
    grid: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.support.size
        if n < 2:
            raise DegenerateSamplesError("barycentric form needs at least 2 support points")
        if np.unique(self.support).size != n:
            raise DegenerateSamplesError("support points must be distinct")
        if not np.any(self.weights):
            raise DegenerateSamplesError("weight vector must not be all zero")

    @property
    def degree(self) -> int:
        return self.support.size - 1


@dataclass(frozen=True)
class PoleResidueForm:
    """Partial-fraction data: r(z) = const + linear_coeff*z + sum res_j/(z - pole_j)."""

    poles: np.ndarray
    residues: np.ndarray
    const_at_infinity: float
    linear_coeff: float = 0.0


def _eval_array(support: np.ndarray, fvals: np.ndarray, weights: np.ndarray,
                z: np.ndarray) -> np.ndarray:
    """Barycentric evaluation at many points, exact at support points."""
    zc = z[:, None] - support[None, :]
    hit = zc == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        cauchy = 1.0 / zc
        num = cauchy @ (weights * fvals)
        den = cauchy @ weights
        out = num / den
    rows, cols = np.nonzero(hit)
    out[rows] = fvals[cols]
    return out


def eval_rational(r: BarycentricRational, z) -> float | np.ndarray:
    """Evaluate the interpolant at scalar or array argument z."""
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = _eval_array(r.support, r.fvals, r.weights, arr.ravel()).reshape(arr.shape)
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return float(out.ravel()[0])
    return out


def aaa_fit(samples: SampleSet, rel_tol: float, max_degree: int) -> BarycentricRational:
    """Greedy AAA fit of the sampled function.

    The first support point is the sample maximizing |value - mean(values)|;
    each iteration adds the point of largest absolute residual and recomputes
    the weights as the right singular vector of the Loewner matrix
    L_ij = (F_i - f_j)/(Z_i - z_j) (rows over non-support samples) belonging
    to its smallest singular value.  Stops once the max residual drops below
    rel_tol * max|values| (with at least 2 support points) or when the degree
    budget is exhausted, in which case ``converged`` is False.
    """
    if not (0.0 < rel_tol < 1.0):
        raise ValueError(f"rel_tol must be in (0, 1), got {rel_tol!r}")
    if max_degree < 1:
        raise ValueError(f"max_degree must be >= 1, got {max_degree!r}")
    pts = samples.points
    vals = samples.values
    m_total = pts.size
    scale = float(np.max(np.abs(vals)))
    target = rel_tol * scale

    in_support = np.zeros(m_total, dtype=bool)
    support_idx: list[int] = []
    residual_log: list[float] = []
    # Before any weights exist the working approximation is the mean.
    approx = np.full(m_total, float(np.mean(vals)))
    weights = np.empty(0)

    max_n = max_degree + 1
    converged = False
    while len(support_idx) < max_n:
        resid = np.abs(vals - approx)
        resid[in_support] = 0.0
        j = int(np.argmax(resid))  # ties resolve to the smallest index
        support_idx.append(j)
        in_support[j] = True

        zj = pts[support_idx]
        fj = vals[support_idx]
        rest = ~in_support
        # Loewner matrix over the remaining samples.
        diff = pts[rest, None] - zj[None, :]
        loewner = (vals[rest, None] - fj[None, :]) / diff
        _, _, vh = np.linalg.svd(loewner, full_matrices=True)
        weights = vh[-1, :]

        approx = _eval_array(zj, fj, weights, pts)
        max_resid = float(np.max(np.abs(vals - approx)))
        residual_log.append(max_resid)
        if max_resid <= target and len(support_idx) >= 2:
            converged = True
            break

    order = np.argsort(pts[support_idx])
    idx = np.asarray(support_idx)[order]
    return BarycentricRational(
        support=pts[idx].copy(),
        fvals=vals[idx].copy(),
        weights=weights[order].copy(),
        converged=converged,
        residual_log=np.asarray(residual_log),
        grid=pts.copy(),
    )


def extract_poles(r: BarycentricRational) -> PoleResidueForm:
    """Partial-fraction decomposition of the barycentric interpolant.

    Finite poles are the eigenvalues of the (n+1)x(n+1) arrowhead pencil
    (first row weights, first column ones, support points on the trailing
    diagonal against a mass matrix with zero first entry); residues come from
    N(pole)/D'(pole).  When |sum(w)| is numerically zero the approximant
    grows linearly and the (const, linear) pair is recovered by least squares
    on the sample grid instead.
    """
    n = r.support.size
    pencil = np.zeros((n + 1, n + 1))
    pencil[0, 1:] = r.weights
    pencil[1:, 0] = 1.0
    pencil[1:, 1:][np.diag_indices(n)] = r.support
    mass = np.eye(n + 1)
    mass[0, 0] = 0.0
    eigvals = scipy.linalg.eigvals(pencil, mass)

    support_scale = float(np.max(np.abs(r.support)))
    cutoff = _INF_EIGENVALUE_FACTOR * max(support_scale, 1.0)
    finite = eigvals[np.isfinite(eigvals) & (np.abs(eigvals) <= cutoff)]
    bad = np.abs(finite.imag) > 1e-8 * (1.0 + np.abs(finite.real))
    if np.any(bad):
        raise ComplexPoleError(
            f"pole pencil produced complex eigenvalues: {finite[bad]!r}"
        )
    poles = np.sort(finite.real)

    # Two Newton steps on D(z) = sum w_j/(z - z_j) polish the pencil
    # eigenvalues to local roundoff; the raw eigenvalues of deep fits carry
    # enough error to pollute the residues of the slowest poles.  Spurious
    # poles sitting exactly on support points (Froissart breakdown) are left
    # untouched and reported by the caller's positivity checks.
    for _ in range(2):
        diff = poles[:, None] - r.support[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            dval = (1.0 / diff) @ r.weights
            dprime = -(1.0 / diff**2) @ r.weights
            step = dval / dprime
        ok = np.isfinite(step) & (np.abs(step) < 0.5 * np.abs(poles) + support_scale)
        poles = np.where(ok, poles - step, poles)

    # residue_j = N(pole_j) / D'(pole_j)
    if poles.size:
        diff = poles[:, None] - r.support[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            numer = (1.0 / diff) @ (r.weights * r.fvals)
            dprime = -(1.0 / diff**2) @ r.weights
            residues = numer / dprime
        residues = np.where(np.isfinite(residues), residues, 0.0)
    else:
        residues = np.empty(0)

    wsum = float(np.sum(r.weights))
    wnorm = float(np.linalg.norm(r.weights))
    if abs(wsum) / wnorm < _WEIGHT_SUM_DEGENERACY:
        grid = r.grid if r.grid is not None else np.linspace(
            r.support.min(), r.support.max(), 4 * n + 8
        )
        rv = _eval_array(r.support, r.fvals, r.weights, grid)
        if poles.size:
            rv = rv - (1.0 / (grid[:, None] - poles[None, :])) @ residues
        basis = np.stack([np.ones_like(grid), grid], axis=1)
        coef, *_ = np.linalg.lstsq(basis, rv, rcond=None)
        const, lin = float(coef[0]), float(coef[1])
    else:
        const = float(np.sum(r.weights * r.fvals) / wsum)
        lin = 0.0

    return PoleResidueForm(
        poles=poles, residues=residues, const_at_infinity=const, linear_coeff=lin
    )

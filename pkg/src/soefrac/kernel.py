"""Sum-of-exponentials compression of the fractional convolution kernel.

The kernel t^(alpha-1)/Gamma(alpha) has Laplace transform s^(-alpha).  We fit
z^alpha on [h, T] with a barycentric rational r_b, map z -> 1/z, and read off
the multipole form

    Khat(s) = sum_k c_k / (s + d_k) + c_inf,

equivalently the time-domain surrogate sum_k c_k exp(-d_k t) + c_inf*delta(t).
Every pole pi_j of r_b contributes d_j = -1/pi_j, c_j = -rho_j/pi_j^2; a
linear part of r_b becomes a d = 0 mode and the constant shifts by
-sum rho_j/pi_j.  The algebra is verified at build time against r_b(1/z)
rather than trusted.

RationalKernel instances are immutable and shareable; building is
single-threaded.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ConvergenceError, PositivityError, SchemaError, SelfCheckError
from .raprox import SampleSet, aaa_fit, extract_poles
from .specfun import gamma_fn

__all__ = [
    "RationalKernel",
    "build_kernel",
    "spectrum_sup_error",
    "time_domain_error",
    "eval_exp_kernel",
    "eval_spectrum",
    "save_kernel",
    "load_kernel",
    "dumps_kernel",
    "loads_kernel",
]

_DROP_REL = 1e-14          # modes with |c| below this times max|c| are dropped
_CLAMP_NEG = 1e-12         # tiny negative weights clamped to zero
_SELF_CHECK_TOL = 1e-9
_DEFAULT_N_SAMPLES = 100   # log-spaced candidate grid size used throughout


@dataclass(frozen=True)
class RationalKernel:
    """Multipole surrogate of the fractional kernel for one (alpha, h, T, tol)."""

    alpha: float
    h: float
    T: float
    tol: float
    c: np.ndarray
    d: np.ndarray
    c_inf: float

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        if c.shape != d.shape or c.ndim != 1:
            raise SchemaError("mode arrays c and d must be 1-D of equal length")
        if np.any(c < 0.0) or np.any(d < 0.0):
            raise PositivityError("kernel requires c_k >= 0 and d_k >= 0")
        if c.size and np.any(np.diff(d) <= 0.0):
            raise SchemaError("mode rates d must be strictly increasing")
        if not (0.0 <= self.c_inf <= 1.0):
            raise SchemaError(f"c_inf must lie in [0, 1], got {self.c_inf!r}")
        if c.size == 0 and self.alpha != 0.0:
            raise SchemaError("m = 0 is only permitted for alpha = 0")

    @property
    def m(self) -> int:
        return int(self.c.size)


def eval_spectrum(k: RationalKernel, s) -> np.ndarray:
    """Khat(s) = sum c/(s + d) + c_inf for scalar or array s > 0."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if k.m == 0:
        return np.full(s.shape, k.c_inf)
    return (1.0 / (s[:, None] + k.d[None, :])) @ k.c + k.c_inf


def eval_exp_kernel(k: RationalKernel, t) -> float | np.ndarray:
    """Sum-of-exponentials part sum_k c_k exp(-d_k t) at t >= 0."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < 0.0):
        raise ValueError("t must be >= 0")
    if k.m == 0:
        out = np.zeros(arr.shape)
    else:
        out = np.exp(-arr[:, None] * k.d[None, :]) @ k.c
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0])
    return out


def build_kernel(alpha: float, h: float, T: float, tol: float,
                 n_samples: int = _DEFAULT_N_SAMPLES,
                 max_degree: int = 30) -> RationalKernel:
    """Construct the sum-of-exponentials kernel for fractional order alpha.

    Fits z^alpha on n_samples log-spaced points of [h, T] to relative
    tolerance tol and transforms the pole/residue form through w = 1/z.
    The limits alpha = 1 (single c=1, d=0 mode) and alpha = 0 (pure Dirac,
    c_inf = 1) are returned exactly.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    if not (0.0 < h <= T):
        raise ValueError(f"need 0 < h <= T, got h={h!r}, T={T!r}")
    if not (1e-13 <= tol <= 1e-3):
        raise ValueError(f"tol must be in [1e-13, 1e-3], got {tol!r}")
    if n_samples < 20:
        raise ValueError(f"n_samples must be >= 20, got {n_samples!r}")

    if alpha == 1.0:
        return RationalKernel(alpha, h, T, tol, np.array([1.0]), np.array([0.0]), 0.0)
    if alpha == 0.0:
        return RationalKernel(alpha, h, T, tol, np.empty(0), np.empty(0), 1.0)

    pts = np.logspace(math.log10(h), math.log10(T), n_samples)
    rb = aaa_fit(SampleSet(pts, pts**alpha), rel_tol=tol, max_degree=max_degree)
    pr = extract_poles(rb)

    if np.any(pr.poles >= 0.0):
        raise PositivityError(
            f"fit produced poles on the non-negative axis: {pr.poles[pr.poles >= 0.0]!r}"
        )
    d = -1.0 / pr.poles
    c = -pr.residues / pr.poles**2
    # c_inf is the s -> infinity limit of r_b(1/s), i.e. r_b(0).  That equals
    # const_at_infinity - sum rho_j/pi_j algebraically, but the direct
    # barycentric value at 0 stays well conditioned even when sum(w) is
    # nearly degenerate (large alpha), where the difference formula cancels
    # catastrophically.
    c_inf = _bary_eval_scalar(rb.support, rb.fvals, rb.weights, 0.0)

    # Residues of poles far outside the fit interval are quotients of two
    # near-cancelling barycentric sums when the fit is close to polynomial.
    # Their weights are re-solved by collocation against r_b(1/s), which is
    # the quantity the self-check below certifies anyway.
    far = np.abs(pr.poles) > 10.0 * T
    if np.any(far) and not np.all(far):
        s_fit = np.logspace(math.log10(1.0 / T), math.log10(1.0 / h), 4 * int(far.sum()) + 16)
        ref_fit = np.asarray(
            [_bary_eval_scalar(rb.support, rb.fvals, rb.weights, 1.0 / s) for s in s_fit]
        )
        rhs = ref_fit - c_inf - (1.0 / (s_fit[:, None] + d[None, ~far])) @ c[~far]
        design = 1.0 / (s_fit[:, None] + d[None, far])
        c[far], *_ = np.linalg.lstsq(design, rhs, rcond=None)

    if pr.linear_coeff != 0.0:
        d = np.append(d, 0.0)
        c = np.append(c, pr.linear_coeff)

    # Cleanup: drop negligible modes, clamp roundoff negatives, then enforce
    # the positivity the multipole form is supposed to deliver.
    if c.size:
        keep = np.abs(c) > _DROP_REL * float(np.max(np.abs(c)))
        c, d = c[keep], d[keep]
    tiny_neg = (c > -_CLAMP_NEG) & (c < 0.0)
    c = np.where(tiny_neg, 0.0, c)
    if np.any(c < 0.0):
        raise PositivityError(f"negative mode weights beyond roundoff: {c[c < 0.0]!r}")
    if np.any(d < 0.0):
        raise PositivityError(f"negative mode rates: {d[d < 0.0]!r}")
    if c_inf < 0.0 or c_inf > 1.0:
        # Loose fits can push the Dirac weight marginally outside [0, 1];
        # clamp within a tol-scaled band, fail beyond it.
        if -10.0 * tol <= c_inf < 0.0:
            c_inf = 0.0
        elif 1.0 < c_inf <= 1.0 + 10.0 * tol:
            c_inf = 1.0
        else:
            raise PositivityError(f"Dirac weight c_inf={c_inf!r} outside [0, 1]")

    order = np.argsort(d)
    c, d = c[order], d[order]
    # Merge (defensively) numerically coincident rates to keep d strictly increasing.
    if d.size > 1:
        dup = np.nonzero(np.diff(d) <= 0.0)[0]
        for i in dup[::-1]:
            c[i] += c[i + 1]
            c = np.delete(c, i + 1)
            d = np.delete(d, i + 1)

    kernel = RationalKernel(alpha, h, T, tol, c, d, float(c_inf))

    # Mandatory transform self-check: the multipole form must reproduce
    # r_b(1/z) on the resolved Laplace band.
    s_grid = np.logspace(math.log10(1.0 / T), math.log10(1.0 / h), 200)
    reference = np.asarray(
        [_bary_eval_scalar(rb.support, rb.fvals, rb.weights, 1.0 / s) for s in s_grid]
    )
    diff = float(np.max(np.abs(eval_spectrum(kernel, s_grid) - reference)))
    allowed = _SELF_CHECK_TOL * max(1.0, float(np.max(np.abs(reference))))
    if diff > allowed:
        raise SelfCheckError(
            f"pole transform self-check failed: max deviation {diff:.3e} > {allowed:.3e}"
        )
    return kernel


def _bary_eval_scalar(support, fvals, weights, z: float) -> float:
    hit = support == z
    if np.any(hit):
        return float(fvals[hit][0])
    cauchy = 1.0 / (z - support)
    return float(np.dot(cauchy, weights * fvals) / np.dot(cauchy, weights))


def spectrum_sup_error(k: RationalKernel, n_grid: int = 2000) -> float:
    """Sup of |s^(-alpha) - Khat(s)| over n_grid log-spaced s in [1/T, 1/h]."""
    s = np.logspace(math.log10(1.0 / k.T), math.log10(1.0 / k.h), n_grid)
    return float(np.max(np.abs(s**(-k.alpha) - eval_spectrum(k, s))))


def _power_kernel(alpha: float, t: np.ndarray) -> np.ndarray:
    """t^(alpha-1)/Gamma(alpha); identically zero in the alpha = 0 limit."""
    if alpha == 0.0:
        return np.zeros_like(t)
    return t**(alpha - 1.0) / gamma_fn(alpha)


def step_mass(k: RationalKernel, h: float) -> float:
    """integral_0^h of the exponential part: sum c_k (1 - e^(-d_k h))/d_k."""
    total = 0.0
    for ck, dk in zip(k.c, k.d):
        x = dk * h
        if x < 1e-8:
            total += ck * h * (1.0 - 0.5 * x)  # series limit, exact at d = 0
        else:
            total += ck * (1.0 - math.exp(-x)) / dk
    return total


def time_domain_error(k: RationalKernel, panels_per_decade: int = 8) -> float:
    """Time-domain kernel error: L1 distance on [h, T] plus the local-mass mismatch.

    The [0, h] masses use closed forms (h^alpha/Gamma(alpha+1) for the power
    kernel); the L1 tail is adaptive quadrature on log-subdivided panels.
    """
    alpha, h, T = k.alpha, k.h, k.T
    exact_mass = h**alpha / gamma_fn(alpha + 1.0) if alpha > 0.0 else 1.0
    local = abs(exact_mass - step_mass(k, h) - k.c_inf)

    if h == T:
        return local
    n_panels = max(1, int(math.ceil(panels_per_decade * math.log10(T / h))))
    edges = np.logspace(math.log10(h), math.log10(T), n_panels + 1)

    def absdiff(t: float) -> float:
        return abs(
            _power_kernel(alpha, np.asarray([t]))[0] - eval_exp_kernel(k, t)
        )

    l1 = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, abserr, info = quad(absdiff, lo, hi, epsabs=1e-13, epsrel=1e-8,
                                 limit=200, full_output=True)[:3]
        if not math.isfinite(val):
            raise ConvergenceError(f"kernel-error quadrature failed on [{lo}, {hi}]")
        l1 += val
    return l1 + local


# --- serialization ---------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_kernel(k: RationalKernel) -> str:
    """Kernel file content: JSON with 17-significant-digit decimals."""
    modes = ", ".join(
        '{"c": %s, "d": %s}' % (_fmt(c), _fmt(d)) for c, d in zip(k.c, k.d)
    )
    return (
        '{"alpha": %s, "h": %s, "T": %s, "tol": %s, "c_inf": %s, "modes": [%s]}\n'
        % (_fmt(k.alpha), _fmt(k.h), _fmt(k.T), _fmt(k.tol), _fmt(k.c_inf), modes)
    )


def loads_kernel(text: str) -> RationalKernel:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"kernel file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("kernel file must contain a JSON object")
    required = {"alpha", "h", "T", "tol", "c_inf", "modes"}
    if set(raw) != required:
        raise SchemaError(f"kernel file keys {sorted(raw)} != {sorted(required)}")
    modes = raw["modes"]
    if not isinstance(modes, list) or not all(
        isinstance(mo, dict) and set(mo) == {"c", "d"} for mo in modes
    ):
        raise SchemaError('modes must be a list of {"c": r, "d": r} objects')
    scalars = {}
    for key in ("alpha", "h", "T", "tol", "c_inf"):
        if not isinstance(raw[key], (int, float)) or isinstance(raw[key], bool):
            raise SchemaError(f"field {key!r} must be a number")
        scalars[key] = float(raw[key])
    c = np.asarray([float(mo["c"]) for mo in modes])
    d = np.asarray([float(mo["d"]) for mo in modes])
    return RationalKernel(
        alpha=scalars["alpha"], h=scalars["h"], T=scalars["T"], tol=scalars["tol"],
        c=c, d=d, c_inf=scalars["c_inf"],
    )


def save_kernel(k: RationalKernel, path: str | os.PathLike) -> None:
    """Atomic write of the kernel JSON file (UTF-8)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps_kernel(k))
    os.replace(tmp, path)


def load_kernel(path: str | os.PathLike) -> RationalKernel:
    with open(path, encoding="utf-8") as fh:
        return loads_kernel(fh.read())

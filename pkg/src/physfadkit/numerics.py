"""Dense complex linear algebra and cylinder functions used by every other module.

All operations are pure functions; inputs are never mutated. Matrices are plain
``numpy.ndarray`` with ``complex128`` entries, row-major.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import zgecon

from .errors import (
    DomainError,
    IllConditionedWarning,
    NonConvergenceError,
    SingularMatrixError,
)

GROUP_ORDER = ("T", "R", "E", "S")


@dataclass(frozen=True)
class BlockIndexMap:
    """Offsets and lengths of the four dipole groups in T, R, E, S order."""

    n_t: int
    n_r: int
    n_e: int
    n_s: int

    def __post_init__(self):
        if min(self.n_t, self.n_r, self.n_e, self.n_s) < 0:
            raise ValueError("group sizes must be nonnegative")

    @property
    def n_total(self) -> int:
        return self.n_t + self.n_r + self.n_e + self.n_s

    def offset(self, group: str) -> int:
        sizes = {"T": self.n_t, "R": self.n_r, "E": self.n_e, "S": self.n_s}
        off = 0
        for g in GROUP_ORDER:
            if g == group:
                return off
            off += sizes[g]
        raise KeyError(f"unknown group {group!r}")

    def length(self, group: str) -> int:
        return {"T": self.n_t, "R": self.n_r, "E": self.n_e, "S": self.n_s}[group]

    def sl(self, group: str) -> slice:
        off = self.offset(group)
        return slice(off, off + self.length(group))

    def block(self, m: np.ndarray, row_group: str, col_group: str) -> np.ndarray:
        """Extract one of the 16 blocks of an N x N matrix laid out in group order."""
        return m[self.sl(row_group), self.sl(col_group)]


def _as_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def invert(m: np.ndarray) -> np.ndarray:
    """Inverse of a square complex matrix via LU factorization with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot underflows or the LAPACK
    reciprocal-condition estimate is at or below 1e-14. Emits
    :class:`IllConditionedWarning` when the estimate is below 1e-12.
    """
    m = _as_square(m)
    if m.size == 0:
        return m.copy()
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    anorm = np.linalg.norm(m, 1)
    try:
        lu, piv = lu_factor(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises rarely
        raise SingularMatrixError(str(exc)) from exc
    diag = np.abs(np.diag(lu))
    if diag.min() == 0.0 or not np.isfinite(diag).all():
        raise SingularMatrixError("zero pivot in LU factorization")
    if anorm > 0.0:
        rcond, info = zgecon(lu, anorm)
        if info != 0:  # pragma: no cover - defensive
            raise SingularMatrixError(f"zgecon failed with info={info}")
        if rcond <= 1e-14:
            raise SingularMatrixError(
                f"matrix numerically singular (rcond estimate {rcond:.3e})"
            )
        if rcond < 1e-12:
            warnings.warn(
                f"matrix ill conditioned (rcond estimate {rcond:.3e})",
                IllConditionedWarning,
                stacklevel=2,
            )
    inv = lu_solve((lu, piv), np.eye(m.shape[0], dtype=complex))
    return inv


def solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m @ x = rhs`` with the same pivoting and guards as :func:`invert`."""
    m = _as_square(m)
    anorm = np.linalg.norm(m, 1)
    try:
        lu, piv = lu_factor(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularMatrixError(str(exc)) from exc
    if np.abs(np.diag(lu)).min() == 0.0:
        raise SingularMatrixError("zero pivot in LU factorization")
    if anorm > 0.0:
        rcond, _ = zgecon(lu, anorm)
        if rcond <= 1e-14:
            raise SingularMatrixError(
                f"matrix numerically singular (rcond estimate {rcond:.3e})"
            )
        if rcond < 1e-12:
            warnings.warn(
                f"matrix ill conditioned (rcond estimate {rcond:.3e})",
                IllConditionedWarning,
                stacklevel=2,
            )
    return lu_solve((lu, piv), np.asarray(rhs, dtype=complex))


def _start_vector(n: int, variant: int = 0) -> np.ndarray:
    # Deterministic, generic direction; variant used for restarts.
    i = np.arange(n, dtype=float)
    if variant == 0:
        v = 1.0 + i / max(n, 1)
    else:
        v = np.cos(0.7 * (variant + 1) * (i + 1)) + 1.3
    return v / np.linalg.norm(v)


def spectral_norm(a: np.ndarray, rel_tol: float = 1e-9) -> float:
    """Largest singular value by power iteration on ``A^H A``.

    Deterministic start vector, restart on stagnation, iteration cap
    ``10 * max(rows, cols) * 100``. Accuracy target is 1e-8 relative.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    if a.size == 0:
        return 0.0
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    # Iterate on the smaller Gram matrix.
    if a.shape[0] >= a.shape[1]:
        b = a.conj().T @ a
    else:
        b = a @ a.conj().T
    n = b.shape[0]
    scale = np.abs(b).max()
    if scale == 0.0:
        return 0.0
    b = b / scale
    cap = 10 * max(a.shape) * 100
    v = _start_vector(n).astype(complex)
    lam_prev = 0.0
    inc_prev = np.inf
    restarts = 0
    it = 0
    while it < cap:
        it += 1
        w = b @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = float(np.real(np.vdot(v, b @ v)))
        inc = abs(lam - lam_prev)
        if lam > 0.0 and inc <= 0.5e-16 * lam:
            lam_prev = lam
            break
        # Geometric extrapolation of the remaining error from the increment ratio.
        if np.isfinite(inc_prev) and inc_prev > 0.0:
            r = min(inc / inc_prev, 0.999999)
            err_est = inc * r / (1.0 - r)
            if lam > 0.0 and err_est <= rel_tol * lam:
                lam_prev = lam
                break
            if r > 0.999999 and it > cap // 2 and restarts == 0:
                restarts += 1
                v = (v + _start_vector(n, variant=1)) / np.linalg.norm(
                    v + _start_vector(n, variant=1)
                )
                inc = np.inf
        lam_prev = lam
        inc_prev = inc
    else:
        raise NonConvergenceError(
            f"power iteration did not converge within {cap} iterations"
        )
    lam_prev = max(lam_prev, 0.0)
    return math.sqrt(lam_prev * scale)


class GelfandEstimate(NamedTuple):
    value: float
    m: int


def spectral_radius_estimate(a: np.ndarray, m_max: int) -> GelfandEstimate:
    """Upper estimate of the spectral radius via ``||A^m||_2^(1/m)`` with m doubling.

    Returns the best (smallest) estimate over m = 1, 2, 4, ... <= m_max together
    with the m that attained it. When ``||A^m||`` leaves the representable range
    the estimate is the ``+inf`` sentinel, signalling a spectral radius far above 1.
    """
    a = _as_square(a)
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if a.size == 0:
        return GelfandEstimate(0.0, 1)
    best = math.inf
    best_m = 1
    power = a.copy()
    m = 1
    while True:
        if not np.isfinite(power).all():
            return GelfandEstimate(math.inf, m)
        norm = spectral_norm(power)
        if not math.isfinite(norm):  # pragma: no cover - caught by entry check
            return GelfandEstimate(math.inf, m)
        est = norm ** (1.0 / m) if norm > 0.0 else 0.0
        if est < best:
            best = est
            best_m = m
        if est == 0.0:
            return GelfandEstimate(0.0, m)
        if 2 * m > m_max:
            return GelfandEstimate(best, best_m)
        power = power @ power
        m *= 2


def neumann_partial_sum(x: np.ndarray, n_terms: int) -> np.ndarray:
    """Partial sum ``I + X + ... + X^(n_terms-1)`` by Horner accumulation.

    One matrix product per term. Approximates ``inv(I - X)`` when the spectral
    norm of X is below one, with error at most ``||X||^K / (1 - ||X||)``.
    """
    x = _as_square(x)
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    eye = np.eye(x.shape[0], dtype=complex)
    total = eye.copy()
    for _ in range(n_terms - 1):
        total = eye + x @ total
    return total


# ---------------------------------------------------------------------------
# Cylinder functions J0, Y0, H0^(2).
#
# Power series below x = 12, evaluated in double-double arithmetic so the
# alternating-series cancellation never degrades the returned double. Above 12
# the Hankel modulus/phase form with the published Cephes rational fits
# (Moshier, Cephes Math Library, 1989) is accurate to a few ulp.
# ---------------------------------------------------------------------------

_BESSEL_CROSSOVER = 12.0
_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitting constant
_EULER = 0.57721566490153286060651209008240243104215933593992
_SQ2OPI = 7.9788456080286535587989e-1  # sqrt(2/pi)
_PIO4 = 7.85398163397448309616e-1

_PP = np.array(
    [7.96936729297347051624e-4, 8.28352392107440799803e-2, 1.23953371646414299388e0,
     5.44725003058768775090e0, 8.74716500199817011941e0, 5.30324038235394892183e0,
     9.99999999999999997821e-1])
_PQ = np.array(
    [9.24408810558863637013e-4, 8.56288474354474431428e-2, 1.25352743901058953537e0,
     5.47097740330417105182e0, 8.76190883237069594232e0, 5.30605288235394617618e0,
     1.00000000000000000218e0])
_QP = np.array(
    [-1.13663838898469149931e-2, -1.28252718670509318512e0, -1.95539544257735972385e1,
     -9.32060152123768231369e1, -1.77681167980488050595e2, -1.47077505154951170175e2,
     -5.14105326766599330220e1, -6.05014350600728481186e0])
_QQ = np.array(
    [6.43178256118178023184e1, 8.56430025976980587198e2, 3.88240183605401609683e3,
     7.24046774195652478189e3, 5.93072701187316984827e3, 2.06209331660327847417e3,
     2.42005740240291393179e2])


@njit(cache=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True)
def _two_prod(a, b):
    p = a * b
    ca = _SPLIT * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLIT * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True)
def _dd_mul(xh, xl, yh, yl):
    ph, pl = _two_prod(xh, yh)
    pl += xh * yl + xl * yh
    return _two_sum(ph, pl)


@njit(cache=True)
def _dd_add(xh, xl, yh, yl):
    sh, sl = _two_sum(xh, yh)
    sl += xl + yl
    return _two_sum(sh, sl)


@njit(cache=True)
def _j0y0_series(x):
    # t_k = (-1)^k (x^2/4)^k / (k!)^2, accumulated in double-double;
    # the Y0 sum carries the harmonic-number weights H_k.
    qh, ql = _two_prod(x, x)
    qh *= 0.25
    ql *= 0.25
    th, tl = 1.0, 0.0
    jh, jl = 1.0, 0.0
    sh, sl = 0.0, 0.0
    hh, hl = 0.0, 0.0
    for k in range(1, 200):
        fk = float(k)
        th, tl = _dd_mul(th, tl, qh, ql)
        th, tl = -th, -tl
        r2 = 1.0 / (fk * fk)
        p2h, p2l = _two_prod(r2, fk * fk)
        r2_err = ((1.0 - p2h) - p2l) * r2
        th, tl = _dd_mul(th, tl, r2, r2_err)
        rk = 1.0 / fk
        pkh, pkl = _two_prod(rk, fk)
        rk_err = ((1.0 - pkh) - pkl) * rk
        hh, hl = _dd_add(hh, hl, rk, rk_err)
        jh, jl = _dd_add(jh, jl, th, tl)
        wh, wl = _dd_mul(th, tl, hh, hl)
        sh, sl = _dd_add(sh, sl, -wh, -wl)
        if abs(th) < 1e-35 * (abs(jh) + 1e-30):
            break
    j0 = jh + jl
    y0 = (2.0 / math.pi) * ((math.log(0.5 * x) + _EULER) * j0 + (sh + sl))
    return j0, y0


@njit(cache=True)
def _j0y0_asymptotic(x):
    z = 25.0 / (x * x)
    p = _PP[0]
    for i in range(1, 7):
        p = p * z + _PP[i]
    pd = _PQ[0]
    for i in range(1, 7):
        pd = pd * z + _PQ[i]
    q = _QP[0]
    for i in range(1, 8):
        q = q * z + _QP[i]
    qd = z + _QQ[0]
    for i in range(1, 7):
        qd = qd * z + _QQ[i]
    p /= pd
    q /= qd
    w = 5.0 / x
    xn = x - _PIO4
    c = math.cos(xn)
    s = math.sin(xn)
    amp = _SQ2OPI / math.sqrt(x)
    return amp * (p * c - w * q * s), amp * (p * s + w * q * c)


@njit(cache=True)
def _j0y0(x):
    if x < _BESSEL_CROSSOVER:
        return _j0y0_series(x)
    return _j0y0_asymptotic(x)


@njit(cache=True)
def _j0_kernel(x, out):
    for i in range(x.size):
        out[i] = _j0y0(x[i])[0]


@njit(cache=True)
def _y0_kernel(x, out):
    for i in range(x.size):
        out[i] = _j0y0(x[i])[1]


@njit(cache=True)
def _hankel02_kernel(x, out):
    for i in range(x.size):
        j0, y0 = _j0y0(x[i])
        out[i] = complex(j0, -y0)


def _bessel_eval(x, kernel, out_dtype, name: str, min_open: bool):
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    flat = np.ascontiguousarray(np.atleast_1d(arr)).ravel()
    if flat.size and not np.isfinite(flat).all():
        raise DomainError(f"{name} requires finite arguments")
    if flat.size:
        bad = (flat <= 0.0) if min_open else (flat < 0.0)
        if bad.any():
            op = ">" if min_open else ">="
            raise DomainError(f"{name} requires x {op} 0")
    out = np.empty(flat.shape, dtype=out_dtype)
    kernel(flat, out)
    if scalar:
        return out_dtype(out[0])
    return out.reshape(arr.shape)


def bessel_j0(x):
    """Bessel function J0 for x >= 0; accepts scalars or arrays."""
    return _bessel_eval(x, _j0_kernel, float, "bessel_j0", min_open=False)


def bessel_y0(x):
    """Bessel function Y0 for x > 0 (logarithmic singularity at the origin)."""
    return _bessel_eval(x, _y0_kernel, float, "bessel_y0", min_open=True)


def hankel0_2(x):
    """Hankel function of the second kind, H0^(2)(x) = J0(x) - i Y0(x), for x > 0."""
    return _bessel_eval(x, _hankel02_kernel, complex, "hankel0_2", min_open=True)

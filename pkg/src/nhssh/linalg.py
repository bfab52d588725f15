"""Dense complex linear algebra at arbitrary precision.

Matrices are numpy ``object`` arrays of ``gmpy2.mpc``; numpy only drives the
loops, every multiply/add is an MPC operation at the matrix's working
precision.  The eigensolver is the textbook pipeline: balancing, Householder
reduction to Hessenberg form, implicitly shifted complex QR with deflation for
the eigenvalues, then inverse iteration on the Hessenberg form for the
eigenvectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .bignum import BranchRule, bits_for, clog, cexp, digits_of, tol, working
from .errors import BranchInconsistency, NearDefective, NoConvergence, SingularMatrix

try:  # exact integer matrix products in C; optional accelerator
    from flint import fmpz_mat as _fmpz_mat
except ImportError:  # pragma: no cover - exercised only without python-flint
    _fmpz_mat = None

FAST_DOT_MIN = 8  # smallest inner dimension routed through the fixed-point product

__all__ = [
    "BigMatrix",
    "EigenDecomposition",
    "InverseResult",
    "lu_invert",
    "lu_solve",
    "eig_general",
    "eigvec_near",
    "matrix_log",
    "matrix_exp",
]


def _cabs1(z) -> mpfr:
    return abs(z.real) + abs(z.imag)


def _fixed_point(a: np.ndarray, axis: int, width: int):
    """Integer real/imag parts scaled by a power of two per row (axis 0) or column (axis 1).

    Each row (column) gets ``width`` bits plus its own dynamic range, capped
    at another ``width``, so every entry keeps about ``width`` significant
    bits.
    """
    n, m = a.shape
    parts = [[(v.real.as_mantissa_exp(), v.imag.as_mantissa_exp()) for v in row] for row in a]
    count = n if axis == 0 else m
    hi = [None] * count
    lo = [None] * count
    for r in range(n):
        for c in range(m):
            idx = r if axis == 0 else c
            for mant, e in parts[r][c]:
                if mant:
                    t = int(e) + mant.bit_length()
                    if hi[idx] is None or t > hi[idx]:
                        hi[idx] = t
                    if lo[idx] is None or t < lo[idx]:
                        lo[idx] = t
    exps = [0 if h is None else h - width - min(h - l, width) for h, l in zip(hi, lo)]
    re = [[0] * m for _ in range(n)]
    im = [[0] * m for _ in range(n)]
    for r in range(n):
        for c in range(m):
            base = exps[r] if axis == 0 else exps[c]
            for target, (mant, e) in zip((re, im), parts[r][c]):
                sh = int(e) - base
                mant = int(mant)
                target[r][c] = mant << sh if sh >= 0 else mant >> -sh
    return re, im, exps


def _dot(a: np.ndarray, b: np.ndarray, digits: int) -> np.ndarray:
    """Matrix product of object arrays at ``digits``.

    With python-flint available, large products run as exact integer
    products of fixed-point images (error below one ulp of the largest term
    in each row-column pair); otherwise plain ``np.dot``.
    """
    if _fmpz_mat is None or a.ndim != 2 or b.ndim != 2 or a.shape[1] < FAST_DOT_MIN:
        with working(digits):
            return np.dot(a, b)
    k = a.shape[1]
    width = bits_for(digits) + 2 * k.bit_length() + 16
    ar, ai, ea = _fixed_point(a, 0, width)
    br, bi, eb = _fixed_point(b, 1, width)
    Ar, Ai, Br, Bi = (_fmpz_mat(x) for x in (ar, ai, br, bi))
    p1 = Ar * Br
    p2 = Ai * Bi
    p3 = (Ar + Ai) * (Br + Bi)
    rows, cols = a.shape[0], b.shape[1]
    out = np.empty((rows, cols), dtype=object)
    with working(digits):
        for i in range(rows):
            for j in range(cols):
                x, y, z = int(p1[i, j]), int(p2[i, j]), int(p3[i, j])
                e = ea[i] + eb[j]
                out[i, j] = mpc(gmpy2.mul_2exp(mpfr(x - y), e), gmpy2.mul_2exp(mpfr(z - x - y), e))
    return out


def _as_object(rows, digits: int) -> np.ndarray:
    with working(digits):
        arr = np.array(rows, dtype=object)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got ndim={arr.ndim}")
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            out[idx] = mpc(v) if not isinstance(v, str) else mpc(gmpy2.mpfr(v))
        return out


@dataclass(frozen=True, eq=False)
class BigMatrix:
    """Dense complex matrix at ``digits`` decimal digits.

    ``data`` is never mutated after construction; operations return new
    matrices.
    """

    data: np.ndarray
    digits: int

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != object:
            raise ValueError("BigMatrix data must be a 2-D object array")

    # construction -----------------------------------------------------

    @classmethod
    def from_rows(cls, rows, digits: int) -> "BigMatrix":
        return cls(_as_object(rows, digits), digits)

    @classmethod
    def zeros(cls, rows: int, cols: int, digits: int) -> "BigMatrix":
        with working(digits):
            z = mpc(0)
        data = np.empty((rows, cols), dtype=object)
        data.fill(z)
        return cls(data, digits)

    @classmethod
    def identity(cls, n: int, digits: int) -> "BigMatrix":
        m = cls.zeros(n, n, digits)
        with working(digits):
            one = mpc(1)
        for i in range(n):
            m.data[i, i] = one
        return m

    @classmethod
    def diag(cls, values: Sequence, digits: int) -> "BigMatrix":
        n = len(values)
        m = cls.zeros(n, n, digits)
        with working(digits):
            for i, v in enumerate(values):
                m.data[i, i] = mpc(v)
        return m

    # shape ------------------------------------------------------------

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def entries(self) -> list:
        return list(self.data.ravel())

    def __getitem__(self, idx):
        return self.data[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BigMatrix):
            return NotImplemented
        return self.shape == other.shape and all(a == b for a, b in zip(self.data.flat, other.data.flat))

    __hash__ = None

    # algebra ----------------------------------------------------------

    @property
    def T(self) -> "BigMatrix":
        return BigMatrix(self.data.T.copy(), self.digits)

    def conj(self) -> "BigMatrix":
        with working(self.digits):
            return BigMatrix(np.conjugate(self.data), self.digits)

    @property
    def H(self) -> "BigMatrix":
        with working(self.digits):
            return BigMatrix(np.conjugate(self.data.T), self.digits)

    def _other(self, other):
        if isinstance(other, BigMatrix):
            return other.data
        return other

    def __add__(self, other) -> "BigMatrix":
        with working(self.digits):
            return BigMatrix(self.data + self._other(other), self.digits)

    def __sub__(self, other) -> "BigMatrix":
        with working(self.digits):
            return BigMatrix(self.data - self._other(other), self.digits)

    def __neg__(self) -> "BigMatrix":
        with working(self.digits):
            return BigMatrix(-self.data, self.digits)

    def scale(self, s) -> "BigMatrix":
        with working(self.digits):
            s = mpc(s)
            return BigMatrix(self.data * s, self.digits)

    def __matmul__(self, other: "BigMatrix") -> "BigMatrix":
        return BigMatrix(_dot(self.data, other.data, self.digits), self.digits)

    def trace(self) -> mpc:
        with working(self.digits):
            t = mpc(0)
            for i in range(min(self.shape)):
                t += self.data[i, i]
            return t

    def max_norm(self) -> mpfr:
        """Largest entry modulus."""
        with working(self.digits):
            best = mpfr(0)
            for v in self.data.flat:
                a = abs(v)
                if a > best:
                    best = a
            return best

    def norm1(self) -> mpfr:
        """Induced 1-norm (max column sum of moduli)."""
        with working(self.digits):
            best = mpfr(0)
            for j in range(self.cols):
                s = sum((abs(v) for v in self.data[:, j]), mpfr(0))
                if s > best:
                    best = s
            return best

    def with_digits(self, digits: int) -> "BigMatrix":
        """Same entries re-rounded (or padded) to ``digits``."""
        with working(digits):
            data = np.empty(self.shape, dtype=object)
            for idx, v in np.ndenumerate(self.data):
                data[idx] = mpc(v)
        return BigMatrix(data, digits)

    def to_complex(self) -> np.ndarray:
        """Hardware-float copy, for plotting and diagnostics only."""
        out = np.empty(self.shape, dtype=complex)
        for idx, v in np.ndenumerate(self.data):
            out[idx] = complex(v)
        return out

    def __repr__(self) -> str:
        return f"BigMatrix({self.rows}x{self.cols}, digits={self.digits})"


class InverseResult(NamedTuple):
    inverse: BigMatrix
    residual: mpfr  # ||M M^-1 - I||_max


# ---------------------------------------------------------------- LU ---


def _lu_factor(a: np.ndarray, digits: int) -> tuple[np.ndarray, list[int]]:
    """In-place LU with partial pivoting on a copy; returns (LU, perm)."""
    n = a.shape[0]
    lu = a.copy()
    perm = list(range(n))
    scale = max((_cabs1(v) for v in lu.flat), default=mpfr(0))
    floor = tol(-digits + 20, digits) * (scale if scale > 0 else 1)
    for k in range(n):
        col = lu[k:, k]
        p = k + max(range(n - k), key=lambda i: _cabs1(col[i]))
        if _cabs1(lu[p, k]) < floor:
            raise SingularMatrix(
                f"pivot {k} below 1e-{digits - 20} relative to the matrix scale; "
                "increase the working precision")
        if p != k:
            lu[[k, p], :] = lu[[p, k], :]
            perm[k], perm[p] = perm[p], perm[k]
        if k + 1 < n:
            piv = lu[k, k]
            lu[k + 1:, k] = lu[k + 1:, k] / piv
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def _lu_apply(lu: np.ndarray, perm: list[int], b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = b[perm].copy()
    for i in range(1, n):
        x[i] = x[i] - np.dot(lu[i, :i], x[:i])
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] = (x[i] - np.dot(lu[i, i + 1:], x[i + 1:])) / lu[i, i]
        else:
            x[i] = x[i] / lu[i, i]
    return x


def lu_solve(M: BigMatrix, B: BigMatrix) -> BigMatrix:
    """Solve ``M X = B`` by LU with partial pivoting."""
    if M.rows != M.cols or B.rows != M.rows:
        raise ValueError(f"incompatible shapes {M.shape} and {B.shape}")
    with working(M.digits):
        lu, perm = _lu_factor(M.data, M.digits)
        return BigMatrix(_lu_apply(lu, perm, B.data), M.digits)


def lu_invert(M: BigMatrix, *, check: bool = True) -> InverseResult:
    """Inverse through LU with partial pivoting.

    Raises :class:`SingularMatrix` when a pivot falls below ``1e-(P-20)``
    relative to the largest entry.  With ``check`` the residual
    ``||M M^-1 - I||_max`` is computed (one extra matrix product).
    """
    if M.rows != M.cols:
        raise ValueError(f"lu_invert needs a square matrix, got {M.shape}")
    n = M.rows
    with working(M.digits):
        lu, perm = _lu_factor(M.data, M.digits)
        eye = BigMatrix.identity(n, M.digits).data
        inv = BigMatrix(_lu_apply(lu, perm, eye), M.digits)
        residual = mpfr(0)
        if check:
            residual = (M @ inv - BigMatrix(eye, M.digits)).max_norm()
    return InverseResult(inv, residual)


# ------------------------------------------------------- eigensolver ---


@dataclass
class EigenDecomposition:
    """Eigenvalues sorted by (Re, Im) with matching right eigenvectors."""

    eigenvalues: list
    right_eigenvectors: BigMatrix | None = None
    condition_estimate: mpfr | None = None
    residuals: list = field(default_factory=list)
    inverse_eigenvectors: BigMatrix | None = None
    sweeps: int = 0

    @property
    def max_residual(self) -> mpfr:
        return max(self.residuals, default=mpfr(0))


def _balance(a: np.ndarray) -> list[int]:
    """Parlett-Reinsch diagonal scaling by powers of two, in place.

    Returns the exponents ``e_i`` with ``A_bal = D^-1 A D``, ``D = diag(2^e)``.
    """
    n = a.shape[0]
    exps = [0] * n
    converged = False
    while not converged:
        converged = True
        for i in range(n):
            c = sum((_cabs1(a[j, i]) for j in range(n) if j != i), mpfr(0))
            r = sum((_cabs1(a[i, j]) for j in range(n) if j != i), mpfr(0))
            if c == 0 or r == 0:
                continue
            g = r / 2
            f = 0
            s = c + r
            while c < g:
                f += 1
                c *= 4
            g = r * 2
            while c >= g:
                f -= 1
                c /= 4
            # net scaling 2^f; c and r were compared with factor 4 = 2^2
            if f == 0:
                continue
            cs = sum((_cabs1(a[j, i]) for j in range(n) if j != i), mpfr(0))
            new = cs * gmpy2.exp2(f) + r * gmpy2.exp2(-f)
            if new < mpfr("0.95") * s:
                converged = False
                fac = gmpy2.exp2(f)
                a[:, i] = a[:, i] * fac
                a[i, :] = a[i, :] / fac
                exps[i] += f
    return exps


def _hessenberg(a: np.ndarray) -> list[np.ndarray | None]:
    """Householder reduction to upper Hessenberg form, in place.

    Returns the unit reflector vectors ``v_k`` (acting on rows k+1..n-1) so
    that ``A = Q H Q^*`` with ``Q = P_0 P_1 ... P_{n-3}``, ``P = I - 2 v v^*``.
    """
    n = a.shape[0]
    reflectors: list[np.ndarray | None] = []
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        xnorm2 = sum((gmpy2.norm(v) for v in x[1:]), mpfr(0))
        if xnorm2 == 0:
            reflectors.append(None)
            continue
        alpha_abs = gmpy2.sqrt(gmpy2.norm(x[0]) + xnorm2)
        x0abs = abs(x[0])
        phase = x[0] / x0abs if x0abs != 0 else mpc(1)
        x[0] = x[0] + phase * alpha_abs
        vnorm = gmpy2.sqrt(sum((gmpy2.norm(v) for v in x), mpfr(0)))
        v = x / vnorm
        vc = np.conjugate(v)
        # left: rows k+1.., columns k..
        w = np.dot(vc, a[k + 1:, k:])
        a[k + 1:, k:] -= np.outer(2 * v, w)
        # right: all rows, columns k+1..
        w = np.dot(a[:, k + 1:], v)
        a[:, k + 1:] -= np.outer(w, 2 * vc)
        zero = mpc(0)
        for i in range(k + 2, n):
            a[i, k] = zero
        reflectors.append(v)
    return reflectors


def _givens(x, y):
    """(c, s) with [[c, s], [-conj(s), c]] @ [x, y] = [r, 0], c real."""
    if y == 0:
        return mpfr(1), mpc(0)
    if x == 0:
        return mpfr(0), mpc(1)
    ax = abs(x)
    r = gmpy2.sqrt(gmpy2.norm(x) + gmpy2.norm(y))
    c = ax / r
    s = (x / ax) * y.conjugate() / r
    return c, s


def _qr_eigenvalues(h: np.ndarray, bits: int, max_sweeps: int) -> tuple[list, int]:
    """Eigenvalues of an upper Hessenberg matrix by shifted QR (destroys h)."""
    n = h.shape[0]
    eigs: list = [None] * n
    ulp = gmpy2.exp2(-(bits - 4))
    hnorm = max((_cabs1(v) for v in h.flat), default=mpfr(0))
    small = ulp * (hnorm if hnorm > 0 else mpfr(1))
    hi = n - 1
    its = 0
    sweeps = 0
    zero = mpc(0)
    while hi >= 0:
        # look for a negligible subdiagonal entry
        lo = 0
        for k in range(hi, 0, -1):
            sub = _cabs1(h[k, k - 1])
            ref = _cabs1(h[k, k]) + _cabs1(h[k - 1, k - 1])
            if ref == 0:
                ref = hnorm
            if sub <= ulp * ref or sub <= small * ulp:
                h[k, k - 1] = zero
                lo = k
                break
        if lo == hi:
            eigs[hi] = h[hi, hi]
            hi -= 1
            its = 0
            continue
        if sweeps >= max_sweeps:
            raise NoConvergence(
                f"QR iteration did not converge after {sweeps} sweeps "
                f"({hi + 1} eigenvalues left); the matrix may be (near) defective")
        its += 1
        sweeps += 1
        if its % 10 == 0:
            # exceptional shift
            mu = h[hi, hi] + mpfr("0.75") * _cabs1(h[hi, hi - 1])
        else:
            a, b = h[hi - 1, hi - 1], h[hi - 1, hi]
            c, d = h[hi, hi - 1], h[hi, hi]
            half = (a - d) / 2
            disc = gmpy2.sqrt(half * half + b * c)
            m1 = d - half + disc  # (a + d)/2 + disc
            m2 = d - half - disc
            mu = m1 if _cabs1(m1 - d) <= _cabs1(m2 - d) else m2
        x = h[lo, lo] - mu
        y = h[lo + 1, lo]
        for k in range(lo, hi):
            if k > lo:
                x = h[k, k - 1]
                y = h[k + 1, k - 1]
            c, s = _givens(x, y)
            sc = s.conjugate()
            j0 = lo if k == lo else k - 1
            rk = h[k, j0:hi + 1]
            rk1 = h[k + 1, j0:hi + 1]
            h[k, j0:hi + 1], h[k + 1, j0:hi + 1] = c * rk + s * rk1, c * rk1 - sc * rk
            if k > lo:
                h[k + 1, k - 1] = zero
            i1 = min(k + 2, hi) + 1
            ck = h[lo:i1, k]
            ck1 = h[lo:i1, k + 1]
            h[lo:i1, k], h[lo:i1, k + 1] = c * ck + sc * ck1, c * ck1 - s * ck
    return eigs, sweeps


def _hess_solve_factor(h: np.ndarray, lam, eps_pivot):
    """LU (adjacent-row pivoting) of the Hessenberg matrix ``h - lam I``."""
    n = h.shape[0]
    u = h.copy()
    for i in range(n):
        u[i, i] = u[i, i] - lam
    mult = [None] * (n - 1)
    swap = [False] * (n - 1)
    for k in range(n - 1):
        if _cabs1(u[k + 1, k]) > _cabs1(u[k, k]):
            u[[k, k + 1], k:] = u[[k + 1, k], k:]
            swap[k] = True
        piv = u[k, k]
        if piv == 0:
            piv = u[k, k] = mpc(eps_pivot)
        m = u[k + 1, k] / piv
        mult[k] = m
        if m != 0:
            u[k + 1, k + 1:] = u[k + 1, k + 1:] - m * u[k, k + 1:]
        u[k + 1, k] = mpc(0)
    if u[n - 1, n - 1] == 0:
        u[n - 1, n - 1] = mpc(eps_pivot)
    return u, mult, swap


def _upper_solve(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = u.shape[0]
    x = b.copy()
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] = (x[i] - np.dot(u[i, i + 1:], x[i + 1:])) / u[i, i]
        else:
            x[i] = x[i] / u[i, i]
    return x


def _lower_apply(mult, swap, b: np.ndarray) -> np.ndarray:
    x = b.copy()
    for k, m in enumerate(mult):
        if swap[k]:
            x[k], x[k + 1] = x[k + 1], x[k]
        x[k + 1] = x[k + 1] - m * x[k]
    return x


def _vec_norm(v) -> mpfr:
    return gmpy2.sqrt(sum((gmpy2.norm(z) for z in v), mpfr(0)))


def _hess_inverse_iteration(h: np.ndarray, eigs: list, digits: int, hnorm) -> np.ndarray:
    """Eigenvectors of Hessenberg ``h`` (columns), one inverse iteration each."""
    n = h.shape[0]
    vecs = np.empty((n, n), dtype=object)
    eps3 = tol(-digits + 5, digits) * (hnorm if hnorm > 0 else 1)
    cluster_tol = tol(-digits // 2, digits) * (hnorm if hnorm > 0 else 1)
    one = mpc(1)
    done: list[tuple] = []
    for idx, lam in enumerate(eigs):
        shift = lam
        near = [j for (j, mu) in done if _cabs1(mu - lam) < cluster_tol]
        if near:
            shift = lam + eps3 * len(near)
        u, mult, swap = _hess_solve_factor(h, shift, eps3)
        x = _upper_solve(u, np.array([one] * n, dtype=object))
        for _ in range(2):
            x = x / _vec_norm(x)
            for j in near:
                col = vecs[:, j]
                x = x - col * np.dot(np.conjugate(col), x)
            x = _upper_solve(u, _lower_apply(mult, swap, x))
        x = x / _vec_norm(x)
        vecs[:, idx] = x
        done.append((idx, lam))
    return vecs


def _sort_key(z):
    return (z.real, z.imag)


def eig_general(M: BigMatrix, *, vectors: bool = True, max_sweeps: int | None = None,
                balance: bool = True) -> EigenDecomposition:
    """General complex eigendecomposition at the matrix's working precision.

    Eigenvalues are sorted by ascending real part, ties by imaginary part.
    With ``vectors`` the right eigenvectors (unit 2-norm columns), their
    inverse, the 1-norm condition number of the eigenvector matrix and the
    per-pair residuals ``||M v - lam v|| / ||v||`` are returned as well.

    Raises
    ------
    NoConvergence
        After ``max_sweeps`` QR sweeps (default ``100 n``).
    """
    if M.rows != M.cols:
        raise ValueError(f"eig_general needs a square matrix, got {M.shape}")
    n = M.rows
    digits = M.digits
    bits = bits_for(digits)
    if max_sweeps is None:
        max_sweeps = 100 * max(n, 1)
    if n == 0:
        return EigenDecomposition([], BigMatrix.zeros(0, 0, digits), mpfr(1), [], None)
    with working(digits):
        a = M.data.copy()
        exps = _balance(a) if balance and n > 1 else [0] * n
        reflectors = _hessenberg(a) if n > 2 else []
        hess = a.copy()
        hnorm = max((_cabs1(v) for v in hess.flat), default=mpfr(0))
        raw, sweeps = _qr_eigenvalues(a, bits, max_sweeps)
        order = sorted(range(n), key=lambda i: _sort_key(raw[i]))
        eigs = [raw[i] for i in order]
        if not vectors:
            return EigenDecomposition(eigs, sweeps=sweeps)

        x = _hess_inverse_iteration(hess, eigs, digits, hnorm)
        for k in range(len(reflectors) - 1, -1, -1):
            v = reflectors[k]
            if v is None:
                continue
            w = np.dot(np.conjugate(v), x[k + 1:, :])
            x[k + 1:, :] -= np.outer(2 * v, w)
        for i, e in enumerate(exps):
            if e:
                x[i, :] = x[i, :] * gmpy2.exp2(e)
        for j in range(n):
            x[:, j] = x[:, j] / _vec_norm(x[:, j])
        V = BigMatrix(x, digits)
        mv = _dot(M.data, x, digits)
        residuals = [_vec_norm(mv[:, j] - eigs[j] * x[:, j]) for j in range(n)]
        try:
            inv = lu_invert(V, check=False).inverse
            cond = V.norm1() * inv.norm1()
        except SingularMatrix:
            inv = None
            cond = gmpy2.inf()
        return EigenDecomposition(eigs, V, cond, residuals, inv, sweeps)


def eigvec_near(M: BigMatrix, shift, *, iterations: int = 3) -> tuple[mpc, BigMatrix]:
    """Inverse iteration for the eigenpair of ``M`` closest to ``shift``.

    Returns ``(lam, v)`` with ``v`` a unit column and ``lam`` its Rayleigh
    quotient.
    """
    n = M.rows
    digits = M.digits
    with working(digits):
        shift = mpc(shift)
        a = M.data.copy()
        scale = max((_cabs1(v) for v in a.flat), default=mpfr(1))
        for i in range(n):
            a[i, i] = a[i, i] - shift
        try:
            lu, perm = _lu_factor(a, digits)
        except SingularMatrix:
            nudge = tol(-digits + 25, digits) * scale
            for i in range(n):
                a[i, i] = a[i, i] - nudge
            lu, perm = _lu_factor(a, digits)
        x = np.array([mpc(1)] * n, dtype=object)
        for _ in range(iterations):
            x = _lu_apply(lu, perm, x)
            x = x / _vec_norm(x)
        mx = np.dot(M.data, x)
        lam = np.dot(np.conjugate(x), mx)
        return lam, BigMatrix(x.reshape(n, 1), digits)


# --------------------------------------------------- matrix functions ---


def matrix_log(M: BigMatrix, branch: BranchRule = BranchRule.PRINCIPAL_UPPER, *,
               cond_cap=None, decomposition: EigenDecomposition | None = None,
               return_decomposition: bool = False):
    """Matrix logarithm ``V diag(clog(lam)) V^-1`` through the eigenbasis.

    Eigenvalues whose imaginary part is below ``1e-(P/4)`` of their negative
    real part are put on the cut, so they take imaginary part exactly +pi
    under ``PRINCIPAL_UPPER``.

    Raises
    ------
    NearDefective
        If the eigenvector condition number exceeds ``cond_cap``
        (default ``1e(P/4)``).
    """
    digits = M.digits
    dec = decomposition if decomposition is not None else eig_general(M, vectors=True)
    with working(digits):
        cap = cond_cap if cond_cap is not None else tol(digits / 4, digits)
        if dec.inverse_eigenvectors is None or dec.condition_estimate > cap:
            raise NearDefective(
                f"eigenvector condition {float(dec.condition_estimate):.3e} exceeds cap "
                f"{float(cap):.3e}; increase the twist or the precision")
        cut = tol(-digits / 4, digits)
        logs = [clog(lam, branch, digits=digits, cut_tol=cut) for lam in dec.eigenvalues]
        check = tol(-digits / 2, digits)
        for lam, lg in zip(dec.eigenvalues, logs):
            back = cexp(lg, digits=digits)
            target = lam
            if lam.real < 0 and abs(lam.imag) <= cut * abs(lam.real):
                target = mpc(lam.real)  # snapped onto the cut
            if abs(back - target) > check * abs(lam):
                raise BranchInconsistency(f"exp(log(lam)) round trip failed at lam={complex(lam)}")
        V = dec.right_eigenvectors.data
        scaled = V * np.array(logs, dtype=object)[None, :]
        out = BigMatrix(_dot(scaled, dec.inverse_eigenvectors.data, digits), digits)
    if return_decomposition:
        return out, dec, logs
    return out


def _taylor_plan(theta: float, bits: int) -> int:
    """Smallest Taylor degree m with theta^(m+1)/(m+1)! below 2^-bits."""
    if theta == 0:
        return 1
    log2_theta = math.log2(theta)
    m = 1
    while (m + 1) * log2_theta - math.lgamma(m + 2) / math.log(2) > -bits:
        m += 1
    return m


def matrix_exp(M: BigMatrix) -> BigMatrix:
    """Matrix exponential by Taylor series with scaling and squaring.

    The Taylor polynomial is evaluated with the Paterson-Stockmeyer scheme;
    the number of squarings is chosen to minimize the matrix products, and
    extra working digits absorb the error growth of the squaring phase.
    """
    if M.rows != M.cols:
        raise ValueError(f"matrix_exp needs a square matrix, got {M.shape}")
    n = M.rows
    if n == 0:
        return M
    norm = float(M.norm1())
    if norm == 0:
        return BigMatrix.identity(n, M.digits)
    base = max(0, math.ceil(math.log2(norm)))
    target_bits = bits_for(M.digits)
    best = None
    for extra in range(0, 80):
        s = base + extra
        work_bits = target_bits + s + 8
        m = _taylor_plan(norm / 2 ** s, work_bits)
        q = max(1, math.isqrt(m))
        cost = (q - 1) + (m // q) + s
        if best is None or cost < best[0]:
            best = (cost, s, m, q)
    _, s, m, q = best
    work_digits = M.digits + math.ceil((s + 8) * math.log10(2)) + 2
    with working(work_digits):
        X = M.with_digits(work_digits).scale(gmpy2.exp2(-s))
        powers = [BigMatrix.identity(n, work_digits), X]
        for _ in range(2, q + 1):
            powers.append(powers[-1] @ X)
        coeffs = [mpfr(1)]
        for i in range(1, m + 1):
            coeffs.append(coeffs[-1] / i)
        nblocks = m // q + 1
        result = None
        for b in range(nblocks - 1, -1, -1):
            block = np.zeros((n, n), dtype=object)
            block.fill(mpc(0))
            for i in range(q):
                idx = b * q + i
                if idx > m:
                    break
                block = block + powers[i].data * coeffs[idx]
            if result is None:
                result = BigMatrix(block, work_digits)
            else:
                result = (result @ powers[q]) + block
        for _ in range(s):
            result = result @ result
    return result.with_digits(M.digits)

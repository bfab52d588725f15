"""Left-right ground-state correlation matrix C_ij = <L| c_i^dag c_j |R>.

The momentum-space symbol G(k) is built twice: from the closed form in terms
of eta_k and xi_k, and from the biorthogonal lower-band eigenvectors of the
Bloch matrix.  The closed form leaves the branches of sqrt(eta*/eta) and
arctan unstated; the eigenvector construction fixes them, so it wins when
the two disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .bignum import BranchRule, catan, csqrt, tol, working
from .errors import BranchInconsistency, DefectivePoint
from .linalg import BigMatrix, eig_general
from .model import ModelParams, bloch_matrix, eta, require_resolvable

__all__ = [
    "SymbolG",
    "CorrelationMatrix",
    "symbol",
    "eigenvector_symbol",
    "build_correlation",
    "restrict",
]


@dataclass(frozen=True)
class SymbolG:
    """G(k)_ab = <c~^dag_{k,a} c~_{k,b}> for the filled lower band."""

    k: mpfr
    entries: BigMatrix
    eta: mpc
    xi: mpc | None  # None when built from eigenvectors

    def trace(self) -> mpc:
        return self.entries.trace()


def _two_xi(params: ModelParams, abs_eta) -> mpc:
    u = params.big("u")
    if u == 0:
        return mpc(gmpy2.const_pi() / 2)
    return catan(mpc(0, -abs_eta / u), BranchRule.PRINCIPAL_UPPER, digits=params.digits)


def _aligned_sqrt(ratio, ref) -> mpc:
    """sqrt(ratio) on the branch with Re(sqrt(ratio) * ref) >= 0.

    For ratio = eta*/eta and ref = eta this is eta*/|eta|, the branch that
    reproduces the band projector; the principal root flips sign whenever
    Re eta < 0, which is every k once w > v.
    """
    s = csqrt(ratio)
    if (s * ref).real < 0:
        s = -s
    return s


def symbol(params: ModelParams, k, *, check: bool = True) -> SymbolG:
    """Closed-form symbol

        G = 1/2 [[1 - cos 2xi, -sqrt(eta*/eta) sin 2xi],
                 [-sqrt(eta/eta*) sin 2xi, 1 + cos 2xi]]

    with 2 xi = arctan(|eta| / (i u)).  With ``check`` the result is compared
    with :func:`eigenvector_symbol` and :class:`BranchInconsistency` raised on
    disagreement beyond ``1e-(P/2)`` relative to the largest entry.
    """
    digits = params.digits
    with working(digits):
        k = mpfr(k)
        e = eta(params, k)
        abs_e = abs(e)
        two_xi = _two_xi(params, abs_e)
        c2, s2 = gmpy2.cos(two_xi), gmpy2.sin(two_xi)
        r_minus = _aligned_sqrt(e.conjugate() / e, e)
        r_plus = _aligned_sqrt(e / e.conjugate(), e.conjugate())
        g = BigMatrix.from_rows(
            [[(1 - c2) / 2, -r_minus * s2 / 2],
             [-r_plus * s2 / 2, (1 + c2) / 2]], digits)
        out = SymbolG(k, g, e, two_xi / 2)
        if check:
            ref = eigenvector_symbol(params, k)
            scale = ref.entries.max_norm()
            diff = (g - ref.entries).max_norm()
            if diff > tol(-digits / 2, digits) * (scale if scale > 0 else 1):
                raise BranchInconsistency(
                    f"closed-form symbol differs from the eigenvector symbol by "
                    f"{float(diff):.3e} at k={float(k):.12g}")
        return out


def _lower_index(eigs) -> int:
    return 0  # eig_general sorts by (Re, Im)


def eigenvector_symbol(params: ModelParams, k) -> SymbolG:
    """G(k)_ab = l_a r_b / (l . r) from lower-band eigenvectors.

    ``r`` solves h r = E r and ``l`` solves h^T l = E l (so l^T h = E l^T);
    the lower band is the one with the smaller real energy.
    """
    digits = params.digits
    with working(digits):
        k = mpfr(k)
        h = bloch_matrix(params, k)
        right = eig_general(h)
        left = eig_general(h.T)
        i = _lower_index(right.eigenvalues)
        r = right.right_eigenvectors.data[:, i]
        lt = left.right_eigenvectors.data[:, i]
        overlap = lt[0] * r[0] + lt[1] * r[1]
        if abs(overlap) < tol(-digits / 4, digits):
            raise DefectivePoint(
                f"left and right lower-band eigenvectors are collinear with the other band "
                f"at k={float(k):.12g} (exceptional point)")
        g = BigMatrix(np.outer(lt, r) / overlap, digits)
        return SymbolG(k, g, eta(params, k), None)


class CorrelationMatrix:
    """Correlation matrix of the whole ring or of the first ``size`` sites.

    The ring correlation is block Toeplitz in unit cells; blocks
    ``B(d)_ab = (1/N) sum_k e^{-ikd} G(k)_ab`` are generated lazily so large
    rings never materialize their L x L matrix unless asked for ``matrix``.
    """

    def __init__(self, params: ModelParams, size: int, symbols: list[SymbolG] | None,
                 restricted: bool, matrix: BigMatrix | None = None, blocks: dict | None = None):
        self.params = params
        self.size = size
        self.symbols = symbols
        self.restricted = restricted
        self._matrix = matrix
        self._blocks: dict[int, list] = dict(blocks or {})
        self._phase_cache = None

    # block generator ----------------------------------------------------

    def _prepare(self):
        if self._phase_cache is None:
            digits = self.params.digits
            with working(digits):
                ks = [s.k for s in self.symbols]
                z = np.array([mpc(gmpy2.cos(k), -gmpy2.sin(k)) for k in ks], dtype=object)
                g = [np.array([s.entries.data[a, b] for s in self.symbols], dtype=object)
                     for a in range(2) for b in range(2)]
            self._phase_cache = (z, g)
        return self._phase_cache

    def block(self, d: int) -> list:
        """[B00, B01, B10, B11] for cell separation d = j - l."""
        if d in self._blocks:
            return self._blocks[d]
        if self.symbols is None:
            raise KeyError(f"block {d} not stored and no symbol available")
        self._fill_blocks(abs(d))
        return self._blocks[d]

    def _fill_blocks(self, dmax: int):
        digits = self.params.digits
        z, g = self._prepare()
        N = self.params.N
        with working(digits):
            zpow = np.array([mpc(1)] * len(z), dtype=object)
            for d in range(dmax + 1):
                if d > 0:
                    zpow = zpow * z
                if d not in self._blocks:
                    self._blocks[d] = [np.dot(zpow, ga) / N for ga in g]
                if -d not in self._blocks:
                    zc = np.conjugate(zpow)
                    self._blocks[-d] = [np.dot(zc, ga) / N for ga in g]

    def blocks(self) -> dict[int, list]:
        return dict(self._blocks)

    def _materialize(self, size: int) -> BigMatrix:
        cells = size // 2
        if cells:
            self._fill_blocks(cells - 1) if self.symbols is not None else None
        data = np.empty((size, size), dtype=object)
        for j in range(cells):
            for l in range(cells):
                b = self.block(j - l)
                data[2 * j, 2 * l] = b[0]
                data[2 * j, 2 * l + 1] = b[1]
                data[2 * j + 1, 2 * l] = b[2]
                data[2 * j + 1, 2 * l + 1] = b[3]
        return BigMatrix(data, self.params.digits)

    @property
    def matrix(self) -> BigMatrix:
        if self._matrix is None:
            self._matrix = self._materialize(self.size)
        return self._matrix

    def trace(self) -> mpc:
        if self._matrix is not None:
            return self._matrix.trace()
        b = self.block(0)
        with working(self.params.digits):
            return (b[0] + b[3]) * (self.size // 2)

    def __repr__(self) -> str:
        kind = "restricted" if self.restricted else "ring"
        return f"CorrelationMatrix({kind}, {self.size}x{self.size}, digits={self.params.digits})"


def build_correlation(params: ModelParams, *, check: bool = True) -> CorrelationMatrix:
    """Correlation matrix of the ring from the finite momentum sum.

    Refuses untwisted critical couplings (see :func:`model.require_resolvable`).
    """
    require_resolvable(params)
    symbols = [symbol(params, k, check=check) for k in params.momenta()]
    return CorrelationMatrix(params, params.L, symbols, restricted=False)


def restrict(C: CorrelationMatrix, ell: int) -> CorrelationMatrix:
    """Top-left ``ell x ell`` block (sites 0 .. ell-1)."""
    if ell % 2 or not 0 <= ell <= C.size:
        raise ValueError(f"ell must be even and in [0, {C.size}], got {ell}")
    if ell == C.size and C._matrix is not None:
        m = C._matrix
    elif C._matrix is not None:
        m = BigMatrix(C._matrix.data[:ell, :ell].copy(), C.params.digits)
    else:
        m = C._materialize(ell)
    return CorrelationMatrix(C.params.replace(ell=ell), ell, C.symbols, restricted=True,
                             matrix=m, blocks=C.blocks())

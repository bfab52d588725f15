"""Entanglement Hamiltonian kernel, spectra, entropies and sector signs.

For a Gaussian reduced density matrix rho_A ~ exp(-sum c_i^dag k_ij c_j) the
kernel follows from the restricted correlation matrix through

    k^A = log[(C_A^-1 - I)^T]

which stays valid for the left-right state of the non-Hermitian chain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .bignum import BranchRule, clog, digits_of, tol, working
from .correlation import CorrelationMatrix
from .errors import DomainError, PairingMismatch
from .linalg import BigMatrix, EigenDecomposition, eig_general, lu_invert, matrix_exp, matrix_log
from .model import ModelParams, classify_phase

__all__ = [
    "EntanglementKernel",
    "SpectralData",
    "EntropyResult",
    "ChargeSectorReport",
    "eh_kernel",
    "spectra",
    "entropies",
    "charge_sector_signs",
    "gaussian_rho_spectrum",
]


@dataclass
class EntanglementKernel:
    kA: BigMatrix
    branch: BranchRule
    params: ModelParams
    residual: mpfr | None
    eps: list  # eigenvalues of k^A, sorted by (Re, Im)
    decomposition: EigenDecomposition
    inverse_residual: mpfr

    @property
    def ell(self) -> int:
        return self.kA.rows


def eh_kernel(C_A: CorrelationMatrix, branch: BranchRule = BranchRule.PRINCIPAL_UPPER, *,
              verify: bool = True) -> EntanglementKernel:
    """Kernel k^A from the free-fermion relation k^A = (log(C_A^-1 - I))^T.

    ``C_A^-1`` comes from LU, the logarithm from the eigenbasis of
    ``M = C_A^-1 - I``.  With ``verify`` the residual
    ``||exp((k^A)^T) - M||_max`` is computed by an independent Taylor
    exponential.

    Raises SingularMatrix / NearDefective when the precision (or the twist at
    criticality) is too small.
    """
    params = C_A.params
    digits = params.digits
    inv = lu_invert(C_A.matrix)
    with working(digits):
        M = inv.inverse - BigMatrix.identity(C_A.size, digits)
    logM, dec, logs = matrix_log(M, branch, return_decomposition=True)
    kA = logM.T
    residual = None
    if verify:
        residual = (matrix_exp(kA.T) - M).max_norm()
    return EntanglementKernel(kA, branch, params, residual, list(logs), dec, inv.residual)


@dataclass
class SpectralData:
    nu: list  # eigenvalues of C_A, sorted by (Re, Im)
    eps: list  # eigenvalues of k^A, sorted by (Re, Im)
    pairing_error: mpfr | None = None


def _match_multisets(a: list, b: list) -> mpfr:
    """Largest distance under greedy nearest matching of two equal-size lists."""
    if len(a) != len(b):
        raise ValueError("multisets of different size")
    pool = list(b)
    worst = mpfr(0)
    for x in sorted(a, key=lambda z: (-abs(z))):
        j = min(range(len(pool)), key=lambda i: abs(pool[i] - x))
        d = abs(pool[j] - x)
        if d > worst:
            worst = d
        pool.pop(j)
    return worst


def _sorted(values):
    return sorted(values, key=lambda z: (z.real, z.imag))


def spectra(C_A: CorrelationMatrix, kernel: EntanglementKernel, *, check: bool = True,
            nu: list | None = None) -> SpectralData:
    """Correlation eigenvalues nu_j and kernel eigenvalues eps_j.

    The two come from independent decompositions (of C_A and of
    C_A^-1 - I).  With ``check``, eps must equal clog((1 - nu)/nu) as a
    multiset within 1e-(P/2); at criticality the cut is snapped so the
    imaginary part is exactly +pi.
    """
    digits = C_A.params.digits
    if nu is None:
        nu = eig_general(C_A.matrix, vectors=False).eigenvalues
    nu = _sorted(nu)
    eps = _sorted(kernel.eps)
    err = None
    if check:
        with working(digits):
            cut = tol(-digits / 4, digits)
            predicted = [clog((1 - x) / x, kernel.branch, digits=digits, cut_tol=cut) for x in nu]
            err = _match_multisets(predicted, eps)
            if err > tol(-digits / 2, digits) * max(mpfr(1), max(abs(e) for e in eps)):
                raise PairingMismatch(
                    f"kernel spectrum differs from log((1-nu)/nu) by {float(err):.3e}")
    return SpectralData(nu, eps, err)


@dataclass
class EntropyResult:
    von_neumann: mpc
    renyi: dict = field(default_factory=dict)  # n -> mpc

    @property
    def real(self) -> mpfr:
        return self.von_neumann.real


def entropies(S: SpectralData, orders=(), *, branch: BranchRule = BranchRule.PRINCIPAL_UPPER,
              digits: int | None = None) -> EntropyResult:
    """Von Neumann and Renyi entropies from the correlation spectrum.

    S_A = -sum [nu log nu + (1 - nu) log(1 - nu)] and
    S_A^(n) = 1/(1-n) sum log(nu^n + (1 - nu)^n), all logs under ``branch``.
    The complex value is returned; ``.real`` is the physical entropy.
    """
    if digits is None:
        digits = digits_of(S.nu[0]) if S.nu else 50
    with working(digits):
        total = mpc(0)
        for x in S.nu:
            if x == 0 or x == 1:
                raise DomainError(f"correlation eigenvalue {x} gives a divergent entropy")
            total -= x * clog(x, branch, digits=digits) + (1 - x) * clog(1 - x, branch, digits=digits)
        renyi = {}
        for n in orders:
            if n == 1:
                renyi[n] = total
                continue
            acc = mpc(0)
            for x in S.nu:
                acc += clog(x ** n + (1 - x) ** n, branch, digits=digits)
            renyi[n] = acc / (1 - n)
        return EntropyResult(total, renyi)


@dataclass
class ChargeSectorReport:
    q: int
    signs: list  # +1 / -1 per eigenvalue in the sector
    mean_charge: mpfr
    expected_sign: int
    consistent: bool
    eigenvalues: list = field(default_factory=list, repr=False)


def _sign(z) -> int:
    return 1 if z.real > 0 else -1


def _expected_sign(q: int, mean_charge) -> int:
    ref = int(gmpy2.rint(mean_charge))
    return 1 if (q - ref) % 2 == 0 else -1


def gaussian_rho_spectrum(nu: list, digits: int) -> list[tuple[int, mpc]]:
    """All 2^ell many-body eigenvalues prod_j [n_j nu_j + (1 - n_j)(1 - nu_j)] with charge."""
    out = []
    with working(digits):
        for occ in itertools.product((0, 1), repeat=len(nu)):
            lam = mpc(1)
            for n, a in zip(occ, nu):
                lam *= a if n else 1 - a
            out.append((sum(occ), lam))
    return out


def charge_sector_signs(S: SpectralData, max_modes: int = 12, *,
                        digits: int | None = None) -> tuple[list[ChargeSectorReport], mpfr]:
    """Sign structure of the many-body entanglement spectrum by charge sector.

    The ``max_modes`` modes with the smallest |Re eps| are enumerated; every
    other mode is frozen in its dominant occupation (the larger of |nu| and
    |1 - nu|), which fixes its charge and sign contribution.  Returns the
    per-sector reports and the truncation weight, the sum over frozen modes
    of |minor factor / dominant factor|.
    """
    if max_modes > 20:
        raise ValueError("max_modes above 20 would enumerate more than 2^20 states")
    if digits is None:
        digits = digits_of(S.nu[0]) if S.nu else 50
    with working(digits):
        nu = list(S.nu)
        mean_charge = sum((x for x in nu), mpc(0)).real
        weights = []
        for x in nu:
            big, small = (abs(x), abs(1 - x)) if abs(x) >= abs(1 - x) else (abs(1 - x), abs(x))
            weights.append(small / big)
        order = sorted(range(len(nu)), key=lambda i: -weights[i])
        keep = sorted(order[:max_modes])
        frozen = order[max_modes:]
        base_q = 0
        base = mpc(1)
        truncation = mpfr(0)
        for i in frozen:
            x = nu[i]
            if abs(x) >= abs(1 - x):
                base_q += 1
                base *= x
            else:
                base *= 1 - x
            truncation += weights[i]
        sectors: dict[int, list] = {}
        for q, lam in gaussian_rho_spectrum([nu[i] for i in keep], digits):
            sectors.setdefault(q + base_q, []).append(lam * base)
        reports = []
        for q in sorted(sectors):
            lams = sectors[q]
            signs = [_sign(l) for l in lams]
            expected = _expected_sign(q, mean_charge)
            reports.append(ChargeSectorReport(q, signs, mean_charge, expected,
                                              all(s == expected for s in signs), lams))
        return reports, truncation

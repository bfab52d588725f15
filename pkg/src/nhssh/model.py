"""The non-Hermitian SSH chain: parameters, Bloch matrix, phases, constants."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr

from .bignum import DEFAULT_DIGITS, pi, real, working
from .errors import ConfigError, PhaseError
from .linalg import BigMatrix


class Phase(enum.Enum):
    PT_BROKEN_COMPLEX = "PTBrokenComplex"
    PT_UNBROKEN_TOPOLOGICAL = "PTUnbrokenTopological"
    PT_UNBROKEN_TRIVIAL = "PTUnbrokenTrivial"
    CRITICAL_PLUS = "CriticalPlus"
    CRITICAL_MINUS = "CriticalMinus"

    @property
    def critical(self) -> bool:
        return self in (Phase.CRITICAL_PLUS, Phase.CRITICAL_MINUS)

    @property
    def real_spectrum(self) -> bool:
        return self is not Phase.PT_BROKEN_COMPLEX


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise ConfigError(f"pass couplings as decimal strings, not floats ({x!r})")
    try:
        return Fraction(str(x))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse {x!r} as a decimal number") from exc


@dataclass(frozen=True)
class ModelParams:
    """Couplings, sizes, twist and precision of one run.

    Couplings and twist are kept as decimal strings and parsed at the run
    precision on demand; ``Fraction`` views give exact comparisons.
    """

    u: str
    v: str
    w: str
    L: int
    ell: int
    delta: str = "0"
    digits: int = DEFAULT_DIGITS

    def __post_init__(self):
        for name in ("u", "v", "w", "delta"):
            value = getattr(self, name)
            if not isinstance(value, str):
                if isinstance(value, float):
                    raise ConfigError(f"{name} must be a decimal string, got float {value!r}")
                object.__setattr__(self, name, str(value))
            _exact(getattr(self, name))
        if self.exact("u") < 0:
            raise ConfigError(f"u must be >= 0, got {self.u}")
        if self.exact("v") <= 0 or self.exact("w") <= 0:
            raise ConfigError(f"v and w must be > 0, got v={self.v}, w={self.w}")
        if self.L < 2 or self.L % 2:
            raise ConfigError(f"L must be even and >= 2, got {self.L}")
        if self.ell % 2 or not 0 <= self.ell <= self.L:
            raise ConfigError(f"ell must be even with 0 <= ell <= L, got ell={self.ell}, L={self.L}")
        d = self.exact("delta")
        if d < 0 or d >= Fraction(6283185307179586, 10 ** 15):
            raise ConfigError(f"delta must lie in [0, 2 pi), got {self.delta}")
        if self.digits < 10:
            raise ConfigError(f"digits must be >= 10, got {self.digits}")

    @property
    def N(self) -> int:
        return self.L // 2

    def exact(self, name: str) -> Fraction:
        return _exact(getattr(self, name))

    def big(self, name: str) -> mpfr:
        return real(getattr(self, name), self.digits)

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def as_dict(self) -> dict:
        return asdict(self)

    def momenta(self) -> list[mpfr]:
        """Twisted grid k_n = (2 pi n + delta) / N, n = 0 .. N-1."""
        with working(self.digits):
            twopi = 2 * gmpy2.const_pi()
            delta = self.big("delta")
            N = self.N
            return [(twopi * n + delta) / N for n in range(N)]


def classify_phase(params: ModelParams) -> Phase:
    """Exact classification from ``w - v`` against ``u``."""
    u, v, w = params.exact("u"), params.exact("v"), params.exact("w")
    gap = w - v
    if gap == u:
        return Phase.CRITICAL_PLUS
    if gap == -u:
        return Phase.CRITICAL_MINUS
    if gap > u:
        return Phase.PT_UNBROKEN_TRIVIAL
    if gap < -u:
        return Phase.PT_UNBROKEN_TOPOLOGICAL
    return Phase.PT_BROKEN_COMPLEX


def require_resolvable(params: ModelParams) -> Phase:
    """Phase of ``params``, refusing critical runs without a twist."""
    phase = classify_phase(params)
    if phase.critical and params.exact("delta") == 0:
        raise PhaseError(
            "critical couplings with delta = 0: the Bloch matrix at k = pi is a 2x2 Jordan "
            "block and the left-right ground state is undefined; use a small twist "
            "such as delta = 1e-7")
    return phase


def eta(params: ModelParams, k) -> mpc:
    """Off-diagonal Bloch element eta_k = -w - v e^{-ik}."""
    with working(params.digits):
        k = mpfr(k)
        v, w = params.big("v"), params.big("w")
        return mpc(-w - v * gmpy2.cos(k), v * gmpy2.sin(k))


def bloch_matrix(params: ModelParams, k) -> BigMatrix:
    """[[iu, -w - v e^{-ik}], [-w - v e^{ik}, -iu]] at momentum ``k``."""
    with working(params.digits):
        u = params.big("u")
        e = eta(params, k)
        return BigMatrix.from_rows([[mpc(0, u), e], [e.conjugate(), mpc(0, -u)]], params.digits)


def band_energy(params: ModelParams, k) -> mpc:
    """Positive-branch single-particle energy sqrt(|eta_k|^2 - u^2) (principal root)."""
    with working(params.digits):
        u = params.big("u")
        return gmpy2.sqrt(mpc(gmpy2.norm(eta(params, k)) - u * u))


def dispersion_critical(params: ModelParams, k) -> tuple[mpfr, mpfr]:
    """(+e, -e) with e = sqrt(2 v w (1 + cos k)); critical lines only."""
    if not classify_phase(params).critical:
        raise PhaseError(f"dispersion_critical needs w - v = +-u, got {params.u, params.v, params.w}")
    with working(params.digits):
        v, w = params.big("v"), params.big("w")
        e = gmpy2.sqrt(2 * v * w * (1 + gmpy2.cos(mpfr(k))))
        return e, -e


def speed_of_sound(params: ModelParams) -> mpfr:
    with working(params.digits):
        return gmpy2.sqrt(params.big("v") * params.big("w"))

"""Arbitrary-precision scalars on top of gmpy2 (MPFR / MPC).

Values are plain ``gmpy2.mpfr`` / ``gmpy2.mpc`` objects; each carries its own
precision in bits.  Working precision is never taken from gmpy2's ambient
context: every entry point receives ``digits`` and opens a scoped context via
:func:`working`.
"""

from __future__ import annotations

import enum
import math
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterator, Union

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import DomainError

BigReal = mpfr
BigComplex = mpc
Number = Union[int, float, str, Fraction, "mpfr", "mpc", complex]

DEFAULT_DIGITS = 500
GUARD_BITS = 32
_LOG2_10 = math.log2(10)


class BranchRule(enum.Enum):
    """Branch conventions for the complex logarithm.

    ``PRINCIPAL_UPPER`` takes arg in (-pi, pi] and maps the whole negative real
    axis to +pi, whatever the sign of a zero imaginary part.
    ``PRINCIPAL_LOWER`` is the mirror choice, arg in [-pi, pi); it exists only
    to test that results depend on the convention where they should.
    """

    PRINCIPAL_UPPER = "principal-upper"
    PRINCIPAL_LOWER = "principal-lower"


def bits_for(digits: int) -> int:
    """Binary precision used for ``digits`` decimal digits (plus guard bits)."""
    if digits < 1:
        raise ValueError(f"digits must be positive, got {digits}")
    return int(math.ceil(digits * _LOG2_10)) + GUARD_BITS


@contextmanager
def working(digits: int) -> Iterator[gmpy2.context]:
    """Scoped MPFR/MPC context at ``digits`` decimal digits, round-to-nearest."""
    with gmpy2.context(precision=bits_for(digits), round=gmpy2.RoundToNearest) as ctx:
        yield ctx


def digits_of(x) -> int:
    """Decimal digits carried by an mpfr/mpc value (guard bits excluded)."""
    if isinstance(x, mpc):
        bits = min(x.precision)
    else:
        bits = x.precision
    return max(1, int((bits - GUARD_BITS) / _LOG2_10))


def real(x: Number, digits: int) -> mpfr:
    """Parse ``x`` into an mpfr at ``digits``.

    Strings are read as exact decimals, so ``real("0.1", 500)`` is correctly
    rounded at 500 digits rather than inheriting a binary float.
    """
    with working(digits):
        if isinstance(x, Fraction):
            return mpfr(x.numerator) / mpfr(x.denominator)
        if isinstance(x, mpc):
            if x.imag != 0:
                raise ValueError(f"expected a real value, got {x}")
            return mpfr(x.real)
        return mpfr(x)


def cplx(x: Number, digits: int, imag: Number = 0) -> mpc:
    """Build an mpc at ``digits`` from real/imaginary parts (any accepted type)."""
    with working(digits):
        if isinstance(x, (mpc, complex)):
            return mpc(x)
        return mpc(real(x, digits), real(imag, digits))


def tol(exponent: float, digits: int) -> mpfr:
    """``10**exponent`` as an mpfr at ``digits`` (exponent may be fractional)."""
    with working(digits):
        return mpfr(10) ** mpfr(exponent)


def pi(digits: int) -> mpfr:
    with working(digits):
        return gmpy2.const_pi()


def clog(z, branch: BranchRule = BranchRule.PRINCIPAL_UPPER, *, digits: int | None = None,
         cut_tol=None) -> mpc:
    """Complex logarithm ``log|z| + i arg z`` under ``branch``.

    ``cut_tol`` widens the branch cut: when ``Re z < 0`` and
    ``|Im z| <= cut_tol * |Re z|`` the point is treated as lying on the negative
    real axis, so round-off of either sign cannot flip the imaginary part
    between +pi and -pi.

    Raises
    ------
    DomainError
        If ``z == 0``.
    """
    if digits is None:
        digits = digits_of(z) if isinstance(z, (mpc, mpfr)) else DEFAULT_DIGITS
    with working(digits):
        z = mpc(z)
        if z == 0:
            raise DomainError("clog(0) is undefined")
        re, im = z.real, z.imag
        on_cut = re < 0 and (im == 0 or (cut_tol is not None and abs(im) <= cut_tol * abs(re)))
        if on_cut:
            p = gmpy2.const_pi()
            mag = gmpy2.log(abs(z))
            return mpc(mag, p if branch is BranchRule.PRINCIPAL_UPPER else -p)
        return gmpy2.log(z)


def csqrt(z, *, digits: int | None = None) -> mpc:
    """Principal square root; the negative real axis maps to ``+i sqrt|x|``."""
    if digits is None:
        digits = digits_of(z) if isinstance(z, (mpc, mpfr)) else DEFAULT_DIGITS
    with working(digits):
        z = mpc(z)
        if z.imag == 0 and z.real < 0:
            return mpc(0, gmpy2.sqrt(-z.real))
        return gmpy2.sqrt(z)


def cexp(z, *, digits: int | None = None) -> mpc:
    if digits is None:
        digits = digits_of(z) if isinstance(z, (mpc, mpfr)) else DEFAULT_DIGITS
    with working(digits):
        return gmpy2.exp(mpc(z))


def catan(z, branch: BranchRule = BranchRule.PRINCIPAL_UPPER, *, digits: int | None = None) -> mpc:
    """Inverse tangent through ``(1/2i) clog((1 + iz) / (1 - iz))``.

    With ``PRINCIPAL_UPPER`` an argument ``-i t`` (t > 1) lands on the negative
    real axis of the log and returns real part exactly +pi/2.

    Raises
    ------
    DomainError
        At the poles ``z = +i`` and ``z = -i``.
    """
    if digits is None:
        digits = digits_of(z) if isinstance(z, (mpc, mpfr)) else DEFAULT_DIGITS
    with working(digits):
        z = mpc(z)
        iz = mpc(-z.imag, z.real)
        num = 1 + iz
        den = 1 - iz
        if num == 0 or den == 0:
            raise DomainError(f"catan has a pole at {z}")
        w = clog(num / den, branch, digits=digits)
        # 1/(2i) * w = -i w / 2
        return mpc(w.imag, -w.real) / 2


def to_str(x, sig: int) -> str:
    """Decimal string with ``sig`` significant digits (reals only).

    ``sig = 0`` writes enough digits to round-trip at the value's precision.
    """
    if not isinstance(x, mpfr):
        x = mpfr(x)
    if x == 0:
        return "0"
    if not gmpy2.is_finite(x):
        return str(x)
    mant, exp, _ = x.digits(10, sig)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    body = mant[0] + ("." + mant[1:] if len(mant) > 1 else "")
    return f"{sign}{body}e{exp - 1}"


def complex_to_strs(z, sig: int) -> tuple[str, str]:
    if not isinstance(z, mpc):
        z = mpc(z)
    return to_str(z.real, sig), to_str(z.imag, sig)


def max_abs(values) -> mpfr:
    """Largest modulus in an iterable (zero for an empty one)."""
    best = mpfr(0)
    for v in values:
        a = abs(v)
        if a > best:
            best = a
    return best

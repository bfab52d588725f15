"""Conjecture curves, entanglement temperatures, fits and spectrum checks.

Positions: site j sits at x = j + 1/2 and the bond (j, j+1) at x = j + 1.
Continuum curves are sampled at those points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .bignum import working
from .entanglement import EntanglementKernel
from .errors import PhaseError
from .linalg import BigMatrix, eig_general
from .model import ModelParams, classify_phase, speed_of_sound

REALITY_THRESHOLD = 1e-2
REAL_FRACTION_TARGET = 0.9


class CurveKind(enum.Enum):
    TRIANGULAR_GAPPED = "TriangularGapped"
    PARABOLA_CFT = "ParabolaCFT"
    MU_CHEMICAL_POTENTIAL = "MuChemicalPotential"
    COMBINED_CRITICAL = "CombinedCritical"


@dataclass
class ConjectureCurve:
    kind: CurveKind
    samples: list  # (x, value)
    params: dict = field(default_factory=dict)

    @property
    def xs(self) -> list:
        return [x for x, _ in self.samples]

    @property
    def values(self) -> list:
        return [v for _, v in self.samples]


@dataclass
class FitResult:
    parameters: dict
    residual: mpfr
    window: tuple  # (first index, last index) of the data used, or (lo, hi) in x
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.parameters[name]


def _digits(kernel: EntanglementKernel) -> int:
    return kernel.params.digits


# -- temperatures ----------------------------------------------------------

def nn_temperature(kernel: EntanglementKernel, *, rescale: bool = False) -> list[tuple]:
    """k^A_{j,j+1} divided by the bond's hopping, -w (j even) or -v (j odd).

    With ``rescale`` each ratio is multiplied by 2 c_S / ell.  Entries are
    (j, x = j + 1, ratio).
    """
    ell = kernel.ell
    if ell < 4:
        raise ValueError(f"nn_temperature needs ell >= 4, got {ell}")
    p = kernel.params
    with working(p.digits):
        w, v = p.big("w"), p.big("v")
        factor = 2 * speed_of_sound(p) / ell if rescale else mpfr(1)
        out = []
        for j in range(ell - 1):
            hop = -w if j % 2 == 0 else -v
            out.append((j, mpfr(j + 1), kernel.kA[j, j + 1] / hop * factor))
        return out


def diag_potential(kernel: EntanglementKernel, *, divide_by_u: bool = False,
                   rescale: bool = False) -> list[tuple]:
    """Im k^A_{j,j}, optionally divided by +u (j even) / -u (j odd).

    Entries are (j, x = j + 1/2, value).
    """
    p = kernel.params
    with working(p.digits):
        u = p.big("u")
        if divide_by_u and u == 0:
            raise ValueError("divide_by_u needs u > 0")
        factor = 2 * speed_of_sound(p) / kernel.ell if rescale else mpfr(1)
        out = []
        for j in range(kernel.ell):
            val = kernel.kA[j, j].imag
            if divide_by_u:
                val = val / (u if j % 2 == 0 else -u)
            out.append((j, mpfr(j) + mpfr("0.5"), val * factor))
        return out


# -- continuum curves --------------------------------------------------------

def _sites(ell: int, digits: int) -> list:
    with working(digits):
        return [mpfr(j) + mpfr("0.5") for j in range(ell)]


def parabola_value(x, ell, digits: int = 50) -> mpfr:
    """2 pi x (ell - x) / ell^2."""
    with working(digits):
        x, ell = mpfr(x), mpfr(ell)
        return 2 * gmpy2.const_pi() * x * (ell - x) / (ell * ell)


def parabola_cft(ell: int, c_S, *, digits: int = 50, xs=None) -> ConjectureCurve:
    """2 pi beta(x) / ell with beta = x (ell - x) / ell, at x = j + 1/2 by default."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    xs = _sites(ell, digits) if xs is None else list(xs)
    samples = [(x, parabola_value(x, ell, digits)) for x in xs]
    return ConjectureCurve(CurveKind.PARABOLA_CFT, samples, {"ell": ell, "c_S": c_S})


def mu_conjecture(ell: int, *, flipped: bool = False, digits: int = 50) -> ConjectureCurve:
    """mu_j = 2 pi i (1 - (j + 1/2)/ell); ``flipped`` uses 1 + (j + 1/2)/ell."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    sgn = 1 if flipped else -1
    with working(digits):
        twopi = 2 * gmpy2.const_pi()
        samples = [(x, mpc(0, twopi * (1 + sgn * x / ell))) for x in _sites(ell, digits)]
    return ConjectureCurve(CurveKind.MU_CHEMICAL_POTENTIAL, samples,
                           {"ell": ell, "flipped": flipped})


def combined_value(x, ell, params: ModelParams, sign: int) -> mpfr:
    """pi (sign u) / c_S * x (ell - x) / ell + 2 pi (1 - x/ell)."""
    with working(params.digits):
        x, ell_ = mpfr(x), mpfr(ell)
        pi = gmpy2.const_pi()
        u = params.big("u") * sign
        return pi * u / speed_of_sound(params) * x * (ell_ - x) / ell_ + 2 * pi * (1 - x / ell_)


def combined_curve(ell: int, params: ModelParams) -> ConjectureCurve:
    """Both branches; samples are (x, (plus, minus)).  Even sites follow +u, odd sites -u."""
    if not classify_phase(params).critical:
        raise PhaseError("combined_curve is defined on the critical lines only")
    samples = [(x, (combined_value(x, ell, params, 1), combined_value(x, ell, params, -1)))
               for x in _sites(ell, params.digits)]
    return ConjectureCurve(CurveKind.COMBINED_CRITICAL, samples,
                           {"ell": ell, "c_S": speed_of_sound(params), "u": params.big("u")})


def combined_for_site(curve: ConjectureCurve, j: int) -> mpfr:
    plus, minus = curve.samples[j][1]
    return plus if j % 2 == 0 else minus


# -- fits --------------------------------------------------------------------

def _linear_lsq(xs, ys):
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points for a line")
    sx = sum(xs, mpfr(0))
    sy = sum(ys, mpfr(0))
    mx, my = sx / n, sy / n
    sxx = sum(((x - mx) ** 2 for x in xs), mpfr(0))
    sxy = sum(((x - mx) * (y - my) for x, y in zip(xs, ys)), mpfr(0))
    if sxx == 0:
        raise ValueError("abscissae are all equal")
    slope = sxy / sxx
    offset = my - slope * mx
    res = gmpy2.sqrt(sum(((y - slope * x - offset) ** 2 for x, y in zip(xs, ys)), mpfr(0)))
    return slope, offset, res


def triangular_fit(temperature: list[tuple], window: float = 0.2, *, ell: int | None = None,
                   digits: int = 50) -> FitResult:
    """Least-squares line value = slope * x + offset over the first ``window * ell`` sites.

    ``temperature`` holds (j, x, value) triples as returned by
    :func:`nn_temperature` or :func:`diag_potential`; complex values are fitted
    through their real part.  ``extra["r_squared"]`` measures linearity.
    """
    if not 0 < window <= 0.5:
        raise ValueError(f"window must lie in (0, 1/2], got {window}")
    if ell is None:
        ell = len(temperature) + (1 if temperature and temperature[0][1] == int(temperature[0][1]) else 0)
    cut = window * ell
    with working(digits):
        pts = [(mpfr(x), v.real if isinstance(v, type(mpc(0))) else mpfr(v))
               for _, x, v in temperature if x <= cut]
        ys = [p[1] for p in pts]
        slope, offset, res = _linear_lsq([p[0] for p in pts], ys)
        mean = sum(ys, mpfr(0)) / len(ys)
        spread = sum(((y - mean) ** 2 for y in ys), mpfr(0))
        r2 = 1 - res ** 2 / spread if spread else mpfr(1)
    return FitResult({"slope": slope, "offset": offset}, res, (0, cut),
                     {"points": len(pts), "r_squared": r2})


def chord_log(ell, L, digits: int = 50) -> mpfr:
    """(1/3) log[(L/pi) sin(pi ell / L)]."""
    with working(digits):
        pi = gmpy2.const_pi()
        return gmpy2.log(mpfr(L) / pi * gmpy2.sin(pi * mpfr(ell) / L)) / 3


def central_charge_fit(samples: list[tuple], L: int, *, digits: int = 50) -> FitResult:
    """Fit Re S_A = c * (1/3) log[(L/pi) sin(pi ell/L)] + const."""
    if len(samples) < 5:
        raise ValueError(f"central_charge_fit needs >= 5 samples, got {len(samples)}")
    with working(digits):
        xs = [chord_log(ell, L, digits) for ell, _ in samples]
        ys = [mpfr(s.real) if isinstance(s, type(mpc(0))) else mpfr(s) for _, s in samples]
        c, const, res = _linear_lsq(xs, ys)
    ells = [ell for ell, _ in samples]
    return FitResult({"c": c, "const": const}, res, (min(ells), max(ells)))


# -- spectrum reality ----------------------------------------------------------

def spectrum_reality_check(kernel: EntanglementKernel, mu: ConjectureCurve | None, *,
                           threshold: float = REALITY_THRESHOLD,
                           digits: int | None = None) -> FitResult:
    """Eigenvalues of k^A - diag(mu); fraction with |Im| < threshold.

    ``mu=None`` reuses the kernel's own spectrum.  ``digits`` optionally lowers
    the precision of this eigenvalue solve.
    """
    ell = kernel.ell
    if mu is None:
        eigs = list(kernel.eps)
    else:
        if len(mu.samples) != ell:
            raise ValueError(f"mu has {len(mu.samples)} samples, kernel is {ell}x{ell}")
        p = digits or _digits(kernel)
        with working(_digits(kernel)):
            m = kernel.kA - BigMatrix.diag(mu.values, _digits(kernel))
        eigs = eig_general(m.with_digits(p) if p != _digits(kernel) else m, vectors=False).eigenvalues
    thr = mpfr(threshold)
    real_ones = [z for z in eigs if abs(z.imag) < thr]
    frac = len(real_ones) / len(eigs) if eigs else 0.0
    worst = max((abs(z.imag) for z in real_ones), default=mpfr(0))
    return FitResult({"fraction": frac, "max_imag": worst}, worst, (0, ell),
                     {"eigenvalues": eigs, "threshold": threshold})


# -- collapse, endpoints, locality ---------------------------------------------

def interpolate(xs: list, ys: list, x):
    """Piecewise-linear interpolation; clamps outside the data range."""
    if x <= xs[0]:
        return ys[0]
    if x >= xs[-1]:
        return ys[-1]
    lo, hi = 0, len(xs) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    t = (x - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + t * (ys[hi] - ys[lo])


def collapse_deviation(curves: dict, *, grid: int = 200, lo: float = 0.0, hi: float = 1.0,
                       digits: int = 50) -> mpfr:
    """Max relative pointwise spread between curves given as {ell: [(x/ell, value), ...]}.

    Each curve is interpolated onto a common grid inside the overlap of
    their ranges; the deviation at a point is (max - min) / max |value|.
    """
    with working(digits):
        data = {}
        for ell, pts in curves.items():
            xs = [mpfr(p[0]) for p in pts]
            ys = [mpfr(p[1]) for p in pts]
            data[ell] = (xs, ys)
        start = max([mpfr(lo)] + [d[0][0] for d in data.values()])
        stop = min([mpfr(hi)] + [d[0][-1] for d in data.values()])
        worst = mpfr(0)
        for i in range(grid + 1):
            x = start + (stop - start) * i / grid
            vals = [interpolate(xs, ys, x) for xs, ys in data.values()]
            scale = max(abs(v) for v in vals)
            if scale == 0:
                continue
            dev = (max(vals) - min(vals)) / scale
            if dev > worst:
                worst = dev
        return worst


def endpoint_deviation(points: list[tuple], reference, ell: int, window: float = 0.1, *,
                       relative: bool = True, digits: int = 50) -> tuple[mpfr, list]:
    """Max deviation of (x, value) points from ``reference(x)`` for x/ell in the outer windows.

    Returns the maximum and the per-point (x, value, reference, deviation) rows.
    """
    rows = []
    worst = mpfr(0)
    with working(digits):
        for x, val in points:
            r = mpfr(x) / ell
            if window < r < 1 - window:
                continue
            ref = reference(x)
            dev = abs(val - ref)
            if relative:
                dev = dev / abs(ref) if ref != 0 else dev
            rows.append((x, val, ref, dev))
            if dev > worst:
                worst = dev
    return worst, rows


def locality_ratio(kernel: EntanglementKernel, fraction: float = 0.2, *,
                   outer: str = "both") -> tuple[mpfr, mpfr]:
    """(max |k_jm| over |j-m| >= 2, max nearest-neighbour |k_j,j+1|) inside edge blocks.

    ``outer`` selects the first ``fraction * ell`` sites ("left"), the last
    ones ("right") or both blocks; pairs straddling the blocks are ignored.
    """
    ell = kernel.ell
    size = max(2, int(fraction * ell))
    blocks = []
    if outer in ("left", "both"):
        blocks.append(range(0, size))
    if outer in ("right", "both"):
        blocks.append(range(ell - size, ell))
    far = mpfr(0)
    near = mpfr(0)
    with working(_digits(kernel)):
        for idx in blocks:
            for j in idx:
                for m in idx:
                    a = abs(kernel.kA[j, m])
                    if abs(j - m) >= 2:
                        far = max(far, a)
                    elif abs(j - m) == 1:
                        near = max(near, a)
    return far, near


def edge_value(points: list[tuple], edge, *, parity: int, count: int = 3, digits: int = 50) -> mpfr:
    """Polynomial extrapolation of one sublattice branch to the interval edge.

    ``points`` are (j, x, value) triples; the ``count`` sites of the given
    parity nearest to ``edge`` define the interpolating polynomial.
    """
    with working(digits):
        edge = mpfr(edge)
        branch = [(mpfr(x), mpfr(v.real) if isinstance(v, mpc) else mpfr(v))
                  for j, x, v in points if j % 2 == parity]
        branch.sort(key=lambda p: abs(p[0] - edge))
        nodes = branch[:count]
        if len(nodes) < count:
            raise ValueError(f"need {count} points of parity {parity}, got {len(nodes)}")
        total = mpfr(0)
        for i, (xi, yi) in enumerate(nodes):
            w = mpfr(1)
            for m, (xm, _) in enumerate(nodes):
                if m != i:
                    w *= (edge - xm) / (xi - xm)
            total += yi * w
        return total


def profile_deviation(values: list, reference: list, *, digits: int = 50) -> mpfr:
    """Sup-norm relative deviation max|v - r| / max|r|."""
    with working(digits):
        diff = max(abs(mpfr(v) - mpfr(r)) for v, r in zip(values, reference))
        scale = max(abs(mpfr(r)) for r in reference)
        return diff / scale if scale else diff

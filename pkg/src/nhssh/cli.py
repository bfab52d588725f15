"""Command-line front end: ``nhssh {phase,eh,spectrum,entropy,fit,verify-ed}``.

Configuration is a flat ``key = value`` file plus ``--set key=value``
overrides.  Every run writes ``manifest.json`` into the output directory,
also when it fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import gmpy2
from gmpy2 import mpc, mpfr

from . import __version__
from . import analysis as an
from . import io
from .bignum import to_str, working
from .correlation import build_correlation, restrict
from .edoracle import compare_all
from .entanglement import charge_sector_signs, eh_kernel, entropies, spectra
from .errors import (ConfigError, NearDefective, NhsshError, NumericalError, OracleMismatch,
                     SingularMatrix)
from .model import ModelParams, band_energy, classify_phase, speed_of_sound

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ORACLE = 0, 2, 3, 4
MANIFEST_SCHEMA = "nhssh-manifest/1"

_INT_KEYS = {"L", "digits", "max_modes", "csv_digits"}
_STR_KEYS = {"u", "v", "w", "delta", "input"}
_FLOAT_KEYS = {"triangle_window", "endpoint_window", "reality_threshold", "real_fraction"}
_LIST_KEYS = {"ell": int, "orders": int, "collapse_ells": int}
KNOWN_KEYS = _INT_KEYS | _STR_KEYS | _FLOAT_KEYS | set(_LIST_KEYS)


@dataclass
class RunConfig:
    u: str = "0.5"
    v: str = "1"
    w: str = "1.5"
    L: int = 2000
    ell: list = field(default_factory=lambda: [100])
    delta: str = "0"
    digits: int = 500
    orders: list = field(default_factory=lambda: [2, 3])
    collapse_ells: list = field(default_factory=list)
    triangle_window: float = 0.2
    endpoint_window: float = 0.1
    reality_threshold: float = an.REALITY_THRESHOLD
    real_fraction: float = an.REAL_FRACTION_TARGET
    max_modes: int = 12
    csv_digits: int = 30
    input: str = ""
    out: str = "out"
    cache: str = ""
    jobs: int = 1
    full_precision: bool = False

    def params(self, ell: int | None = None) -> ModelParams:
        ell = max(self.ell) if ell is None else ell
        return ModelParams(u=self.u, v=self.v, w=self.w, L=self.L, ell=ell,
                           delta=self.delta, digits=self.digits)

    def as_dict(self) -> dict:
        return asdict(self)


def _convert(key: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return [_LIST_KEYS[key](x) for x in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from exc
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value, f"{source}:{lineno}")
    return out


def build_config(args) -> RunConfig:
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(parse_config_text(path.read_text(), str(path)))
    for item in args.set or []:
        values.update(parse_config_text(item, "--set"))
    if args.digits is not None:
        values["digits"] = args.digits
    if args.command == "verify-ed":
        values.setdefault("digits", ORACLE_DIGITS)
    cfg = RunConfig(**values)
    cfg.out = args.out
    cfg.cache = args.cache or str(Path(args.out) / "cache")
    cfg.jobs = args.jobs
    cfg.full_precision = args.full_precision
    for ell in cfg.ell:
        cfg.params(ell)  # validates
    return cfg


# -- output helpers ------------------------------------------------------------

class Run:
    """Collects outputs, timings and residuals for the manifest."""

    def __init__(self, command: str, cfg: RunConfig | None):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out if cfg else "out")
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.residuals: dict[str, str] = {}
        self.flags: dict[str, object] = {}
        self.error = None

    def num(self, x) -> str:
        sig = 0 if self.cfg.full_precision else self.cfg.csv_digits
        return to_str(x, sig)

    def write_csv(self, name: str, header: list, rows: list) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([self._cell(c) for c in row])
        self.outputs[name] = io.file_digest(path)
        return path

    def _cell(self, c):
        if isinstance(c, (mpfr, int)) and not isinstance(c, bool):
            return self.num(c) if isinstance(c, mpfr) else str(c)
        return c

    def write_json(self, name: str, obj) -> Path:
        path = io.write_json(self.out / name, obj)
        self.outputs[name] = io.file_digest(path)
        return path

    def timed(self, stage: str, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timings[stage] = round(self.timings.get(stage, 0.0) + time.perf_counter() - t0, 3)

    def manifest(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "version": __version__,
            "command": self.command,
            "config": self.cfg.as_dict() if self.cfg else None,
            "timings": self.timings,
            "residuals": self.residuals,
            "flags": self.flags,
            "outputs": dict(sorted(self.outputs.items())),
            "error": self.error,
        }

    def write_manifest(self):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(self.manifest(), indent=1) + "\n")


def _re_im(run: Run, z) -> list:
    z = mpc(z)
    return [run.num(z.real), run.num(z.imag)]


# -- shared pipeline -------------------------------------------------------------

def correlation_for(run: Run, params: ModelParams):
    """Ring correlation, reusing the on-disk cache keyed by the params digest."""
    ring_params = params.replace(ell=0)
    path = Path(run.cfg.cache) / f"correlation-{io.params_digest(ring_params)}.json"
    if path.exists():
        C = run.timed("correlation_load", io.load_correlation, path, ring_params)
        run.flags["correlation_cache"] = "hit"
    else:
        C = run.timed("correlation", build_correlation, ring_params)
        run.flags["correlation_cache"] = "miss"
    run.flags["correlation_cache_file"] = str(path)
    return C, path


def _kernel_job(C_A):
    t0 = time.perf_counter()
    K = eh_kernel(C_A)
    S = spectra(C_A, K)
    return K, S, time.perf_counter() - t0


def kernels(run: Run, ells: list):
    """(ell, C_A, kernel, spectra) for every ell, in input order."""
    params = run.cfg.params()
    C, cache_path = correlation_for(run, params)
    restricted = [run.timed("restrict", restrict, C, ell) for ell in ells]
    if run.flags.get("correlation_cache") == "miss":
        io.save_correlation(cache_path, C)
    if run.cfg.jobs > 1 and len(ells) > 1:
        with ProcessPoolExecutor(max_workers=run.cfg.jobs) as pool:
            results = list(pool.map(_kernel_job, restricted))
    else:
        results = [_kernel_job(C_A) for C_A in restricted]
    out = []
    for ell, C_A, (K, S, dt) in zip(ells, restricted, results):
        run.timings[f"kernel_ell{ell}"] = round(dt, 3)
        run.residuals[f"exp_log_ell{ell}"] = to_str(K.residual, 6)
        run.residuals[f"inverse_ell{ell}"] = to_str(K.inverse_residual, 6)
        run.residuals[f"pairing_ell{ell}"] = to_str(S.pairing_error, 6)
        run.residuals[f"condition_ell{ell}"] = to_str(K.decomposition.condition_estimate, 6)
        out.append((ell, C_A, K, S))
    return out


# -- commands --------------------------------------------------------------------

def cmd_phase(run: Run) -> int:
    p = run.cfg.params()
    phase = classify_phase(p)
    with working(p.digits):
        u, v, w = p.big("u"), p.big("v"), p.big("w")
        e_min = gmpy2.sqrt(mpc((w - v) ** 2 - u * u))
        e_max = gmpy2.sqrt(mpc((w + v) ** 2 - u * u))
    report = {
        "phase": phase.value,
        "critical": phase.critical,
        "real_spectrum": phase.real_spectrum,
        "band_edge_at_k_pi": _re_im(run, e_min),
        "band_top_at_k_0": _re_im(run, e_max),
        "speed_of_sound": run.num(speed_of_sound(p)),
    }
    run.write_json("phase.json", report)
    print(f"phase           {phase.value}")
    print(f"E(k=pi)         {report['band_edge_at_k_pi'][0]} + {report['band_edge_at_k_pi'][1]} i")
    print(f"E(k=0)          {report['band_top_at_k_0'][0]} + {report['band_top_at_k_0'][1]} i")
    print(f"speed of sound  {report['speed_of_sound']}")
    return EXIT_OK


def _kernel_csv(run: Run, ell: int, K):
    rows = []
    for i in range(ell):
        for j in range(ell):
            z = K.kA[i, j]
            rows.append([i, j, abs(z), z.real, z.imag])
    run.write_csv(f"ell{ell}/kernel_matrix.csv", ["i", "j", "abs", "re", "im"], rows)


def _curve_rows(points, predict, ell):
    rows = []
    for j, x, val in points:
        pred = predict(j, x)
        val, pred = mpc(val), mpc(pred)
        rows.append([j, x / ell, val.real, val.imag, pred.real, pred.imag])
    return rows


HEADER = ["j", "x_over_ell", "re", "im", "prediction_re", "prediction_im"]


def cmd_eh(run: Run) -> int:
    cfg = run.cfg
    p = cfg.params()
    phase = classify_phase(p)
    ells = sorted(set(cfg.ell) | set(cfg.collapse_ells))
    collapse = {}
    fits = {}
    for ell, C_A, K, S in kernels(run, ells):
        io.save_kernel(run.out / f"ell{ell}/kernel.json", K)
        run.outputs[f"ell{ell}/kernel.json"] = io.file_digest(run.out / f"ell{ell}/kernel.json")
        _kernel_csv(run, ell, K)
        digits = p.digits
        if phase.critical:
            nn = an.nn_temperature(K, rescale=True)
            run.write_csv(f"ell{ell}/nn_temperature.csv", HEADER,
                          _curve_rows(nn, lambda j, x: an.parabola_value(x, ell, digits), ell))
            comb = an.combined_curve(ell, p)
            diag = an.diag_potential(K)
            run.write_csv(f"ell{ell}/diag_potential.csv", HEADER,
                          _curve_rows(diag, lambda j, x: an.combined_for_site(comb, j), ell))
            mu = an.mu_conjecture(ell, digits=digits)
            with working(digits):
                c_s = speed_of_sound(p)
                u = p.big("u")
                sub = [(j, x, (val - mu.values[j].imag) / (u if j % 2 == 0 else -u) * 2 * c_s / ell)
                       for j, x, val in diag]
            run.write_csv(f"ell{ell}/diag_minus_mu.csv", HEADER,
                          _curve_rows(sub, lambda j, x: an.parabola_value(x, ell, digits), ell))
            collapse[ell] = [(x / ell, v.real) for _, x, v in nn]
            dev, _ = an.endpoint_deviation([(x, v.real) for _, x, v in nn],
                                           lambda x: an.parabola_value(x, ell, digits), ell,
                                           cfg.endpoint_window)
            n = max(1, int(cfg.endpoint_window * ell))
            head, tail = diag[:n], diag[ell - n:]
            entry = {"endpoint_deviation": to_str(dev, 6)}
            for side, window in (("left", head), ("right", tail)):
                entry[f"diag_profile_deviation_{side}"] = to_str(an.profile_deviation(
                    [v for _, _, v in window], [an.combined_for_site(comb, j) for j, _, _ in window]), 6)
            for parity in (0, 1):
                entry[f"diag_edge_left_parity{parity}"] = to_str(
                    an.edge_value(diag, 0, parity=parity, digits=digits), 12)
                entry[f"diag_edge_right_parity{parity}"] = to_str(
                    an.edge_value(diag, ell, parity=parity, digits=digits), 12)
            fits[f"ell{ell}"] = entry
        else:
            nn = an.nn_temperature(K)
            fit_nn = an.triangular_fit(nn, cfg.triangle_window, ell=ell, digits=digits)
            tri = lambda j, x, f=fit_nn: f["slope"] * min(x, ell - x) + f["offset"]
            run.write_csv(f"ell{ell}/nn_temperature.csv", HEADER, _curve_rows(nn, tri, ell))
            entry = {"slope_real_channel": to_str(fit_nn["slope"], 12),
                     "residual_real_channel": to_str(fit_nn.residual, 6)}
            if p.exact("u") > 0:
                diag = an.diag_potential(K, divide_by_u=True)
                fit_d = an.triangular_fit(diag, cfg.triangle_window, ell=ell, digits=digits)
                tri_d = lambda j, x, f=fit_d: f["slope"] * min(x, ell - x) + f["offset"]
                run.write_csv(f"ell{ell}/diag_potential.csv", HEADER, _curve_rows(diag, tri_d, ell))
                entry.update({"slope_imag_channel": to_str(fit_d["slope"], 12),
                              "residual_imag_channel": to_str(fit_d.residual, 6)})
            far, near = an.locality_ratio(K, cfg.triangle_window)
            entry["locality_ratio"] = to_str(far / near if near else far, 6)
            fits[f"ell{ell}"] = entry
    if len(collapse) > 1:
        fits["collapse_deviation"] = to_str(an.collapse_deviation(collapse), 6)
    run.write_json("fits.json", fits)
    print(json.dumps(fits, indent=1))
    return EXIT_OK


def cmd_spectrum(run: Run) -> int:
    cfg = run.cfg
    p = cfg.params()
    phase = classify_phase(p)
    report = {}
    for ell, C_A, K, S in kernels(run, sorted(cfg.ell)):
        io.save_spectra(run.out / f"ell{ell}/spectra.json", p.replace(ell=ell), S)
        run.outputs[f"ell{ell}/spectra.json"] = io.file_digest(run.out / f"ell{ell}/spectra.json")
        run.write_csv(f"ell{ell}/eps.csv", ["index", "nu_re", "nu_im", "eps_re", "eps_im"],
                      [[i, mpc(n).real, mpc(n).imag, e.real, e.imag]
                       for i, (n, e) in enumerate(zip(S.nu, S.eps))])
        entry = {"max_abs_im_eps_minus_pi": to_str(max(abs(e.imag - gmpy2.const_pi()) for e in S.eps), 6)}
        if phase.critical:
            for flipped in (False, True):
                mu = an.mu_conjecture(ell, flipped=flipped, digits=p.digits)
                chk = run.timed(f"reality_ell{ell}", an.spectrum_reality_check, K, mu,
                                threshold=cfg.reality_threshold)
                tag = "flipped" if flipped else "decreasing"
                eigs = sorted(chk.extra["eigenvalues"], key=lambda z: (z.real, z.imag))
                run.write_csv(f"ell{ell}/eps_minus_mu_{tag}.csv", ["index", "re", "im"],
                              [[i, z.real, z.imag] for i, z in enumerate(eigs)])
                entry[f"real_fraction_{tag}"] = chk["fraction"]
                entry[f"max_imag_{tag}"] = to_str(chk["max_imag"], 6)
        report[f"ell{ell}"] = entry
    run.write_json("spectrum_report.json", report)
    print(json.dumps(report, indent=1))
    return EXIT_OK


def _entropy_rows(run: Run, results, orders):
    rows = []
    for ell, S_res in results:
        row = [ell, S_res.von_neumann.real, S_res.von_neumann.imag]
        for n in orders:
            z = S_res.renyi[n]
            row += [z.real, z.imag]
        rows.append(row)
    header = ["ell", "S_re", "S_im"] + [f"S{n}_{part}" for n in orders for part in ("re", "im")]
    return header, rows


def cmd_entropy(run: Run) -> int:
    cfg = run.cfg
    results = []
    signs = {}
    for ell, C_A, K, S in kernels(run, sorted(cfg.ell)):
        res = entropies(S, cfg.orders, digits=cfg.digits)
        results.append((ell, res))
        reports, trunc = charge_sector_signs(S, min(cfg.max_modes, ell), digits=cfg.digits)
        signs[f"ell{ell}"] = {"truncation": to_str(trunc, 6),
                              "sectors": [{"q": r.q, "expected": r.expected_sign,
                                           "consistent": r.consistent,
                                           "negative": sum(1 for s in r.signs if s < 0),
                                           "positive": sum(1 for s in r.signs if s > 0)}
                                          for r in reports]}
    header, rows = _entropy_rows(run, results, cfg.orders)
    run.write_csv("entropy.csv", header, rows)
    run.write_json("charge_sectors.json", signs)
    for ell, res in results:
        print(f"ell={ell:4d}  Re S = {to_str(res.real, 15)}")
    return EXIT_OK


def _read_entropy_csv(path) -> list:
    if not Path(path).exists():
        raise ConfigError(f"input file {path} does not exist")
    with open(path, newline="") as fh:
        return [(int(r["ell"]), mpfr(r["S_re"])) for r in csv.DictReader(fh)]


def cmd_fit(run: Run) -> int:
    cfg = run.cfg
    if cfg.input:
        samples = _read_entropy_csv(cfg.input)
    else:
        samples = []
        for ell, C_A, K, S in kernels(run, sorted(cfg.ell)):
            samples.append((ell, entropies(S, digits=cfg.digits).real))
        run.write_csv("entropy.csv", ["ell", "S_re"], samples)
    fit = an.central_charge_fit(samples, cfg.L)
    report = {"c": to_str(fit["c"], 12), "const": to_str(fit["const"], 12),
              "residual": to_str(fit.residual, 6), "window": list(fit.window),
              "samples": len(samples)}
    run.write_json("fit.json", report)
    print(f"c = {report['c']}  (residual {report['residual']})")
    return EXIT_OK


ORACLE_DIGITS = 200
DEFAULT_ORACLE_SETS = (
    {"u": "1", "v": "1", "w": "5", "delta": "0"},
    {"u": "0.5", "v": "1", "w": "1.5", "delta": "1e-3"},
)


def cmd_verify_ed(run: Run, explicit: bool) -> int:
    cfg = run.cfg
    if explicit:
        sets = [{"u": cfg.u, "v": cfg.v, "w": cfg.w, "delta": cfg.delta}]
        L, ell = cfg.L, cfg.ell[0]
    else:
        sets, L, ell = DEFAULT_ORACLE_SETS, 8, 4
    ok = True
    doc = []
    for s in sets:
        params = ModelParams(L=L, ell=ell, digits=cfg.digits, **s)
        reports = run.timed(f"oracle_{s['u']}_{s['v']}_{s['w']}", compare_all, params)
        doc.append({"params": params.as_dict(), "reports": [r.as_dict() for r in reports]})
        for r in reports:
            ok &= r.passed
            print(f"{'PASS' if r.passed else 'FAIL'}  {s}  {r.quantity:14s} "
                  f"discrepancy {to_str(r.discrepancy, 3)} (threshold {to_str(r.threshold, 3)})")
    run.write_json("oracle.json", doc)
    if not ok:
        raise OracleMismatch("Gaussian and exact-diagonalization results disagree")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhssh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key")
    common.add_argument("--digits", type=int, help="working precision in decimal digits")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--cache", help="correlation cache directory (default: OUT/cache)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for ell sweeps")
    common.add_argument("--full-precision", action="store_true",
                        help="write CSV numbers at full precision instead of 30 digits")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("phase", "classify couplings and print band data"),
                       ("eh", "entanglement Hamiltonian kernel, temperatures and curves"),
                       ("spectrum", "single-particle spectra and the reality check"),
                       ("entropy", "von Neumann / Renyi entropies and charge-sector signs"),
                       ("fit", "central-charge fit of an entropy sweep"),
                       ("verify-ed", "compare against exact diagonalization")]:
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _hint(exc: Exception) -> str:
    if isinstance(exc, (SingularMatrix, NearDefective)):
        return " (raise --digits, or raise delta at criticality)"
    return ""


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    run = Run(args.command, None)
    run.out = Path(args.out)
    code = EXIT_OK
    try:
        run.cfg = cfg = build_config(args)
        handler = {"phase": cmd_phase, "eh": cmd_eh, "spectrum": cmd_spectrum,
                   "entropy": cmd_entropy, "fit": cmd_fit}.get(args.command)
        with working(cfg.digits):
            if handler is not None:
                code = handler(run)
            else:
                code = cmd_verify_ed(run, explicit=bool(args.config or args.set))
    except ConfigError as exc:
        code = EXIT_CONFIG
        run.error = {"class": type(exc).__name__, "message": str(exc)}
    except NumericalError as exc:
        code = EXIT_NUMERICAL
        run.error = {"class": type(exc).__name__, "message": str(exc) + _hint(exc)}
    except OracleMismatch as exc:
        code = EXIT_ORACLE
        run.error = {"class": type(exc).__name__, "message": str(exc)}
    except Exception as exc:  # recorded, then re-raised
        run.error = {"class": type(exc).__name__, "message": str(exc),
                     "traceback": traceback.format_exc()}
        run.write_manifest()
        raise
    if run.error:
        print(f"error: {run.error['class']}: {run.error['message']}", file=sys.stderr)
    run.write_manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())

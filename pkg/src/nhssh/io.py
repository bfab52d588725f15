"""JSON container with decimal-string entries.

Every number is written with enough digits to round-trip at its binary
precision, so a reload reproduces the in-memory values bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from gmpy2 import mpc

from .bignum import cplx, to_str, working
from .correlation import CorrelationMatrix, SymbolG
from .linalg import BigMatrix
from .model import ModelParams

SCHEMA = "nhssh-data/1"


def exact_str(x) -> str:
    return to_str(x, 0)


def encode(z) -> list[str]:
    if not isinstance(z, mpc):
        z = mpc(z)
    return [exact_str(z.real), exact_str(z.imag)]


def decode(pair, digits: int) -> mpc:
    return cplx(pair[0], digits, pair[1])


def encode_matrix(M: BigMatrix) -> list:
    return [[encode(z) for z in row] for row in M.data]


def decode_matrix(rows, digits: int) -> BigMatrix:
    with working(digits):
        data = np.array([[decode(p, digits) for p in row] for row in rows], dtype=object)
    return BigMatrix(data, digits)


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def params_digest(params: ModelParams, *extra) -> str:
    return hashlib.sha256(canonical([params.as_dict(), *extra]).encode()).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def header(params: ModelParams, kind: str) -> dict:
    return {"schema": SCHEMA, "kind": kind, "params": params.as_dict(), "digits": params.digits,
            "grid": {"N": params.N, "delta": params.delta,
                     "k": "(2 pi n + delta) / N, n = 0 .. N-1"}}


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def _check_header(doc: dict, kind: str, params: ModelParams | None):
    if doc.get("schema") != SCHEMA or doc.get("kind") != kind:
        raise ValueError(f"not a {kind} file of schema {SCHEMA}")
    if params is not None and doc["params"] != params.as_dict():
        raise ValueError("stored parameters differ from the requested ones")


def save_correlation(path, C: CorrelationMatrix, *, with_blocks: bool = True) -> Path:
    """Store the momentum symbols (and any computed blocks) of a ring correlation."""
    doc = header(C.params, "correlation")
    doc["size"] = C.size
    doc["symbols"] = [{"k": exact_str(s.k), "eta": encode(s.eta),
                       "G": encode_matrix(s.entries)} for s in (C.symbols or [])]
    if with_blocks:
        doc["blocks"] = {str(d): [encode(b) for b in blk] for d, blk in sorted(C.blocks().items())}
    return write_json(path, doc)


def load_correlation(path, params: ModelParams | None = None) -> CorrelationMatrix:
    doc = json.loads(Path(path).read_text())
    _check_header(doc, "correlation", params)
    p = ModelParams(**doc["params"])
    digits = p.digits
    with working(digits):
        symbols = [SymbolG(cplx(s["k"], digits).real, decode_matrix(s["G"], digits),
                           decode(s["eta"], digits), None) for s in doc["symbols"]]
        blocks = {int(d): [decode(b, digits) for b in blk] for d, blk in doc.get("blocks", {}).items()}
    return CorrelationMatrix(p, doc["size"], symbols, restricted=False, blocks=blocks)


def save_kernel(path, kernel) -> Path:
    doc = header(kernel.params, "kernel")
    doc["branch"] = kernel.branch.value
    doc["ell"] = kernel.ell
    doc["residual"] = None if kernel.residual is None else exact_str(kernel.residual)
    doc["kA"] = encode_matrix(kernel.kA)
    doc["eps"] = [encode(e) for e in kernel.eps]
    return write_json(path, doc)


def load_kernel_matrix(path) -> tuple[ModelParams, BigMatrix]:
    doc = json.loads(Path(path).read_text())
    _check_header(doc, "kernel", None)
    p = ModelParams(**doc["params"])
    return p, decode_matrix(doc["kA"], p.digits)


def save_spectra(path, params: ModelParams, S) -> Path:
    doc = header(params, "spectra")
    doc["nu"] = [encode(x) for x in S.nu]
    doc["eps"] = [encode(x) for x in S.eps]
    doc["pairing_error"] = None if S.pairing_error is None else exact_str(S.pairing_error)
    return write_json(path, doc)

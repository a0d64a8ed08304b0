"""File formats: probability matrices, labels, models, sets, reports.

Text formats are newline-terminated and print floats with 17 significant
digits so that write-then-read reproduces the exact double.  Model files are
JSON; +inf thresholds serialize as the string "inf" since JSON has no
infinity literal.  The binary matrix format is a fixed little-endian layout
for bulk data: magic "RCM1", u64 row count, u64 column count, then row-major
float64 values.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .calibration import (
    METHODS,
    MARGINAL,
    CalibrationModel,
    ClassRecord,
    MarginalRecord,
)
from .core import ProbabilityMatrix, probability_matrix
from .errors import InputError, ParseError
from .scores import ScoreConfig

RCM_MAGIC = b"RCM1"
_RCM_HEADER = struct.Struct("<4sQQ")


def format_float(x: float) -> str:
    """17-significant-digit decimal; round-trips any finite double."""
    if math.isnan(x):
        raise InputError("cannot serialize NaN")
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def dumps_json(obj, indent: int | None = 2) -> str:
    """Serialize with exact float text; keys keep insertion order."""
    out: list[str] = []
    _emit(obj, out, indent, 0)
    out.append("\n")
    return "".join(out)


def _emit(obj, out: list, indent: int | None, depth: int) -> None:
    nl = "\n" + " " * (indent * (depth + 1)) if indent else ""
    close_nl = "\n" + " " * (indent * depth) if indent else ""
    if obj is None or isinstance(obj, (bool, str, int)) and not isinstance(obj, float):
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise InputError(
                "non-finite float reached the serializer; encode it as a string first"
            )
        out.append(format_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise InputError(f"JSON keys must be strings, got {key!r}")
            out.append(("," if i else "") + nl + json.dumps(key) + ": ")
            _emit(val, out, indent, depth + 1)
        out.append(close_nl + "}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            out.append("[]")
            return
        out.append("[")
        for i, val in enumerate(obj):
            out.append(("," if i else "") + nl)
            _emit(val, out, indent, depth + 1)
        out.append(close_nl + "]")
    elif isinstance(obj, np.bool_):
        _emit(bool(obj), out, indent, depth)
    elif isinstance(obj, (np.floating,)):
        _emit(float(obj), out, indent, depth)
    elif isinstance(obj, (np.integer,)):
        _emit(int(obj), out, indent, depth)
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out, indent, depth)
    else:
        raise InputError(f"cannot serialize {type(obj).__name__}")


# -- probability matrices ----------------------------------------------------


def write_probability_matrix(path, probs: ProbabilityMatrix) -> None:
    path = Path(path)
    if path.suffix == ".rcm":
        _write_rcm(path, probs)
        return
    lines = []
    for row in probs.values:
        lines.append(",".join(format_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_probability_matrix(path) -> ProbabilityMatrix:
    path = Path(path)
    if path.suffix == ".rcm":
        return _read_rcm(path)
    return _read_csv_matrix(path)


def _read_csv_matrix(path: Path) -> ProbabilityMatrix:
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty matrix file")
    start = 0
    try:
        [float(cell) for cell in lines[0].split(",")]
    except ValueError:
        start = 1  # non-numeric first line is a header
        if len(lines) == 1:
            raise ParseError(f"{path}: only a header line, no data") from None
    rows = []
    width = None
    for lineno, ln in enumerate(lines[start:], start=start + 1):
        cells = ln.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"{path}:{lineno}: expected {width} columns, found {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    try:
        return probability_matrix(np.asarray(rows, dtype=np.float64), copy=False)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def _write_rcm(path: Path, probs: ProbabilityMatrix) -> None:
    header = _RCM_HEADER.pack(RCM_MAGIC, probs.n, probs.num_classes)
    body = np.ascontiguousarray(probs.values, dtype="<f8").tobytes()
    path.write_bytes(header + body)


def _read_rcm(path: Path) -> ProbabilityMatrix:
    blob = path.read_bytes()
    if len(blob) < _RCM_HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, n, k = _RCM_HEADER.unpack_from(blob)
    if magic != RCM_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {RCM_MAGIC!r}")
    expected = _RCM_HEADER.size + 8 * n * k
    if len(blob) != expected:
        raise ParseError(
            f"{path}: expected {expected} bytes for a {n}x{k} matrix, "
            f"found {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f8", offset=_RCM_HEADER.size)
    try:
        return probability_matrix(
            values.reshape(n, k).astype(np.float64), copy=False
        )
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


# -- labels -------------------------------------------------------------------


def write_labels(path, labels) -> None:
    lab = np.asarray(labels, dtype=np.int64)
    Path(path).write_text("".join(f"{v}\n" for v in lab))


def read_labels(path) -> np.ndarray:
    path = Path(path)
    values = []
    for lineno, ln in enumerate(path.read_text().splitlines(), start=1):
        ln = ln.strip()
        if not ln:
            continue
        try:
            values.append(int(ln))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not an integer label: {ln!r}") from None
    arr = np.array(values, dtype=np.int64)
    if arr.size and arr.min() < 0:
        row = int(np.argmax(arr < 0))
        raise InputError(f"{path}: negative label at line {row + 1}")
    return arr


# -- calibration models -------------------------------------------------------


def model_to_dict(model: CalibrationModel) -> dict:
    cfg = model.score_cfg
    doc = {
        "method": model.method,
        "alpha": model.alpha,
        "g": model.g,
        "score": {
            "kind": cfg.kind,
            "lambda": cfg.lam,
            "kreg": cfg.k_reg,
            "randomize": cfg.randomize,
            "seed": cfg.seed,
        },
        "K": model.num_classes,
        "classes": [
            {
                "y": rec.y,
                "q_hat": "inf" if math.isinf(rec.q_hat) else rec.q_hat,
                "k_hat": rec.k_hat,
                "alpha_hat": rec.alpha_hat,
                "n_y": rec.n_y,
                "eps_at_khat": rec.eps_at_khat,
                "degenerate": rec.degenerate,
            }
            for rec in model.classes
        ],
    }
    if model.marginal is not None:
        doc["marginal"] = {
            "q_hat": "inf" if math.isinf(model.marginal.q_hat) else model.marginal.q_hat,
            "n": model.marginal.n,
        }
    return doc


def _parse_q(value, where: str) -> float:
    if value == "inf":
        return math.inf
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ParseError(f"{where}: threshold must be a number or \"inf\", got {value!r}")


def model_from_dict(doc: dict, where: str = "model") -> CalibrationModel:
    try:
        method = doc["method"]
        score = doc["score"]
        cfg = ScoreConfig(
            kind=score["kind"],
            lam=float(score["lambda"]),
            k_reg=int(score["kreg"]),
            randomize=bool(score["randomize"]),
            seed=int(score["seed"]),
        )
        alpha = float(doc["alpha"])
        g = float(doc["g"])
        k = int(doc["K"])
        class_docs = doc["classes"]
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc}") from None
    if method not in METHODS:
        raise ParseError(f"{where}: unknown method {method!r}")
    records = []
    for i, rec in enumerate(class_docs):
        try:
            records.append(ClassRecord(
                y=int(rec["y"]),
                q_hat=_parse_q(rec["q_hat"], f"{where}: class {i}"),
                k_hat=int(rec["k_hat"]),
                alpha_hat=float(rec["alpha_hat"]),
                n_y=int(rec["n_y"]),
                eps_at_khat=float(rec["eps_at_khat"]),
                degenerate=bool(rec["degenerate"]),
            ))
        except KeyError as exc:
            raise ParseError(f"{where}: class {i} missing field {exc}") from None
    marginal = None
    if "marginal" in doc:
        m = doc["marginal"]
        try:
            marginal = MarginalRecord(
                q_hat=_parse_q(m["q_hat"], f"{where}: marginal"), n=int(m["n"])
            )
        except KeyError as exc:
            raise ParseError(f"{where}: marginal missing field {exc}") from None
    if method == MARGINAL:
        if marginal is None:
            raise ParseError(f"{where}: marginal model lacks the marginal block")
    else:
        if [rec.y for rec in records] != list(range(k)):
            raise ParseError(f"{where}: classes must cover 0..{k - 1} in order")
    model = CalibrationModel(
        method=method, alpha=alpha, g=g, score_cfg=cfg.validated(),
        num_classes=k, classes=tuple(records), marginal=marginal,
    )
    if not 0.0 < alpha < 1.0:
        raise ParseError(f"{where}: alpha {alpha} outside (0, 1)")
    if k < 2:
        raise ParseError(f"{where}: K must be >= 2, got {k}")
    return model


def write_model(path, model: CalibrationModel) -> None:
    Path(path).write_text(dumps_json(model_to_dict(model)))


def read_model(path) -> CalibrationModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    return model_from_dict(doc, where=str(path))


def model_fingerprint(model: CalibrationModel) -> str:
    """sha256 of the canonical compact serialization."""
    blob = dumps_json(model_to_dict(model), indent=None).encode()
    return hashlib.sha256(blob).hexdigest()


# -- prediction sets ----------------------------------------------------------


def write_sets(path, batch) -> None:
    """One line per row: row_index,set_size,member;member;..."""
    lines = []
    for s in batch.sets:
        members = ";".join(str(m) for m in s.members)
        lines.append(f"{s.row},{s.size},{members}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sets(path) -> list:
    """Member tuples in row order; validates indices and sizes."""
    path = Path(path)
    out = []
    for lineno, ln in enumerate(path.read_text().splitlines(), start=1):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 3:
            raise ParseError(
                f"{path}:{lineno}: expected row,size,members, found {len(parts)} fields"
            )
        try:
            row = int(parts[0])
            size = int(parts[1])
            members = tuple(int(m) for m in parts[2].split(";")) if parts[2] else ()
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        if row != len(out):
            raise ParseError(
                f"{path}:{lineno}: expected row index {len(out)}, found {row}"
            )
        if size != len(members):
            raise ParseError(
                f"{path}:{lineno}: declared size {size} but {len(members)} members"
            )
        if list(members) != sorted(set(members)):
            raise ParseError(f"{path}:{lineno}: members must be sorted and unique")
        if members and members[0] < 0:
            raise ParseError(f"{path}:{lineno}: negative class index")
        out.append(members)
    return out


# -- metric and diagnostic reports ---------------------------------------------


def metrics_to_dict(report) -> dict:
    doc = {
        "alpha": report.alpha,
        "K": report.num_classes,
        "n_test": report.n_test,
        "ucr": report.ucr,
        "apss": report.apss,
        "ucg": report.ucg,
        "per_class": [
            {
                "y": c.y,
                "n_test": c.n_test,
                "coverage": c.coverage,
                "mean_size": c.mean_size,
                "under_covered": c.under_covered,
            }
            for c in report.per_class
        ],
        "absent": list(report.absent),
    }
    if report.rank_freq is not None:
        doc["rank_frequency"] = rank_freq_to_dict(report.rank_freq)
    if report.sigma is not None:
        doc["sigma"] = [sigma_to_dict(s) for s in report.sigma]
    if report.thm2 is not None:
        doc["theorem2"] = [thm2_to_dict(t) for t in report.thm2]
    return doc


def rank_freq_to_dict(rf) -> dict:
    return {
        "freq": [float(v) for v in rf.freq],
        "pairs": rf.pairs,
        "defined": rf.defined,
    }


def sigma_to_dict(s) -> dict:
    return {
        "y": s.y,
        "numerator": s.numerator,
        "denominator": s.denominator,
        "sigma": s.sigma,
        "defined": s.defined,
    }


def thm2_to_dict(t) -> dict:
    return {
        "y": t.y,
        "B": t.b,
        "D": t.d,
        "p_y": t.p_y,
        "rhs": t.rhs,
        "satisfied": t.satisfied,
        "defined": t.defined,
    }


def write_metrics_json(path, report) -> None:
    Path(path).write_text(dumps_json(metrics_to_dict(report)))


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def write_metrics_csv(path, report) -> None:
    """Flat per-class rows plus one summary row, for external plotting."""
    lines = ["row,class,n_test,coverage,mean_size,under_covered,ucr,apss,ucg"]
    for c in report.per_class:
        cells = ["class", c.y, c.n_test, c.coverage, c.mean_size, c.under_covered,
                 None, None, None]
        lines.append(",".join(_csv_cell(v) for v in cells))
    summary = ["summary", None, report.n_test, None, None, None,
               report.ucr, report.apss, report.ucg]
    lines.append(",".join(_csv_cell(v) for v in summary))
    Path(path).write_text("\n".join(lines) + "\n")


def write_rank_frequency_csv(path, freqs: dict) -> None:
    """Columns: rank, then one column per named frequency vector."""
    names = list(freqs)
    length = {len(freqs[n].freq) for n in names}
    if len(length) != 1:
        raise InputError("frequency vectors must share a length")
    k = length.pop()
    lines = ["rank," + ",".join(names)]
    for i in range(k):
        cells = [str(i + 1)] + [format_float(float(freqs[n].freq[i])) for n in names]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_sigma_csv(path, records) -> None:
    lines = ["class,numerator,denominator,sigma,defined"]
    for s in records:
        cells = [s.y, s.numerator, s.denominator, s.sigma, s.defined]
        lines.append(",".join(_csv_cell(v) for v in cells))
    Path(path).write_text("\n".join(lines) + "\n")

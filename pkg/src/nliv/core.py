"""Domain types, validation, and file formats shared by all estimators.

Two containers travel through the whole pipeline. ``StageOneData`` holds the
individual-level sample: an instrument matrix and an exposure vector.
``SummaryStats`` holds second moments of the outcome sample: instrument
Gram matrix, instrument-outcome cross moments, outcome second moment, and
the sample size behind them. Estimators never see the outcome sample's
individual rows.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from nliv.errors import (
    DimensionMismatch,
    EmptyData,
    NegativeVariance,
    ParseError,
    SampleSizeWarning,
    SchemaError,
    SingularCovariance,
)

__all__ = [
    "StageOneData",
    "SummaryStats",
    "center",
    "summarize",
    "derived_rng",
    "load_stage_one",
    "save_stage_one",
    "load_summary",
    "save_summary",
    "format_float",
    "dumps_json",
]


def derived_rng(seed, *branch) -> np.random.Generator:
    """Counter-based generator for a named branch of a root seed.

    Distinct branch tuples give statistically independent streams without
    any coordination, so replicates, resamples, and noise draws can each
    own a stream while staying bit-reproducible. ``seed`` may be an int or
    a tuple of ints.
    """
    if isinstance(seed, (tuple, list)):
        entropy = tuple(int(s) for s in seed)
    else:
        entropy = int(seed)
    ss = np.random.SeedSequence(entropy=entropy,
                                spawn_key=tuple(int(b) for b in branch))
    return np.random.Generator(np.random.Philox(ss))


def _as_float_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ParseError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(a)


def _as_float_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-d array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ParseError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class StageOneData:
    """Individual-level sample: instruments ``z1`` (n1 x p) and exposure ``x1`` (n1,)."""

    z1: np.ndarray
    x1: np.ndarray

    def __post_init__(self):
        z1 = _as_float_matrix(self.z1, "z1")
        x1 = _as_float_vector(self.x1, "x1")
        if z1.shape[0] == 0:
            raise EmptyData("stage-one sample has zero rows")
        if z1.shape[0] != x1.shape[0]:
            raise DimensionMismatch(
                f"z1 has {z1.shape[0]} rows but x1 has {x1.shape[0]} entries"
            )
        if z1.shape[0] < 2:
            raise EmptyData("stage-one sample needs at least two rows")
        if z1.shape[1] < 1:
            raise DimensionMismatch("z1 needs at least one column")
        z1.setflags(write=False)
        x1.setflags(write=False)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "x1", x1)

    @property
    def n1(self) -> int:
        return self.z1.shape[0]

    @property
    def p(self) -> int:
        return self.z1.shape[1]


@dataclass(frozen=True)
class SummaryStats:
    """Second-moment summary of the outcome sample.

    ``s_zz`` is n2^-1 Z2'Z2, ``s_zy`` is n2^-1 Z2'Y2, ``s_yy`` is n2^-1 Y2'Y2.
    ``summarize`` rescales the outcome so that s_yy = 1; a hand-built instance
    may carry any positive s_yy and can be brought to that scale with
    ``normalized()``.
    """

    s_zz: np.ndarray
    s_zy: np.ndarray
    s_yy: float
    n2: int

    def __post_init__(self):
        s_zz = _as_float_matrix(self.s_zz, "s_zz")
        s_zy = _as_float_vector(self.s_zy, "s_zy")
        p = s_zz.shape[0]
        if s_zz.shape[1] != p:
            raise DimensionMismatch(f"s_zz must be square, got {s_zz.shape}")
        if s_zy.shape[0] != p:
            raise DimensionMismatch(
                f"s_zy has length {s_zy.shape[0]} but s_zz is {p} x {p}"
            )
        scale = max(1.0, float(np.max(np.abs(s_zz))))
        if float(np.max(np.abs(s_zz - s_zz.T))) > 1e-10 * scale:
            raise SingularCovariance("s_zz is not symmetric within tolerance")
        tol = 1e-8 * float(np.trace(s_zz)) / max(p, 1)
        min_eig = float(np.linalg.eigvalsh(s_zz)[0])
        if min_eig < -abs(tol):
            raise SingularCovariance(
                f"s_zz is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )
        s_yy = float(self.s_yy)
        if not math.isfinite(s_yy) or s_yy <= 0.0:
            raise NegativeVariance(f"s_yy must be positive, got {s_yy}")
        n2 = int(self.n2)
        if n2 < 1:
            raise EmptyData(f"n2 must be a positive integer, got {n2}")
        if n2 < p:
            warnings.warn(
                f"summary sample size n2={n2} is below the instrument count p={p}",
                SampleSizeWarning,
                stacklevel=2,
            )
        s_zz.setflags(write=False)
        s_zy.setflags(write=False)
        object.__setattr__(self, "s_zz", s_zz)
        object.__setattr__(self, "s_zy", s_zy)
        object.__setattr__(self, "s_yy", s_yy)
        object.__setattr__(self, "n2", n2)

    @property
    def p(self) -> int:
        return self.s_zz.shape[0]

    def normalized(self) -> "SummaryStats":
        """Rescale the outcome so that s_yy = 1, dividing s_zy consistently."""
        c = math.sqrt(self.s_yy)
        return SummaryStats(self.s_zz, self.s_zy / c, 1.0, self.n2)


def center(data: StageOneData) -> StageOneData:
    """Subtract column means from the instruments and the mean from the exposure."""
    z1 = data.z1 - data.z1.mean(axis=0)
    x1 = data.x1 - data.x1.mean()
    return StageOneData(z1, x1)


def summarize(z2, y2) -> SummaryStats:
    """Reduce an outcome sample to second moments, normalizing s_yy to 1.

    Parameters
    ----------
    z2 : array, shape (n2, p)
        Instrument rows of the outcome sample, assumed centered.
    y2 : array, shape (n2,)
        Outcome values, assumed centered.

    Returns
    -------
    SummaryStats
        Moments with the outcome rescaled so its second moment equals one.
        The same rescale is applied to the cross moments, so downstream
        estimates live on the normalized outcome scale.
    """
    z2 = _as_float_matrix(z2, "z2")
    y2 = _as_float_vector(y2, "y2")
    if z2.shape[0] == 0:
        raise EmptyData("outcome sample has zero rows")
    if z2.shape[0] != y2.shape[0]:
        raise DimensionMismatch(
            f"z2 has {z2.shape[0]} rows but y2 has {y2.shape[0]} entries"
        )
    n2 = z2.shape[0]
    s_zz = z2.T @ z2 / n2
    s_zy = z2.T @ y2 / n2
    s_yy = float(y2 @ y2) / n2
    if s_yy <= 0.0:
        raise NegativeVariance("outcome sample has zero second moment")
    c = math.sqrt(s_yy)
    return SummaryStats(s_zz, s_zy / c, 1.0, n2)


# ---------------------------------------------------------------------------
# file formats


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless round trip)."""
    return format(float(x), ".17g")


def _dump_value(obj, parts: list) -> None:
    if isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(", ")
            parts.append(json.dumps(str(k)))
            parts.append(": ")
            _dump_value(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        if isinstance(obj, np.ndarray):
            obj = obj.tolist()
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(", ")
            _dump_value(v, parts)
        parts.append("]")
    elif isinstance(obj, bool) or obj is None:
        parts.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(format_float(obj))
    else:
        parts.append(json.dumps(obj))


def dumps_json(obj) -> str:
    """Serialize nested dict/list structures with 17-digit floats."""
    parts: list = []
    _dump_value(obj, parts)
    return "".join(parts)


def save_stage_one(data: StageOneData, path) -> None:
    """Write the individual-level sample as CSV with header z1..zp,x."""
    header = [f"z{j + 1}" for j in range(data.p)] + ["x"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n1):
            row = [format_float(v) for v in data.z1[i]]
            row.append(format_float(data.x1[i]))
            writer.writerow(row)


def load_stage_one(path) -> StageOneData:
    """Read an individual-level sample from CSV written by ``save_stage_one``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        p = len(header) - 1
        if p < 1 or header[-1] != "x" or header[:-1] != [f"z{j + 1}" for j in range(p)]:
            raise ParseError(f"{path}: header must be z1..zp,x, got {header!r}")
        z_rows = []
        x_vals = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise ParseError(
                    f"{path}:{lineno}: expected {p + 1} cells, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: unparseable cell in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{lineno}: non-finite cell in {row!r}")
            z_rows.append(vals[:-1])
            x_vals.append(vals[-1])
    if not z_rows:
        raise EmptyData(f"{path}: no data rows")
    return StageOneData(np.array(z_rows), np.array(x_vals))


_SUMMARY_KEYS = {"n2", "p", "s_zz", "s_zy", "s_yy"}


def save_summary(stats: SummaryStats, path) -> None:
    """Write summary statistics as JSON; s_zz is stored flat in row-major order."""
    doc = {
        "n2": stats.n2,
        "p": stats.p,
        "s_zz": stats.s_zz.reshape(-1),
        "s_zy": stats.s_zy,
        "s_yy": stats.s_yy,
    }
    with open(path, "w") as fh:
        fh.write(dumps_json(doc))
        fh.write("\n")


def load_summary(path) -> SummaryStats:
    """Read summary statistics from JSON written by ``save_summary``.

    The document must carry exactly the keys n2, p, s_zz, s_zy, s_yy.
    Unknown keys are rejected rather than ignored so that typos surface
    immediately.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top-level JSON value must be an object")
    keys = set(doc)
    if keys != _SUMMARY_KEYS:
        extra = sorted(keys - _SUMMARY_KEYS)
        missing = sorted(_SUMMARY_KEYS - keys)
        raise SchemaError(
            f"{path}: summary keys mismatch (extra={extra}, missing={missing})"
        )
    try:
        n2 = int(doc["n2"])
        p = int(doc["p"])
        s_zz = np.asarray(doc["s_zz"], dtype=np.float64)
        s_zy = np.asarray(doc["s_zy"], dtype=np.float64)
        s_yy = float(doc["s_yy"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: unparseable summary field ({exc})") from None
    if s_zz.ndim != 1 or s_zz.shape[0] != p * p:
        raise SchemaError(
            f"{path}: s_zz must hold p*p={p * p} values row-major, got {s_zz.shape}"
        )
    if s_zy.ndim != 1 or s_zy.shape[0] != p:
        raise SchemaError(f"{path}: s_zy must hold p={p} values, got {s_zy.shape}")
    return SummaryStats(s_zz.reshape(p, p), s_zy, s_yy, n2)

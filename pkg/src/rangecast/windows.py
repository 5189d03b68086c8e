"""OHLCV ingestion, chronological splitting and per-window normalization.

Every window is expressed relative to its own first value,
``n_i = p_i / p_0 - 1``, and mapped back with ``p_i = p_0 * (n_i + 1)``.
Each feature column uses its own base ``p_0``.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import numpy as np

from .numeric import ParameterError

REQUIRED_COLUMNS = ("date", "open", "high", "low", "close", "volume")
OPTIONAL_COLUMNS = ("market_cap",)
FEATURES = ("open", "high", "low", "close", "volume", "market_cap")
DEFAULT_FEATURES = ("close", "volume")

# Tried in order after ISO-8601.
DATE_FORMATS = ("%b %d, %Y", "%B %d, %Y", "%d %b %Y", "%m/%d/%Y")


class SchemaError(ValueError):
    """A required CSV column is missing."""


class DataError(ValueError):
    """A CSV row is malformed or violates a record invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class OhlcvRecord:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float
    market_cap: float | None = None


@dataclass(frozen=True)
class RawSeries:
    asset: str
    records: tuple

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name not in FEATURES:
            raise ParameterError(f"unknown feature {name!r}; expected one of {FEATURES}")
        vals = [getattr(r, name) for r in self.records]
        if any(v is None for v in vals):
            raise ParameterError(f"feature {name!r} is missing for some records in {self.asset}")
        return np.array(vals, dtype=np.float64)

    def matrix(self, features=DEFAULT_FEATURES) -> np.ndarray:
        """``(len, n_features)`` array of raw values."""
        return np.column_stack([self.column(f) for f in features]) if self.records else np.empty((0, len(features)))

    @property
    def dates(self) -> list:
        return [r.date for r in self.records]


def _header_key(name: str) -> str:
    key = re.sub(r"[^a-z]", "", name.lower())
    return "market_cap" if key == "marketcap" else key


def _parse_number(text: str) -> float:
    cleaned = re.sub(r"[,$€£\s]", "", text)
    if cleaned in ("", "-"):
        raise ValueError(f"empty numeric field {text!r}")
    v = float(cleaned)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def parse_date(text: str) -> date:
    text = text.strip().strip('"')
    try:
        return date.fromisoformat(text[:10])
    except ValueError:
        pass
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognised date {text!r}")


def parse_csv(stream, asset: str = "asset") -> RawSeries:
    """Read an OHLCV CSV into a validated, date-sorted :class:`RawSeries`.

    Header names are matched case-insensitively after dropping everything
    but letters, so ``Close**`` and ``Market Cap`` are understood. Thousands
    separators and currency symbols in numeric fields are stripped. Extra
    columns are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("CSV is empty; a header row is required") from None
    index = {}
    for pos, name in enumerate(header):
        index.setdefault(_header_key(name), pos)
    missing = [c for c in REQUIRED_COLUMNS if c not in index]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    records = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            fields = {c: row[index[c]] for c in REQUIRED_COLUMNS}
            d = parse_date(fields["date"])
            nums = {c: _parse_number(fields[c]) for c in REQUIRED_COLUMNS[1:]}
            cap = None
            if "market_cap" in index and index["market_cap"] < len(row) and row[index["market_cap"]].strip():
                cap = _parse_number(row[index["market_cap"]])
        except (IndexError, ValueError) as exc:
            raise DataError(f"cannot parse row: {exc}", line) from None
        if nums["close"] <= 0:
            raise DataError(f"close must be positive, got {nums['close']}", line)
        if nums["volume"] < 0 or (cap is not None and cap < 0):
            raise DataError("volume and market cap must be non-negative", line)
        lo, hi = nums["low"], nums["high"]
        if not lo <= min(nums["open"], nums["close"]) <= max(nums["open"], nums["close"]) <= hi:
            raise DataError("expected low <= open, close <= high", line)
        if d in records:
            raise DataError(f"duplicate date {d.isoformat()}", line)
        records[d] = OhlcvRecord(d, nums["open"], hi, lo, nums["close"], nums["volume"], cap)
    return RawSeries(asset, tuple(records[d] for d in sorted(records)))


def load_csv(path, asset: str | None = None) -> RawSeries:
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        return parse_csv(fh, asset or path.stem)


def split(series: RawSeries, train_fraction: float = 0.8) -> tuple[RawSeries, RawSeries]:
    """Chronological split at ``floor(len * train_fraction)``."""
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    # The epsilon absorbs representation error, e.g. 0.29 * 100 = 28.999999999999996.
    cut = int(math.floor(len(series) * train_fraction + 1e-9))
    return RawSeries(series.asset, series.records[:cut]), RawSeries(series.asset, series.records[cut:])


def normalize(p, p0):
    return np.asarray(p, dtype=np.float64) / p0 - 1.0


def denormalize(n, p0):
    """Inverse of :func:`normalize`: ``p0 * (n + 1)``."""
    p0_arr = np.asarray(p0, dtype=np.float64)
    if np.any(p0_arr <= 0):
        raise ParameterError(f"base value must be positive, got {p0}")
    out = p0_arr * (np.asarray(n, dtype=np.float64) + 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Window:
    features: np.ndarray  # (window_len, n_features), normalized
    target: np.ndarray  # (horizon,), normalized target feature
    p0: np.ndarray  # (n_features,), raw base values
    start_index: int


@dataclass(frozen=True)
class WindowSet:
    windows: tuple
    window_len: int
    horizon: int
    feature_names: tuple
    target_feature: str = "close"

    def __len__(self) -> int:
        return len(self.windows)

    def features_array(self) -> np.ndarray:
        if not self.windows:
            return np.empty((0, self.window_len, len(self.feature_names)))
        return np.stack([w.features for w in self.windows])

    def targets_array(self) -> np.ndarray:
        if not self.windows:
            return np.empty((0, self.horizon))
        return np.stack([w.target for w in self.windows])

    def p0_array(self) -> np.ndarray:
        return np.stack([w.p0 for w in self.windows])

    @property
    def target_column(self) -> int:
        return self.feature_names.index(self.target_feature)


def window_count(length: int, window_len: int, horizon: int) -> int:
    return max(length - window_len - horizon + 1, 0)


def windows_from_array(
    values, window_len: int, horizon: int = 1, feature_names=DEFAULT_FEATURES, target_feature: str = "close"
) -> WindowSet:
    """Stride-1 windows over a raw ``(len, n_features)`` array."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    feature_names = tuple(feature_names)
    if values.shape[1] != len(feature_names):
        raise ParameterError(f"{values.shape[1]} columns but {len(feature_names)} feature names")
    if target_feature not in feature_names:
        raise ParameterError(f"target feature {target_feature!r} not among {feature_names}")
    if window_len < 1 or horizon < 1:
        raise ParameterError("window_len and horizon must be >= 1")
    need = window_len + horizon
    if len(values) < need:
        raise ParameterError(f"series has {len(values)} points; window_len + horizon requires at least {need}")
    tc = feature_names.index(target_feature)
    out = []
    for s in range(window_count(len(values), window_len, horizon)):
        chunk = values[s : s + need]
        p0 = chunk[0].copy()
        if np.any(p0 <= 0):
            bad = [feature_names[j] for j in np.flatnonzero(p0 <= 0)]
            raise ParameterError(f"window at {s} has non-positive base value for {bad}")
        n = normalize(chunk, p0)
        out.append(Window(n[:window_len], n[window_len:, tc].copy(), p0, s))
    return WindowSet(tuple(out), window_len, horizon, feature_names, target_feature)


def make_windows(series: RawSeries, window_len: int, horizon: int = 1, features=DEFAULT_FEATURES) -> WindowSet:
    features = tuple(features)
    if len(series) < window_len + horizon:
        raise ParameterError(
            f"{series.asset} has {len(series)} records; window_len + horizon requires at least {window_len + horizon}"
        )
    return windows_from_array(series.matrix(features), window_len, horizon, features)

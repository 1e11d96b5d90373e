"""File formats, trip aggregation and synthetic seasonal data.

DNT (dense numeric tensor) layout, all little-endian::

    b"DNT1" | order: uint8 (1..4) | dims: order x uint64 | payload: prod(dims) x float64 (row-major)

Nothing may follow the payload.
"""

import csv
import math
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy import signal

from convkernel import rng
from convkernel.kernels import SeriesBundle
from convkernel.tensor import MAX_ORDER, as_tensor

DNT_MAGIC = b"DNT1"
HOUR = timedelta(hours=1)


class FormatError(ValueError):
    pass


def write_dnt(path, t):
    t = as_tensor(t)
    with open(path, "wb") as fh:
        fh.write(DNT_MAGIC)
        fh.write(struct.pack("<B", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        fh.write(t.astype("<f8", copy=False).tobytes(order="C"))


def read_dnt(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DNT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {DNT_MAGIC!r}")
    if len(blob) < 5:
        raise FormatError(f"{path}: truncated header")
    order = blob[4]
    if not 1 <= order <= MAX_ORDER:
        raise FormatError(f"{path}: order {order} outside 1..{MAX_ORDER}")
    head = 5 + 8 * order
    if len(blob) < head:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f"<{order}Q", blob[5:head])
    if 0 in dims:
        raise FormatError(f"{path}: zero dimension in {dims}")
    count = math.prod(dims)
    payload = len(blob) - head
    if count > payload // 8 + 1:
        raise FormatError(f"{path}: dims {dims} exceed the file size")
    if payload < 8 * count:
        raise FormatError(f"{path}: truncated payload ({payload} bytes, need {8 * count})")
    if payload > 8 * count:
        raise FormatError(f"{path}: {payload - 8 * count} trailing bytes after payload")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=head).astype(np.float64)
    return data.reshape(dims)


def _parse_float(cell, row, col, path):
    try:
        return float(cell)
    except ValueError:
        raise FormatError(f"{path}: non-numeric cell {cell!r} at row {row}, column {col}") from None


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_matrix(path):
    """Rectangular numeric CSV; a first row containing any non-numeric cell is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
        first = 2
    else:
        first = 1
    if not rows:
        raise FormatError(f"{path}: no numeric rows")
    width = len(rows[0])
    out = []
    for i, r in enumerate(rows, start=first):
        if len(r) != width:
            raise FormatError(f"{path}: row {i} has {len(r)} cells, expected {width}")
        out.append([_parse_float(c.strip(), i, j, path) for j, c in enumerate(r, start=1)])
    return np.array(out, dtype=np.float64)


def read_csv_series(path, layout="univariate"):
    """Read series from CSV.

    ``univariate`` accepts a single row or a single column; ``rows-are-series``
    returns an ``N x T`` multivariate bundle.
    """
    X = read_csv_matrix(path)
    if layout == "univariate":
        if X.shape[0] != 1 and X.shape[1] != 1:
            raise FormatError(f"{path}: univariate layout needs one row or one column, got {X.shape}")
        return SeriesBundle("univariate", X.ravel())
    if layout == "rows-are-series":
        return SeriesBundle("multivariate", X)
    raise ValueError(f"unknown CSV layout {layout!r}")


def parse_timestamp(text):
    """RFC 3339 / ISO 8601 timestamp as an aware UTC datetime; naive means UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class TripRecord:
    pickup_zone: int
    dropoff_zone: int
    pickup_time: datetime


@dataclass
class TripStats:
    accepted: int = 0
    skipped: int = 0
    malformed: int = 0


def aggregate_trips(records, zones, start, hours, dropoff_zones=None, stats=None):
    """Hourly origin-destination counts, shape ``zones x dropoff_zones x hours``.

    Bucket ``t`` covers ``[start + t h, start + (t+1) h)``; trips outside the
    window are counted in ``stats.skipped``. Zone ids must lie in ``[0, zones)``.
    """
    N = zones if dropoff_zones is None else dropoff_zones
    if zones < 1 or N < 1 or hours < 1:
        raise ValueError("zones and hours must be positive")
    start = parse_timestamp(start) if isinstance(start, str) else start
    if start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    stats = stats if stats is not None else TripStats()
    counts = np.zeros((zones, N, hours), dtype=np.int64)
    for rec in records:
        if not 0 <= rec.pickup_zone < zones:
            raise ValueError(f"pickup zone {rec.pickup_zone} outside [0, {zones})")
        if not 0 <= rec.dropoff_zone < N:
            raise ValueError(f"dropoff zone {rec.dropoff_zone} outside [0, {N})")
        bucket = (rec.pickup_time - start) // HOUR
        if 0 <= bucket < hours:
            counts[rec.pickup_zone, rec.dropoff_zone, bucket] += 1
            stats.accepted += 1
        else:
            stats.skipped += 1
    return counts.astype(np.float64)


TRIP_COLUMNS = {"pickup_zone": "PULocationID", "dropoff_zone": "DOLocationID", "pickup_time": "pickup_datetime"}


def read_trip_csv(path, columns=None, zone_offset=0, stats=None):
    """Yield :class:`TripRecord` rows from a trip CSV (NYC TLC column names by default).

    Rows with missing or unparsable fields are counted in ``stats.malformed``
    and skipped; ``zone_offset`` is subtracted from zone ids (1 for TLC ids).
    """
    cols = dict(TRIP_COLUMNS, **(columns or {}))
    stats = stats if stats is not None else TripStats()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in cols.values() if c not in (reader.fieldnames or [])]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        for row in reader:
            try:
                rec = TripRecord(
                    int(row[cols["pickup_zone"]]) - zone_offset,
                    int(row[cols["dropoff_zone"]]) - zone_offset,
                    parse_timestamp(row[cols["pickup_time"]]),
                )
            except (TypeError, ValueError):
                stats.malformed += 1
                continue
            yield rec


def _profile(period, coeffs, phases, t):
    s = 2.0 * np.pi * t / period
    out = np.cos(s)
    for h, (c, p) in enumerate(zip(coeffs, phases), start=2):
        out = out + c * np.cos(h * s + p)
    return out


def synth_seasonal(shape, components, noise_sigma=0.0, seed=0, rank=None, noise_ar=0.0):
    """Synthetic seasonal data with time on the last axis.

    Without ``rank``: every series is ``sum_c amplitude_c * scale * profile_c(t + phase)``
    plus Gaussian noise, where ``profile_c`` is a smooth period-``P_c`` shape
    (a cosine plus two weaker harmonics shared by all series) and each series
    draws its own scale in ``[0.5, 1.5)`` and integer phase in ``[0, P_c)``.
    A series is exactly periodic with ``P_c`` only when ``P_c`` divides ``T``.

    With ``rank=R`` (third-order shape only) the noiseless part is a sum of
    ``R`` outer products ``a_r o b_r o c_r``: ``a_r, b_r`` uniform in
    ``[0, 1)`` and ``c_r(t) = sum_c amplitude_c cos(2 pi (r+1) t / P_c + phi_rc)``,
    so its CP rank is at most ``R``.

    Noise is Gaussian with standard deviation ``noise_sigma``. ``noise_ar``
    in ``[0, 1)`` makes it a stationary AR(1) process along time with that
    lag-1 correlation (the first sample is drawn from the stationary law).
    """
    shape = tuple(int(s) for s in shape)
    T = shape[-1]
    comps = [(int(p), float(a)) for p, a in components]
    for p, _ in comps:
        if not 1 <= p < T:
            raise ValueError(f"period {p} must lie in [1, {T})")
    if rank is None:
        needed = len(comps) * (4 + 2 * math.prod(shape[:-1]))
    else:
        needed = (sum(shape[:-1]) + len(comps)) * int(rank)
    u = rng.uniform(seed, needed, rng.SYNTH_STREAM)
    pos = 0

    def take(n):
        nonlocal pos
        out = u[pos : pos + n]
        pos += n
        return out

    t = np.arange(T, dtype=np.float64)
    if rank is None:
        n_series = math.prod(shape[:-1])
        X = np.zeros((n_series, T))
        for p, a in comps:
            coeffs = 0.5 * take(2)
            phases = 2.0 * np.pi * take(2)
            scale = 0.5 + take(n_series)
            shift = np.floor(take(n_series) * p)
            X += a * scale[:, None] * _profile(p, coeffs, phases, t[None, :] + shift[:, None])
        X = X.reshape(shape)
    else:
        if len(shape) != 3:
            raise ValueError("the low-rank construction needs a third-order shape")
        M, N, _ = shape
        A = take(M * rank).reshape(M, rank)
        B = take(N * rank).reshape(N, rank)
        C = np.zeros((T, rank))
        for r in range(rank):
            for p, a in comps:
                C[:, r] += a * np.cos(2.0 * np.pi * (r + 1) * t / p + 2.0 * np.pi * take(1)[0])
        X = np.einsum("ir,jr,kr->ijk", A, B, C)
    if not 0.0 <= noise_ar < 1.0:
        raise ValueError(f"noise_ar must lie in [0, 1), got {noise_ar}")
    if noise_sigma:
        e = rng.normal(seed, X.size, rng.NOISE_STREAM).reshape(X.shape)
        if noise_ar:
            tail = signal.lfilter([math.sqrt(1.0 - noise_ar**2)], [1.0, -noise_ar], e[..., 1:], axis=-1,
                                  zi=noise_ar * e[..., :1])[0]
            e = np.concatenate([e[..., :1], tail], axis=-1)
        X = X + noise_sigma * e
    return np.ascontiguousarray(X)

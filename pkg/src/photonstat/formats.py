"""File formats owned by the command-line tools.

Timestamp records use a fixed 64-byte text header
``#photonstat-ts v1 <n_events> <mode> <comment>`` followed by either text
lines ``<picoseconds> <A|B>`` or little-endian binary records of an
unsigned 64-bit picosecond stamp plus one channel byte.  Photocount
series and curve files are plain text with ``#`` header lines carrying
the tool version and the configuration/input digests, so identical
inputs reproduce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .simulate import TimestampRecord
from .stats import G2Curve, MandelCurve
from .sync import PhotocountSeries

__all__ = [
    "digest_bytes",
    "digest_file",
    "digest_config",
    "write_timestamps",
    "read_timestamps",
    "write_series",
    "read_series",
    "write_curve",
    "read_curve",
    "write_report",
    "read_report",
]

TS_MAGIC = "#photonstat-ts v1"
SERIES_MAGIC = "#photonstat-series v1"
CURVE_MAGIC = "#photonstat-curve v1"
HEADER_BYTES = 64
_CHANNEL_NAMES = np.array(["A", "B"])


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:8]


def digest_file(path) -> str:
    return digest_bytes(Path(path).read_bytes())


def digest_config(items: dict) -> str:
    canon = ";".join(f"{k}={items[k]}" for k in sorted(items))
    return digest_bytes(canon.encode())


def _provenance(config_digest: str | None, input_digest: str | None) -> str:
    return (
        f"{__version__} c:{config_digest or '-'} i:{input_digest or '-'}"
    )


def write_timestamps(
    path,
    record: TimestampRecord,
    mode: str = "binary",
    config_digest: str | None = None,
    input_digest: str | None = None,
) -> None:
    """Write a timestamp record; ``mode`` is "text" or "binary"."""
    if mode not in ("text", "binary"):
        raise ValidationError(f"mode must be 'text' or 'binary', got {mode!r}")
    header = (
        f"{TS_MAGIC} {record.times.size} {mode} "
        f"{_provenance(config_digest, input_digest)}"
    )
    if len(header) > HEADER_BYTES - 1:
        header = header[: HEADER_BYTES - 1]
    header = header.ljust(HEADER_BYTES - 1) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if mode == "text":
            lines = [
                f"{t} {c}\n"
                for t, c in zip(
                    record.times.tolist(), _CHANNEL_NAMES[record.channels].tolist()
                )
            ]
            fh.write("".join(lines).encode("ascii"))
        else:
            raw = np.empty(record.times.size, dtype=[("t", "<u8"), ("ch", "u1")])
            raw["t"] = record.times.astype(np.uint64)
            raw["ch"] = record.channels
            fh.write(raw.tobytes())


def read_timestamps(path) -> TimestampRecord:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES).decode("ascii", errors="replace")
        parts = header.split()
        if len(parts) < 4 or " ".join(parts[:2]) != TS_MAGIC:
            raise ValidationError(f"{path}: not a photonstat timestamp file")
        n_events = int(parts[2])
        mode = parts[3]
        if mode == "text":
            times = np.empty(n_events, dtype=np.int64)
            channels = np.empty(n_events, dtype=np.uint8)
            for i in range(n_events):
                fields = fh.readline().split()
                times[i] = int(fields[0])
                channels[i] = 0 if fields[1] == b"A" else 1
        elif mode == "binary":
            raw = np.frombuffer(
                fh.read(9 * n_events), dtype=[("t", "<u8"), ("ch", "u1")]
            )
            if raw.size != n_events:
                raise ValidationError(f"{path}: truncated binary payload")
            times = raw["t"].astype(np.int64)
            channels = raw["ch"].astype(np.uint8)
        else:
            raise ValidationError(f"{path}: unknown mode {mode!r}")
    return TimestampRecord(times=times, channels=channels)


def write_series(
    path,
    series: PhotocountSeries,
    config_digest: str | None = None,
    input_digest: str | None = None,
) -> None:
    """Sparse text series: pulses with zero counts are omitted."""
    occupied = np.flatnonzero(series.counts)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{SERIES_MAGIC}\n")
        fh.write(
            f"# n_pulses={series.n_pulses} tau_rep={series.tau_rep:.15e} "
            f"window={series.window:.9e}\n"
        )
        fh.write(f"# tool={_provenance(config_digest, input_digest)}\n")
        counts = series.counts[occupied]
        fh.write(
            "".join(
                f"{p} {c}\n" for p, c in zip(occupied.tolist(), counts.tolist())
            )
        )


def read_series(path) -> PhotocountSeries:
    meta: dict[str, float] = {}
    pulses, values = [], []
    with open(path, encoding="ascii") as fh:
        magic = fh.readline().strip()
        if magic != SERIES_MAGIC:
            raise ValidationError(f"{path}: not a photonstat series file")
        for line in fh:
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, val = token.partition("=")
                        meta[key] = val
                continue
            fields = line.split()
            if fields:
                pulses.append(int(fields[0]))
                values.append(int(fields[1]))
    try:
        n_pulses = int(meta["n_pulses"])
        tau_rep = float(meta["tau_rep"])
        window = float(meta["window"])
    except KeyError as exc:
        raise ValidationError(f"{path}: missing header field {exc}") from exc
    counts = np.zeros(n_pulses, dtype=np.uint8)
    if pulses:
        counts[np.asarray(pulses)] = np.asarray(values, dtype=np.uint8)
    return PhotocountSeries(
        counts=counts, n_pulses=n_pulses, window=window, tau_rep=tau_rep
    )


def write_curve(
    path,
    curve: MandelCurve | G2Curve,
    tau_rep: float | None = None,
    n_pulses: int | None = None,
    config_digest: str | None = None,
    input_digest: str | None = None,
) -> None:
    """Delimited text, one row per point:
    m_pulses, t_seconds, value, std_error, n_samples."""
    if isinstance(curve, MandelCurve):
        kind = "mandel"
        cols = zip(
            curve.m_pulses.tolist(),
            curve.t_seconds.tolist(),
            curve.q_values.tolist(),
            curve.std_errors.tolist(),
            curve.n_samples.tolist(),
        )
    else:
        kind = "g2"
        if tau_rep is None:
            raise ValidationError("tau_rep is required to serialize a G2 curve")
        pairs = (
            (n_pulses - curve.lags).tolist()
            if n_pulses is not None
            else [0] * curve.lags.size
        )
        cols = zip(
            curve.lags.tolist(),
            (curve.lags * tau_rep).tolist(),
            curve.g2_values.tolist(),
            curve.std_errors.tolist(),
            pairs,
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"{CURVE_MAGIC} kind={kind} "
            f"tool={_provenance(config_digest, input_digest)}\n"
        )
        fh.write("# m_pulses t_seconds value std_error n_samples\n")
        # repr-style floats so curves round-trip losslessly
        for m, t, v, e, ns in cols:
            fh.write(f"{m} {t!r} {v!r} {e!r} {ns}\n")


def read_curve(path):
    """Read a curve file back; returns (kind, MandelCurve | G2Curve, tau_rep)."""
    kind = None
    rows = []
    with open(path, encoding="ascii") as fh:
        head = fh.readline().split()
        if len(head) < 3 or " ".join(head[:2]) != CURVE_MAGIC:
            raise ValidationError(f"{path}: not a photonstat curve file")
        for token in head[2:]:
            if token.startswith("kind="):
                kind = token[5:]
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            m, t, v, e, ns = line.split()
            rows.append((int(m), float(t), float(v), float(e), int(ns)))
    if kind not in ("mandel", "g2"):
        raise ValidationError(f"{path}: unknown curve kind {kind!r}")
    if not rows:
        raise ValidationError(f"{path}: empty curve")
    m, t, v, e, ns = (np.asarray(col) for col in zip(*rows))
    tau_rep = float(t[0] / m[0])
    if kind == "mandel":
        curve = MandelCurve(
            m_pulses=m.astype(np.int64),
            t_seconds=t,
            q_values=v,
            std_errors=e,
            n_samples=ns.astype(np.int64),
        )
        return kind, curve, tau_rep
    curve = G2Curve(lags=m.astype(np.int64), g2_values=v, std_errors=e)
    return kind, curve, tau_rep


def write_report(path, items: dict) -> None:
    """Key-value text report, one ``key = value`` per line."""
    with open(path, "w", encoding="ascii") as fh:
        for key, value in items.items():
            fh.write(f"{key} = {value}\n")


def read_report(path) -> dict:
    out: dict[str, str] = {}
    with open(path, encoding="ascii") as fh:
        for line in fh:
            if line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out

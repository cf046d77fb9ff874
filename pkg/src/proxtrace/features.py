"""Contact logs to labeled feature rows.

A row summarises the packets one receiver heard from one sender during an
observation window: packet count, mean/max/min RSS and the RSS range.  The
label is +1 (high risk) when the window's median ground-truth distance is
below the distancing threshold, else -1.
"""
from __future__ import annotations

import bisect
import csv
import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataFormatError
from .radio import moving_average

log = logging.getLogger(__name__)

FEATURE_NAMES = ("n_samples", "mean_rss", "max_rss", "min_rss", "rss_range")
LOG_COLUMNS = ("distance_m", "device_name", "mac", "payload_hex", "rss_dbm", "elapsed_ms", "timestamp_ms")
HIGH_RISK, LOW_RISK = 1, -1


@dataclass(frozen=True)
class Observation:
    """One logged packet.  ``distance_m`` is ground truth when known."""

    rss_dbm: float
    timestamp_ms: float
    distance_m: float | None = None
    device_name: str = ""
    mac: str = ""
    payload_hex: str = ""
    elapsed_ms: float | None = None


@dataclass(frozen=True)
class FeatureVector:
    n_samples: int
    mean_rss: float
    max_rss: float
    min_rss: float
    rss_range: float
    label: int | None = None
    window_start_ms: float | None = None

    def values(self) -> tuple[float, ...]:
        return (self.n_samples, self.mean_rss, self.max_rss, self.min_rss, self.rss_range)

    def with_label(self, label: int) -> "FeatureVector":
        return replace(self, label=label)


@dataclass(frozen=True)
class WindowingPolicy:
    window_ms: float = 10_000
    stride_ms: float = 1_000
    min_samples: int = 1
    # trailing moving-average length applied to RSS before windowing; None = raw
    smooth_window: int | None = None

    def __post_init__(self):
        if not self.window_ms > 0:
            raise ValueError("window_ms must be > 0")
        if not 0 < self.stride_ms <= self.window_ms:
            raise ValueError("need 0 < stride_ms <= window_ms")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass(frozen=True)
class RiskPolicy:
    close_threshold_m: float = 2.0

    def __post_init__(self):
        if not self.close_threshold_m > 0:
            raise ValueError("close_threshold_m must be > 0")


def window_stats(rss: Sequence[float]) -> FeatureVector:
    arr = np.asarray(rss, dtype=float)
    if arr.size == 0:
        raise ValueError("empty window")
    lo, hi = float(arr.min()), float(arr.max())
    # rounding in the sum can push the mean a hair outside [min, max]
    mean = min(max(float(arr.mean()), lo), hi)
    return FeatureVector(int(arr.size), mean, hi, lo, hi - lo)


def _window_bounds(times: Sequence[float], policy: WindowingPolicy, start_ms, end_ms) -> Iterator[tuple[float, int, int]]:
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("entries must be time-ordered")
    s = times[0] if start_ms is None else start_ms
    k = 0
    while True:
        w0 = s + k * policy.stride_ms
        w1 = w0 + policy.window_ms
        if end_ms is None:
            if w0 > times[-1]:
                break
        elif w1 > end_ms:
            break
        yield w0, bisect.bisect_left(times, w0), bisect.bisect_left(times, w1)
        k += 1


def iter_windows(
    entries: Sequence,
    policy: WindowingPolicy,
    start_ms: float | None = None,
    end_ms: float | None = None,
) -> Iterator[tuple[float, Sequence]]:
    """Yield ``(window_start, entries_in_window)`` over time-ordered entries.

    Windows are ``[s, s + window_ms)`` with ``s`` stepping by ``stride_ms``
    from ``start_ms`` (default: first timestamp).  Without ``end_ms`` the
    last window is the one starting at or before the final timestamp; with
    it, only windows lying entirely inside ``[start_ms, end_ms)`` are made.
    """
    entries = list(entries)
    if not entries:
        return
    times = [e.timestamp_ms for e in entries]
    for w0, lo, hi in _window_bounds(times, policy, start_ms, end_ms):
        yield w0, entries[lo:hi]


def extract_features(
    entries: Sequence,
    policy: WindowingPolicy = WindowingPolicy(),
    *,
    start_ms: float | None = None,
    end_ms: float | None = None,
    cap: int | None = None,
) -> list[FeatureVector]:
    """Unlabeled feature rows, one per window holding ``min_samples`` or more packets.

    ``cap`` keeps only the first ``cap`` packets of each window.
    """
    return [fv for fv, _ in _windowed(entries, policy, start_ms, end_ms, cap)]


def _windowed(entries, policy, start_ms, end_ms, cap):
    entries = list(entries)
    if not entries:
        return
    rss = [e.rss_dbm for e in entries]
    if policy.smooth_window:
        rss = moving_average(rss, policy.smooth_window)
    times = [e.timestamp_ms for e in entries]
    for w0, lo, hi in _window_bounds(times, policy, start_ms, end_ms):
        if cap is not None:
            hi = min(hi, lo + cap)
        if hi - lo < policy.min_samples:
            continue
        fv = window_stats(rss[lo:hi])
        yield replace(fv, window_start_ms=w0), entries[lo:hi]


def label_risk(distances: Iterable[float], policy: RiskPolicy = RiskPolicy()) -> int:
    """+1 iff the median ground-truth distance is strictly below the threshold."""
    d = np.asarray(list(distances), dtype=float)
    if d.size == 0:
        raise ValueError("no distances to label")
    return HIGH_RISK if float(np.median(d)) < policy.close_threshold_m else LOW_RISK


def _runs(observations: Sequence[Observation]) -> Iterator[list[Observation]]:
    """Split one link's log into runs of constant ground-truth distance."""
    run: list[Observation] = []
    for ob in observations:
        if run and ob.distance_m != run[-1].distance_m:
            yield run
            run = []
        run.append(ob)
    if run:
        yield run


def _typical_gap(run: Sequence[Observation]) -> float:
    """Median inter-arrival time; a run is taken to last until its next expected packet."""
    if len(run) < 2:
        return 1.0
    gaps = np.diff([o.timestamp_ms for o in run])
    return max(float(np.median(gaps)), 1.0)


def build_dataset(
    observations: Iterable[Observation],
    windowing: WindowingPolicy = WindowingPolicy(),
    risk: RiskPolicy = RiskPolicy(),
    *,
    cap: int | None = None,
) -> list[FeatureVector]:
    """Labeled rows from raw observations.

    Observations are grouped per ``(device_name, mac)`` link, split into runs
    of constant distance, and windowed inside each run so that no window mixes
    two measurement positions.  Only whole windows are kept.
    """
    groups: dict[tuple[str, str], list[Observation]] = {}
    for ob in observations:
        groups.setdefault((ob.device_name, ob.mac), []).append(ob)
    rows: list[FeatureVector] = []
    for key in sorted(groups):
        link = sorted(groups[key], key=lambda o: o.timestamp_ms)
        for run in _runs(link):
            end = run[-1].timestamp_ms + _typical_gap(run)
            for fv, chunk in _windowed(run, windowing, run[0].timestamp_ms, end, cap):
                rows.append(fv.with_label(label_risk((o.distance_m for o in chunk), risk)))
    return rows


@dataclass
class IngestResult:
    observations: list[Observation]
    skipped: list[str]


def _data_lines(fh) -> Iterator[str]:
    for line in fh:
        if not line.startswith("#"):
            yield line


def ingest_log_csv(path, column_map: Mapping[str, str] | None = None) -> IngestResult:
    """Parse a packet log with columns ``distance_m,device_name,mac,payload_hex,rss_dbm,elapsed_ms,timestamp_ms``.

    ``column_map`` maps those names to the file's own headers.  Rows with an
    unparseable number are skipped and reported in ``skipped``.
    """
    column_map = dict(column_map or {})
    with open(path, newline="") as fh:
        reader = csv.DictReader(_data_lines(fh))
        header = set(reader.fieldnames or ())
        cols = {c: column_map.get(c, c) for c in LOG_COLUMNS}
        for canon, actual in cols.items():
            if actual not in header:
                raise DataFormatError(f"{path}: missing column {actual!r}" + (f" (for {canon})" if actual != canon else ""))
        obs: list[Observation] = []
        skipped: list[str] = []
        for lineno, row in enumerate(reader, 2):
            try:
                distance = float(row[cols["distance_m"]])
                rss = float(row[cols["rss_dbm"]])
                ts = float(row[cols["timestamp_ms"]])
                elapsed_raw = row[cols["elapsed_ms"]]
                elapsed = float(elapsed_raw) if elapsed_raw not in ("", None) else None
                if not all(math.isfinite(v) for v in (distance, rss, ts)):
                    raise ValueError("non-finite value")
            except (TypeError, ValueError) as exc:
                msg = f"{path}:{lineno}: {exc}"
                log.warning("skipping row: %s", msg)
                skipped.append(msg)
                continue
            obs.append(
                Observation(
                    rss_dbm=rss,
                    timestamp_ms=ts,
                    distance_m=distance,
                    device_name=row[cols["device_name"]],
                    mac=row[cols["mac"]],
                    payload_hex=row[cols["payload_hex"]],
                    elapsed_ms=elapsed,
                )
            )
    return IngestResult(obs, skipped)


def write_log_csv(observations: Iterable[Observation], path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for o in observations:
            w.writerow([
                repr(o.distance_m), o.device_name, o.mac, o.payload_hex, repr(o.rss_dbm),
                "" if o.elapsed_ms is None else repr(o.elapsed_ms), repr(o.timestamp_ms),
            ])


def write_features_csv(rows: Iterable[FeatureVector], path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_NAMES + ("label",))
        for r in rows:
            w.writerow([r.n_samples, repr(r.mean_rss), repr(r.max_rss), repr(r.min_rss), repr(r.rss_range),
                        "" if r.label is None else r.label])


def read_features_csv(path) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(_data_lines(fh))
        missing = [c for c in FEATURE_NAMES + ("label",) if c not in (reader.fieldnames or ())]
        if missing:
            raise DataFormatError(f"{path}: missing column(s) {missing}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            try:
                label = int(row["label"]) if row["label"] not in ("", None) else None
                if label not in (None, HIGH_RISK, LOW_RISK):
                    raise ValueError(f"label must be +1 or -1, got {label}")
                rows.append(FeatureVector(
                    int(float(row["n_samples"])), float(row["mean_rss"]), float(row["max_rss"]),
                    float(row["min_rss"]), float(row["rss_range"]), label,
                ))
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return rows


def to_matrix(rows: Sequence[FeatureVector], features: Sequence[str] = FEATURE_NAMES) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (columns in ``features`` order) and label vector."""
    idx = [FEATURE_NAMES.index(f) for f in features]
    X = np.array([[r.values()[i] for i in idx] for r in rows], dtype=float).reshape(len(rows), len(idx))
    y = np.array([0 if r.label is None else r.label for r in rows], dtype=int)
    return X, y

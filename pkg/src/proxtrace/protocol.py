"""Per-device exposure-notification protocol and the event loop that drives it.

Each device rotates a 31-byte signature every ``t_gen_ms``, broadcasts the
current one every ``t_adv_ms`` and listens during scan windows of
``t_window_ms`` out of every ``t_scan_ms``.  Received packets go to an
append-only contact log.  A diagnosed device publishes its own past
signatures; every other device matches them against its log locally.
"""
from __future__ import annotations

import bisect
import csv
import enum
import heapq
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ScenarioError
from .radio import ChannelParams, Geometry, Link

PAYLOAD_LEN = 31
DAY_MS = 86_400_000
# agents closer than this are treated as touching; keeps log10(d) finite
MIN_DISTANCE_M = 0.1


class EventKind(enum.IntEnum):
    # value doubles as the tie-break order for simultaneous events
    GENERATE = 0
    SCAN_CLOSE = 1
    ADVERTISE = 2
    SCAN_OPEN = 3


@dataclass(frozen=True)
class Signature:
    payload: bytes
    generated_at_ms: int
    valid_for_ms: int

    def __post_init__(self):
        if len(self.payload) != PAYLOAD_LEN:
            raise ValueError(f"signature payload must be {PAYLOAD_LEN} bytes, got {len(self.payload)}")


@dataclass(frozen=True)
class ProtocolTimings:
    t_gen_ms: int = 600_000
    t_adv_ms: int = 100
    t_scan_ms: int = 1000
    t_window_ms: int = 500

    def __post_init__(self):
        if self.t_adv_ms <= 0:
            raise ValueError("t_adv_ms must be > 0")
        if not 0 < self.t_window_ms <= self.t_scan_ms:
            raise ValueError("need 0 < t_window_ms <= t_scan_ms")
        if self.t_gen_ms < self.t_adv_ms:
            raise ValueError("t_gen_ms must be >= t_adv_ms")

    @property
    def continuous(self) -> bool:
        return self.t_window_ms == self.t_scan_ms


@dataclass(frozen=True)
class ContactLogEntry:
    observed_payload: bytes
    rss_dbm: float
    timestamp_ms: float


@dataclass
class DeviceState:
    device_id: str
    timings: ProtocolTimings = field(default_factory=ProtocolTimings)
    retention_days: float = 14
    adv_offset_ms: int = 0
    scan_offset_ms: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    own_signatures: list[Signature] = field(default_factory=list, repr=False)
    contact_log: list[ContactLogEntry] = field(default_factory=list, repr=False)
    malformed: int = 0
    dropped: int = 0

    @property
    def retention_ms(self) -> float:
        return self.retention_days * DAY_MS

    @property
    def current_signature(self) -> Signature | None:
        return self.own_signatures[-1] if self.own_signatures else None

    def in_scan_window(self, t_ms: float) -> bool:
        tm = self.timings
        if tm.continuous:
            return True
        return (t_ms - self.scan_offset_ms) % tm.t_scan_ms < tm.t_window_ms

    def prune(self, now_ms: float) -> None:
        """Drop signatures and log entries older than the retention window."""
        cutoff = now_ms - self.retention_ms
        self.own_signatures = [s for s in self.own_signatures if s.generated_at_ms > cutoff]
        # log is time-ordered
        keep = bisect.bisect_right([e.timestamp_ms for e in self.contact_log], cutoff)
        if keep:
            del self.contact_log[:keep]


@dataclass(frozen=True)
class InfectedBundle:
    signatures: tuple[Signature, ...] = ()

    @property
    def payloads(self) -> frozenset[bytes]:
        return frozenset(s.payload for s in self.signatures)

    def to_text(self) -> str:
        return "".join(
            f"{s.payload.hex()},{s.generated_at_ms},{s.valid_for_ms}\n" for s in self.signatures
        )

    @classmethod
    def from_text(cls, text: str) -> "InfectedBundle":
        sigs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise DataFormatError(f"bundle line {lineno}: expected 3 fields")
            try:
                payload = bytes.fromhex(parts[0])
                sigs.append(Signature(payload, int(parts[1]), int(parts[2])))
            except ValueError as exc:
                raise DataFormatError(f"bundle line {lineno}: {exc}") from None
        return cls(tuple(sigs))

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "InfectedBundle":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class ExposureMatch:
    payload: bytes
    first_seen_ms: float
    last_seen_ms: float
    n_samples: int


def generate_signature(device: DeviceState, now_ms: int, rng: np.random.Generator | None = None) -> Signature:
    rng = device.rng if rng is None else rng
    prev = device.current_signature
    payload = rng.bytes(PAYLOAD_LEN)
    while prev is not None and payload == prev.payload:
        payload = rng.bytes(PAYLOAD_LEN)
    sig = Signature(payload, int(now_ms), device.timings.t_gen_ms)
    device.own_signatures.append(sig)
    device.prune(now_ms)
    return sig


def next_events(device: DeviceState, horizon_ms: int, start_ms: int = 0) -> list[tuple[int, EventKind]]:
    """Schedule of one device on ``[start_ms, start_ms + horizon_ms)``.

    Advertisements that would fall inside the device's own open scan window
    are pushed to the window's close; several pushed to the same instant go
    out once.  With continuous scanning (window == interval) the radio
    interleaves instead and advertisements keep their nominal times.
    """
    if horizon_ms <= 0:
        raise ValueError("horizon_ms must be > 0")
    tm = device.timings
    end = start_ms + horizon_ms
    events: list[tuple[int, EventKind]] = []

    def grid(offset: int, period: int):
        k = math.ceil((start_ms - offset) / period)
        t = offset + k * period
        while t < end:
            yield t
            t += period

    for t in grid(0, tm.t_gen_ms):
        events.append((t, EventKind.GENERATE))

    # include the window already open at start_ms
    for t in grid(device.scan_offset_ms, tm.t_scan_ms):
        events.append((t, EventKind.SCAN_OPEN))
        if t + tm.t_window_ms < end:
            events.append((t + tm.t_window_ms, EventKind.SCAN_CLOSE))
    first_open = device.scan_offset_ms + math.ceil((start_ms - device.scan_offset_ms) / tm.t_scan_ms) * tm.t_scan_ms
    prev_close = first_open - tm.t_scan_ms + tm.t_window_ms
    if start_ms < prev_close < end:
        events.append((prev_close, EventKind.SCAN_CLOSE))

    adv_times = set()
    for t in grid(device.adv_offset_ms, tm.t_adv_ms):
        if not tm.continuous and device.in_scan_window(t):
            phase = (t - device.scan_offset_ms) % tm.t_scan_ms
            t = t - phase + tm.t_window_ms
            if t >= end:
                continue
        adv_times.add(t)
    events.extend((t, EventKind.ADVERTISE) for t in adv_times)

    events.sort()
    return events


def receive(device: DeviceState, payload: bytes, rss_dbm: float, now_ms: float) -> ContactLogEntry | None:
    if len(payload) != PAYLOAD_LEN:
        device.malformed += 1
        return None
    if not device.in_scan_window(now_ms):
        device.dropped += 1
        return None
    log = device.contact_log
    if log and now_ms < log[-1].timestamp_ms:
        raise ScenarioError("contact log must stay time-ordered")
    entry = ContactLogEntry(bytes(payload), float(rss_dbm), now_ms)
    log.append(entry)
    return entry


def publish_infected(device: DeviceState, now_ms: float) -> InfectedBundle:
    cutoff = now_ms - device.retention_ms
    return InfectedBundle(tuple(s for s in device.own_signatures if s.generated_at_ms > cutoff))


def match_exposure(device: DeviceState, bundle: InfectedBundle) -> list[ExposureMatch]:
    wanted = bundle.payloads
    if not wanted:
        return []
    hits: dict[bytes, list[float]] = {}
    for entry in device.contact_log:
        if entry.observed_payload in wanted:
            hits.setdefault(entry.observed_payload, []).append(entry.timestamp_ms)
    matches = [ExposureMatch(p, ts[0], ts[-1], len(ts)) for p, ts in hits.items()]
    matches.sort(key=lambda m: (m.first_seen_ms, m.payload))
    return matches


class Trajectory:
    """Piecewise-linear 2-D position track.

    Knots are ``(t_ms, x_m, y_m)``.  Two knots at the same time encode a jump;
    the later knot wins from that instant on.
    """

    def __init__(self, knots: Iterable[Sequence[float]]):
        pts = sorted(((float(t), float(x), float(y)) for t, x, y in knots), key=lambda k: k[0])
        if not pts:
            raise ScenarioError("trajectory needs at least one knot")
        self.knots = pts
        self._times = [k[0] for k in pts]

    @classmethod
    def static(cls, x: float, y: float = 0.0, start_ms: float = 0.0, end_ms: float = math.inf) -> "Trajectory":
        return cls([(start_ms, x, y), (end_ms, x, y)])

    @property
    def start_ms(self) -> float:
        return self._times[0]

    @property
    def end_ms(self) -> float:
        return self._times[-1]

    def covers(self, t0: float, t1: float) -> bool:
        return self.start_ms <= t0 and t1 <= self.end_ms

    def position(self, t_ms: float) -> tuple[float, float]:
        if not self.start_ms <= t_ms <= self.end_ms:
            raise ScenarioError(f"trajectory undefined at t={t_ms} ms")
        i = bisect.bisect_right(self._times, t_ms)
        if i >= len(self.knots):
            return self.knots[-1][1:]
        t0, x0, y0 = self.knots[i - 1]
        t1, x1, y1 = self.knots[i]
        if t1 == t0 or math.isinf(t1):
            return x0, y0
        w = (t_ms - t0) / (t1 - t0)
        return x0 + w * (x1 - x0), y0 + w * (y1 - y0)


def distance_between(a: Trajectory, b: Trajectory, t_ms: float) -> float:
    (xa, ya), (xb, yb) = a.position(t_ms), b.position(t_ms)
    return max(math.hypot(xa - xb, ya - yb), MIN_DISTANCE_M)


def _pair_key(a: str, b: str) -> frozenset:
    return frozenset((a, b))


def run_protocol(
    devices: Sequence[DeviceState],
    channel: ChannelParams,
    trajectories: Mapping[str, Trajectory],
    horizon_ms: int,
    *,
    start_ms: int = 0,
    geometry: Mapping[frozenset, Geometry] | Geometry = Geometry.DIRECT,
    seed: int | None = None,
) -> None:
    """Advance every device over ``[start_ms, start_ms + horizon_ms)`` in place.

    Each advertisement reaches every other device whose scan window is open
    at that instant; the directed link decides the logged RSS or loss.
    """
    seed = channel.rng_seed if seed is None else seed
    end = start_ms + horizon_ms
    for dev in devices:
        traj = trajectories.get(dev.device_id)
        if traj is None:
            raise ScenarioError(f"no trajectory for device {dev.device_id!r}")
        if not traj.covers(start_ms, end):
            raise ScenarioError(
                f"trajectory of {dev.device_id!r} covers [{traj.start_ms}, {traj.end_ms}], "
                f"need [{start_ms}, {end}]"
            )

    def geometry_of(a: str, b: str) -> Geometry:
        if isinstance(geometry, Geometry):
            return geometry
        return geometry.get(_pair_key(a, b), Geometry.DIRECT)

    # link streams keyed on list position, never on device_id
    links = {
        (i, j): Link(
            channel,
            geometry_of(a.device_id, b.device_id),
            np.random.default_rng([seed, start_ms, i, j]),
        )
        for i, a in enumerate(devices)
        for j, b in enumerate(devices)
        if i != j
    }

    for dev in devices:
        sig = dev.current_signature
        if sig is None or sig.generated_at_ms + sig.valid_for_ms <= start_ms:
            generate_signature(dev, start_ms)

    streams = [
        [(t, kind, i) for t, kind in next_events(dev, horizon_ms, start_ms)]
        for i, dev in enumerate(devices)
    ]
    for t, kind, i in heapq.merge(*streams):
        dev = devices[i]
        if kind is EventKind.GENERATE:
            if dev.current_signature is None or dev.current_signature.generated_at_ms != t:
                generate_signature(dev, t)
        elif kind is EventKind.ADVERTISE:
            payload = dev.current_signature.payload
            src = trajectories[dev.device_id]
            for j, peer in enumerate(devices):
                if j == i or not peer.in_scan_window(t):
                    continue
                d = distance_between(src, trajectories[peer.device_id], t)
                rss = links[(i, j)].transmit(d, t)
                if rss is not None:
                    receive(peer, payload, rss, t)


def write_contact_log(device: DeviceState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["payload_hex", "rss_dbm", "timestamp_ms"])
        for e in device.contact_log:
            w.writerow([e.observed_payload.hex(), repr(e.rss_dbm), repr(e.timestamp_ms)])


def read_contact_log(path) -> list[ContactLogEntry]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        missing = {"payload_hex", "rss_dbm", "timestamp_ms"} - set(r.fieldnames or ())
        if missing:
            raise DataFormatError(f"contact log missing column(s): {sorted(missing)}")
        return [
            ContactLogEntry(bytes.fromhex(row["payload_hex"]), float(row["rss_dbm"]), float(row["timestamp_ms"]))
            for row in r
        ]

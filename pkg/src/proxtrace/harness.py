"""Scenario files and the two experiment drivers built on the protocol loop.

``run_paper_replication`` places two wrist devices at a sequence of fixed
separations and turns what each one hears into labeled feature rows, once
for the line-of-sight pairing and once for the body-blocked one.
``run_outbreak_drill`` moves any number of agents along their trajectories,
publishes one agent's signatures and reports who matches them.

Scenario schema (YAML or JSON, every key optional)::

    seed: 0
    channel: {ref_rss_dbm: -60, path_loss_exp: 2, ...}    # ChannelParams fields
    timings: {t_gen_ms: 600000, t_adv_ms: 100, t_scan_ms: 1000, t_window_ms: 1000}
    retention_days: 14
    windowing: {window_ms: 10000, stride_ms: 1000, min_samples: 1, smooth_window: null}
    risk: {close_threshold_m: 2.0}
    replication:
      distances_m: [0.5, 1.0, ..., 5.0]
      dwell_ms: 120000          # or a per-step list of the same length
      sessions: 2               # pairings per geometry
    drill:
      horizon_ms: 600000
      infected: A
      default_geometry: direct
      geometry: [{pair: [A, B], geometry: crosswise}]
      agents:
        - {id: A, static: [0, 0]}
        - {id: B, knots: [[0, 1, 0], [600000, 8, 0]]}
"""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DegenerateDataError, ScenarioError
from .features import (
    HIGH_RISK,
    LOW_RISK,
    FeatureVector,
    Observation,
    RiskPolicy,
    WindowingPolicy,
    build_dataset,
)
from .protocol import (
    DeviceState,
    ExposureMatch,
    InfectedBundle,
    ProtocolTimings,
    Trajectory,
    match_exposure,
    publish_infected,
    run_protocol,
)
from .radio import ChannelParams, Geometry

log = logging.getLogger(__name__)

DEFAULT_DISTANCES = tuple(round(0.5 * k, 1) for k in range(1, 11))
DEFAULT_DWELL_MS = 120_000
# replication scans continuously, as a phone logging app does
REPLICATION_TIMINGS = ProtocolTimings(t_adv_ms=100, t_scan_ms=1000, t_window_ms=1000)
SESSION_NAMES = {Geometry.DIRECT: ("LR", "RL"), Geometry.CROSSWISE: ("LL", "RR")}


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    trajectory: Trajectory


@dataclass
class Scenario:
    seed: int = 0
    channel: ChannelParams = field(default_factory=ChannelParams)
    timings: ProtocolTimings = REPLICATION_TIMINGS
    retention_days: float = 14
    windowing: WindowingPolicy = field(default_factory=WindowingPolicy)
    risk: RiskPolicy = field(default_factory=RiskPolicy)
    distance_schedule: list[tuple[float, int]] = field(
        default_factory=lambda: [(d, DEFAULT_DWELL_MS) for d in DEFAULT_DISTANCES]
    )
    sessions: int = 2
    agents: list[AgentSpec] = field(default_factory=list)
    geometry: dict[frozenset, Geometry] = field(default_factory=dict)
    default_geometry: Geometry = Geometry.DIRECT
    horizon_ms: int = 600_000
    infected: str | None = None

    def __post_init__(self):
        if self.sessions < 1:
            raise ScenarioError("sessions must be >= 1")
        for d, dwell in self.distance_schedule:
            if not 0 < d <= self.channel.max_range_m:
                raise ScenarioError(f"step distance {d} m outside (0, {self.channel.max_range_m}] m")
            if dwell <= 0:
                raise ScenarioError("dwell must be > 0")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate agent id")

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        doc = dict(doc or {})
        unknown = set(doc) - {"seed", "channel", "timings", "retention_days", "windowing", "risk", "replication", "drill"}
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        kw: dict = {}
        try:
            if "seed" in doc:
                kw["seed"] = int(doc["seed"])
            if "channel" in doc:
                kw["channel"] = ChannelParams.from_dict(doc["channel"] or {})
            if "timings" in doc:
                kw["timings"] = ProtocolTimings(**(doc["timings"] or {}))
            if "retention_days" in doc:
                kw["retention_days"] = float(doc["retention_days"])
            if "windowing" in doc:
                kw["windowing"] = WindowingPolicy(**(doc["windowing"] or {}))
            if "risk" in doc:
                kw["risk"] = RiskPolicy(**(doc["risk"] or {}))
            rep = doc.get("replication") or {}
            dists = [float(d) for d in rep.get("distances_m", DEFAULT_DISTANCES)]
            dwell = rep.get("dwell_ms", DEFAULT_DWELL_MS)
            dwells = [int(x) for x in dwell] if isinstance(dwell, list) else [int(dwell)] * len(dists)
            if len(dwells) != len(dists):
                raise ScenarioError("dwell_ms list must match distances_m")
            kw["distance_schedule"] = list(zip(dists, dwells))
            kw["sessions"] = int(rep.get("sessions", 2))
            drill = doc.get("drill") or {}
            kw["horizon_ms"] = int(drill.get("horizon_ms", 600_000))
            kw["infected"] = drill.get("infected")
            kw["default_geometry"] = Geometry(drill.get("default_geometry", "direct"))
            kw["agents"] = [_agent_from_dict(a) for a in drill.get("agents", [])]
            kw["geometry"] = {
                frozenset(map(str, g["pair"])): Geometry(g["geometry"]) for g in drill.get("geometry", [])
            }
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: not valid YAML: {exc}") from None
        if doc is not None and not isinstance(doc, dict):
            raise ScenarioError(f"{path}: top level must be a mapping")
        return cls.from_dict(doc or {})

    def to_dict(self) -> dict:
        """Fully resolved configuration, the basis of :meth:`config_hash`."""
        return {
            "seed": self.seed,
            "channel": asdict(self.channel),
            "timings": asdict(self.timings),
            "retention_days": self.retention_days,
            "windowing": asdict(self.windowing),
            "risk": asdict(self.risk),
            "replication": {
                "distances_m": [d for d, _ in self.distance_schedule],
                "dwell_ms": [w for _, w in self.distance_schedule],
                "sessions": self.sessions,
            },
            "drill": {
                "horizon_ms": self.horizon_ms,
                "infected": self.infected,
                "default_geometry": self.default_geometry.value,
                "geometry": [
                    {"pair": sorted(p), "geometry": g.value}
                    for p, g in sorted(self.geometry.items(), key=lambda kv: sorted(kv[0]))
                ],
                "agents": [{"id": a.agent_id, "knots": [list(k) for k in a.trajectory.knots]} for a in self.agents],
            },
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _agent_from_dict(a: dict) -> AgentSpec:
    aid = str(a["id"])
    if "static" in a:
        x, y = (list(a["static"]) + [0.0])[:2]
        traj = Trajectory.static(float(x), float(y))
    else:
        traj = Trajectory(a["knots"])
    return AgentSpec(aid, traj)


@dataclass
class LabeledDataset:
    rows: list[FeatureVector]
    geometry: Geometry
    scenario_sha256: str
    seed: int

    @property
    def class_counts(self) -> dict[int, int]:
        c = Counter(r.label for r in self.rows)
        return {HIGH_RISK: c.get(HIGH_RISK, 0), LOW_RISK: c.get(LOW_RISK, 0)}

    @property
    def single_class(self) -> bool:
        return min(self.class_counts.values()) == 0


@dataclass
class ReplicationResult:
    datasets: dict[Geometry, LabeledDataset]
    observations: dict[Geometry, list[Observation]]


def _step_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def simulate_session(scenario: Scenario, geometry: Geometry, session: int, seed: int) -> list[Observation]:
    """Raw packet observations of one two-device session over every distance step."""
    g_idx = list(Geometry).index(geometry)
    names = SESSION_NAMES[geometry]
    name = names[session % 2] + ("" if session < 2 else str(session // 2))
    tm = scenario.timings
    offset_rng = np.random.default_rng([seed, g_idx, session, 99])
    devices = [
        DeviceState(
            device_id=f"{name}-{k}",
            timings=tm,
            retention_days=scenario.retention_days,
            adv_offset_ms=int(offset_rng.integers(tm.t_adv_ms)),
            scan_offset_ms=int(offset_rng.integers(tm.t_scan_ms)),
            rng=np.random.default_rng([seed, g_idx, session, k]),
        )
        for k in range(2)
    ]
    run_seed = _step_seed(seed, g_idx, session)
    obs: list[Observation] = []
    start = 0
    for d, dwell in scenario.distance_schedule:
        if dwell < tm.t_scan_ms:
            log.warning("dwell %d ms at %.2f m is shorter than one scan interval", dwell, d)
        trajs = {
            devices[0].device_id: Trajectory.static(0.0, 0.0, start),
            devices[1].device_id: Trajectory.static(d, 0.0, start),
        }
        marks = [len(dev.contact_log) for dev in devices]
        run_protocol(devices, scenario.channel, trajs, dwell, start_ms=start, geometry=geometry, seed=run_seed)
        owner = {s.payload: k for k, dev in enumerate(devices) for s in dev.own_signatures}
        for k, dev in enumerate(devices):
            for e in dev.contact_log[marks[k]:]:
                obs.append(Observation(
                    rss_dbm=e.rss_dbm,
                    timestamp_ms=e.timestamp_ms,
                    distance_m=d,
                    device_name=dev.device_id,
                    mac=devices[owner[e.observed_payload]].device_id,
                    payload_hex=e.observed_payload.hex(),
                    elapsed_ms=e.timestamp_ms - start,
                ))
        start += dwell
    return obs


def run_paper_replication(
    scenario: Scenario,
    windowing: WindowingPolicy | None = None,
    risk: RiskPolicy | None = None,
    seed: int | None = None,
    *,
    cap: int | None = None,
    geometries=tuple(Geometry),
) -> ReplicationResult:
    """One labeled dataset per geometry, pooling ``scenario.sessions`` pairings each."""
    windowing = windowing or scenario.windowing
    risk = risk or scenario.risk
    seed = scenario.seed if seed is None else seed
    sha = scenario.config_hash()
    datasets, observations = {}, {}
    for geom in geometries:
        geom = Geometry(geom)
        obs = [o for s in range(scenario.sessions) for o in simulate_session(scenario, geom, s, seed)]
        ds = LabeledDataset(build_dataset(obs, windowing, risk, cap=cap), geom, sha, seed)
        if ds.single_class:
            log.warning("%s dataset has a single class: %s", geom.value, ds.class_counts)
        datasets[geom] = ds
        observations[geom] = obs
    return ReplicationResult(datasets, observations)


@dataclass
class DrillReport:
    infected: str
    bundle: InfectedBundle
    matches: dict[str, list[ExposureMatch]]
    devices: dict[str, DeviceState] = field(repr=False, default_factory=dict)

    @property
    def alerted(self) -> list[str]:
        return sorted(a for a, m in self.matches.items() if m)

    def rows(self) -> list[tuple[str, bool, int, int]]:
        """``(agent, alerted, matched_signatures, matched_samples)`` per non-infected agent."""
        return [(a, bool(m), len(m), sum(x.n_samples for x in m)) for a, m in sorted(self.matches.items())]


def run_outbreak_drill(scenario: Scenario, infected: str | None = None, seed: int | None = None) -> DrillReport:
    infected = infected if infected is not None else scenario.infected
    ids = [a.agent_id for a in scenario.agents]
    if infected not in ids:
        raise ScenarioError(f"infected agent {infected!r} not in scenario")
    seed = scenario.seed if seed is None else seed
    tm = scenario.timings
    offset_rng = np.random.default_rng([seed, 7])
    devices = [
        DeviceState(
            device_id=a.agent_id,
            timings=tm,
            retention_days=scenario.retention_days,
            adv_offset_ms=int(offset_rng.integers(tm.t_adv_ms)),
            scan_offset_ms=int(offset_rng.integers(tm.t_scan_ms)),
            rng=np.random.default_rng([seed, 1, k]),
        )
        for k, a in enumerate(scenario.agents)
    ]
    geometry = {p: scenario.geometry.get(p, scenario.default_geometry)
                for p in (frozenset((a, b)) for a in ids for b in ids if a != b)}
    trajs = {a.agent_id: a.trajectory for a in scenario.agents}
    run_protocol(devices, scenario.channel, trajs, scenario.horizon_ms, geometry=geometry, seed=seed)
    by_id = {d.device_id: d for d in devices}
    bundle = publish_infected(by_id[infected], scenario.horizon_ms)
    matches = {d.device_id: match_exposure(d, bundle) for d in devices if d.device_id != infected}
    return DrillReport(infected, bundle, matches, by_id)


def require_two_classes(rows: list[FeatureVector], what: str = "dataset") -> None:
    labels = {r.label for r in rows}
    if labels != {HIGH_RISK, LOW_RISK}:
        raise DegenerateDataError(f"{what} has a single class ({sorted(l for l in labels if l is not None)})")

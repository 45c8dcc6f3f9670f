"""Deployment-quality metrics and a discrete-event request simulator.

Internal slack measures wasted capacity inside allocated partitions:
one minus the SM-weighted activity over all allocated SMs. External
fragmentation measures wasted capacity between partitions: the share
of provisioned GPU SMs not allocated to any segment. Both are
dimensionless and independent of the SMs-per-GPC constant.

The simulator replays per-service request arrivals against a deployment
map. Requests queue FIFO per service and are dispatched to that
service's segments in batches; a batch's service time is the profiled
latency of its segment, and partial batches conservatively pay the
full-batch latency. A batch violates the SLO when queueing wait plus
service latency exceeds the client-facing target.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .allocator import DeploymentMap
from .configurator import Service
from .errors import SimulationConfigError, UndefinedMetricError, ValidationError
from .mig import SLOT_COUNT
from .profiles import ProfileTable

DEFAULT_SMS_PER_GPC = 14

ARRIVAL_KINDS = ("poisson", "deterministic")


@dataclass(frozen=True)
class SegmentActivity:
    service_id: str
    gpu: int
    start_slot: int
    instance_size: int
    sm_count: int
    activity: float


@dataclass(frozen=True)
class ActivityReport:
    """Per-segment SM activity plus the provisioned totals."""

    segments: tuple[SegmentActivity, ...]
    gpu_count: int
    sms_per_gpu: int


def internal_slack(report: ActivityReport) -> float:
    """One minus SM-weighted activity over all allocated SMs."""
    if not report.segments:
        raise UndefinedMetricError("internal slack is undefined for an empty report")
    weighted = sum(s.sm_count * s.activity for s in report.segments)
    total = sum(s.sm_count for s in report.segments)
    return 1.0 - weighted / total


def allocated_fraction(dmap: DeploymentMap, sms_per_gpc: int = DEFAULT_SMS_PER_GPC) -> float:
    """Share of provisioned GPU SMs covered by allocated segments."""
    if not dmap.gpus:
        raise UndefinedMetricError("allocated fraction is undefined for an empty map")
    allocated = sum(p.instance_size for _, p in dmap.placements()) * sms_per_gpc
    provisioned = len(dmap.gpus) * SLOT_COUNT * sms_per_gpc
    return allocated / provisioned


def external_fragmentation(
    dmap: DeploymentMap, sms_per_gpc: int = DEFAULT_SMS_PER_GPC
) -> float:
    """Unallocated share of provisioned GPU SMs.

    Slots blocked by placement constraints count as fragmented, since
    they are provisioned capacity no segment can use.
    """
    return 1.0 - allocated_fraction(dmap, sms_per_gpc)


@dataclass(frozen=True)
class Workload:
    """Arrival process specification: per-service rates in requests/s."""

    rates: tuple[tuple[str, float], ...]
    kind: str = "poisson"

    def __post_init__(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise ValidationError(f"arrival kind {self.kind!r} not in {ARRIVAL_KINDS}")
        for sid, rate in self.rates:
            if rate < 0:
                raise ValidationError(f"negative arrival rate for {sid!r}")

    @classmethod
    def from_services(
        cls, services: Sequence[Service], kind: str = "poisson", scale: float = 1.0
    ) -> "Workload":
        return cls(
            rates=tuple((s.id, s.request_rate * scale) for s in services), kind=kind
        )

    def rate_map(self) -> dict[str, float]:
        return dict(self.rates)


@dataclass
class ServiceSimStats:
    service_id: str
    arrived: int = 0
    served: int = 0
    queued_at_end: int = 0
    batches: int = 0
    violations: int = 0
    achieved_rps: float = 0.0
    latency_ms: dict = field(default_factory=dict)

    @property
    def slo_compliance(self) -> float:
        """Share of batches within the SLO; vacuously 1.0 with no batches."""
        if self.batches == 0:
            return 1.0
        return 1.0 - self.violations / self.batches


@dataclass
class SimReport:
    horizon_s: float
    seed: int
    kind: str
    services: dict[str, ServiceSimStats]
    activity: ActivityReport

    def to_json_obj(self) -> dict:
        return {
            "horizon_s": self.horizon_s,
            "seed": self.seed,
            "arrivals": self.kind,
            "services": {
                sid: {
                    "arrived": st.arrived,
                    "served": st.served,
                    "queued_at_end": st.queued_at_end,
                    "batches": st.batches,
                    "violations": st.violations,
                    "slo_compliance": st.slo_compliance,
                    "achieved_rps": round(st.achieved_rps, 6),
                    "latency_ms": st.latency_ms,
                }
                for sid, st in sorted(self.services.items())
            },
            "segments": [
                {
                    "service": s.service_id,
                    "gpu": s.gpu,
                    "start_slot": s.start_slot,
                    "instance_size": s.instance_size,
                    "sm_count": s.sm_count,
                    "activity": round(s.activity, 9),
                }
                for s in self.activity.segments
            ],
        }

    def csv_rows(self, run_label: str = "") -> list[dict]:
        """One flat row per service for plotting."""
        rows = []
        for sid, st in sorted(self.services.items()):
            rows.append(
                {
                    "run": run_label,
                    "seed": self.seed,
                    "horizon_s": self.horizon_s,
                    "arrivals": self.kind,
                    "service": sid,
                    "arrived": st.arrived,
                    "served": st.served,
                    "queued_at_end": st.queued_at_end,
                    "batches": st.batches,
                    "violations": st.violations,
                    "slo_compliance": st.slo_compliance,
                    "achieved_rps": round(st.achieved_rps, 6),
                    "latency_mean_ms": st.latency_ms.get("mean", ""),
                    "latency_p95_ms": st.latency_ms.get("p95", ""),
                    "latency_max_ms": st.latency_ms.get("max", ""),
                }
            )
        return rows


def slo_compliance(report: SimReport) -> dict[str, Optional[float]]:
    """Per-service share of batches meeting the SLO.

    A service that executed zero batches has no defined compliance and
    maps to None.
    """
    out: dict[str, Optional[float]] = {}
    for sid, st in report.services.items():
        out[sid] = None if st.batches == 0 else 1.0 - st.violations / st.batches
    return out


def _arrival_times(
    kind: str, rate: float, horizon: float, rng: np.random.Generator
) -> np.ndarray:
    """All arrival instants in [0, horizon), seconds."""
    if rate <= 0:
        return np.empty(0)
    if kind == "deterministic":
        step = 1.0 / rate
        n = int(math.floor(horizon / step))
        times = np.arange(1, n + 1, dtype=np.float64) * step
        return times[times < horizon]
    chunks = []
    total = 0.0
    expected = max(int(rate * horizon * 1.2) + 16, 64)
    while total < horizon:
        gaps = rng.exponential(1.0 / rate, size=expected)
        chunk = np.cumsum(gaps) + total
        total = float(chunk[-1])
        chunks.append(chunk)
    times = np.concatenate(chunks)
    return times[times < horizon]


class _Segment:
    __slots__ = (
        "index",
        "service_id",
        "gpu",
        "start_slot",
        "instance_size",
        "batch_size",
        "lanes",
        "free_lanes",
        "service_ms",
        "busy_ms",
    )

    def __init__(self, index, placement, gpu_id, service_ms):
        self.index = index
        self.service_id = placement.service_id
        self.gpu = gpu_id
        self.start_slot = placement.start_slot
        self.instance_size = placement.instance_size
        self.batch_size = placement.batch_size
        self.lanes = placement.process_count
        self.free_lanes = placement.process_count
        self.service_ms = service_ms
        self.busy_ms = 0.0


class _ServiceState:
    __slots__ = (
        "service",
        "segments",
        "arrivals",
        "ptr",
        "queue",
        "free_lanes",
        "wakeup_pending",
        "batches",
        "violations",
        "served",
        "latencies",
    )

    def __init__(self, service: Service, arrivals_ms: np.ndarray):
        self.service = service
        self.segments: list[_Segment] = []
        self.arrivals = arrivals_ms
        self.ptr = 0
        self.queue: list[float] = []
        self.free_lanes = 0
        self.wakeup_pending = False
        self.batches = 0
        self.violations = 0
        self.served = 0
        self.latencies: list[float] = []


def run_simulation(
    dmap: DeploymentMap,
    tables: Mapping[str, ProfileTable],
    services: Sequence[Service],
    workload: Workload | None = None,
    horizon_s: float = 60.0,
    seed: int = 0,
    sms_per_gpc: int = DEFAULT_SMS_PER_GPC,
) -> SimReport:
    """Simulate request service against a deployment map.

    Deterministic for a given seed. Dispatching stops at the horizon;
    batches in flight then run to completion, so every arrival is
    either served or still queued when the report is cut.
    """
    if horizon_s <= 0:
        raise SimulationConfigError("horizon must be positive")
    services_by_id = {s.id: s for s in services}
    workload = workload or Workload.from_services(services)
    rates = workload.rate_map()

    states: dict[str, _ServiceState] = {}
    ss_root = np.random.SeedSequence(seed)
    ordered_ids = sorted(
        {p.service_id for _, p in dmap.placements()} | set(rates) | set(services_by_id)
    )
    spawned = ss_root.spawn(len(ordered_ids))
    for sid, ss in zip(ordered_ids, spawned):
        svc = services_by_id.get(sid)
        if svc is None:
            raise SimulationConfigError(f"no service definition for {sid!r}")
        rng = np.random.default_rng(ss)
        arrivals = _arrival_times(workload.kind, rates.get(sid, 0.0), horizon_s, rng)
        states[sid] = _ServiceState(svc, arrivals * 1000.0)

    segments: list[_Segment] = []
    for gpu in dmap.gpus:
        for p in sorted(gpu.placements, key=lambda p: p.start_slot):
            svc = services_by_id.get(p.service_id)
            if svc is None:
                raise SimulationConfigError(f"no service definition for {p.service_id!r}")
            table = tables.get(svc.model_id)
            if table is None:
                raise SimulationConfigError(f"no profile table for model {svc.model_id!r}")
            try:
                point = table.get(p.instance_size, p.batch_size, p.process_count)
            except KeyError:
                raise SimulationConfigError(
                    f"segment {p.service_id!r} ({p.instance_size},{p.batch_size},"
                    f"{p.process_count}) has no matching profile point"
                ) from None
            seg = _Segment(len(segments), p, gpu.id, point.latency)
            segments.append(seg)
            state = states[p.service_id]
            state.segments.append(seg)
            state.free_lanes += seg.lanes

    horizon_ms = horizon_s * 1000.0

    # Event heap entries: (time_ms, sequence, kind, payload). Kind 0 is a
    # batch completion (payload = segment index), kind 1 an arrival wakeup
    # (payload = service position in ordered_ids).
    heap: list[tuple[float, int, int, int]] = []
    seq = 0

    def push(time_ms: float, kind: int, payload: int) -> None:
        nonlocal seq
        heapq.heappush(heap, (time_ms, seq, kind, payload))
        seq += 1

    def ingest(state: _ServiceState, now_ms: float) -> None:
        arr = state.arrivals
        if state.ptr >= len(arr):
            return
        hi = int(np.searchsorted(arr, now_ms, side="right"))
        if hi > state.ptr:
            state.queue.extend(arr[state.ptr : hi].tolist())
            state.ptr = hi

    def schedule_wakeup(state: _ServiceState, sid_index: int) -> None:
        if state.wakeup_pending or state.ptr >= len(state.arrivals):
            return
        state.wakeup_pending = True
        push(float(state.arrivals[state.ptr]), 1, sid_index)

    def dispatch(state: _ServiceState, now_ms: float) -> None:
        if now_ms >= horizon_ms:
            return
        svc = state.service
        while state.queue and state.free_lanes > 0:
            seg = next(s for s in state.segments if s.free_lanes > 0)
            n = min(seg.batch_size, len(state.queue))
            first = state.queue[0]
            del state.queue[:n]
            wait = now_ms - first
            latency = wait + seg.service_ms
            state.batches += 1
            state.served += n
            state.latencies.append(latency)
            if latency > svc.slo_latency:
                state.violations += 1
            seg.free_lanes -= 1
            state.free_lanes -= 1
            seg.busy_ms += max(0.0, min(seg.service_ms, horizon_ms - now_ms))
            push(now_ms + seg.service_ms, 0, seg.index)

    id_index = {sid: i for i, sid in enumerate(ordered_ids)}
    for sid in ordered_ids:
        if states[sid].segments:
            schedule_wakeup(states[sid], id_index[sid])

    while heap:
        now_ms, _, kind, payload = heapq.heappop(heap)
        if kind == 0:
            seg = segments[payload]
            seg.free_lanes += 1
            state = states[seg.service_id]
            state.free_lanes += 1
            if now_ms < horizon_ms:
                ingest(state, now_ms)
                dispatch(state, now_ms)
                if not state.queue:
                    schedule_wakeup(state, id_index[seg.service_id])
        else:
            sid = ordered_ids[payload]
            state = states[sid]
            state.wakeup_pending = False
            ingest(state, now_ms)
            dispatch(state, now_ms)
            if state.free_lanes > 0:
                schedule_wakeup(state, id_index[sid])

    activity = ActivityReport(
        segments=tuple(
            SegmentActivity(
                service_id=s.service_id,
                gpu=s.gpu,
                start_slot=s.start_slot,
                instance_size=s.instance_size,
                sm_count=s.instance_size * sms_per_gpc,
                activity=min(1.0, s.busy_ms / (s.lanes * horizon_ms)),
            )
            for s in segments
        ),
        gpu_count=len(dmap.gpus),
        sms_per_gpu=SLOT_COUNT * sms_per_gpc,
    )

    out: dict[str, ServiceSimStats] = {}
    for sid, state in states.items():
        arrived = len(state.arrivals)
        lat = np.array(state.latencies) if state.latencies else None
        out[sid] = ServiceSimStats(
            service_id=sid,
            arrived=arrived,
            served=state.served,
            queued_at_end=arrived - state.served,
            batches=state.batches,
            violations=state.violations,
            achieved_rps=state.served / horizon_s,
            latency_ms=(
                {}
                if lat is None
                else {
                    "mean": round(float(lat.mean()), 6),
                    "p50": round(float(np.percentile(lat, 50)), 6),
                    "p95": round(float(np.percentile(lat, 95)), 6),
                    "p99": round(float(np.percentile(lat, 99)), 6),
                    "max": round(float(lat.max()), 6),
                }
            ),
        )
    return SimReport(
        horizon_s=horizon_s,
        seed=seed,
        kind=workload.kind,
        services=out,
        activity=activity,
    )

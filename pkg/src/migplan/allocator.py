"""Multi-GPU placement of configured services' segments.

Relocation enqueues every service's segments into per-size queues and
drains them largest-size-first onto GPUs with first-fit. Optimization
then walks GPUs from the back, splits the contents of lightly loaded
GPUs into size-1/2 segments, and refills them into holes closer to the
front. Both stages are deterministic for identical inputs.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence

from .configurator import Service, Triplet, configure_service
from .errors import (
    MigplanError,
    SmallSegmentsUnavailableError,
    ValidationError,
)
from .mig import SLOT_COUNT, GpuState, Placement, allowed_start_slots

SIZE_ORDER = (7, 4, 3, 2, 1)

# GPUs holding at most this many GPCs are candidates for splitting.
DEFAULT_OPTIMIZATION_THRESHOLD = 4


class SegmentQueues:
    """Per-size FIFO queues of (service id, triplet) entries."""

    def __init__(self) -> None:
        self._queues: dict[int, deque[tuple[str, Triplet]]] = {
            size: deque() for size in SIZE_ORDER
        }

    def enqueue(self, service_id: str, triplet: Triplet) -> None:
        self._queues[triplet.instance_size].append((service_id, triplet))

    def __len__(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def drain(self) -> Iterator[tuple[str, Triplet]]:
        """Yield entries largest size first, FIFO within a size."""
        for size in SIZE_ORDER:
            q = self._queues[size]
            while q:
                yield q.popleft()


@dataclass
class DeploymentMap:
    """Ordered GPU states plus the residual-throughput ledger used while
    optimizing. GPU ids are stable; compaction drops empty GPUs without
    renumbering the rest."""

    gpus: list[GpuState] = field(default_factory=list)
    freed_rate: dict[str, float] = field(default_factory=dict)
    placement_log: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def gpu_count(self) -> int:
        return len(self.gpus)

    @property
    def total_gpcs(self) -> int:
        return sum(g.num_gpcs for g in self.gpus)

    def unallocated_fraction(self) -> float:
        """Share of provisioned GPCs not covered by any segment."""
        if not self.gpus:
            return 0.0
        return 1.0 - self.total_gpcs / (SLOT_COUNT * len(self.gpus))

    def placements(self) -> Iterator[tuple[GpuState, Placement]]:
        for gpu in self.gpus:
            for p in gpu.placements:
                yield gpu, p

    def service_throughput(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for _, p in self.placements():
            totals[p.service_id] = totals.get(p.service_id, 0.0) + p.throughput
        return totals

    def clone(self) -> "DeploymentMap":
        return DeploymentMap(
            gpus=[g.clone() for g in self.gpus],
            freed_rate=dict(self.freed_rate),
            placement_log=list(self.placement_log),
            diagnostics=list(self.diagnostics),
        )

    def validate(self) -> None:
        for gpu in self.gpus:
            used: set[int] = set()
            for p in gpu.placements:
                cells = p.option.occupied + p.option.blocked
                overlap = used.intersection(cells)
                if overlap:
                    raise ValidationError(
                        f"GPU {gpu.id}: slot overlap at {sorted(overlap)}"
                    )
                used.update(cells)
            if gpu.num_gpcs > SLOT_COUNT:
                raise ValidationError(f"GPU {gpu.id}: {gpu.num_gpcs} GPCs > 7")

    def to_json_obj(self) -> dict:
        return {
            "gpus": [
                {
                    "id": gpu.id,
                    "segments": [
                        {
                            "service": p.service_id,
                            "instance_size": p.instance_size,
                            "batch_size": p.batch_size,
                            "process_count": p.process_count,
                            "start_slot": p.start_slot,
                            "throughput_rps": p.throughput,
                        }
                        for p in sorted(gpu.placements, key=lambda p: p.start_slot)
                    ],
                }
                for gpu in self.gpus
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DeploymentMap":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"deployment map: {exc}") from exc
        gpus = []
        for gpu_obj in obj.get("gpus", []):
            gpu = GpuState(id=int(gpu_obj["id"]))
            for seg in gpu_obj.get("segments", []):
                placement = Placement(
                    service_id=seg["service"],
                    instance_size=int(seg["instance_size"]),
                    batch_size=int(seg["batch_size"]),
                    process_count=int(seg["process_count"]),
                    throughput=float(seg["throughput_rps"]),
                    start_slot=int(seg["start_slot"]),
                )
                if placement.start_slot not in [
                    o.start for o in allowed_start_slots(placement.instance_size)
                ]:
                    raise ValidationError(
                        f"GPU {gpu.id}: size {placement.instance_size} cannot "
                        f"start at slot {placement.start_slot}"
                    )
                gpu.placements.append(placement)
            gpus.append(gpu)
        dmap = cls(gpus=gpus)
        dmap.validate()
        return dmap


class _FirstFit:
    """First-fit placement over an ordered GPU list with per-size cursors.

    A cursor records the first GPU index that might still accept a
    size: once a GPU rejects a size, it keeps rejecting it until some
    placement is removed, so earlier indexes can be skipped. Removals
    pull the affected cursors back.
    """

    def __init__(self, gpus: list[GpuState], log: list[dict]):
        self.gpus = gpus
        self.log = log
        self.cursors: dict[int, int] = {size: 0 for size in SIZE_ORDER}
        self.run = 0

    def snapshot_cursors(self) -> dict[int, int]:
        return dict(self.cursors)

    def restore_cursors(self, saved: dict[int, int]) -> None:
        self.cursors = dict(saved)

    def note_removal(self, gpu_index: int) -> None:
        for size in SIZE_ORDER:
            if self.cursors[size] > gpu_index:
                self.cursors[size] = gpu_index

    def place(
        self,
        service_id: str,
        triplet: Triplet,
        exclude_index: Optional[int] = None,
        allow_new: bool = True,
    ) -> Optional[tuple[int, Placement]]:
        size = triplet.instance_size
        i = self.cursors[size]
        advanced = True
        while i < len(self.gpus):
            if i == exclude_index:
                advanced = False
                i += 1
                continue
            placement = self.gpus[i].place(
                service_id,
                size,
                triplet.batch_size,
                triplet.process_count,
                triplet.throughput,
            )
            if placement is not None:
                self.log.append(
                    {
                        "run": self.run,
                        "service": service_id,
                        "size": size,
                        "gpu": self.gpus[i].id,
                        "slot": placement.start_slot,
                    }
                )
                return i, placement
            i += 1
            if advanced:
                self.cursors[size] = i
        if not allow_new:
            return None
        gpu = GpuState(id=self._next_id())
        self.gpus.append(gpu)
        placement = gpu.place(
            service_id,
            size,
            triplet.batch_size,
            triplet.process_count,
            triplet.throughput,
        )
        assert placement is not None
        self.log.append(
            {
                "run": self.run,
                "service": service_id,
                "size": size,
                "gpu": gpu.id,
                "slot": placement.start_slot,
            }
        )
        return len(self.gpus) - 1, placement

    def allocate(
        self,
        queues: SegmentQueues,
        exclude_index: Optional[int] = None,
        allow_new: bool = True,
    ) -> list[tuple[str, Triplet]]:
        """Drain the queues; returns entries that could not be placed."""
        self.run += 1
        unplaced: list[tuple[str, Triplet]] = []
        placed_here: list[tuple[int, Placement]] = []
        log_mark = len(self.log)
        for service_id, triplet in queues.drain():
            result = self.place(
                service_id, triplet, exclude_index=exclude_index, allow_new=allow_new
            )
            if result is None:
                unplaced.append((service_id, triplet))
            else:
                placed_here.append(result)
        if unplaced:
            # All-or-nothing: undo this run so callers can roll back.
            for index, placement in reversed(placed_here):
                self.gpus[index].remove(placement)
                self.note_removal(index)
            del self.log[log_mark:]
        return unplaced

    def _next_id(self) -> int:
        return max((g.id for g in self.gpus), default=-1) + 1


def _enqueue_service(queues: SegmentQueues, service: Service) -> None:
    if service.optimal_segment is not None:
        for _ in range(service.optimal_segment_count):
            queues.enqueue(service.id, service.optimal_segment)
    if service.last_segment is not None:
        queues.enqueue(service.id, service.last_segment)


def relocate_segments(services: Sequence[Service]) -> DeploymentMap:
    """Place every configured service's segments onto fresh GPUs.

    Segments are queued by size in service order (optimal segments
    before the last segment) and drained from size 7 down to size 1;
    each segment lands on the first GPU that accepts it, and a new GPU
    is appended when none does.
    """
    for svc in services:
        if svc.optimal_segment is None and svc.request_rate > 0:
            raise MigplanError(
                f"service {svc.id!r} is not configured; run match_demand first"
            )
    queues = SegmentQueues()
    for svc in services:
        _enqueue_service(queues, svc)
    dmap = DeploymentMap()
    ff = _FirstFit(dmap.gpus, dmap.placement_log)
    leftover = ff.allocate(queues)
    assert not leftover, "relocation with unbounded GPUs cannot fail"
    covered = dmap.service_throughput()
    for svc in services:
        if svc.request_rate > 0:
            assert covered.get(svc.id, 0.0) >= svc.request_rate * (1 - 1e-12)
    return dmap


def propose_small_segments(service: Service, freed_rate: float) -> list[Triplet]:
    """Minimal multiset of size-1/2 segments covering a freed rate.

    Minimizes total GPCs first and segment count second, drawing only
    from the service's best size-1 and size-2 triplets. A non-positive
    freed rate needs no replacement segments.
    """
    if freed_rate <= 0:
        return []
    by_size = {t.instance_size: t for t in service.best_triplets}
    t1 = by_size.get(1)
    t2 = by_size.get(2)
    if t1 is None and t2 is None:
        raise SmallSegmentsUnavailableError(service.id)

    best: Optional[tuple[int, int, int]] = None  # (gpcs, count, -k2)
    max_k2 = 0
    if t2 is not None:
        max_k2 = math.ceil(freed_rate / t2.throughput - 1e-12)
    for k2 in range(0, max_k2 + 1):
        covered = k2 * t2.throughput if t2 is not None else 0.0
        short = freed_rate - covered
        if short <= 1e-12 * max(freed_rate, 1.0):
            k1 = 0
        elif t1 is not None:
            k1 = max(1, math.ceil(short / t1.throughput - 1e-12))
        else:
            continue
        candidate = (2 * k2 + k1, k2 + k1, -k2)
        if best is None or candidate < best:
            best = candidate
    if best is None:
        # Only size-2 exists and even max_k2 copies fall short: impossible,
        # since max_k2 is defined to cover the rate.
        raise SmallSegmentsUnavailableError(service.id)
    gpcs, count, neg_k2 = best
    k2 = -neg_k2
    k1 = count - k2
    segs = [t2] * k2 + [t1] * k1
    assert sum(t.throughput for t in segs) >= freed_rate * (1 - 1e-9)
    return segs


def optimize_allocation(
    dmap: DeploymentMap,
    services: Sequence[Service],
    threshold: int = DEFAULT_OPTIMIZATION_THRESHOLD,
) -> DeploymentMap:
    """Split lightly loaded GPUs into small segments and refill forward.

    Walks GPUs last to first; a GPU holding at most `threshold` GPCs has
    every segment freed and replaced by size-1/2 segments placed on the
    other GPUs. A GPU's split is rolled back when a service has no small
    triplet to split into, or when the replacements would not fit
    without provisioning a new GPU. The result never uses more GPUs nor
    leaves more unallocated capacity than the input.
    """
    services_by_id = {s.id: s for s in services}
    result = dmap.clone()
    gpus = result.gpus
    freed_rate = result.freed_rate
    ff = _FirstFit(gpus, result.placement_log)

    for index in range(len(gpus) - 1, -1, -1):
        gpu = gpus[index]
        if not gpu.placements or gpu.num_gpcs > threshold:
            continue
        drained = list(gpu.placements)
        saved_freed = dict(freed_rate)
        saved_cursors = ff.snapshot_cursors()
        proposals = SegmentQueues()
        failure: Optional[str] = None
        for placement in drained:
            svc = services_by_id.get(placement.service_id)
            if svc is None:
                failure = f"unknown service {placement.service_id!r}"
                break
            freed_rate[svc.id] = freed_rate.get(svc.id, 0.0) + placement.throughput
            gpu.remove(placement)
            try:
                smalls = propose_small_segments(svc, freed_rate[svc.id])
            except SmallSegmentsUnavailableError as exc:
                failure = str(exc)
                break
            for t in smalls:
                freed_rate[svc.id] -= t.throughput
                proposals.enqueue(svc.id, t)
        if failure is None:
            ff.note_removal(index)
            unplaced = ff.allocate(proposals, exclude_index=index, allow_new=False)
            if unplaced:
                failure = (
                    f"replacements for GPU {gpu.id} would need a new GPU; kept as is"
                )
        if failure is not None:
            # Restore the drained segments at their original slots.
            for placement in drained:
                if placement not in gpu.placements:
                    gpu.placements.append(placement)
            freed_rate.clear()
            freed_rate.update(saved_freed)
            ff.restore_cursors(saved_cursors)
            result.diagnostics.append(f"GPU {gpu.id}: optimization skipped: {failure}")

    result.gpus = [g for g in gpus if g.placements]
    result.validate()

    # The split-and-refill pass is heuristic; if it ever regressed either
    # objective, keep the input deployment instead.
    if result.gpu_count > dmap.gpu_count or (
        result.unallocated_fraction() > dmap.unallocated_fraction() + 1e-12
    ):
        fallback = dmap.clone()
        fallback.diagnostics.append(
            "optimization regressed GPU count or fragmentation; input kept"
        )
        return fallback

    after = result.service_throughput()
    for svc in services:
        if svc.request_rate > 0 and svc.id in after:
            assert (
                after[svc.id] >= svc.request_rate * (1 - 1e-9)
            ), f"coverage for {svc.id} dropped below its request rate"
    return result


@dataclass(frozen=True)
class PlacementChange:
    """One placement added to or removed from a deployment map."""

    action: str  # "added" | "removed"
    gpu: int
    service: str
    instance_size: int
    batch_size: int
    process_count: int
    start_slot: int

    def to_json_obj(self) -> dict:
        return {
            "action": self.action,
            "gpu": self.gpu,
            "service": self.service,
            "instance_size": self.instance_size,
            "batch_size": self.batch_size,
            "process_count": self.process_count,
            "start_slot": self.start_slot,
        }


def _placement_set(dmap: DeploymentMap) -> set[tuple]:
    return {
        (
            gpu.id,
            p.service_id,
            p.instance_size,
            p.batch_size,
            p.process_count,
            p.start_slot,
        )
        for gpu, p in dmap.placements()
    }


def diff_maps(before: DeploymentMap, after: DeploymentMap) -> list[PlacementChange]:
    """Placements that differ between two maps, removed first."""
    old = _placement_set(before)
    new = _placement_set(after)
    changes = [
        PlacementChange("removed", *entry) for entry in sorted(old - new)
    ] + [PlacementChange("added", *entry) for entry in sorted(new - old)]
    return changes


def reconfigure_service(
    dmap: DeploymentMap,
    services: Sequence[Service],
    updated: Service,
    table,
    threshold: int = DEFAULT_OPTIMIZATION_THRESHOLD,
) -> tuple[DeploymentMap, list[PlacementChange], list[Service]]:
    """Re-plan one service against an existing deployment.

    The service is reconfigured from its profile table alone (no
    re-profiling); if its segment demand is unchanged the map is
    returned untouched. Otherwise its placements are removed, the new
    segments are relocated into the map, and the optimizer runs again.
    The diff lists only placements that actually changed.
    """
    ids = [s.id for s in services]
    if updated.id not in ids:
        raise ValidationError(f"service {updated.id!r} not present in the deployment")
    old_service = services[ids.index(updated.id)]

    new_service = configure_service(updated, table)

    unchanged = (
        new_service.optimal_segment == old_service.optimal_segment
        and new_service.optimal_segment_count == old_service.optimal_segment_count
        and new_service.last_segment == old_service.last_segment
    )
    new_services = [new_service if s.id == updated.id else s for s in services]
    if unchanged:
        return dmap, [], new_services

    working = dmap.clone()
    for gpu in working.gpus:
        for placement in [p for p in gpu.placements if p.service_id == updated.id]:
            gpu.remove(placement)
    working.gpus = [g for g in working.gpus if g.placements]

    queues = SegmentQueues()
    _enqueue_service(queues, new_service)
    ff = _FirstFit(working.gpus, working.placement_log)
    leftover = ff.allocate(queues)
    assert not leftover
    optimized = optimize_allocation(working, new_services, threshold=threshold)
    return optimized, diff_maps(dmap, optimized), new_services

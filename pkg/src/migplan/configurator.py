"""Per-service segment configuration.

Two stages: first scan a profile table for the best operating point of
each instance size under the service's internal latency bound, then
cover the request rate with copies of the most GPC-efficient triplet
plus one trailing segment sized to the residual demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import InfeasibleSLOError, MigplanError, ResidualUncoverableError
from .profiles import ProfileTable

# Residual demand below this fraction of the request rate is treated as
# zero; it guards against float dust from rate/throughput arithmetic.
_RESIDUAL_EPS = 1e-9


@dataclass(frozen=True)
class Triplet:
    """An operating point: instance size, batch size, process count."""

    instance_size: int
    batch_size: int
    process_count: int
    throughput: float
    latency: float

    @property
    def efficiency(self) -> float:
        """Throughput per GPC."""
        return self.throughput / self.instance_size


@dataclass(frozen=True)
class Service:
    """One inference service and its configuration results."""

    id: str
    model_id: str
    request_rate: float
    slo_latency: float
    internal_latency: float
    best_triplets: tuple[Triplet, ...] = ()
    optimal_segment: Optional[Triplet] = None
    optimal_segment_count: int = 0
    last_segment: Optional[Triplet] = None

    def segments(self) -> tuple[Triplet, ...]:
        """All segments this service needs: count copies plus the last."""
        segs = (self.optimal_segment,) * self.optimal_segment_count
        if self.last_segment is not None:
            segs = segs + (self.last_segment,)
        return segs

    @property
    def coverage(self) -> float:
        return sum(t.throughput for t in self.segments())

    @property
    def total_gpcs(self) -> int:
        return sum(t.instance_size for t in self.segments())


def make_service(
    service_id: str,
    model_id: str,
    request_rate: float,
    slo_latency: float,
    internal_latency: float | None = None,
) -> Service:
    """Build an unconfigured service; the planning bound defaults to half
    the client-facing latency target, reserving the rest for queueing."""
    if slo_latency <= 0:
        raise MigplanError(f"service {service_id!r}: slo_latency must be > 0")
    if request_rate < 0:
        raise MigplanError(f"service {service_id!r}: request_rate must be >= 0")
    return Service(
        id=service_id,
        model_id=model_id,
        request_rate=float(request_rate),
        slo_latency=float(slo_latency),
        internal_latency=(
            float(slo_latency) / 2.0 if internal_latency is None else float(internal_latency)
        ),
    )


def decide_best_triplets(service: Service, table: ProfileTable) -> Service:
    """Keep the maximum-throughput point per instance size whose latency
    is strictly below the service's internal bound."""
    best: dict[int, Triplet] = {}
    for point in table:
        if not point.latency < service.internal_latency:
            continue
        candidate = Triplet(
            instance_size=point.instance_size,
            batch_size=point.batch_size,
            process_count=point.process_count,
            throughput=point.throughput,
            latency=point.latency,
        )
        current = best.get(point.instance_size)
        if current is None or _better_triplet(candidate, current):
            best[point.instance_size] = candidate
    if not best:
        raise InfeasibleSLOError(service.id, service.internal_latency)
    triplets = tuple(best[s] for s in sorted(best))
    return replace(service, best_triplets=triplets)


def _better_triplet(a: Triplet, b: Triplet) -> bool:
    """Max throughput; ties prefer lower latency, then smaller batch and
    process count, for deterministic selection."""
    return (a.throughput, -a.latency, -a.batch_size, -a.process_count) > (
        b.throughput,
        -b.latency,
        -b.batch_size,
        -b.process_count,
    )


def select_optimal_segment(triplets: Sequence[Triplet]) -> Triplet:
    """The triplet with maximum throughput per GPC; ties go to the larger
    instance so fewer segments are needed downstream."""
    if not triplets:
        raise MigplanError("select_optimal_segment needs a non-empty triplet array")
    best = triplets[0]
    for t in triplets[1:]:
        # Cross-multiplied efficiency comparison avoids division error.
        lhs = t.throughput * best.instance_size
        rhs = best.throughput * t.instance_size
        if lhs > rhs or (lhs == rhs and t.instance_size > best.instance_size):
            best = t
    return best


def match_demand(service: Service) -> Service:
    """Cover the request rate with optimal segments plus a last segment.

    The optimal segment count is floor(rate / throughput); the residual
    is covered by the smallest instance size whose best triplet can
    absorb it. A residual of zero emits no last segment: a segment with
    nothing to serve would be pure wasted capacity.
    """
    if not service.best_triplets:
        raise MigplanError(f"service {service.id!r} has no best_triplets; "
                           "decide_best_triplets must run first")
    opt = select_optimal_segment(service.best_triplets)
    rate = service.request_rate
    count = int(math.floor(rate / opt.throughput)) if rate > 0 else 0
    remaining = rate - count * opt.throughput
    if remaining <= _RESIDUAL_EPS * max(rate, 1.0):
        remaining = 0.0

    last: Optional[Triplet] = None
    if remaining > 0:
        for t in sorted(service.best_triplets, key=lambda t: t.instance_size):
            if t.throughput >= remaining:
                last = t
                break
        if last is None:
            # Unreachable in practice: the residual is strictly below the
            # optimal segment's own throughput by the floor definition.
            fallback = max(service.best_triplets, key=lambda t: t.throughput)
            if fallback.throughput >= remaining:
                last = fallback
            else:
                raise ResidualUncoverableError(
                    f"service {service.id!r}: residual {remaining:g} rps exceeds "
                    f"every triplet's throughput"
                )
        assert remaining < opt.throughput or last is not None

    configured = replace(
        service,
        optimal_segment=opt,
        optimal_segment_count=count,
        last_segment=last,
    )
    assert configured.coverage >= rate - _RESIDUAL_EPS * max(rate, 1.0)
    return configured


def configure_service(service: Service, table: ProfileTable) -> Service:
    """Run both configuration stages for one service."""
    return match_demand(decide_best_triplets(service, table))

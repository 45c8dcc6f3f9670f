"""Exhaustive baselines for small planning instances.

These searches are test-only equipment: they compute true optima by
enumeration so the heuristic pipeline can be measured against them.
Bounds are enforced because the underlying problems are NP-hard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .configurator import Service, Triplet, decide_best_triplets
from .errors import OracleBoundsError
from .mig import feasible_size_multisets
from .profiles import ProfileTable


@dataclass(frozen=True)
class OracleBounds:
    max_services: int = 4
    max_gpus: int = 3
    max_rate_multiple: float = 50.0


@dataclass(frozen=True)
class OracleResult:
    min_total_gpcs: int
    min_gpus: Optional[int]
    per_service_gpcs: dict


def min_gpcs(request_rate: float, triplets: Sequence[Triplet]) -> int:
    """Minimum total GPCs over all triplet multisets covering the rate.

    Branch-and-bound over per-triplet counts, most GPC-efficient
    triplet first so the initial incumbent is already near-optimal.
    """
    if request_rate <= 0:
        return 0
    if not triplets:
        raise ValueError("min_gpcs needs at least one triplet")
    order = sorted(
        triplets, key=lambda t: (t.throughput / t.instance_size), reverse=True
    )
    best = math.inf

    # Per-suffix best efficiency for the continuous lower bound.
    suffix_eff = [0.0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        suffix_eff[i] = max(suffix_eff[i + 1], order[i].throughput / order[i].instance_size)

    def search(idx: int, remaining: float, gpcs: int) -> None:
        nonlocal best
        if remaining <= 1e-9:
            best = min(best, gpcs)
            return
        if idx == len(order):
            return
        if gpcs + remaining / suffix_eff[idx] >= best - 1e-12:
            return
        t = order[idx]
        k_cover = math.ceil(remaining / t.throughput - 1e-12)
        k_budget = int((best - gpcs - 1) // t.instance_size) + 1
        for k in range(min(k_cover, k_budget), -1, -1):
            search(idx + 1, remaining - k * t.throughput, gpcs + k * t.instance_size)

    search(0, float(request_rate), 0)
    assert best < math.inf, "the largest triplet multiset always covers"
    return int(best)


@lru_cache(maxsize=1)
def _feasible() -> frozenset[tuple[int, ...]]:
    return feasible_size_multisets()


def fits_one_gpu(sizes: Sequence[int]) -> bool:
    return tuple(sorted(sizes, reverse=True)) in _feasible()


def min_gpus(sizes: Sequence[int], max_gpus: int) -> Optional[int]:
    """Minimum GPUs that can host a segment size multiset, or None if it
    does not fit within max_gpus. Exhaustive partition search."""
    items = tuple(sorted(sizes, reverse=True))
    if not items:
        return 0

    best: Optional[int] = None

    def search(idx: int, gpus: tuple[tuple[int, ...], ...]) -> None:
        nonlocal best
        if idx == len(items):
            count = len(gpus)
            if best is None or count < best:
                best = count
            return
        if best is not None and len(gpus) >= best:
            return
        size = items[idx]
        tried: set[tuple[int, ...]] = set()
        for i, gpu in enumerate(gpus):
            candidate = tuple(sorted(gpu + (size,), reverse=True))
            if gpu in tried:
                continue
            tried.add(gpu)
            if candidate in _feasible():
                search(idx + 1, gpus[:i] + (candidate,) + gpus[i + 1 :])
        if len(gpus) < max_gpus:
            search(idx + 1, gpus + ((size,),))

    search(0, ())
    return best


def oracle_plan(
    services: Sequence[Service],
    tables: dict[str, ProfileTable],
    bounds: OracleBounds = OracleBounds(),
) -> OracleResult:
    """Exact minimal GPC and GPU counts for a small instance.

    Refuses instances beyond the bounds. The GPC minimum is separable
    per service; the GPU minimum jointly enumerates minimal covering
    multisets per service and packs every combination.
    """
    if len(services) > bounds.max_services:
        raise OracleBoundsError(
            f"{len(services)} services exceed the oracle bound of "
            f"{bounds.max_services}"
        )
    configured = []
    for svc in services:
        table = tables[svc.model_id]
        svc = decide_best_triplets(svc, table)
        max_tp = max(t.throughput for t in svc.best_triplets)
        if svc.request_rate > bounds.max_rate_multiple * max_tp:
            raise OracleBoundsError(
                f"service {svc.id!r} rate {svc.request_rate:g} exceeds "
                f"{bounds.max_rate_multiple:g} x max throughput"
            )
        configured.append(svc)

    per_service = {
        svc.id: min_gpcs(svc.request_rate, svc.best_triplets) for svc in configured
    }
    total_gpcs = sum(per_service.values())

    budget = bounds.max_gpus * 7
    options: list[list[tuple[int, ...]]] = []
    for svc in configured:
        covers = _minimal_covering_multisets(svc.request_rate, svc.best_triplets, budget)
        if not covers:
            return OracleResult(total_gpcs, None, per_service)
        options.append(covers)

    best_gpus: Optional[int] = None

    def combine(idx: int, sizes: tuple[int, ...]) -> None:
        nonlocal best_gpus
        if sum(sizes) > budget:
            return
        if idx == len(options):
            found = min_gpus(sizes, bounds.max_gpus)
            if found is not None and (best_gpus is None or found < best_gpus):
                best_gpus = found
            return
        for multiset in options[idx]:
            combine(idx + 1, sizes + multiset)

    combine(0, ())
    return OracleResult(total_gpcs, best_gpus, per_service)


def _minimal_covering_multisets(
    rate: float, triplets: Sequence[Triplet], gpc_budget: int
) -> list[tuple[int, ...]]:
    """All minimal (by inclusion) size multisets whose best-triplet
    throughputs cover the rate within the GPC budget."""
    if rate <= 0:
        return [()]
    by_size = {t.instance_size: t for t in triplets}
    sizes = sorted(by_size)
    results: set[tuple[int, ...]] = set()

    def build(idx: int, counts: dict[int, int], covered: float, gpcs: int) -> None:
        if covered >= rate - 1e-9:
            multiset = tuple(
                sorted(
                    (s for s, c in counts.items() for _ in range(c)), reverse=True
                )
            )
            # Keep only inclusion-minimal multisets: dropping any one
            # segment must break coverage.
            for s, c in counts.items():
                if c and covered - by_size[s].throughput >= rate - 1e-9:
                    return
            results.add(multiset)
            return
        if idx == len(sizes) or gpcs > gpc_budget:
            return
        size = sizes[idx]
        tp = by_size[size].throughput
        max_k = min(
            math.ceil((rate - covered) / tp - 1e-12),
            (gpc_budget - gpcs) // size,
        )
        for k in range(max_k, -1, -1):
            build(idx + 1, {**counts, size: k}, covered + k * tp, gpcs + k * size)

    build(0, {s: 0 for s in sizes}, 0.0, 0)
    return sorted(results)

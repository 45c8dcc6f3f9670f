"""Slot geometry of a partitioned GPU.

A GPU exposes seven slots (0-6). A segment of size s occupies s
consecutive slots starting from a size-dependent set of allowed start
slots, in a fixed preference order. A size-3 segment placed at slot 0
additionally renders slot 3 unusable, which is tracked as a BLOCKED
cell distinct from occupied cells so that wasted space stays visible
to the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import InvalidSizeError, PlacementNotFoundError

SLOT_COUNT = 7
INSTANCE_SIZES = (1, 2, 3, 4, 7)

# Sentinel stored in a slot cell that is unusable but not occupied.
BLOCKED = "BLOCKED"


@dataclass(frozen=True)
class StartOption:
    """One legal placement of a segment size: start slot plus footprint."""

    start: int
    occupied: tuple[int, ...]
    blocked: tuple[int, ...] = ()


# Preference-ordered placements per size. Size 2 starts are 0, 2, 4 only:
# a start at slot 5 would admit whole-GPU layouts beyond the 19 valid
# A100 configurations (see enumerate_full_configs), so it is rejected.
# Sizes 7 and 4 are pinned to slot 0. Size 3 prefers the upper half so
# the 0-start variant (which blocks slot 3) is a last resort. Size 2
# prefers 0 then 2, keeping slots 4-6 open for size 3. Size 1 fills the
# lower half first for the same reason.
_START_OPTIONS: dict[int, tuple[StartOption, ...]] = {
    7: (StartOption(0, tuple(range(7))),),
    4: (StartOption(0, (0, 1, 2, 3)),),
    3: (
        StartOption(4, (4, 5, 6)),
        StartOption(0, (0, 1, 2), blocked=(3,)),
    ),
    2: (
        StartOption(0, (0, 1)),
        StartOption(2, (2, 3)),
        StartOption(4, (4, 5)),
    ),
    1: tuple(StartOption(s, (s,)) for s in range(SLOT_COUNT)),
}


def allowed_start_slots(size: int) -> tuple[StartOption, ...]:
    """Return the preference-ordered start options for a segment size."""
    try:
        return _START_OPTIONS[size]
    except KeyError:
        raise InvalidSizeError(
            f"instance size {size} not in {INSTANCE_SIZES}"
        ) from None


@dataclass(frozen=True)
class Placement:
    """A segment bound to a slot range on one GPU."""

    service_id: str
    instance_size: int
    batch_size: int
    process_count: int
    throughput: float
    start_slot: int

    @property
    def option(self) -> StartOption:
        for opt in allowed_start_slots(self.instance_size):
            if opt.start == self.start_slot:
                return opt
        raise InvalidSizeError(
            f"no start option for size {self.instance_size} at slot "
            f"{self.start_slot}"
        )


@dataclass
class GpuState:
    """One GPU: its placements and the derived slot occupancy."""

    id: int
    placements: list[Placement] = field(default_factory=list)

    @property
    def num_gpcs(self) -> int:
        return sum(p.instance_size for p in self.placements)

    def slot_map(self) -> list[object]:
        """Cells indexed 0-6: None (free), a Placement, or BLOCKED."""
        cells: list[object] = [None] * SLOT_COUNT
        for p in self.placements:
            opt = p.option
            for c in opt.occupied:
                cells[c] = p
            for c in opt.blocked:
                cells[c] = BLOCKED
        return cells

    def free_slots(self) -> list[int]:
        return [i for i, c in enumerate(self.slot_map()) if c is None]

    def find_start(self, size: int) -> Optional[StartOption]:
        """First preference-ordered start whose footprint is entirely free."""
        if self.num_gpcs + size > SLOT_COUNT:
            return None
        cells = self.slot_map()
        for opt in allowed_start_slots(size):
            if all(cells[c] is None for c in opt.occupied + opt.blocked):
                return opt
        return None

    def place(
        self,
        service_id: str,
        instance_size: int,
        batch_size: int,
        process_count: int,
        throughput: float,
    ) -> Optional[Placement]:
        """Place a segment at the first free preferred start, if any.

        Returns the new Placement, or None when the GPU rejects the
        segment; rejection leaves the GPU unchanged.
        """
        opt = self.find_start(instance_size)
        if opt is None:
            return None
        placement = Placement(
            service_id=service_id,
            instance_size=instance_size,
            batch_size=batch_size,
            process_count=process_count,
            throughput=throughput,
            start_slot=opt.start,
        )
        self.placements.append(placement)
        return placement

    def remove(self, placement: Placement) -> None:
        """Free a placement's footprint, including any blocked cell."""
        try:
            self.placements.remove(placement)
        except ValueError:
            raise PlacementNotFoundError(
                f"placement {placement} not present on GPU {self.id}"
            ) from None

    def clone(self) -> "GpuState":
        return GpuState(id=self.id, placements=list(self.placements))

    def size_multiset(self) -> tuple[int, ...]:
        return tuple(sorted((p.instance_size for p in self.placements), reverse=True))


Configuration = tuple[tuple[int, int], ...]
"""A whole-GPU arrangement: ((start, size), ...) sorted by start slot."""


def enumerate_full_configs() -> set[Configuration]:
    """All maximal whole-GPU arrangements reachable under the slot rules.

    Exhaustive search over every placement sequence (not just the
    greedy preferred starts). Acts as the self-check that the slot
    rules reconstruct the documented set of 19 valid configurations.
    """
    full: set[Configuration] = set()
    options = [
        (size, opt)
        for size in INSTANCE_SIZES
        for opt in allowed_start_slots(size)
    ]

    def recurse(used: int, placed: tuple[tuple[int, int], ...]) -> None:
        extended = False
        for size, opt in options:
            mask = 0
            for c in opt.occupied + opt.blocked:
                mask |= 1 << c
            if used & mask:
                continue
            extended = True
            recurse(used | mask, placed + ((opt.start, size),))
        if not extended:
            full.add(tuple(sorted(placed)))

    recurse(0, ())
    return full


def feasible_size_multisets() -> frozenset[tuple[int, ...]]:
    """Every multiset of sizes that fits on one GPU.

    A multiset fits exactly when it is contained in the multiset of
    some maximal configuration: placements never depend on other
    segments being present, so any sub-multiset of a valid arrangement
    is itself placeable.
    """
    feasible: set[tuple[int, ...]] = set()

    def subsets(sizes: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if not sizes:
            yield ()
            return
        head, rest = sizes[0], sizes[1:]
        for sub in subsets(rest):
            yield sub
            yield (head,) + sub

    for config in enumerate_full_configs():
        sizes = tuple(sorted((s for _, s in config), reverse=True))
        for sub in subsets(sizes):
            feasible.add(tuple(sorted(sub, reverse=True)))
    return frozenset(feasible)

"""Profile tables: measured or synthetic (throughput, latency) surfaces.

A profile point records what one model achieves on one instance size
with a given batch size and process count. Latency is the per-batch
service latency, which is also what the simulator uses as the batch
service time and what SLO checks compare against.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import ParameterError, ProfileParseError, ValidationError
from .mig import INSTANCE_SIZES

DEFAULT_BATCH_SIZES = (1, 2, 4, 8, 16, 32, 64, 128)
DEFAULT_PROCESS_COUNTS = (1, 2, 3)

# Memory capacity per instance size on an 80 GB GPU.
DEFAULT_MEMORY_MAP: dict[int, float] = {1: 10.0, 2: 20.0, 3: 40.0, 4: 40.0, 7: 80.0}

CSV_HEADER = (
    "model_id",
    "instance_size",
    "batch_size",
    "process_count",
    "throughput_rps",
    "latency_ms",
    "memory_gb",
)

ProfileKey = tuple[int, int, int]


@dataclass(frozen=True)
class ProfilePoint:
    model_id: str
    instance_size: int
    batch_size: int
    process_count: int
    throughput: float
    latency: float
    memory_required: float = 0.0

    def __post_init__(self) -> None:
        if self.instance_size not in INSTANCE_SIZES:
            raise ValidationError(
                f"instance_size {self.instance_size} not in {INSTANCE_SIZES}"
            )
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size}")
        if self.process_count < 1:
            raise ValidationError(
                f"process_count must be positive, got {self.process_count}"
            )
        if not self.throughput > 0:
            raise ValidationError(f"throughput must be > 0, got {self.throughput}")
        if not self.latency > 0:
            raise ValidationError(f"latency must be > 0, got {self.latency}")
        if self.memory_required < 0:
            raise ValidationError(
                f"memory_required must be >= 0, got {self.memory_required}"
            )

    @property
    def key(self) -> ProfileKey:
        return (self.instance_size, self.batch_size, self.process_count)


@dataclass(frozen=True)
class ProfileTable:
    """Immutable set of profile points for one model, keyed uniquely."""

    model_id: str
    points: tuple[ProfilePoint, ...] = field(default=())

    def __post_init__(self) -> None:
        seen: set[ProfileKey] = set()
        for p in self.points:
            if p.model_id != self.model_id:
                raise ValidationError(
                    f"point for model {p.model_id!r} in table {self.model_id!r}"
                )
            if p.key in seen:
                raise ValidationError(
                    f"duplicate profile key {p.key} for model {self.model_id!r}"
                )
            seen.add(p.key)
        object.__setattr__(
            self, "points", tuple(sorted(self.points, key=lambda p: p.key))
        )

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[ProfilePoint]:
        return iter(self.points)

    def get(self, instance_size: int, batch_size: int, process_count: int) -> ProfilePoint:
        key = (instance_size, batch_size, process_count)
        for p in self.points:
            if p.key == key:
                return p
        raise KeyError(key)

    def restrict(
        self,
        process_counts: Iterable[int] | None = None,
        batch_sizes: Iterable[int] | None = None,
    ) -> "ProfileTable":
        """Sub-table limited to the given process counts / batch sizes."""
        procs = set(process_counts) if process_counts is not None else None
        batches = set(batch_sizes) if batch_sizes is not None else None
        kept = tuple(
            p
            for p in self.points
            if (procs is None or p.process_count in procs)
            and (batches is None or p.batch_size in batches)
        )
        return ProfileTable(self.model_id, kept)


def _parse_row(fields: Mapping[str, str], row: int) -> ProfilePoint:
    try:
        return ProfilePoint(
            model_id=fields["model_id"],
            instance_size=int(fields["instance_size"]),
            batch_size=int(fields["batch_size"]),
            process_count=int(fields["process_count"]),
            throughput=float(fields["throughput_rps"]),
            latency=float(fields["latency_ms"]),
            memory_required=float(fields["memory_gb"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileParseError(str(exc), row=row) from exc


def _as_text(source) -> str:
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def load_profile_table(source, format: str = "csv") -> ProfileTable:
    """Load and validate one model's profile table from CSV or JSON.

    `source` may be a path, a text/byte string, or a readable stream.
    All rows must belong to a single model.
    """
    text = _as_text(source)
    points: list[ProfilePoint] = []
    if format == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
            raise ProfileParseError(
                f"expected header {','.join(CSV_HEADER)}, got {reader.fieldnames}"
            )
        for i, row in enumerate(reader, start=2):
            if None in row or None in row.values():
                raise ProfileParseError("wrong field count", row=i)
            points.append(_parse_row(row, i))
    elif format == "json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProfileParseError(str(exc)) from exc
        if not isinstance(rows, list):
            raise ProfileParseError("top-level JSON value must be an array")
        for i, row in enumerate(rows):
            if not isinstance(row, dict):
                raise ProfileParseError("array element is not an object", row=i)
            points.append(_parse_row({k: str(v) for k, v in row.items()}, i))
    else:
        raise ValidationError(f"unknown profile format {format!r}")

    model_ids = {p.model_id for p in points}
    if len(model_ids) > 1:
        raise ValidationError(
            f"profile source mixes models {sorted(model_ids)}; one model per table"
        )
    model_id = points[0].model_id if points else ""
    return ProfileTable(model_id=model_id, points=tuple(points))


def _format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def serialize_profile_table(table: ProfileTable, format: str = "csv") -> str:
    """Render a table to CSV or JSON text; inverse of load_profile_table."""
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in table.points:
            writer.writerow(
                [
                    p.model_id,
                    p.instance_size,
                    p.batch_size,
                    p.process_count,
                    _format_number(p.throughput),
                    _format_number(p.latency),
                    _format_number(p.memory_required),
                ]
            )
        return out.getvalue()
    if format == "json":
        rows = [
            {
                "model_id": p.model_id,
                "instance_size": p.instance_size,
                "batch_size": p.batch_size,
                "process_count": p.process_count,
                "throughput_rps": p.throughput,
                "latency_ms": p.latency,
                "memory_gb": p.memory_required,
            }
            for p in table.points
        ]
        return json.dumps(rows, indent=2) + "\n"
    raise ValidationError(f"unknown profile format {format!r}")


def load_profile_tables(directory: str | Path) -> dict[str, ProfileTable]:
    """Load every <model>.csv / <model>.json table found in a directory."""
    directory = Path(directory)
    tables: dict[str, ProfileTable] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix == ".csv":
            table = load_profile_table(path, format="csv")
        elif path.suffix == ".json":
            table = load_profile_table(path, format="json")
        else:
            continue
        if table.model_id in tables:
            raise ValidationError(f"model {table.model_id!r} appears twice in {directory}")
        tables[table.model_id] = table
    return tables


def filter_feasible(
    table: ProfileTable, memory_map: Mapping[int, float] | None = None
) -> ProfileTable:
    """Drop points whose memory demand exceeds their instance's capacity."""
    memory_map = DEFAULT_MEMORY_MAP if memory_map is None else dict(memory_map)
    missing = [s for s in INSTANCE_SIZES if s not in memory_map]
    if missing:
        raise ValidationError(f"memory_map missing instance sizes {missing}")
    kept = tuple(
        p for p in table.points if p.memory_required <= memory_map[p.instance_size]
    )
    return ProfileTable(table.model_id, kept)


@dataclass(frozen=True)
class SyntheticModelParams:
    """Scaling descriptor for one synthetic model.

    Throughput follows a saturating-work curve: capacity grows with
    instance size as size**gpc_exponent, and the in-flight work
    (batch_size * process_count) needed to approach capacity grows as
    sat_work * size**sat_exponent. Latency is derived from throughput
    as the time to turn around the in-flight work. Anchors pin exact
    throughputs at chosen (size, batch, procs) cells; the whole
    (size, procs) curve through an anchor is rescaled so anchored cells
    are reproduced verbatim while staying smooth in the batch direction.
    """

    model_id: str
    base_throughput: float
    gpc_exponent: float = 1.0
    sat_work: float = 8.0
    sat_exponent: float = 1.0
    weight_memory_gb: float = 1.0
    activation_memory_gb: float = 0.02
    jitter: float = 0.0
    anchors: tuple[tuple[ProfileKey, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.base_throughput > 0:
            raise ParameterError(
                f"base_throughput must be > 0, got {self.base_throughput}"
            )
        if not self.sat_work > 0:
            raise ParameterError(f"sat_work must be > 0, got {self.sat_work}")
        if self.gpc_exponent <= 0:
            raise ParameterError("gpc_exponent must be > 0")
        if self.sat_exponent < 0 or self.sat_exponent > self.gpc_exponent:
            raise ParameterError(
                "sat_exponent must lie in [0, gpc_exponent]; larger values would "
                "let a bigger instance be slower than a smaller one"
            )
        if self.jitter < 0:
            raise ParameterError("jitter must be >= 0")

    def anchor_map(self) -> dict[ProfileKey, float]:
        return dict(self.anchors)


def _raw_throughput(params: SyntheticModelParams, size: int, work: float) -> float:
    capacity = params.base_throughput * size**params.gpc_exponent
    half_work = params.sat_work * size**params.sat_exponent
    return capacity * work / (work + half_work)


def _verify_monotonic(table: ProfileTable) -> None:
    by_key = {p.key: p for p in table.points}
    sizes = sorted({p.instance_size for p in table.points})
    batches = sorted({p.batch_size for p in table.points})
    procs = sorted({p.process_count for p in table.points})
    for b in batches:
        for pr in procs:
            prev = None
            for s in sizes:
                pt = by_key.get((s, b, pr))
                if pt is None:
                    continue
                if prev is not None:
                    if pt.throughput < prev.throughput - 1e-9:
                        raise ParameterError(
                            f"throughput decreases from size {prev.instance_size} "
                            f"to {s} at batch {b}, procs {pr}"
                        )
                    if pt.latency > prev.latency + 1e-9:
                        raise ParameterError(
                            f"latency increases from size {prev.instance_size} "
                            f"to {s} at batch {b}, procs {pr}"
                        )
                prev = pt
    for s in sizes:
        for pr in procs:
            prev = None
            for b in batches:
                pt = by_key.get((s, b, pr))
                if pt is None:
                    continue
                if prev is not None and pt.latency < prev.latency - 1e-9:
                    raise ParameterError(
                        f"latency decreases from batch {prev.batch_size} to {b} "
                        f"at size {s}, procs {pr}"
                    )
                prev = pt


def synthesize_profile(
    params: SyntheticModelParams,
    seed: int,
    batch_sizes: Iterable[int] = DEFAULT_BATCH_SIZES,
    process_counts: Iterable[int] = DEFAULT_PROCESS_COUNTS,
) -> ProfileTable:
    """Generate a deterministic profile table from a scaling descriptor.

    The same (params, seed) always yields the same table. Generated
    tables are checked to be monotone: throughput never drops and
    latency never rises when the instance grows, and latency never
    drops when the batch grows.
    """
    batch_sizes = tuple(sorted(set(int(b) for b in batch_sizes)))
    process_counts = tuple(sorted(set(int(p) for p in process_counts)))
    if any(b < 1 for b in batch_sizes) or any(p < 1 for p in process_counts):
        raise ParameterError("batch sizes and process counts must be positive")

    model_entropy = int.from_bytes(
        hashlib.sha256(params.model_id.encode("utf-8")).digest()[:8], "big"
    )
    rng = np.random.default_rng(np.random.SeedSequence((model_entropy, seed)))
    # Parameter-level jitter keeps the monotone structure intact while
    # still varying tables between seeds.
    base = params.base_throughput * float(np.exp(params.jitter * rng.standard_normal()))
    sat = params.sat_work * float(np.exp(params.jitter * rng.standard_normal()))
    jittered = SyntheticModelParams(
        model_id=params.model_id,
        base_throughput=base,
        gpc_exponent=params.gpc_exponent,
        sat_work=sat,
        sat_exponent=params.sat_exponent,
        weight_memory_gb=params.weight_memory_gb,
        activation_memory_gb=params.activation_memory_gb,
        jitter=0.0,
        anchors=params.anchors,
    )

    anchors = params.anchor_map()
    curve_factor: dict[tuple[int, int], float] = {}
    for (s, b, pr), tp in anchors.items():
        if s not in INSTANCE_SIZES:
            raise ParameterError(f"anchor size {s} not in {INSTANCE_SIZES}")
        if b not in batch_sizes or pr not in process_counts:
            raise ParameterError(f"anchor cell ({s},{b},{pr}) outside the profile grid")
        if (s, pr) in curve_factor:
            raise ParameterError(
                f"multiple anchors on the (size={s}, procs={pr}) curve; "
                "one per curve is supported"
            )
        raw = _raw_throughput(jittered, s, float(b * pr))
        curve_factor[(s, pr)] = tp / raw

    def scale(size: int, procs: int) -> float:
        """Rescale factor for one (size, procs) curve.

        Anchored curves get their exact factor; other sizes at the same
        process count follow log-linearly in log(size) between anchors
        and flatly beyond them, so every size shifts together and the
        cross-size ordering survives. Process counts without any
        anchor are left unscaled.
        """
        if (size, procs) in curve_factor:
            return curve_factor[(size, procs)]
        marks = sorted(
            (s, f) for (s, p), f in curve_factor.items() if p == procs
        )
        if not marks:
            return 1.0
        if size <= marks[0][0]:
            return marks[0][1]
        if size >= marks[-1][0]:
            return marks[-1][1]
        for (s0, f0), (s1, f1) in zip(marks, marks[1:]):
            if s0 <= size <= s1:
                t = (math.log(size) - math.log(s0)) / (math.log(s1) - math.log(s0))
                return float(np.exp((1 - t) * np.log(f0) + t * np.log(f1)))
        raise AssertionError("unreachable")

    points = []
    for s in INSTANCE_SIZES:
        for b in batch_sizes:
            for pr in process_counts:
                work = float(b * pr)
                tp = _raw_throughput(jittered, s, work) * scale(s, pr)
                key = (s, b, pr)
                if key in anchors:
                    tp = anchors[key]
                latency = max(1.0, float(round(1000.0 * work / tp)))
                memory = pr * (
                    params.weight_memory_gb + b * params.activation_memory_gb
                )
                points.append(
                    ProfilePoint(
                        model_id=params.model_id,
                        instance_size=s,
                        batch_size=b,
                        process_count=pr,
                        throughput=tp,
                        latency=latency,
                        memory_required=round(memory, 3),
                    )
                )
    table = ProfileTable(params.model_id, tuple(points))
    _verify_monotonic(table)
    return table

"""End-to-end planning: configure services, place segments, optimize."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .allocator import (
    DEFAULT_OPTIMIZATION_THRESHOLD,
    DeploymentMap,
    optimize_allocation,
    relocate_segments,
)
from .configurator import Service, configure_service
from .evaluation import DEFAULT_SMS_PER_GPC, allocated_fraction, external_fragmentation
from .profiles import DEFAULT_MEMORY_MAP, ProfileTable, filter_feasible
from .scenario import Scenario, load_tables_for, scenario_services


@dataclass(frozen=True)
class PlanOptions:
    optimize: bool = True
    single_process: bool = False
    threshold: int = DEFAULT_OPTIMIZATION_THRESHOLD
    sms_per_gpc: int = DEFAULT_SMS_PER_GPC
    memory_map: Mapping[int, float] = field(
        default_factory=lambda: dict(DEFAULT_MEMORY_MAP)
    )


@dataclass
class PlanResult:
    scenario_name: str
    services: list[Service]
    deployment: DeploymentMap
    planning_ms: float
    unoptimized_gpu_count: int

    @property
    def gpu_count(self) -> int:
        return self.deployment.gpu_count

    def summary(self, sms_per_gpc: int = DEFAULT_SMS_PER_GPC) -> dict:
        frag: Optional[float] = None
        alloc: Optional[float] = None
        if self.deployment.gpus:
            frag = external_fragmentation(self.deployment, sms_per_gpc)
            alloc = allocated_fraction(self.deployment, sms_per_gpc)
        return {
            "scenario": self.scenario_name,
            "gpu_count": self.gpu_count,
            "total_gpcs": self.deployment.total_gpcs,
            "external_fragmentation": frag,
            "allocated_fraction": alloc,
            "planning_ms": round(self.planning_ms, 3),
            "services": {
                s.id: {
                    "request_rate": s.request_rate,
                    "coverage_rps": round(s.coverage, 6),
                    "segments": len(s.segments()),
                    "gpcs": s.total_gpcs,
                }
                for s in self.services
            },
            "diagnostics": list(self.deployment.diagnostics),
        }


def prepare_tables(
    tables: Mapping[str, ProfileTable], options: PlanOptions
) -> dict[str, ProfileTable]:
    """Apply memory feasibility and any process-count restriction."""
    prepared = {}
    for model, table in tables.items():
        table = filter_feasible(table, options.memory_map)
        if options.single_process:
            table = table.restrict(process_counts=(1,))
        prepared[model] = table
    return prepared


def plan_services(
    services: Sequence[Service],
    tables: Mapping[str, ProfileTable],
    options: PlanOptions = PlanOptions(),
    scenario_name: str = "",
) -> PlanResult:
    """Run configure, relocate and (optionally) optimize for the services.

    Raises InfeasibleSLOError when any service has no qualifying profile
    point; planning time covers the full pipeline.
    """
    prepared = prepare_tables(tables, options)
    start = time.perf_counter()
    configured = [configure_service(s, prepared[s.model_id]) for s in services]
    deployment = relocate_segments(configured)
    unoptimized_count = deployment.gpu_count
    if options.optimize:
        deployment = optimize_allocation(
            deployment, configured, threshold=options.threshold
        )
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    deployment.validate()
    return PlanResult(
        scenario_name=scenario_name,
        services=configured,
        deployment=deployment,
        planning_ms=elapsed_ms,
        unoptimized_gpu_count=unoptimized_count,
    )


def plan_scenario(
    scenario: Scenario,
    tables: Mapping[str, ProfileTable] | None = None,
    options: PlanOptions = PlanOptions(),
    profiles_override=None,
) -> PlanResult:
    if tables is None:
        tables = load_tables_for(scenario, profiles_override)
    services = scenario_services(scenario)
    return plan_services(services, tables, options, scenario_name=scenario.name)

#!/usr/bin/env python3
"""Calibrate the fixture profile tables.

Searches one throughput multiplier per model so that all six shipped
scenarios (a) plan with comfortable utilization headroom per service
and (b) pack into exactly full GPUs after allocation optimization,
i.e. zero external fragmentation. Writes fixtures/calibration.json.

Usage: python scripts/calibrate_fixtures.py [--quick] [--out PATH]
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from migplan.allocator import optimize_allocation, relocate_segments
from migplan.configurator import configure_service, make_service
from migplan.errors import InfeasibleSLOError, ParameterError
from migplan.evaluation import Workload, run_simulation
from migplan.fixtures import MODEL_IDS, SCENARIOS, SCENARIO_NAMES, build_table

RHO_MAX = 0.90
MAX_SEGMENTS = 40


def build_menu(model: str, grid: np.ndarray, rho_max: float):
    """Valid (scale, {scenario: configured Service}) entries for a model."""
    entries = []
    for scale in grid:
        try:
            table = build_table(model, float(scale))
        except ParameterError:
            continue
        configs = {}
        ok = True
        for name in SCENARIO_NAMES:
            spec = SCENARIOS[name].get(model)
            if spec is None:
                continue
            rate, slo = spec
            try:
                svc = configure_service(
                    make_service(model, model, rate, slo), table
                )
            except InfeasibleSLOError:
                ok = False
                break
            if svc.coverage <= 0 or rate / svc.coverage > rho_max:
                ok = False
                break
            if len(svc.segments()) > MAX_SEGMENTS:
                ok = False
                break
            configs[name] = svc
        if ok:
            entries.append((float(scale), configs, table))
    return entries


class Searcher:
    def __init__(self, menus, rng: random.Random):
        self.menus = menus
        self.rng = rng
        self.models = list(menus)
        self.memo: dict = {}

    def scenario_cost(self, name: str, choice: dict[str, int]) -> int:
        participants = [m for m in self.models if m in SCENARIOS[name]]
        key = (name, tuple(choice[m] for m in participants))
        if key in self.memo:
            return self.memo[key]
        services = [self.menus[m][choice[m]][1][name] for m in participants]
        dmap = optimize_allocation(relocate_segments(services), services)
        free = 7 * dmap.gpu_count - dmap.total_gpcs
        self.memo[key] = free
        return free

    def total_cost(self, choice: dict[str, int]) -> int:
        return sum(self.scenario_cost(name, choice) for name in SCENARIO_NAMES)

    def coordinate_descent(self, choice: dict[str, int]) -> tuple[dict, int]:
        best = self.total_cost(choice)
        improved = True
        while improved and best > 0:
            improved = False
            order = list(self.models)
            self.rng.shuffle(order)
            for model in order:
                current = choice[model]
                for idx in range(len(self.menus[model])):
                    if idx == current:
                        continue
                    choice[model] = idx
                    cost = self.total_cost(choice)
                    if cost < best:
                        best = cost
                        current = idx
                        improved = True
                choice[model] = current
            if best == 0:
                break
        return choice, best

    def search(self, restarts: int, time_budget_s: float) -> tuple[dict, int]:
        deadline = time.monotonic() + time_budget_s
        best_choice = None
        best_cost = None
        for attempt in range(restarts):
            if time.monotonic() > deadline and best_choice is not None:
                break
            choice = {
                m: self.rng.randrange(len(self.menus[m])) for m in self.models
            }
            if attempt == 0:
                # Start from the unscaled tables when they are on the menu.
                for m in self.models:
                    scales = [e[0] for e in self.menus[m]]
                    choice[m] = min(
                        range(len(scales)), key=lambda i: abs(scales[i] - 1.0)
                    )
            choice, cost = self.coordinate_descent(choice)
            print(f"  restart {attempt}: cost {cost}")
            if best_cost is None or cost < best_cost:
                best_choice, best_cost = dict(choice), cost
            if best_cost == 0:
                break
        return best_choice, best_cost


def verify_with_simulation(menus, choice, horizon: float, seeds) -> list[str]:
    """Run the planned fixtures through the simulator; list violations."""
    problems = []
    for name in SCENARIO_NAMES:
        participants = [m for m in menus if m in SCENARIOS[name]]
        services = [menus[m][choice[m]][1][name] for m in participants]
        tables = {m: menus[m][choice[m]][2] for m in participants}
        dmap = optimize_allocation(relocate_segments(services), services)
        free = 7 * dmap.gpu_count - dmap.total_gpcs
        if free:
            problems.append(f"{name}: {free} free GPCs")
            continue
        for seed in seeds:
            report = run_simulation(
                dmap,
                tables,
                services,
                workload=Workload.from_services(services, kind="poisson"),
                horizon_s=horizon,
                seed=seed,
            )
            for sid, stats in report.services.items():
                if stats.violations:
                    problems.append(
                        f"{name} seed {seed}: {sid} violated "
                        f"{stats.violations}/{stats.batches} batches"
                    )
    return problems


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="coarser grid, shorter search")
    parser.add_argument(
        "--out",
        default=str(Path(__file__).resolve().parent.parent / "fixtures" / "calibration.json"),
    )
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    grid_points = 60 if args.quick else 140
    grid = np.geomspace(0.4, 2.6, grid_points)
    rng = random.Random(args.seed)

    print("building per-model menus ...")
    menus = {}
    for model in MODEL_IDS:
        # The anchored model is insensitive to the multiplier; one entry.
        model_grid = np.array([1.0]) if model == "inceptionv3" else grid
        entries = build_menu(model, model_grid, RHO_MAX)
        if not entries:
            print(f"  {model}: no valid scale; aborting")
            return 1
        print(f"  {model}: {len(entries)} valid scales")
        menus[model] = entries

    searcher = Searcher(menus, rng)
    restarts = 4 if args.quick else 12
    budget = 120 if args.quick else 600
    choice, cost = searcher.search(restarts, budget)
    print(f"search finished with cost {cost}")
    if cost != 0:
        print("WARNING: fragmentation not fully eliminated; inspect before shipping")

    seeds = (1,) if args.quick else (1, 2, 3)
    horizon = 20.0 if args.quick else 60.0
    problems = verify_with_simulation(menus, choice, horizon, seeds)
    for p in problems:
        print("  problem:", p)
    if problems:
        print("WARNING: simulation check failed")

    calibration = {m: menus[m][choice[m]][0] for m in MODEL_IDS}
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(
            {
                "throughput_scale": calibration,
                "search_cost": cost,
                "rho_max": RHO_MAX,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out_path}")
    return 0 if cost == 0 and not problems else 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: plan, simulate, reconfigure, inspect geometry."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from .allocator import DeploymentMap, reconfigure_service
from .configurator import make_service
from .errors import InfeasibleSLOError, MigplanError, ValidationError
from .evaluation import (
    DEFAULT_SMS_PER_GPC,
    Workload,
    external_fragmentation,
    internal_slack,
    run_simulation,
    slo_compliance,
)
from .mig import enumerate_full_configs
from .oracle import OracleBounds, oracle_plan
from .pipeline import PlanOptions, plan_scenario, prepare_tables
from .scenario import load_scenario, load_tables_for, scenario_services

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _plan_options(args) -> PlanOptions:
    return PlanOptions(
        optimize=not args.no_optimize,
        single_process=args.single_process,
        threshold=args.threshold,
        sms_per_gpc=args.sms_per_gpc,
    )


def cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    result = plan_scenario(
        scenario, options=_plan_options(args), profiles_override=args.profiles
    )
    if args.out:
        Path(args.out).write_text(result.deployment.to_json(), encoding="utf-8")
    summary = result.summary(sms_per_gpc=args.sms_per_gpc)
    if not args.out:
        summary["deployment"] = result.deployment.to_json_obj()
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    tables = load_tables_for(scenario, args.profiles)
    options = _plan_options(args)
    if args.map:
        deployment = DeploymentMap.from_json(Path(args.map).read_text(encoding="utf-8"))
        # The placed segments already encode the planning choices; the
        # simulator only needs each service's SLO and model binding.
        services = scenario_services(scenario)
    else:
        planned = plan_scenario(scenario, tables=tables, options=options)
        deployment = planned.deployment
        services = planned.services
    prepared = prepare_tables(tables, options)
    workload = Workload.from_services(
        scenario_services(scenario), kind=args.arrivals, scale=args.rate_scale
    )
    report = run_simulation(
        deployment,
        prepared,
        services,
        workload=workload,
        horizon_s=args.horizon,
        seed=args.seed,
        sms_per_gpc=args.sms_per_gpc,
    )
    obj = report.to_json_obj()
    obj["metrics"] = {
        "internal_slack": internal_slack(report.activity) if report.activity.segments else None,
        "external_fragmentation": (
            external_fragmentation(deployment, args.sms_per_gpc)
            if deployment.gpus
            else None
        ),
        "slo_compliance": slo_compliance(report),
    }
    text = json.dumps(obj, indent=2) + "\n"
    _write_or_print(text, args.out)
    if args.csv:
        rows = report.csv_rows(run_label=scenario.name)
        if rows:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                writer.writerows(rows)
    return EXIT_OK


def cmd_reconfigure(args) -> int:
    scenario = load_scenario(args.scenario)
    tables = load_tables_for(scenario, args.profiles)
    options = _plan_options(args)
    planned = plan_scenario(scenario, tables=tables, options=options)
    deployment = planned.deployment
    if args.map:
        deployment = DeploymentMap.from_json(Path(args.map).read_text(encoding="utf-8"))
    services = planned.services
    target = next((s for s in services if s.id == args.service), None)
    if target is None:
        raise ValidationError(f"service {args.service!r} not in scenario")
    updated = make_service(
        service_id=target.id,
        model_id=target.model_id,
        request_rate=args.rate if args.rate is not None else target.request_rate,
        slo_latency=args.slo if args.slo is not None else target.slo_latency,
    )
    prepared = prepare_tables(tables, options)
    new_map, changes, _ = reconfigure_service(
        deployment,
        services,
        updated,
        prepared[target.model_id],
        threshold=args.threshold,
    )
    if args.out:
        Path(args.out).write_text(new_map.to_json(), encoding="utf-8")
    print(
        json.dumps(
            {
                "service": args.service,
                "changes": [c.to_json_obj() for c in changes],
                "gpu_count": new_map.gpu_count,
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_enumerate_configs(args) -> int:
    start = time.perf_counter()
    configs = enumerate_full_configs()
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    lines = sorted(
        "-".join(str(size) for _, size in config) for config in configs
    )
    print(json.dumps({"count": len(configs), "configurations": lines,
                      "elapsed_ms": round(elapsed_ms, 3)}, indent=2))
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    tables = load_tables_for(scenario, args.profiles)
    options = _plan_options(args)
    prepared = prepare_tables(tables, options)
    services = scenario_services(scenario)
    bounds = OracleBounds(max_services=args.max_services, max_gpus=args.max_gpus)
    result = oracle_plan(services, prepared, bounds=bounds)
    planned = plan_scenario(scenario, tables=tables, options=options)
    print(
        json.dumps(
            {
                "scenario": scenario.name,
                "oracle_min_gpcs": result.min_total_gpcs,
                "oracle_min_gpus": result.min_gpus,
                "pipeline_gpcs": sum(s.total_gpcs for s in planned.services),
                "pipeline_gpus": planned.gpu_count,
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_report(args) -> int:
    """Merge per-run CSV reports into one file for plotting."""
    rows: list[dict] = []
    fieldnames: list[str] = []
    for path in args.inputs:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for name in reader.fieldnames or []:
                if name not in fieldnames:
                    fieldnames.append(name)
            rows.extend(reader)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"merged {len(rows)} rows from {len(args.inputs)} files into {args.out}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, scenario_required: bool = True) -> None:
    parser.add_argument("--scenario", required=scenario_required, help="scenario JSON path")
    parser.add_argument("--profiles", default=None, help="profile directory override")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-optimize", action="store_true",
                        help="stop after relocation (skip the split-and-refill pass)")
    parser.add_argument("--single-process", action="store_true",
                        help="restrict profiles to one process per segment")
    parser.add_argument("--threshold", type=int, default=4,
                        help="max GPCs for a GPU to be split during optimization")
    parser.add_argument("--sms-per-gpc", type=int, default=DEFAULT_SMS_PER_GPC)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="migplan",
        description="Capacity planner and simulator for spatially shared GPUs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a deployment for a scenario")
    _add_common(p)
    p.add_argument("--out", default=None, help="write the deployment map JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate request service against a map")
    _add_common(p)
    p.add_argument("--map", default=None, help="deployment map JSON (default: plan first)")
    p.add_argument("--horizon", type=float, default=60.0, help="simulated seconds")
    p.add_argument("--arrivals", choices=("poisson", "deterministic"), default="poisson")
    p.add_argument("--rate-scale", type=float, default=1.0,
                   help="scale factor applied to scenario request rates")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--csv", default=None, help="also write a flat per-service CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconfigure", help="re-plan one service against a map")
    _add_common(p)
    p.add_argument("--map", default=None, help="existing map (default: plan first)")
    p.add_argument("--service", required=True)
    p.add_argument("--rate", type=float, default=None, help="new request rate")
    p.add_argument("--slo", type=float, default=None, help="new SLO latency (ms)")
    p.add_argument("--out", default=None, help="write the new map JSON here")
    p.set_defaults(func=cmd_reconfigure)

    p = sub.add_parser("enumerate-configs", help="list all whole-GPU configurations")
    p.set_defaults(func=cmd_enumerate_configs)

    p = sub.add_parser("oracle", help="exhaustive optimum for small scenarios (test aid)")
    _add_common(p)
    p.add_argument("--max-services", type=int, default=4)
    p.add_argument("--max-gpus", type=int, default=3)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="merge flat CSV reports")
    p.add_argument("inputs", nargs="+", help="CSV files to merge")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleSLOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MigplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

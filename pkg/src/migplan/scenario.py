"""Scenario files: the services to plan for and where their profiles live."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .configurator import Service, make_service
from .errors import ValidationError
from .profiles import ProfileTable, load_profile_tables


@dataclass(frozen=True)
class ScenarioService:
    model: str
    request_rate: float
    slo_latency_ms: float


@dataclass(frozen=True)
class Scenario:
    name: str
    services: tuple[ScenarioService, ...]
    profiles: Optional[str] = None
    base_dir: Optional[Path] = None

    def profile_dir(self, override: str | Path | None = None) -> Path:
        if override is not None:
            return Path(override)
        if self.profiles is None:
            raise ValidationError(
                f"scenario {self.name!r} names no profile directory; pass one"
            )
        path = Path(self.profiles)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def to_json_obj(self) -> dict:
        obj: dict = {
            "name": self.name,
            "services": [
                {
                    "model": s.model,
                    "request_rate": s.request_rate,
                    "slo_latency_ms": s.slo_latency_ms,
                }
                for s in self.services
            ],
        }
        if self.profiles is not None:
            obj["profiles"] = self.profiles
        return obj


def load_scenario(source: str | Path) -> Scenario:
    """Parse and validate a scenario JSON file.

    Service latency bounds for planning are derived later, when Service
    objects are built: half the client-facing target.
    """
    base_dir: Optional[Path] = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        text = path.read_text(encoding="utf-8")
        base_dir = path.parent
    else:
        text = source
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("scenario: top-level value must be an object")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError("scenario.name: required non-empty string")
    raw_services = obj.get("services")
    if not isinstance(raw_services, list):
        raise ValidationError("scenario.services: required array")
    services = []
    seen = set()
    for i, entry in enumerate(raw_services):
        where = f"scenario.services[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError(f"{where}: must be an object")
        model = entry.get("model")
        if not isinstance(model, str) or not model:
            raise ValidationError(f"{where}.model: required non-empty string")
        if model in seen:
            raise ValidationError(f"{where}.model: duplicate model {model!r}")
        seen.add(model)
        try:
            rate = float(entry["request_rate"])
            slo = float(entry["slo_latency_ms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        if rate < 0:
            raise ValidationError(f"{where}.request_rate: must be >= 0, got {rate}")
        if slo <= 0:
            raise ValidationError(f"{where}.slo_latency_ms: must be > 0, got {slo}")
        services.append(
            ScenarioService(model=model, request_rate=rate, slo_latency_ms=slo)
        )
    profiles = obj.get("profiles")
    if profiles is not None and not isinstance(profiles, str):
        raise ValidationError("scenario.profiles: must be a string path")
    return Scenario(
        name=name,
        services=tuple(services),
        profiles=profiles,
        base_dir=base_dir,
    )


def scenario_services(scenario: Scenario) -> list[Service]:
    """Unconfigured Service objects, one per scenario entry, in order."""
    return [
        make_service(
            service_id=entry.model,
            model_id=entry.model,
            request_rate=entry.request_rate,
            slo_latency=entry.slo_latency_ms,
        )
        for entry in scenario.services
    ]


def load_tables_for(
    scenario: Scenario, override: str | Path | None = None
) -> dict[str, ProfileTable]:
    """Load the scenario's profile tables and check every model resolves."""
    tables = load_profile_tables(scenario.profile_dir(override))
    missing = [s.model for s in scenario.services if s.model not in tables]
    if missing:
        raise ValidationError(
            f"scenario {scenario.name!r}: no profile table for models {missing}"
        )
    return tables

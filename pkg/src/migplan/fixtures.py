"""Shipped benchmark fixtures: six service mixes over eleven models.

The profile tables behind the fixtures are synthetic. Their shapes are
plausible per-model scaling curves; the absolute throughput level of
each model carries a calibration multiplier (see
scripts/calibrate_fixtures.py) chosen so that the shipped scenarios
pack into exactly full GPUs and simulate cleanly at their nominal
rates. The InceptionV3 table reproduces its six documented operating
points verbatim through generator anchors.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Mapping

from .profiles import (
    ProfileTable,
    SyntheticModelParams,
    filter_feasible,
    serialize_profile_table,
    synthesize_profile,
)
from .scenario import Scenario, ScenarioService

FIXTURE_SEED = 0

INCEPTION_ANCHORS = (
    ((1, 4, 1), 354.0),
    ((1, 4, 2), 444.0),
    ((1, 4, 3), 446.0),
    ((4, 8, 1), 786.0),
    ((4, 8, 2), 1695.0),
    ((4, 8, 3), 1810.0),
)

# Shape parameters per model: throughput level, instance-size scaling,
# saturation work, and memory demand. Loosely sized by parameter count.
BASE_MODEL_PARAMS: dict[str, SyntheticModelParams] = {
    params.model_id: params
    for params in (
        SyntheticModelParams(
            model_id="bertlarge",
            base_throughput=150.0,
            gpc_exponent=1.12,
            sat_work=10.0,
            sat_exponent=0.8,
            weight_memory_gb=1.32,
            activation_memory_gb=0.06,
        ),
        SyntheticModelParams(
            model_id="densenet121",
            base_throughput=1400.0,
            gpc_exponent=1.02,
            sat_work=9.0,
            sat_exponent=0.7,
            weight_memory_gb=0.032,
            activation_memory_gb=0.012,
        ),
        SyntheticModelParams(
            model_id="densenet169",
            base_throughput=1100.0,
            gpc_exponent=1.04,
            sat_work=9.0,
            sat_exponent=0.7,
            weight_memory_gb=0.057,
            activation_memory_gb=0.014,
        ),
        SyntheticModelParams(
            model_id="densenet201",
            base_throughput=900.0,
            gpc_exponent=1.05,
            sat_work=10.0,
            sat_exponent=0.75,
            weight_memory_gb=0.08,
            activation_memory_gb=0.016,
        ),
        # The anchors pin the size-1 and size-4 curves absolutely and the
        # interpolation carries that level to every other size, so this
        # model's table ignores the throughput level and the calibration
        # multiplier. The shape exponents are chosen so all six shipped
        # mixes keep utilization at or below 0.78 on this model.
        SyntheticModelParams(
            model_id="inceptionv3",
            base_throughput=1000.0,
            gpc_exponent=1.4,
            sat_work=14.0,
            sat_exponent=0.7,
            weight_memory_gb=0.109,
            activation_memory_gb=0.03,
            anchors=INCEPTION_ANCHORS,
        ),
        SyntheticModelParams(
            model_id="mobilenetv2",
            base_throughput=3200.0,
            gpc_exponent=0.98,
            sat_work=7.0,
            sat_exponent=0.6,
            weight_memory_gb=0.014,
            activation_memory_gb=0.008,
        ),
        SyntheticModelParams(
            model_id="resnet101",
            base_throughput=800.0,
            gpc_exponent=1.08,
            sat_work=11.0,
            sat_exponent=0.8,
            weight_memory_gb=0.178,
            activation_memory_gb=0.02,
        ),
        SyntheticModelParams(
            model_id="resnet152",
            base_throughput=600.0,
            gpc_exponent=1.1,
            sat_work=12.0,
            sat_exponent=0.8,
            weight_memory_gb=0.24,
            activation_memory_gb=0.025,
        ),
        SyntheticModelParams(
            model_id="resnet50",
            base_throughput=1300.0,
            gpc_exponent=1.06,
            sat_work=10.0,
            sat_exponent=0.75,
            weight_memory_gb=0.102,
            activation_memory_gb=0.018,
        ),
        SyntheticModelParams(
            model_id="vgg16",
            base_throughput=500.0,
            gpc_exponent=1.1,
            sat_work=12.0,
            sat_exponent=0.85,
            weight_memory_gb=0.553,
            activation_memory_gb=0.03,
        ),
        SyntheticModelParams(
            model_id="vgg19",
            base_throughput=450.0,
            gpc_exponent=1.1,
            sat_work=12.0,
            sat_exponent=0.85,
            weight_memory_gb=0.575,
            activation_memory_gb=0.032,
        ),
    )
}

MODEL_IDS = tuple(BASE_MODEL_PARAMS)

# (request rate in requests/s, SLO latency in ms) per scenario and model.
SCENARIOS: dict[str, dict[str, tuple[float, float]]] = {
    "S1": {
        "bertlarge": (19, 6434),
        "densenet121": (353, 183),
        "inceptionv3": (460, 419),
        "mobilenetv2": (677, 167),
        "resnet50": (829, 205),
        "vgg19": (354, 397),
    },
    "S2": {
        "bertlarge": (19, 6434),
        "densenet121": (353, 183),
        "densenet169": (308, 217),
        "densenet201": (276, 169),
        "inceptionv3": (460, 419),
        "mobilenetv2": (677, 167),
        "resnet101": (393, 212),
        "resnet152": (281, 213),
        "resnet50": (829, 205),
        "vgg16": (410, 400),
        "vgg19": (354, 397),
    },
    "S3": {
        "bertlarge": (46, 4294),
        "densenet121": (728, 126),
        "densenet169": (633, 150),
        "densenet201": (493, 119),
        "inceptionv3": (1051, 282),
        "mobilenetv2": (1546, 113),
        "resnet101": (760, 144),
        "resnet152": (543, 146),
        "resnet50": (1463, 138),
        "vgg16": (780, 227),
        "vgg19": (673, 265),
    },
    "S4": {
        "bertlarge": (69, 4294),
        "densenet121": (1091, 126),
        "densenet169": (949, 150),
        "densenet201": (739, 119),
        "inceptionv3": (1576, 282),
        "mobilenetv2": (2318, 113),
        "resnet101": (1140, 144),
        "resnet152": (815, 146),
        "resnet50": (2195, 138),
        "vgg16": (1169, 227),
        "vgg19": (1010, 265),
    },
    "S5": {
        "bertlarge": (843, 2153),
        "densenet121": (2228, 69),
        "densenet169": (3507, 84),
        "densenet201": (1513, 70),
        "inceptionv3": (3815, 146),
        "mobilenetv2": (5009, 59),
        "resnet101": (1874, 77),
        "resnet152": (1340, 80),
        "resnet50": (2796, 72),
        "vgg16": (1773, 115),
        "vgg19": (1531, 134),
    },
    "S6": {
        "bertlarge": (1264, 6434),
        "densenet121": (3342, 183),
        "densenet169": (5260, 217),
        "densenet201": (2269, 169),
        "inceptionv3": (5722, 419),
        "mobilenetv2": (7513, 167),
        "resnet101": (2811, 212),
        "resnet152": (2010, 213),
        "resnet50": (4196, 205),
        "vgg16": (2659, 400),
        "vgg19": (2296, 397),
    },
}

SCENARIO_NAMES = tuple(SCENARIOS)


def model_params(model_id: str, scale: float = 1.0) -> SyntheticModelParams:
    base = BASE_MODEL_PARAMS[model_id]
    if scale == 1.0:
        return base
    return replace(base, base_throughput=base.base_throughput * scale)


def build_table(model_id: str, scale: float = 1.0) -> ProfileTable:
    """Synthesize one model's fixture table at a throughput scale."""
    return filter_feasible(
        synthesize_profile(model_params(model_id, scale), seed=FIXTURE_SEED)
    )


def build_tables(calibration: Mapping[str, float]) -> dict[str, ProfileTable]:
    return {m: build_table(m, calibration.get(m, 1.0)) for m in MODEL_IDS}


def make_scenario(name: str, profiles: str = "../profiles") -> Scenario:
    services = tuple(
        ScenarioService(model=model, request_rate=rate, slo_latency_ms=slo)
        for model, (rate, slo) in SCENARIOS[name].items()
    )
    return Scenario(name=name, services=services, profiles=profiles)


def load_calibration(path: str | Path) -> dict[str, float]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k): float(v) for k, v in obj["throughput_scale"].items()}


def write_fixture_tree(out_dir: str | Path, calibration: Mapping[str, float]) -> None:
    """Write profiles/<model>.csv and scenarios/<name>.json under out_dir."""
    out_dir = Path(out_dir)
    profile_dir = out_dir / "profiles"
    scenario_dir = out_dir / "scenarios"
    profile_dir.mkdir(parents=True, exist_ok=True)
    scenario_dir.mkdir(parents=True, exist_ok=True)
    for model in MODEL_IDS:
        table = build_table(model, calibration.get(model, 1.0))
        (profile_dir / f"{model}.csv").write_text(
            serialize_profile_table(table, "csv"), encoding="utf-8"
        )
    for name in SCENARIO_NAMES:
        scenario = make_scenario(name)
        (scenario_dir / f"{name.lower()}.json").write_text(
            json.dumps(scenario.to_json_obj(), indent=2) + "\n", encoding="utf-8"
        )

"""migplan: capacity planning and simulation for spatially shared GPUs.

Plans deployments of inference services onto GPUs partitioned into
isolated instances (1, 2, 3, 4 or 7 GPCs, seven slots per GPU), with
several processes of the same model sharing one instance. Planning is
driven entirely by profile tables, measured or synthetic; no GPU is
required. A discrete-event simulator and two waste metrics (internal
slack inside allocated partitions, external fragmentation between
them) evaluate the resulting deployment maps.
"""

from .allocator import (
    DeploymentMap,
    PlacementChange,
    diff_maps,
    optimize_allocation,
    propose_small_segments,
    reconfigure_service,
    relocate_segments,
)
from .configurator import (
    Service,
    Triplet,
    configure_service,
    decide_best_triplets,
    make_service,
    match_demand,
    select_optimal_segment,
)
from .errors import (
    InfeasibleSLOError,
    MigplanError,
    OracleBoundsError,
    ParameterError,
    ProfileParseError,
    SimulationConfigError,
    SmallSegmentsUnavailableError,
    UndefinedMetricError,
    ValidationError,
)
from .evaluation import (
    ActivityReport,
    SimReport,
    Workload,
    allocated_fraction,
    external_fragmentation,
    internal_slack,
    run_simulation,
    slo_compliance,
)
from .mig import (
    INSTANCE_SIZES,
    GpuState,
    Placement,
    allowed_start_slots,
    enumerate_full_configs,
    feasible_size_multisets,
)
from .oracle import OracleBounds, min_gpcs, min_gpus, oracle_plan
from .pipeline import PlanOptions, PlanResult, plan_scenario, plan_services
from .profiles import (
    DEFAULT_BATCH_SIZES,
    DEFAULT_MEMORY_MAP,
    DEFAULT_PROCESS_COUNTS,
    ProfilePoint,
    ProfileTable,
    SyntheticModelParams,
    filter_feasible,
    load_profile_table,
    load_profile_tables,
    serialize_profile_table,
    synthesize_profile,
)
from .scenario import Scenario, load_scenario, load_tables_for, scenario_services

__version__ = "0.1.0"

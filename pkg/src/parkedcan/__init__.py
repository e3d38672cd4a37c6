"""Ignition-off vehicle CAN network simulator and trace analytics."""

from .attack import (
    AttackKind,
    AttackPlan,
    FunctionLoad,
    FunctionLoadTable,
    build_injections,
    dob_attack,
    drain_suite_plans,
    execute,
    required_injection_period,
    standard_plan,
)
from .bus import BusConfig, BusEvent, BusEventKind, RunResult, distinct_id_count, run
from .ecu import (
    EcuConfig,
    EcuMode,
    EcuState,
    FunctionSpec,
    MessageSpec,
    RecoveryPolicy,
    StandbyFunction,
    Terminal,
)
from .frame import (
    ALL_ONES_FRAME,
    BitStream,
    CanFrame,
    deserialize_frame,
    dominant_runs,
    serialize_frame,
)
from .fleet import generate_fleet
from .power import (
    BatteryConfig,
    DrainReport,
    amplification,
    integrate_drain,
    operation_time_ideal,
    operation_time_peukert,
)
from .recon import ReconReport, TraceRecord, analyze, awakened_ratio, split_ignition
from .vehicle import VehicleConfig, load_vehicle, reference_vehicle
from .wakeup import WakeupFilterParams, detect_wakeup, frame_wakes_bus

__version__ = "0.1.0"

__all__ = [
    "ALL_ONES_FRAME",
    "AttackKind",
    "AttackPlan",
    "BatteryConfig",
    "BitStream",
    "BusConfig",
    "BusEvent",
    "BusEventKind",
    "CanFrame",
    "DrainReport",
    "EcuConfig",
    "EcuMode",
    "EcuState",
    "FunctionLoad",
    "FunctionLoadTable",
    "FunctionSpec",
    "MessageSpec",
    "ReconReport",
    "RecoveryPolicy",
    "RunResult",
    "StandbyFunction",
    "Terminal",
    "TraceRecord",
    "VehicleConfig",
    "WakeupFilterParams",
    "amplification",
    "analyze",
    "awakened_ratio",
    "build_injections",
    "deserialize_frame",
    "distinct_id_count",
    "dob_attack",
    "dominant_runs",
    "drain_suite_plans",
    "execute",
    "frame_wakes_bus",
    "detect_wakeup",
    "generate_fleet",
    "integrate_drain",
    "load_vehicle",
    "operation_time_ideal",
    "operation_time_peukert",
    "reference_vehicle",
    "required_injection_period",
    "run",
    "serialize_frame",
    "split_ignition",
    "standard_plan",
]

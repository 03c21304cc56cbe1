"""Planner and simulator for single-GPU fine-tuning with CPU-memory and NVMe offloading."""

from .capacity import (
    FUYOU_LIKE,
    ZERO_INFINITY_LIKE,
    PlacementPolicy,
    PolicyId,
    PriceTable,
    cost_effectiveness,
    feasible,
    max_trainable,
)
from .cost_model import CostBreakdown, backward_optimizer_time, forward_time, iteration_time, swap_budget
from .engine import SimTrace, simulate
from .errors import ConfigError, InfeasibleError, OffloadSimError, ScheduleError, SimulationError
from .hardware import HardwareConfig, aggregate_ssd_bw, hardware_preset
from .invariants import check_trace_invariants
from .planner import SwapPlan, build_priority_queues, plan_swaps, swap_benefit_factor
from .scenario import Scenario, load_scenario, scenario_preset
from .schedule import ResourceId, ScheduleVariant, TaskGraph, build_schedule
from .workload import ModelConfig, build_layer_profiles, footprint, model_preset, total_param_count

__version__ = "0.1.0"

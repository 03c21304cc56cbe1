import dataclasses
import functools

import pytest

from offloadsim.cost_model import WorkloadTotals
from offloadsim.hardware import HardwareConfig, hardware_preset
from offloadsim.runner import simulate_scenario
from offloadsim.scenario import scenario_preset
from offloadsim.schedule import ScheduleVariant


def hand_hw(n_ssd=4, gpu_tput=1e14, **kw):
    """Small-number machine used by the hand-derived cost examples."""
    params = dict(
        name=f"hand-{n_ssd}ssd", bw_gpu=16e9, bw_s2c=6e9, bw_c2s=3e9, n_ssd=n_ssd,
        gpu_mem=80e9, cpu_mem=768e9, ssd_capacity=1e14, gpu_tput=gpu_tput, cpu_opt_tput=2e9,
    )
    params.update(kw)
    return HardwareConfig(**params)


def hand_workload(gpu_tput=1e14):
    """p = 1e9 parameters whose forward pass takes exactly 0.5 s at ``gpu_tput``."""
    return WorkloadTotals(params=1e9, forward_flops=0.5 * gpu_tput)


@pytest.fixture
def hw4():
    return hand_hw(4)


@pytest.fixture
def hw12():
    return hand_hw(12)


@pytest.fixture
def workload():
    return hand_workload()


# Scenarios shared by the dominance, analytic-agreement and bypass checks.
SIM_MATRIX = tuple(
    [f"13b-{gpu}-12ssd-b{b}" for gpu in ("a100", "4090") for b in (8, 16, 32, 64)]
    + [f"{m}-{hw}-b{b}" for m in ("13b", "33b", "65b") for hw in ("a100-4ssd", "4090-6ssd", "a100-2ssd")
       for b in (8, 32)]
    + ["175b-4090-6ssd-b64", "175b-a100-12ssd-b16"]
)


@functools.lru_cache(maxsize=None)
def simulated(name: str, variant: str, placement: str = "auto"):
    sc = scenario_preset(name)
    sc = dataclasses.replace(
        sc, variant=ScheduleVariant(variant),
        simulation=dataclasses.replace(sc.simulation, checkpoint_placement=placement),
    )
    return simulate_scenario(sc)


@pytest.fixture
def a100():
    return hardware_preset("a100-12ssd")

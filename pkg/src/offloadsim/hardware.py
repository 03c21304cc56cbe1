"""Machine description and bandwidth helpers."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, fields

from .workload import ModelConfig, footprint


class Direction(str, enum.Enum):
    S2C = "S2C"
    C2S = "C2S"


@dataclass(frozen=True)
class HardwareConfig:
    """Single-GPU server with an NVMe array behind the CPU.

    Bandwidths are bytes/s. ``bw_gpu`` is per direction of the duplex PCIe
    link; ``bw_s2c``/``bw_c2s`` are per SSD. ``gpu_tput`` is sustained FLOP/s,
    ``cpu_opt_tput`` is parameters updated per second by the CPU optimizer.
    """

    name: str
    bw_gpu: float
    bw_s2c: float
    bw_c2s: float
    n_ssd: int
    gpu_mem: float
    cpu_mem: float
    ssd_capacity: float
    gpu_tput: float
    cpu_opt_tput: float


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate(hw: HardwareConfig, model: ModelConfig | None = None) -> ValidationReport:
    report = ValidationReport()
    for f in fields(hw):
        if f.name == "name":
            continue
        value = getattr(hw, f.name)
        if f.name == "n_ssd":
            if not isinstance(value, int) or value < 1:
                report.errors.append(f"n_ssd must be ≥ 1 (got {value!r})")
        elif not isinstance(value, (int, float)) or not value > 0:
            report.errors.append(f"{f.name} must be > 0 (got {value!r})")
    if model is not None and report.ok:
        states = footprint(model).model_state_bytes
        if hw.ssd_capacity < states:
            report.warnings.append(
                f"ssd_capacity {hw.ssd_capacity:.3e} B < model states {states:.3e} B for {model.name}"
            )
    return report


def aggregate_ssd_bw(hw: HardwareConfig, direction: Direction | str) -> float:
    direction = Direction(direction)
    per_ssd = hw.bw_s2c if direction is Direction.S2C else hw.bw_c2s
    return per_ssd * hw.n_ssd


# Per-SSD bandwidth of the preset array. A Gen-4 datacenter drive is rated
# near 6 GB/s read / 3 GB/s write; presets use half of that as the sustained
# per-drive rate inside a 12-drive array hanging off one CPU socket.
SSD_NOMINAL_READ = 6.0e9
SSD_NOMINAL_WRITE = 3.0e9
SSD_READ = 3.0e9
SSD_WRITE = 1.5e9
SSD_CAPACITY = 3.84e12

PCIE4_X16 = 2.5e10
CPU_MEM = 768e9
CPU_OPT_TPUT = 2.0e9

# Sustained FLOP/s: 172 TFLOPS at 86% of peak (A100), 87 TFLOPS at 53% (4090).
_GPUS = {
    "a100": (80e9, 2.0e14),
    "4090": (24e9, 1.64e14),
}

_PRESET_RE = re.compile(r"^(?P<gpu>a100|4090)(?:-(?P<n>\d+)ssd)?$")


def hardware_preset(name: str, **overrides) -> HardwareConfig:
    """Presets named ``<gpu>-<N>ssd`` (e.g. ``a100-12ssd``); ``<gpu>`` alone means 12 SSDs.

    Overriding ``n_ssd`` renames the preset and scales the array capacity
    unless ``name`` or ``ssd_capacity`` are overridden too.
    """
    m = _PRESET_RE.match(name.lower())
    if not m:
        raise KeyError(f"unknown hardware preset {name!r}; expected a100-<N>ssd or 4090-<N>ssd")
    gpu = m["gpu"]
    n = int(m["n"]) if m["n"] else 12
    if isinstance(overrides.get("n_ssd"), int) and overrides["n_ssd"] >= 1:
        n = overrides["n_ssd"]
    gpu_mem, tput = _GPUS[gpu]
    params = dict(
        name=f"{gpu}-{n}ssd",
        bw_gpu=PCIE4_X16,
        bw_s2c=SSD_READ,
        bw_c2s=SSD_WRITE,
        n_ssd=n,
        gpu_mem=gpu_mem,
        cpu_mem=CPU_MEM,
        ssd_capacity=SSD_CAPACITY * n,
        gpu_tput=tput,
        cpu_opt_tput=CPU_OPT_TPUT,
    )
    params.update(overrides)
    return HardwareConfig(**params)


HARDWARE_PRESETS = ("a100-12ssd", "4090-12ssd")

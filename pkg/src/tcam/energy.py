"""Per-behavior energy model of the always-on camera and its closed-form analyses.

Everything is SI internally (J, W, s, bits); the table defaults are the
measured per-behavior figures. Powers handed back to callers are in µW
because that is the scale every headline number lives at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ModelError

UW = 1e-6
UJ = 1e-6
DAY = 86400.0

METHODS = ("raw", "jpeg", "h264", "h264cd")
COMPONENTS = ("sensor", "isp", "flash", "radio", "base")

# archival processing per method; the on-the-fly JPEG is paid during capture
_PROCESSING = {"raw": None, "jpeg": None, "h264": "e_h264", "h264cd": "e_h264cd"}


@dataclass(frozen=True)
class EnergyTable:
    p_motion_mode: float = 48.8 * UW
    e_pd: float = 39.6 * UJ
    e_vga_capture: float = 349 * UJ
    e_stream: float = 14.9 * UJ
    e_fd: float = 643 * UJ
    e_fr: float = 622 * UJ
    e_jpeg: float = 11.9 * UJ
    e_h264: float = 28.3 * UJ
    e_h264cd: float = 14.8 * UJ
    e_cd: float = 2.8 * UJ  # already inside e_h264cd; kept for reporting
    flash_write_per_bit: float = 110e-12
    flash_read_per_bit: float = 11e-12
    egress_per_bit: float = 112.5e-9  # whole-system cost per transmitted bit
    radio_only_per_bit: float = 15e-9  # transmitter alone; informational
    p_sleep_system: float = 7.35 * UW
    p_flash_sleep: float = 0.003 * UW
    p_recharge: float = 10 * UW
    p_base: float = 0.0  # PMU/always-on share of motion-mode power, if known

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ModelError(f"energy table entry {f.name} must be finite and >= 0, got {v}")
        if self.p_base + self.p_flash_sleep > self.p_motion_mode:
            raise ModelError("p_base + p_flash_sleep exceed the motion-mode power")


@dataclass(frozen=True)
class EventRates:
    motion_interval: float | None = 1200.0  # seconds; None means no motion at all
    p_person: float = 0.5
    p_face: float = 0.5
    p_unregistered: float = 0.2

    def __post_init__(self):
        if self.motion_interval is not None and not self.motion_interval > 0:
            raise ModelError("motion interval must be > 0")
        for k in ("p_person", "p_face", "p_unregistered"):
            if not 0 <= getattr(self, k) <= 1:
                raise ModelError(f"{k} must be in [0, 1]")

    @property
    def motion_rate(self) -> float:
        if self.motion_interval is None or math.isinf(self.motion_interval):
            return 0.0
        return 1.0 / self.motion_interval


@dataclass(frozen=True)
class Battery:
    voltage: float = 3.0
    capacity_mah: float = 3.4
    usable_fraction: float = 0.83
    max_current: float = 150e-6
    pmu_efficiency: float = 0.64

    def __post_init__(self):
        if not 0 < self.usable_fraction <= 1:
            raise ModelError("usable_fraction must be in (0, 1]")
        if not 0 < self.pmu_efficiency <= 1:
            raise ModelError("pmu_efficiency must be in (0, 1]")

    @property
    def nominal_energy(self) -> float:
        return self.voltage * self.capacity_mah * 1e-3 * 3600

    @property
    def usable_energy(self) -> float:
        return self.nominal_energy * self.usable_fraction


@dataclass(frozen=True)
class Storage:
    flash_bits: int = 256_000 * 8
    sizes: dict = field(default_factory=lambda: {
        "raw": 3.7e6, "jpeg": 335e3, "h264": 158.2e3, "h264cd": 27.4e3})
    radio_modes: dict = field(default_factory=lambda: {"long": 256.0, "short": 480.0})
    radio_mode: str = "short"
    egress: bool = True  # False keeps frames in flash until it fills

    def __post_init__(self):
        if any(not v > 0 for v in self.sizes.values()):
            raise ModelError("frame sizes must be positive")
        if self.radio_mode not in self.radio_modes:
            raise ModelError(f"unknown radio mode {self.radio_mode!r}")

    def frame_bits(self, method):
        try:
            return self.sizes[method]
        except KeyError:
            raise ModelError(f"unknown compression method {method!r}") from None


# ------------------------------------------------------------ unit costs

def egress_cost(bits, table=EnergyTable(), storage=Storage()):
    """(energy J, {radio mode: seconds})."""
    return bits * table.egress_per_bit, {m: bits / r for m, r in storage.radio_modes.items()}


def flash_write_cost(bits, table=EnergyTable()) -> float:
    return bits * table.flash_write_per_bit


def flash_capacity(bits_per_frame, storage=Storage()) -> int:
    return int(storage.flash_bits // bits_per_frame)


def stages(table: EnergyTable, storage: Storage, method: str):
    """HED stage -> [(behavior, component, joules)]."""
    bits = storage.frame_bits(method)
    capture = [("vga_capture", "sensor", table.e_vga_capture),
               ("stream", "sensor", table.e_stream),
               ("jpeg", "isp", table.e_jpeg)]
    store = []
    proc = _PROCESSING[method]
    if proc:
        store.append(("compress", "isp", getattr(table, proc)))
    store.append(("flash_write", "flash", flash_write_cost(bits, table)))
    if storage.egress:
        store.append(("egress", "radio", egress_cost(bits, table, storage)[0]))
    return {
        "pd": [("pd", "isp", table.e_pd)],
        "capture": capture,
        "fd": [("fd", "isp", table.e_fd)],
        "fr": [("fr", "isp", table.e_fr)],
        "store": store,
    }


def stage_total(entries) -> float:
    return sum(e for _, _, e in entries)


# ---------------------------------------------------------------- ledger

@dataclass
class EnergyLedger:
    behaviors: dict = field(default_factory=dict)  # J
    components: dict = field(default_factory=lambda: {c: 0.0 for c in COMPONENTS})
    elapsed: float = 0.0
    flash_frames: int = 0
    flash_peak: int = 0
    flash_rejected: int = 0
    egress_seconds: float = 0.0
    counts: dict = field(default_factory=dict)

    def add(self, behavior, component, joules, count=1.0):
        self.behaviors[behavior] = self.behaviors.get(behavior, 0.0) + joules
        self.components[component] += joules
        self.counts[behavior] = self.counts.get(behavior, 0) + count

    def add_stage(self, entries, times=1.0):
        for b, c, e in entries:
            self.add(b, c, e * times, times)

    def add_base(self, seconds, table: EnergyTable):
        """Motion-mode power over `seconds`, split sensor / flash sleep / base."""
        self.elapsed += seconds
        sensor = table.p_motion_mode - table.p_flash_sleep - table.p_base
        self.add("motion_mode", "sensor", sensor * seconds, 0)
        self.add("flash_sleep", "flash", table.p_flash_sleep * seconds, 0)
        if table.p_base:
            self.add("base", "base", table.p_base * seconds, 0)

    @property
    def total(self) -> float:
        return sum(self.components.values())

    @property
    def average_power(self) -> float:
        """W; zero for an empty ledger."""
        return self.total / self.elapsed if self.elapsed > 0 else 0.0

    def shares(self):
        t = self.total
        return {c: (v / t if t else 0.0) for c, v in self.components.items()}

    def rows(self):
        """(kind, name, energy_J, average_uW) rows for CSV output."""
        out = []
        for b, e in sorted(self.behaviors.items()):
            out.append(("behavior", b, e, e / self.elapsed / UW if self.elapsed else 0.0))
        for c, e in self.components.items():
            out.append(("component", c, e, e / self.elapsed / UW if self.elapsed else 0.0))
        out.append(("total", "all", self.total, self.average_power / UW))
        return out


# -------------------------------------------------------------- analytic

def average_power(rates: EventRates, table=EnergyTable(), storage=Storage(), method="h264cd",
                  horizon=DAY):
    """Steady-state expectation. Returns (µW, ledger of expected energies over `horizon`)."""
    st = stages(table, storage, method)
    led = EnergyLedger()
    led.add_base(horizon, table)
    n = rates.motion_rate * horizon
    p = rates.p_person
    led.add_stage(st["pd"], n)
    led.add_stage(st["capture"], n * p)
    led.add_stage(st["fd"], n * p)
    led.add_stage(st["fr"], n * p * rates.p_face)
    k = n * p * rates.p_face * rates.p_unregistered
    led.add_stage(st["store"], k)
    if storage.egress:
        led.egress_seconds = k * storage.frame_bits(method) / storage.radio_modes[storage.radio_mode]
    return led.average_power / UW, led


def flat_power(motion_interval, table=EnergyTable(), storage=Storage()) -> float:
    """µW of the pipeline without HED: every motion event is captured, stored and sent raw."""
    bits = storage.frame_bits("raw")
    e = table.e_vga_capture + table.e_stream + flash_write_cost(bits, table)
    if storage.egress:
        e += egress_cost(bits, table, storage)[0]
    return (table.p_motion_mode + e / motion_interval) / UW


@dataclass(frozen=True)
class SweepResult:
    pd_grid: np.ndarray
    urfd_grid: np.ndarray
    hed_uw: np.ndarray  # (len(pd_grid), len(urfd_grid))
    flat_uw: float
    savings: np.ndarray

    def rows(self):
        for i, pd in enumerate(self.pd_grid):
            for j, ur in enumerate(self.urfd_grid):
                yield float(pd), float(ur), float(self.hed_uw[i, j]), self.flat_uw, float(self.savings[i, j])


DEFAULT_GRID = np.round(np.linspace(0, 1, 11), 10)


def sweep_hed(table=EnergyTable(), storage=Storage(), motion_interval=60.0,
              pd_grid=DEFAULT_GRID, urfd_grid=DEFAULT_GRID, method="raw") -> SweepResult:
    """HED power over (P(person), P(unregistered face)) with face detection always passing."""
    pd_grid = np.asarray(pd_grid, float)
    urfd_grid = np.asarray(urfd_grid, float)
    if ((pd_grid < 0) | (pd_grid > 1)).any() or ((urfd_grid < 0) | (urfd_grid > 1)).any():
        raise ModelError("sweep grids must lie in [0, 1]")
    hed = np.empty((len(pd_grid), len(urfd_grid)))
    for i, pd in enumerate(pd_grid):
        for j, ur in enumerate(urfd_grid):
            hed[i, j] = average_power(EventRates(motion_interval, pd, 1.0, ur), table, storage, method)[0]
    flat = flat_power(motion_interval, table, storage)
    return SweepResult(pd_grid, urfd_grid, hed, flat, flat / hed)


def power_breakdown(rates: EventRates, table=EnergyTable(), storage=Storage(), method="h264cd"):
    """Component -> share of average power; shares sum to 1."""
    return average_power(rates, table, storage, method)[1].shares()


def lifetime_days(power_uw, battery=Battery(), recharge_uw=0.0) -> float:
    """Days until the usable charge is gone; inf when recharge covers the load."""
    if power_uw <= 0:
        raise ModelError("power must be positive")
    net = power_uw - recharge_uw
    if net <= 0:
        return math.inf
    return battery.usable_energy / (net * UW) / DAY


def shelf_life_days(battery=Battery(), table=EnergyTable(), recharge=False) -> float:
    return lifetime_days(table.p_sleep_system / UW, battery, table.p_recharge / UW if recharge else 0.0)


def calibrate_usable_fraction(power_uw, days, battery=Battery()) -> float:
    return power_uw * UW * days * DAY / battery.nominal_energy


def capture_store_power(method, motion_interval, table=EnergyTable(), storage=Storage()) -> float:
    """µW when every motion event is captured, compressed, written and sent (no DNN gating)."""
    st = stages(table, storage, method)
    e = stage_total(st["capture"]) + stage_total(st["store"])
    return (table.p_motion_mode + e / motion_interval) / UW


def lifetime_extension(method="h264cd", baseline="raw", motion_interval=60.0,
                       table=EnergyTable(), storage=Storage(), battery=Battery()):
    """Lifetime ratio of `method` over `baseline` in the capture-store-egress scenario."""
    a = lifetime_days(capture_store_power(method, motion_interval, table, storage), battery)
    b = lifetime_days(capture_store_power(baseline, motion_interval, table, storage), battery)
    return a / b


def interval_for_extension(ratio, method="h264cd", baseline="raw", table=EnergyTable(),
                           storage=Storage()) -> float:
    """Motion interval (s) at which lifetime_extension equals `ratio`; inf if never."""
    st_m = stages(table, storage, method)
    st_b = stages(table, storage, baseline)
    em = stage_total(st_m["capture"]) + stage_total(st_m["store"])
    eb = stage_total(st_b["capture"]) + stage_total(st_b["store"])
    den = eb - ratio * em
    if den <= 0:
        return math.inf
    return den / ((ratio - 1) * table.p_motion_mode)


def peak_current_report(durations: dict, table=EnergyTable(), battery=Battery()):
    """[(behavior, battery current A, over limit?)] for behaviors with known durations.

    Current is drawn on the battery side, so the PMU efficiency applies here.
    """
    out = []
    for name, seconds in durations.items():
        e = table.p_motion_mode * seconds if name == "motion_mode" else getattr(table, f"e_{name}")
        i = e / seconds / battery.voltage / battery.pmu_efficiency
        out.append((name, i, i > battery.max_current))
    return out


# ------------------------------------------------------------- placement

@dataclass(frozen=True)
class Placement:
    choice: str  # "on_chip" | "off_chip"
    on_chip_w: float
    off_chip_w: float
    crossover_rate: float  # executions/s where both cost the same


def placement_optimize(dnn_bits, exec_rate, sram_leak_per_bit, flash_read_per_bit=11e-12,
                       overhead_per_bit=0.0) -> Placement:
    """Keep parameters in leaky SRAM, or reload them from flash on every execution."""
    if dnn_bits <= 0 or sram_leak_per_bit <= 0 or exec_rate < 0:
        raise ModelError("placement needs positive sizes and leakage, non-negative rate")
    on = dnn_bits * sram_leak_per_bit
    per_exec = dnn_bits * (flash_read_per_bit + overhead_per_bit)
    off = exec_rate * per_exec
    r_star = sram_leak_per_bit / (flash_read_per_bit + overhead_per_bit) \
        if flash_read_per_bit + overhead_per_bit > 0 else math.inf
    return Placement("on_chip" if on < off else "off_chip", on, off, r_star)


def simulate_placement(dnn_bits, exec_rate, sram_leak_per_bit, flash_read_per_bit=11e-12,
                       overhead_per_bit=0.0, duration=DAY):
    """Event-by-event energy of both placements over a periodic trace. Returns (on J, off J)."""
    on, off = EnergyLedger(), EnergyLedger()
    on.elapsed = off.elapsed = duration
    on.add("sram_leak", "isp", dnn_bits * sram_leak_per_bit * duration, 0)
    if exec_rate > 0:
        period = 1.0 / exec_rate
        load = dnn_bits * (flash_read_per_bit + overhead_per_bit)
        k = 1
        while k * period <= duration:
            off.add("param_load", "flash", load)
            k += 1
    return on.total, off.total

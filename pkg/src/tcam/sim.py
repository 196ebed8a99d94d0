"""Discrete-event replay of motion events through the hierarchical detector."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .energy import DAY, EnergyLedger, EnergyTable, EventRates, Storage, flash_capacity, stages
from .errors import FormatError


@dataclass(frozen=True)
class TraceEvent:
    time: float  # seconds from trace start
    person: bool
    face: bool
    registered: bool

    @property
    def intruder(self) -> bool:
        return self.person and self.face and not self.registered


def generate_trace(rates: EventRates, duration: float, rng: np.random.Generator) -> list[TraceEvent]:
    """Poisson motion arrivals; stage outcomes drawn in a fixed order per event."""
    if rates.motion_rate == 0:
        return []
    gaps = []
    t = 0.0
    # draw in chunks so the sequence does not depend on a size guess
    chunk = max(16, int(duration * rates.motion_rate * 1.2) + 16)
    while t <= duration:
        g = rng.exponential(rates.motion_interval, chunk)
        gaps.append(g)
        t += g.sum()
    times = np.cumsum(np.concatenate(gaps))
    times = times[times <= duration]
    u = rng.random((len(times), 3))
    person = u[:, 0] < rates.p_person
    face = person & (u[:, 1] < rates.p_face)
    unreg = face & (u[:, 2] < rates.p_unregistered)
    return [TraceEvent(float(t), bool(p), bool(f), not bool(x))
            for t, p, f, x in zip(times, person, face, unreg)]


def simulate_trace(trace, table=EnergyTable(), storage=Storage(), method="h264cd",
                   duration: float | None = None) -> EnergyLedger:
    """Run every event through motion -> person -> face -> recognition -> store/egress.

    Elapsed time is `duration` when given, otherwise the last event time. With
    egress on, frames stream out of flash as they are written; with egress off
    they accumulate and writes past capacity are rejected (and counted).
    """
    prev = -math.inf
    for ev in trace:
        if ev.time < prev:
            raise FormatError(f"trace not sorted by time at t={ev.time}")
        if ev.time < 0:
            raise FormatError("trace times must be >= 0")
        prev = ev.time
    end = duration if duration is not None else (trace[-1].time if trace else 0.0)
    if trace and trace[-1].time > end:
        raise FormatError("trace runs past the simulated duration")

    st = stages(table, storage, method)
    bits = storage.frame_bits(method)
    cap = flash_capacity(bits, storage)
    rate = storage.radio_modes[storage.radio_mode]
    led = EnergyLedger()
    led.add_base(end, table)
    for ev in trace:
        led.add_stage(st["pd"])
        if not ev.person:
            continue
        led.add_stage(st["capture"])
        led.add_stage(st["fd"])
        if not ev.face:
            continue
        led.add_stage(st["fr"])
        if ev.registered:
            continue
        if not storage.egress and led.flash_frames >= cap:
            led.flash_rejected += 1
            continue
        led.add_stage(st["store"])
        if storage.egress:
            led.egress_seconds += bits / rate
            led.flash_peak = max(led.flash_peak, 1)
        else:
            led.flash_frames += 1
            led.flash_peak = max(led.flash_peak, led.flash_frames)
    return led


def monte_carlo_power(rates: EventRates, days=30, seed=0, table=EnergyTable(), storage=Storage(),
                      method="h264cd"):
    """(µW, ledger) from one seeded stochastic trace."""
    duration = days * DAY
    trace = generate_trace(rates, duration, np.random.default_rng(seed))
    led = simulate_trace(trace, table, storage, method, duration)
    return led.average_power / 1e-6, led


_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def _flag(v, line):
    v = v.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise FormatError(f"trace line {line}: cannot read {v!r} as a boolean")


def read_trace(path) -> list[TraceEvent]:
    """CSV with header time_s,person,face,registered."""
    out = []
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        need = {"time_s", "person", "face", "registered"}
        if rd.fieldnames is None or not need <= set(rd.fieldnames):
            raise FormatError(f"{path}: trace header must contain {sorted(need)}")
        for i, r in enumerate(rd, start=2):
            try:
                t = float(r["time_s"])
            except ValueError:
                raise FormatError(f"trace line {i}: bad time {r['time_s']!r}") from None
            out.append(TraceEvent(t, _flag(r["person"], i), _flag(r["face"], i), _flag(r["registered"], i)))
    return out


def write_trace(path, trace):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "person", "face", "registered"])
        for e in trace:
            w.writerow([repr(e.time), int(e.person), int(e.face), int(e.registered)])

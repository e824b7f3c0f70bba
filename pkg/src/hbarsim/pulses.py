"""Pulse-sequence description and compilation to piecewise-constant schedules.

A sequence is a list of elements executed back to back; an entry may also be
a tuple of elements applied simultaneously (e.g. parking one qubit while the
other sits on a resonance).  Compilation produces a :class:`Schedule`:
ordered segments of constant qubit frequencies plus instantaneous
state-preparation events pinned to segment boundaries.  Qubits idle at their
operating points whenever nothing addresses them.

Pulse amplitude is expressed directly as a target frequency (flux is not
modeled) and square pulses are ideally square.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DeviceSpec

__all__ = [
    "PiPulse",
    "FluxSquare",
    "SwapSegment",
    "Idle",
    "Segment",
    "PrepEvent",
    "Schedule",
    "compile",
    "calibrate_swap",
    "chevron_grid",
    "schedule_f_max",
]


@dataclass(frozen=True)
class PiPulse:
    """Excite a qubit: instantaneous preparation when ``duration`` is None,
    otherwise a resonant square drive of the given length and strength."""

    qubit: str
    duration: float | None = None
    drive_two_g: float | None = None

    def __post_init__(self):
        if self.duration is not None:
            if self.duration <= 0:
                raise ValueError("finite pi pulse needs duration > 0")
            if self.drive_two_g is None or self.drive_two_g <= 0:
                raise ValueError("finite pi pulse needs drive_two_g > 0")


@dataclass(frozen=True)
class FluxSquare:
    """Hold one qubit at ``target_freq`` (GHz) for ``duration`` (us)."""

    qubit: str
    target_freq: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("flux square needs duration > 0")


@dataclass(frozen=True)
class SwapSegment:
    """Resonant exchange with a mode (or the other qubit) for an integer
    number of half vacuum-Rabi periods."""

    qubit: str
    target: str
    half_periods: int = 1

    def __post_init__(self):
        if self.half_periods < 1:
            raise ValueError("half_periods must be a positive integer")


@dataclass(frozen=True)
class Idle:
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("idle needs duration > 0")


@dataclass(frozen=True)
class Segment:
    duration: float
    q1_freq: float
    q2_freq: float
    drive: tuple[str, float] | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class PrepEvent:
    time: float
    qubit: str
    action: str = "set-excited"


@dataclass(frozen=True)
class Schedule:
    segments: tuple[Segment, ...]
    prep_events: tuple[PrepEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "prep_events", tuple(self.prep_events))
        boundaries = set(self.boundaries())
        for prep in self.prep_events:
            if prep.time not in boundaries:
                raise ValueError(
                    f"prep event at t={prep.time} us is not on a segment boundary"
                )

    @property
    def span(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> tuple[float, ...]:
        times = [0.0]
        for seg in self.segments:
            times.append(times[-1] + seg.duration)
        return tuple(times)


def calibrate_swap(device: DeviceSpec, qubit: str, target: str) -> float:
    """Full-transfer duration 1/(2 * two_g) us at exact resonance.

    ``target`` is a mode of the qubit's own ladder, or the other qubit's
    label for the exchange-coupling swap.
    """
    q = device.qubit(qubit)
    if target in (device.qubit1.label, device.qubit2.label):
        if target == q.label:
            raise ValueError("qubit cannot swap with itself")
        return 1.0 / (2.0 * device.qq_two_g)  # two_g in MHz = cycles/us
    mode = device.mode(target)
    if device.mode_owner(target) != q.label:
        raise ValueError(
            f"mode {target!r} belongs to {device.mode_owner(target)!r}, not {qubit!r}"
        )
    return 1.0 / (2.0 * mode.two_g)  # two_g in MHz = cycles/us


def _swap_target_freq(device: DeviceSpec, element: SwapSegment) -> float:
    if element.target in (device.qubit1.label, device.qubit2.label):
        return device.other_qubit(element.qubit).omega_op
    return device.mode(element.target).omega


def compile(sequence, device: DeviceSpec) -> Schedule:
    """Compile a pulse sequence into a schedule.

    Deterministic: identical inputs yield identical schedules.  The total
    span equals the sum of element durations (preparations add no time);
    simultaneous groups span the longest member, shorter members returning
    to their operating point for the remainder.
    """
    if not sequence:
        raise ValueError("empty pulse sequence")
    ops = {
        device.qubit1.label: device.qubit1.omega_op,
        device.qubit2.label: device.qubit2.omega_op,
    }
    segments: list[Segment] = []
    preps: list[PrepEvent] = []
    now = 0.0

    def emit(duration, freqs, drive=None):
        nonlocal now
        segments.append(
            Segment(
                duration=duration,
                q1_freq=freqs[device.qubit1.label],
                q2_freq=freqs[device.qubit2.label],
                drive=drive,
            )
        )
        now += duration

    for entry in sequence:
        group = entry if isinstance(entry, (tuple, list)) else (entry,)
        if len(group) > 1:
            _compile_group(group, device, ops, emit)
            continue
        element = group[0]
        if isinstance(element, PiPulse):
            device.qubit(element.qubit)
            if element.duration is None:
                preps.append(PrepEvent(time=now, qubit=element.qubit))
            else:
                emit(
                    element.duration,
                    dict(ops),
                    drive=(element.qubit, element.drive_two_g),
                )
        elif isinstance(element, FluxSquare):
            device.qubit(element.qubit).check_in_range(element.target_freq)
            freqs = dict(ops)
            freqs[element.qubit] = element.target_freq
            emit(element.duration, freqs)
        elif isinstance(element, SwapSegment):
            target_freq = _swap_target_freq(device, element)
            device.qubit(element.qubit).check_in_range(target_freq)
            duration = element.half_periods * calibrate_swap(
                device, element.qubit, element.target
            )
            freqs = dict(ops)
            freqs[element.qubit] = target_freq
            emit(duration, freqs)
        elif isinstance(element, Idle):
            emit(element.duration, dict(ops))
        else:
            raise TypeError(f"unknown pulse element {element!r}")
    return Schedule(segments=tuple(segments), prep_events=tuple(preps))


def _compile_group(group, device: DeviceSpec, ops, emit):
    """Simultaneous flux pulses; at most one element per qubit."""
    active: dict[str, tuple[float, float]] = {}
    for element in group:
        if not isinstance(element, FluxSquare):
            raise TypeError(
                "simultaneous groups may only contain FluxSquare elements, "
                f"got {element!r}"
            )
        if element.qubit in active:
            raise ValueError(
                f"overlapping simultaneous flux pulses on qubit {element.qubit!r}"
            )
        device.qubit(element.qubit).check_in_range(element.target_freq)
        active[element.qubit] = (element.target_freq, element.duration)
    edges = sorted({dur for _, dur in active.values()})
    start = 0.0
    for edge in edges:
        freqs = dict(ops)
        for qubit, (freq, dur) in active.items():
            if dur > start:
                freqs[qubit] = freq
        emit(edge - start, freqs)
        start = edge


def chevron_grid(device: DeviceSpec, qubit: str, freq_offsets, durations):
    """One sequence per (offset, duration): instantaneous excitation, then a
    square pulse to ``omega_op + offset`` for the duration.

    Offsets are in MHz, durations in us; a zero duration compiles to the
    bare preparation.  The measurement observable is the pulsed qubit's
    excited population at the end of the sequence.
    """
    q = device.qubit(qubit)
    sequences = []
    for offset in np.atleast_1d(np.asarray(freq_offsets, dtype=float)):
        q.check_in_range(q.omega_op + offset * 1e-3)
        for duration in np.atleast_1d(np.asarray(durations, dtype=float)):
            seq: list = [PiPulse(qubit)]
            if duration > 0:
                seq.append(FluxSquare(qubit, q.omega_op + offset * 1e-3, duration))
            sequences.append(seq)
    return sequences


def schedule_f_max(schedule: Schedule, device: DeviceSpec) -> float:
    """Largest detuning or coupling (MHz) appearing anywhere in the schedule.

    Sets the fixed-step integrator resolution.
    """
    frame = device.frame
    f = [device.qq_two_g, device.cross_two_g]
    for mode in device.modes1 + device.modes2:
        f.append(mode.two_g)
        f.append(abs(mode.omega - frame) * 1e3)
    for seg in schedule.segments:
        f.append(abs(seg.q1_freq - frame) * 1e3)
        f.append(abs(seg.q2_freq - frame) * 1e3)
        if seg.drive is not None:
            f.append(seg.drive[1])
    return float(max(f)) if f else 0.0

"""High-level reproductions of the device measurements.

* :func:`spectroscopy_sweep` - single-excitation eigenfrequencies vs a swept
  qubit frequency (the dashed-line overlay of a two-tone measurement).
* :func:`chevron_scan` - excited-population grid vs square-pulse detuning
  and duration (vacuum-Rabi chevrons).
* :func:`transfer_experiment` - the four-stage excitation-transfer sequence
  ending in a chevron-style scan on the receiving qubit.
* :func:`locality_test` - swap an excitation into a mode of qubit 1, park
  qubit 1, tune qubit 2 onto that mode and watch for a response.
* :func:`run_sweep` - order-preserving, failure-isolating parallel driver
  for independent simulation jobs.

Time evolutions run in the single-excitation subspace whenever the protocol
allows it (instantaneous preparations at t=0, no drive segments, at most one
quantum in flight).  That subspace is closed under the Hamiltonian and under
every dissipator, so the reduced run agrees with the full-space master
equation to rounding; ``fast=False`` forces the full space.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dynamics, model, opalg, pulses
from .dynamics import IntegratorConfig, MatrixSegment, Trajectory
from .model import DeviceSpec
from .pulses import FluxSquare, PiPulse, Schedule, SwapSegment

__all__ = [
    "PopulationGrid",
    "EigencurveSet",
    "SweepError",
    "spectroscopy_sweep",
    "chevron_scan",
    "transfer_experiment",
    "locality_test",
    "run_sweep",
    "truncate_modes",
    "default_transfer_mode",
    "minimum_gap",
    "oscillation_frequency",
    "first_minimum_time",
    "device_fingerprint",
]

POPULATION_TOL = 1e-6


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class PopulationGrid:
    """2-D scan result: rows are offsets (MHz), columns durations (us)."""

    offsets: np.ndarray
    durations: np.ndarray
    values: np.ndarray
    meta: dict

    def __post_init__(self):
        if self.values.shape != (len(self.offsets), len(self.durations)):
            raise ValueError("grid shape must be |offsets| x |durations|")
        if self.values.size and (
            self.values.min() < -POPULATION_TOL
            or self.values.max() > 1 + POPULATION_TOL
        ):
            raise ValueError("grid populations outside [0, 1] beyond tolerance")


@dataclass(frozen=True)
class EigencurveSet:
    """Sorted single-excitation eigenfrequencies (GHz, lab frame) per sweep
    point; one curve per qubit or mode."""

    swept_freqs: np.ndarray
    curves: np.ndarray
    meta: dict

    def __post_init__(self):
        if self.curves.shape[0] != len(self.swept_freqs):
            raise ValueError("one row of eigenvalues per sweep point")
        if np.any(np.diff(self.curves, axis=1) < 0):
            raise ValueError("eigenvalues must be sorted ascending")


@dataclass(frozen=True)
class SweepError:
    """Failure record of one job in a sweep."""

    index: int
    message: str


def device_fingerprint(device: DeviceSpec) -> str:
    """Stable short hash of all device parameters."""
    blob = json.dumps(dataclasses.asdict(device), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def truncate_modes(
    device: DeviceSpec,
    window: tuple[float, float],
    radius: float | None = None,
) -> tuple[DeviceSpec, dict]:
    """Drop modes further than ``radius`` (GHz, default 2 FSR) from the
    frequency window visited by an experiment.  Returns the reduced device
    and a report for the run manifest.
    """
    lo, hi = min(window), max(window)
    r = 2.0 * device.fsr() if radius is None else radius
    keep1 = tuple(m.label for m in device.modes1 if lo - r <= m.omega <= hi + r)
    keep2 = tuple(m.label for m in device.modes2 if lo - r <= m.omega <= hi + r)
    reduced = model.with_modes(device, keep1, keep2)
    report = {
        "window_ghz": [lo, hi],
        "radius_ghz": r,
        "kept": sorted(keep1 + keep2),
        "dropped": sorted(
            m.label
            for m in device.modes1 + device.modes2
            if m.label not in keep1 + keep2
        ),
    }
    return reduced, report


def default_transfer_mode(device: DeviceSpec) -> str:
    """The mode of qubit 1's ladder nearest its operating point."""
    if not device.modes1:
        raise ExperimentError("device has no modes on qubit 1; no transfer mode")
    op = device.qubit1.omega_op
    return min(device.modes1, key=lambda m: abs(m.omega - op)).label


# ---------------------------------------------------------------------------
# Schedule evolution with the single-excitation fast path


def _single_excitation_run(
    device: DeviceSpec,
    schedule: Schedule,
    sample_times,
    decoherence: bool,
    config: IntegratorConfig,
) -> Trajectory:
    labels = model.single_excitation_labels(device)
    site = {label: k + 1 for k, label in enumerate(labels)}  # 0 is the vacuum
    dim = len(labels) + 1

    if any(seg.drive is not None for seg in schedule.segments):
        raise ExperimentError("single-excitation path cannot represent drives")
    if any(prep.time != 0.0 for prep in schedule.prep_events):
        raise ExperimentError("single-excitation path needs all preps at t=0")

    collapse = []
    if decoherence:
        rates = model.decoherence_rates(device)
        for label in labels:
            gamma = rates["decay"][label]
            if gamma > 0:
                lower = np.zeros((dim, dim), dtype=np.complex128)
                lower[0, site[label]] = 1.0
                collapse.append((lower, gamma))
        for qubit in (device.qubit1, device.qubit2):
            gphi = rates["dephasing"][qubit.label]
            if gphi > 0:
                z = np.ones(dim, dtype=np.complex128)
                z[site[qubit.label]] = -1.0
                collapse.append((np.diag(z), gphi / 2.0))
    collapse = tuple(collapse)

    segments = []
    for seg in schedule.segments:
        h = np.zeros((dim, dim), dtype=np.complex128)
        h[1:, 1:] = model.single_excitation_hamiltonian(
            device, (seg.q1_freq, seg.q2_freq)
        )
        segments.append(
            MatrixSegment(duration=seg.duration, hamiltonian=h, collapse=collapse)
        )

    preps = []
    for prep in schedule.prep_events:
        u = np.eye(dim, dtype=np.complex128)
        k = site[prep.qubit]
        u[0, 0] = u[k, k] = 0.0
        u[0, k] = u[k, 0] = 1.0
        preps.append((prep.time, u))

    rho0 = np.zeros((dim, dim), dtype=np.complex128)
    rho0[0, 0] = 1.0
    diags = {
        label: np.eye(dim)[site[label]].astype(float) for label in labels
    }
    dt = config.fixed_dt(pulses.schedule_f_max(schedule, device))
    times, obs, _ = dynamics.integrate_density(
        segments, preps, rho0, sample_times, config, dt, diags
    )
    return Trajectory(times=times, observables=obs)


def run_schedule(
    device: DeviceSpec,
    schedule: Schedule,
    sample_times,
    decoherence: bool = True,
    config: IntegratorConfig | None = None,
    fast: bool = True,
) -> Trajectory:
    """Evolve the device vacuum through a schedule and report populations.

    Uses the single-excitation representation when the schedule allows it,
    otherwise the full-space master equation.
    """
    config = config or IntegratorConfig()
    if fast:
        try:
            return _single_excitation_run(
                device, schedule, sample_times, decoherence, config
            )
        except ExperimentError:
            pass
    layout = model.build_layout(device)
    rho0 = opalg.ground_state(layout, kind="density")
    return dynamics.evolve_master(
        rho0,
        schedule,
        device,
        config,
        sample_times,
        include_decoherence=decoherence,
    )


# ---------------------------------------------------------------------------
# Spectroscopy


def spectroscopy_sweep(
    device: DeviceSpec,
    qubit: str,
    freq_range: tuple[float, float],
    n_points: int,
    mode_radius: float | None = None,
) -> EigencurveSet:
    """Sweep one qubit's bare frequency and report the sorted lab-frame
    single-excitation eigenfrequencies at each point; the other qubit stays
    at its operating point.  Modes outside the swept window (plus
    ``mode_radius``, default 2 FSR) are dropped and reported in the meta.
    """
    lo, hi = freq_range
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    q = device.qubit(qubit)
    q.check_in_range(lo)
    q.check_in_range(hi)
    reduced, report = truncate_modes(device, (lo, hi), mode_radius)
    other = reduced.other_qubit(qubit)

    swept = np.linspace(lo, hi, n_points)
    curves = np.empty((n_points, 2 + len(reduced.modes1) + len(reduced.modes2)))
    for i, f in enumerate(swept):
        freqs = (
            (f, other.omega_op)
            if qubit == reduced.qubit1.label
            else (other.omega_op, f)
        )
        h = model.single_excitation_hamiltonian(reduced, freqs)
        w = np.linalg.eigvalsh(h)
        curves[i] = reduced.frame + w / (2.0 * np.pi * 1e3)
    meta = {
        "device": device_fingerprint(device),
        "qubit": qubit,
        "mode_truncation": report,
    }
    return EigencurveSet(swept_freqs=swept, curves=np.sort(curves, axis=1), meta=meta)


def _adjacent_gap_mhz(device: DeviceSpec, qubit: str, freq: float) -> float:
    other = device.other_qubit(qubit)
    freqs = (
        (freq, other.omega_op) if qubit == device.qubit1.label else (other.omega_op, freq)
    )
    w = np.linalg.eigvalsh(model.single_excitation_hamiltonian(device, freqs))
    return float(np.diff(w).min() / (2.0 * np.pi))


def minimum_gap(
    device: DeviceSpec,
    qubit: str,
    bracket: tuple[float, float],
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Golden-section refinement of the minimum adjacent single-excitation
    gap while sweeping ``qubit`` over ``bracket``.

    Returns (sweep frequency GHz, gap MHz).
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = bracket
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    fc = _adjacent_gap_mhz(device, qubit, c)
    fd = _adjacent_gap_mhz(device, qubit, d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * invphi
            fc = _adjacent_gap_mhz(device, qubit, c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * invphi
            fd = _adjacent_gap_mhz(device, qubit, d)
    x = (a + b) / 2.0
    return x, _adjacent_gap_mhz(device, qubit, x)


# ---------------------------------------------------------------------------
# Chevron scans


def _require_ascending(durations) -> np.ndarray:
    durations = np.asarray(durations, dtype=float)
    if np.any(np.diff(durations) < 0):
        raise ValueError("durations must be ascending")
    if durations.size == 0 or durations.min() < 0:
        raise ValueError("durations must be nonnegative and non-empty")
    return durations


def _chevron_column(device, qubit, offset, durations, decoherence, config, fast):
    q = device.qubit(qubit)
    target = q.omega_op + offset * 1e-3
    seq: list = [PiPulse(qubit)]
    if durations.max() > 0:
        seq.append(FluxSquare(qubit, target, float(durations.max())))
    schedule = pulses.compile(seq, device)
    traj = run_schedule(device, schedule, durations, decoherence, config, fast)
    return traj.observables[qubit]


def chevron_scan(
    device: DeviceSpec,
    qubit: str,
    offsets,
    durations,
    decoherence: bool = True,
    config: IntegratorConfig | None = None,
    parallelism: int = 1,
    fast: bool = True,
    mode_radius: float | None = None,
) -> PopulationGrid:
    """Excite ``qubit``, hold it at ``omega_op + offset`` and record its
    excited population after each duration, for every offset.

    A grid column is one trajectory sampled at all durations (identical to
    evaluating each grid point independently, since segments are piecewise
    constant); distinct offsets are independent jobs.
    """
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    durations = _require_ascending(durations)
    if offsets.size == 0:
        raise ValueError("offsets must be non-empty")
    q = device.qubit(qubit)
    window = (
        q.omega_op + min(0.0, offsets.min()) * 1e-3,
        q.omega_op + max(0.0, offsets.max()) * 1e-3,
    )
    reduced, report = truncate_modes(device, window, mode_radius)
    config = config or IntegratorConfig()

    tasks = [
        (_chevron_column, (reduced, qubit, float(off), durations, decoherence, config, fast))
        for off in offsets
    ]
    results = run_sweep(tasks, parallelism)
    values = np.empty((offsets.size, durations.size))
    for i, res in enumerate(results):
        if isinstance(res, SweepError):
            raise ExperimentError(
                f"chevron column {i} (offset {offsets[i]} MHz) failed: {res.message}"
            )
        values[i] = res
    meta = {
        "device": device_fingerprint(device),
        "protocol": f"chevron qubit={qubit} decoherence={'on' if decoherence else 'off'}",
        "mode_truncation": report,
    }
    return PopulationGrid(
        offsets=offsets, durations=durations, values=values, meta=meta
    )


# ---------------------------------------------------------------------------
# Excitation transfer (four-stage sequence + final scan)


def _transfer_prefix(device: DeviceSpec, transfer_mode: str) -> list:
    q1 = device.qubit1.label
    q2 = device.qubit2.label
    return [
        PiPulse(q1),
        SwapSegment(q1, transfer_mode, half_periods=2),
        SwapSegment(q2, q1, half_periods=1),
    ]


def _transfer_column(device, transfer_mode, offset, durations, decoherence, config, fast):
    q2 = device.qubit2
    seq = _transfer_prefix(device, transfer_mode)
    if durations.max() > 0:
        seq.append(
            FluxSquare(q2.label, q2.omega_op + offset * 1e-3, float(durations.max()))
        )
    schedule = pulses.compile(seq, device)
    prefix_span = schedule.span - (durations.max() if durations.max() > 0 else 0.0)
    traj = run_schedule(
        device, schedule, prefix_span + durations, decoherence, config, fast
    )
    return traj.observables[q2.label]


def transfer_experiment(
    device: DeviceSpec,
    offsets,
    durations,
    decoherence: bool = True,
    config: IntegratorConfig | None = None,
    parallelism: int = 1,
    fast: bool = True,
    transfer_mode: str | None = None,
    mode_radius: float | None = None,
) -> PopulationGrid:
    """Four-stage transfer followed by a square-pulse scan on qubit 2.

    Stage 1 excites qubit 1; stage 2 swaps the excitation into the transfer
    mode and back (two calibrated half-periods); stage 3 brings qubit 2 onto
    qubit 1 for one half-period of the exchange coupling; stage 4 scans a
    square pulse of each offset and duration on qubit 2 and measures its
    excited population.
    """
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    durations = _require_ascending(durations)
    mode_label = transfer_mode or default_transfer_mode(device)
    mode = device.mode(mode_label)
    if device.mode_owner(mode_label) != device.qubit1.label:
        raise ExperimentError(f"transfer mode {mode_label!r} is not on qubit 1")

    q2 = device.qubit2
    window_lo = min(
        q2.omega_op,
        q2.omega_op + offsets.min() * 1e-3,
        device.qubit1.omega_op,
        mode.omega,
    )
    window_hi = max(
        q2.omega_op,
        q2.omega_op + offsets.max() * 1e-3,
        device.qubit1.omega_op,
        mode.omega,
    )
    reduced, report = truncate_modes(device, (window_lo, window_hi), mode_radius)
    config = config or IntegratorConfig()

    tasks = [
        (
            _transfer_column,
            (reduced, mode_label, float(off), durations, decoherence, config, fast),
        )
        for off in offsets
    ]
    results = run_sweep(tasks, parallelism)
    values = np.empty((offsets.size, durations.size))
    for i, res in enumerate(results):
        if isinstance(res, SweepError):
            raise ExperimentError(
                f"transfer column {i} (offset {offsets[i]} MHz) failed: {res.message}"
            )
        values[i] = res
    meta = {
        "device": device_fingerprint(device),
        "protocol": (
            f"transfer mode={mode_label} decoherence={'on' if decoherence else 'off'}"
        ),
        "mode_truncation": report,
    }
    return PopulationGrid(
        offsets=offsets, durations=durations, values=values, meta=meta
    )


# ---------------------------------------------------------------------------
# Mode-locality null test


def locality_test(
    device: DeviceSpec,
    cross_two_g: float,
    decoherence: bool = True,
    window: float = 2.0,
    n_samples: int = 801,
    park_freq: float | None = None,
    config: IntegratorConfig | None = None,
    fast: bool = True,
) -> Trajectory:
    """Swap an excitation from qubit 1 into its transfer mode, park qubit 1,
    tune qubit 2 onto the mode and record qubit 2's population for
    ``window`` us.

    ``cross_two_g`` (MHz) sets the stray coupling of each qubit to the other
    qubit's modes; 0 models fully local mode sets.
    """
    if cross_two_g < 0:
        raise ValueError("cross_two_g must be nonnegative")
    dev = dataclasses.replace(device, cross_two_g=cross_two_g)
    mode_label = default_transfer_mode(dev)
    mode = dev.mode(mode_label)
    q1, q2 = dev.qubit1, dev.qubit2
    park = park_freq if park_freq is not None else q1.tune_max
    seq = [
        PiPulse(q1.label),
        SwapSegment(q1.label, mode_label, half_periods=1),
        (
            FluxSquare(q1.label, park, window),
            FluxSquare(q2.label, mode.omega, window),
        ),
    ]
    schedule = pulses.compile(seq, dev)
    t_res = schedule.span - window
    sample_times = t_res + np.linspace(0.0, window, n_samples)
    return run_schedule(
        dev, schedule, sample_times, decoherence, config or IntegratorConfig(), fast
    )


# ---------------------------------------------------------------------------
# Concurrent sweep driver


def _run_task(indexed_task):
    index, (fn, args) = indexed_task
    try:
        return index, ("ok", fn(*args))
    except Exception as exc:  # noqa: BLE001 - failures become records
        return index, ("err", f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}")


def run_sweep(tasks, parallelism: int = 1):
    """Run independent (callable, args) tasks, preserving input order.

    Results are returned in input order and are identical to sequential
    execution; a failing task yields a :class:`SweepError` in its slot
    without disturbing its siblings.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be a positive integer")
    indexed = list(enumerate(tasks))
    if parallelism == 1 or len(tasks) <= 1:
        raw = [_run_task(item) for item in indexed]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            raw = list(pool.map(_run_task, indexed, chunksize=1))
    results: list = [None] * len(tasks)
    for index, (status, payload) in raw:
        results[index] = (
            payload if status == "ok" else SweepError(index=index, message=payload)
        )
    return results


# ---------------------------------------------------------------------------
# Analysis helpers


def oscillation_frequency(times, values) -> float:
    """Dominant oscillation frequency (MHz) of a uniformly sampled trace,
    via a Hann-windowed zero-padded FFT with parabolic peak refinement."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 8:
        raise ValueError("need at least 8 samples")
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ValueError("oscillation_frequency needs uniform sampling")
    v = (values - values.mean()) * np.hanning(len(values))
    n_pad = 1 << int(np.ceil(np.log2(len(v) * 16)))
    spectrum = np.abs(np.fft.rfft(v, n_pad))
    k = int(np.argmax(spectrum[1:])) + 1
    if 0 < k < len(spectrum) - 1:
        s_m, s_0, s_p = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = s_m - 2.0 * s_0 + s_p
        delta = 0.5 * (s_m - s_p) / denom if denom != 0 else 0.0
    else:
        delta = 0.0
    return (k + delta) / (n_pad * dt[0])


def first_minimum_time(times, values) -> float:
    """Time of the first local minimum, refined by a parabolic fit."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    for k in range(1, len(values) - 1):
        if values[k] <= values[k - 1] and values[k] < values[k + 1]:
            denom = values[k - 1] - 2.0 * values[k] + values[k + 1]
            delta = 0.5 * (values[k - 1] - values[k + 1]) / denom if denom else 0.0
            return times[k] + delta * (times[k] - times[k - 1])
    raise ValueError("no interior minimum found")

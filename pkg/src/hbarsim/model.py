"""Device description and Hamiltonian / dissipator construction.

Frequencies enter the device description in the units experimentalists quote
them in: qubit and mode frequencies in GHz, couplings and splittings in MHz,
times in us.  Couplings are stored as the full vacuum-Rabi splitting
(``two_g``); the Hamiltonian coefficient is ``g = 2*pi*two_g/2`` rad/us.

Hamiltonians are built in a frame rotating at ``frame_freq``: diagonal terms
are the detunings ``2*pi*(omega - frame_freq)`` multiplying each subsystem's
excitation-number operator.  The number-operator form equals the familiar
``(Delta/2)*sigma_z`` form up to a state-independent constant, which is
dropped together with the mode zero-point offsets so that the zero-excitation
state sits at exactly zero energy.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import opalg
from .opalg import Operator, SystemLayout, embed, ladder, number, sigma_z

__all__ = [
    "QubitSpec",
    "ModeSpec",
    "DeviceSpec",
    "reference_device",
    "build_layout",
    "build_hamiltonian",
    "build_collapse_ops",
    "decoherence_rates",
    "single_excitation_hamiltonian",
    "single_excitation_labels",
    "with_modes",
    "ghz_to_rad_per_us",
    "mhz_to_rad_per_us",
]

# 1 GHz = 1e3 cycles/us, 1 MHz = 1 cycle/us.
_TWO_PI = 2.0 * math.pi


def ghz_to_rad_per_us(f_ghz: float) -> float:
    return _TWO_PI * 1e3 * f_ghz


def mhz_to_rad_per_us(f_mhz: float) -> float:
    return _TWO_PI * f_mhz


def _coupling_rad(two_g_mhz: float) -> float:
    """Hamiltonian coefficient g for a reported full splitting 2g."""
    return _TWO_PI * two_g_mhz / 2.0


@dataclass(frozen=True)
class QubitSpec:
    """Flux-tunable transmon treated as a two-level system.

    omega_op, tune_min, tune_max in GHz; t1, t2 in us.
    """

    label: str
    omega_op: float
    tune_min: float
    tune_max: float
    t1: float
    t2: float

    def __post_init__(self):
        if self.t1 <= 0 or self.t2 <= 0:
            raise ValueError(f"{self.label}: T1 and T2 must be positive")
        if not (self.tune_min <= self.omega_op <= self.tune_max):
            raise ValueError(
                f"{self.label}: operating point {self.omega_op} GHz outside "
                f"tuning range [{self.tune_min}, {self.tune_max}]"
            )

    def check_in_range(self, freq_ghz: float):
        if not np.isfinite(freq_ghz):
            raise ValueError(f"{self.label}: non-finite frequency")
        if not (self.tune_min <= freq_ghz <= self.tune_max):
            raise ValueError(
                f"{self.label}: frequency {freq_ghz} GHz outside tuning range "
                f"[{self.tune_min}, {self.tune_max}]"
            )


@dataclass(frozen=True)
class ModeSpec:
    """One acoustic overtone: omega in GHz, two_g in MHz, t1 in us."""

    label: str
    omega: float
    two_g: float
    t1: float

    def __post_init__(self):
        if self.two_g <= 0:
            raise ValueError(f"{self.label}: two_g must be positive")
        if self.t1 <= 0:
            raise ValueError(f"{self.label}: T1 must be positive")


@dataclass(frozen=True)
class DeviceSpec:
    """Full physical description of the two-qubit / two-resonator device.

    ``qq_two_g`` is the full qubit-qubit splitting 2J in MHz.  ``cross_two_g``
    is a stray coupling of each qubit to the other qubit's modes (0 for
    independent mode sets).  ``frame_freq`` is the rotating-frame reference
    in GHz; None means qubit 1's operating point.
    """

    qubit1: QubitSpec
    qubit2: QubitSpec
    modes1: tuple[ModeSpec, ...]
    modes2: tuple[ModeSpec, ...]
    qq_two_g: float
    frame_freq: float | None = None
    fock_dim: int = 2
    cross_two_g: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes1", tuple(self.modes1))
        object.__setattr__(self, "modes2", tuple(self.modes2))
        if self.qq_two_g <= 0:
            raise ValueError("qq_two_g must be positive")
        if self.fock_dim < 2:
            raise ValueError("fock_dim must be >= 2")
        if self.cross_two_g < 0:
            raise ValueError("cross_two_g must be nonnegative")
        for modes, owner in ((self.modes1, "modes1"), (self.modes2, "modes2")):
            freqs = [m.omega for m in modes]
            if sorted(freqs) != freqs:
                raise ValueError(f"{owner} must be sorted ascending in frequency")
        labels = (
            [self.qubit1.label, self.qubit2.label]
            + [m.label for m in self.modes1]
            + [m.label for m in self.modes2]
        )
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels in device")

    @property
    def frame(self) -> float:
        return self.frame_freq if self.frame_freq is not None else self.qubit1.omega_op

    def qubit(self, label: str) -> QubitSpec:
        for q in (self.qubit1, self.qubit2):
            if q.label == label:
                return q
        raise KeyError(f"unknown qubit {label!r}")

    def other_qubit(self, label: str) -> QubitSpec:
        if label == self.qubit1.label:
            return self.qubit2
        if label == self.qubit2.label:
            return self.qubit1
        raise KeyError(f"unknown qubit {label!r}")

    def modes_of(self, qubit_label: str) -> tuple[ModeSpec, ...]:
        if qubit_label == self.qubit1.label:
            return self.modes1
        if qubit_label == self.qubit2.label:
            return self.modes2
        raise KeyError(f"unknown qubit {qubit_label!r}")

    def mode(self, label: str) -> ModeSpec:
        for m in self.modes1 + self.modes2:
            if m.label == label:
                return m
        raise KeyError(f"unknown mode {label!r}")

    def mode_owner(self, label: str) -> str:
        if any(m.label == label for m in self.modes1):
            return self.qubit1.label
        if any(m.label == label for m in self.modes2):
            return self.qubit2.label
        raise KeyError(f"unknown mode {label!r}")

    def fsr(self) -> float:
        """Median mode spacing in GHz (0.022 if fewer than two modes)."""
        spacings = []
        for modes in (self.modes1, self.modes2):
            freqs = [m.omega for m in modes]
            spacings.extend(np.diff(freqs))
        return float(np.median(spacings)) if spacings else 0.022


# Measured parameters of the device all experiments refer to.  Mode ladders
# use the exact 22 MHz spacing; qubit 1's ladder is anchored at the
# 3.7885 GHz transfer mode, qubit 2's ladder is offset by a quarter-ish
# spacing (anchor 3.7942 GHz) which keeps its modes maximally clear of both
# qubit 1's operating point and the transfer mode.
_FSR_GHZ = 0.022
_TRANSFER_MODE_GHZ = 3.7885
_MODES2_ANCHOR_GHZ = 3.7942


def reference_device(fock_dim: int = 2) -> DeviceSpec:
    modes1 = tuple(
        ModeSpec(
            label=f"m1_{k}",
            omega=round(_TRANSFER_MODE_GHZ + (k - 3) * _FSR_GHZ, 4),
            two_g=2.55,
            t1=0.380,
        )
        for k in range(7)
    )
    modes2 = tuple(
        ModeSpec(
            label=f"m2_{k}",
            omega=round(_MODES2_ANCHOR_GHZ - (7 - k) * _FSR_GHZ, 4),
            two_g=2.85,
            t1=0.320,
        )
        for k in range(7)
    )
    return DeviceSpec(
        qubit1=QubitSpec(
            label="q1", omega_op=3.7778, tune_min=3.7, tune_max=4.5, t1=2.2, t2=4.41
        ),
        qubit2=QubitSpec(
            label="q2", omega_op=3.6673, tune_min=3.6673, tune_max=4.5, t1=2.41, t2=1.02
        ),
        modes1=modes1,
        modes2=modes2,
        qq_two_g=16.7,
        frame_freq=None,
        fock_dim=fock_dim,
        cross_two_g=0.0,
    )


def with_modes(
    device: DeviceSpec,
    keep1: tuple[str, ...] | list[str] | None = None,
    keep2: tuple[str, ...] | list[str] | None = None,
) -> DeviceSpec:
    """Device with each mode ladder restricted to the listed labels.

    None keeps a ladder unchanged; an empty sequence drops it entirely.
    """
    modes1 = device.modes1 if keep1 is None else tuple(
        m for m in device.modes1 if m.label in set(keep1)
    )
    modes2 = device.modes2 if keep2 is None else tuple(
        m for m in device.modes2 if m.label in set(keep2)
    )
    return dataclasses.replace(device, modes1=modes1, modes2=modes2)


def build_layout(device: DeviceSpec) -> SystemLayout:
    """Canonical slot order: q1, q2, modes of q1, modes of q2."""
    labels = (
        device.qubit1.label,
        device.qubit2.label,
        *(m.label for m in device.modes1),
        *(m.label for m in device.modes2),
    )
    n_modes = len(device.modes1) + len(device.modes2)
    dims = (2, 2) + (device.fock_dim,) * n_modes
    return SystemLayout(subsystem_dims=dims, slot_labels=labels)


def _qubit_freqs_checked(
    device: DeviceSpec, qubit_freqs: tuple[float, float]
) -> tuple[float, float]:
    f1, f2 = qubit_freqs
    device.qubit1.check_in_range(f1)
    device.qubit2.check_in_range(f2)
    return f1, f2


def build_hamiltonian(
    device: DeviceSpec,
    qubit_freqs: tuple[float, float],
    drive: tuple[str, float] | None = None,
) -> Operator:
    """Rotating-frame Hamiltonian (rad/us) at the given bare qubit frequencies.

    Diagonal: detuning times excitation number for every qubit and mode.
    Off-diagonal: the exchange coupling ``J(s+ s- + s- s+)`` between the
    qubits and ``g(a^dag s- + a s+)`` between each qubit and its modes, plus
    the stray ``cross_two_g`` terms to the opposite ladder when nonzero.

    ``drive=(qubit_label, drive_two_g_mhz)`` adds a resonant Rabi drive
    ``(2*pi*drive_two_g/2)(s+ + s-)`` on that qubit; its detuning term is
    dropped for the driven segment (the drive is resonant at the qubit's own
    frequency, exact when the qubit is parked at the frame frequency).
    """
    f1, f2 = _qubit_freqs_checked(device, qubit_freqs)
    layout = build_layout(device)
    frame = device.frame
    dim = layout.total_dim
    terms: list[Operator] = []

    drive_label = drive[0] if drive is not None else None
    if drive_label is not None:
        device.qubit(drive_label)  # validate label

    for qubit, freq in ((device.qubit1, f1), (device.qubit2, f2)):
        delta = ghz_to_rad_per_us(freq - frame)
        if qubit.label != drive_label and delta != 0.0:
            terms.append(delta * excitation_term(layout, qubit.label))
    for mode in device.modes1 + device.modes2:
        delta = ghz_to_rad_per_us(mode.omega - frame)
        if delta != 0.0:
            terms.append(delta * excitation_term(layout, mode.label))

    q1, q2 = device.qubit1.label, device.qubit2.label
    terms.append(_coupling_rad(device.qq_two_g) * exchange_term(layout, q1, q2))
    for qubit_label, modes in ((q1, device.modes1), (q2, device.modes2)):
        for mode in modes:
            terms.append(
                _coupling_rad(mode.two_g) * exchange_term(layout, qubit_label, mode.label)
            )
    if device.cross_two_g > 0:
        gx = _coupling_rad(device.cross_two_g)
        for qubit_label, modes in ((q1, device.modes2), (q2, device.modes1)):
            for mode in modes:
                terms.append(gx * exchange_term(layout, qubit_label, mode.label))

    if drive is not None:
        amp = _coupling_rad(drive[1])
        sm = embed(ladder(2), drive_label, layout)
        terms.append(amp * (sm + sm.dagger()))

    if not terms:
        h = 0.0 * opalg.identity(dim)
    else:
        h = terms[0]
        for t in terms[1:]:
            h = h + t
    if not h.is_hermitian(rtol=1e-12):
        raise AssertionError("Hamiltonian construction lost Hermiticity")
    return h


def excitation_term(layout: SystemLayout, label: str) -> Operator:
    return embed(number(layout.slot_dim(label)), label, layout)


def exchange_term(layout: SystemLayout, label_a: str, label_b: str) -> Operator:
    """a^dag_A a_B + a_A a^dag_B embedded in the composite space."""
    lower_a = embed(ladder(layout.slot_dim(label_a)), label_a, layout)
    lower_b = embed(ladder(layout.slot_dim(label_b)), label_b, layout)
    cross = lower_a.dagger() @ lower_b
    return cross + cross.dagger()


def decoherence_rates(device: DeviceSpec) -> dict:
    """Decay and pure-dephasing rates (1/us) implied by the coherence times.

    Pure dephasing is ``max(0, 1/T2 - 1/(2 T1))`` per qubit; a negative raw
    value (T2 slightly above 2 T1) is clamped to zero with a warning.
    """
    decay: dict[str, float] = {}
    dephasing: dict[str, float] = {}
    for qubit in (device.qubit1, device.qubit2):
        decay[qubit.label] = 1.0 / qubit.t1
        raw = 1.0 / qubit.t2 - 1.0 / (2.0 * qubit.t1)
        if raw < 0:
            warnings.warn(
                f"{qubit.label}: T2 = {qubit.t2} us exceeds 2*T1 = {2 * qubit.t1} us; "
                "pure dephasing clamped to zero",
                UserWarning,
                stacklevel=2,
            )
            raw = 0.0
        dephasing[qubit.label] = raw
    for mode in device.modes1 + device.modes2:
        decay[mode.label] = 1.0 / mode.t1
    return {"decay": decay, "dephasing": dephasing}


def build_collapse_ops(device: DeviceSpec) -> list[tuple[Operator, float]]:
    """Embedded Lindblad operators with their rates.

    Per qubit: the lowering operator at rate 1/T1 and, when the pure
    dephasing rate is positive, sigma_z at rate Gamma_phi/2 (equivalent to
    L = sqrt(Gamma_phi/2) sigma_z).  Per mode: the annihilator at 1/T1.
    Zero-rate channels are omitted.
    """
    layout = build_layout(device)
    rates = decoherence_rates(device)
    ops: list[tuple[Operator, float]] = []
    for label in layout.slot_labels:
        gamma = rates["decay"][label]
        if gamma > 0:
            ops.append((embed(ladder(layout.slot_dim(label)), label, layout), gamma))
    for qubit in (device.qubit1, device.qubit2):
        gphi = rates["dephasing"][qubit.label]
        if gphi > 0:
            ops.append((embed(sigma_z(), qubit.label, layout), gphi / 2.0))
    return ops


def single_excitation_labels(device: DeviceSpec) -> tuple[str, ...]:
    """Basis order of the single-excitation block: q1, q2, then every mode."""
    return build_layout(device).slot_labels


def single_excitation_hamiltonian(
    device: DeviceSpec, qubit_freqs: tuple[float, float]
) -> np.ndarray:
    """Dense Hermitian matrix of the one-excitation block, dim 2+M+N.

    Basis: qubit 1 excited, qubit 2 excited, each mode singly occupied (in
    layout order).  Diagonal entries are the detunings in rad/us; the
    eigenvalues coincide with the single-excitation eigenvalues of
    :func:`build_hamiltonian` for any fock_dim.
    """
    f1, f2 = _qubit_freqs_checked(device, qubit_freqs)
    labels = single_excitation_labels(device)
    index = {label: k for k, label in enumerate(labels)}
    n = len(labels)
    frame = device.frame
    h = np.zeros((n, n), dtype=np.complex128)

    h[index[device.qubit1.label], index[device.qubit1.label]] = ghz_to_rad_per_us(
        f1 - frame
    )
    h[index[device.qubit2.label], index[device.qubit2.label]] = ghz_to_rad_per_us(
        f2 - frame
    )
    for mode in device.modes1 + device.modes2:
        h[index[mode.label], index[mode.label]] = ghz_to_rad_per_us(mode.omega - frame)

    i1 = index[device.qubit1.label]
    i2 = index[device.qubit2.label]
    j = _coupling_rad(device.qq_two_g)
    h[i1, i2] = h[i2, i1] = j
    for qubit_idx, modes in ((i1, device.modes1), (i2, device.modes2)):
        for mode in modes:
            g = _coupling_rad(mode.two_g)
            h[qubit_idx, index[mode.label]] = g
            h[index[mode.label], qubit_idx] = g
    if device.cross_two_g > 0:
        gx = _coupling_rad(device.cross_two_g)
        for qubit_idx, modes in ((i1, device.modes2), (i2, device.modes1)):
            for mode in modes:
                h[qubit_idx, index[mode.label]] += gx
                h[index[mode.label], qubit_idx] += gx
    return h

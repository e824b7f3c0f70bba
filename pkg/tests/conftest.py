import dataclasses

import pytest

from hbarsim import model


def make_pair_device(
    two_g: float = 2.55,
    mode_offset_mhz: float = 0.0,
    q1_op: float = 3.7885,
    mode_t1: float = 0.38,
    q1_t1: float = 2.2,
    q1_t2: float = 4.41,
    fock_dim: int = 2,
) -> model.DeviceSpec:
    """One active qubit resonant region + a single mode; the second qubit is
    parked nearby with negligible exchange coupling so closed-form two-body
    oracles apply exactly."""
    q1 = model.QubitSpec("q1", q1_op, 3.6, 4.5, t1=q1_t1, t2=q1_t2)
    q2 = model.QubitSpec("q2", 3.80, 3.6, 4.5, t1=2.41, t2=1.02)
    mode = model.ModeSpec("m1_0", q1_op + mode_offset_mhz * 1e-3, two_g, mode_t1)
    return model.DeviceSpec(
        qubit1=q1,
        qubit2=q2,
        modes1=(mode,),
        modes2=(),
        qq_two_g=1e-9,
        frame_freq=q1_op,
        fock_dim=fock_dim,
    )


def make_two_qubit_device(
    qq_two_g: float = 16.7, q1_op: float = 3.7778, q2_op: float = 3.6673
) -> model.DeviceSpec:
    """Two coupled qubits, no modes."""
    q1 = model.QubitSpec("q1", q1_op, 3.6, 4.5, t1=2.2, t2=4.41)
    q2 = model.QubitSpec("q2", q2_op, 3.6, 4.5, t1=2.41, t2=1.02)
    return model.DeviceSpec(
        qubit1=q1, qubit2=q2, modes1=(), modes2=(), qq_two_g=qq_two_g
    )


def make_decay_device(t1: float, kind: str = "qubit") -> model.DeviceSpec:
    """Isolated decaying qubit or mode at the frame frequency (H ~ 0)."""
    if kind == "qubit":
        q1 = model.QubitSpec("q1", 3.7778, 3.6, 4.5, t1=t1, t2=2 * t1)
        modes1 = ()
    else:
        q1 = model.QubitSpec("q1", 3.7778, 3.6, 4.5, t1=2.2, t2=4.41)
        modes1 = (model.ModeSpec("m1_0", 3.7778, 1e-9, t1),)
    q2 = model.QubitSpec("q2", 3.7778, 3.6, 4.5, t1=2.41, t2=1.02)
    return model.DeviceSpec(
        qubit1=q1,
        qubit2=q2,
        modes1=modes1,
        modes2=(),
        qq_two_g=1e-12,
        frame_freq=3.7778,
    )


@pytest.fixture(scope="session")
def reference() -> model.DeviceSpec:
    return model.reference_device()


@pytest.fixture()
def pair_device() -> model.DeviceSpec:
    return make_pair_device()


def replace(device, **kwargs):
    return dataclasses.replace(device, **kwargs)

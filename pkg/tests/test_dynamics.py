import numpy as np
import pytest

from hbarsim import dynamics, model, opalg, pulses
from hbarsim.dynamics import IntegrationError, IntegratorConfig, Trajectory
from hbarsim.pulses import FluxSquare, Idle, PiPulse

from conftest import make_decay_device, make_pair_device, make_two_qubit_device


def ground_density(device):
    return opalg.ground_state(model.build_layout(device), kind="density")


def excited_density(device, label):
    layout = model.build_layout(device)
    return opalg.basis_state(layout, {label: 1}, kind="density")


class TestDecayOracles:
    @pytest.mark.parametrize("t1", [2.2, 2.41])
    def test_qubit_decay_exponential(self, t1):
        dev = make_decay_device(t1, "qubit")
        schedule = pulses.compile([Idle(2 * t1)], dev)
        times = np.linspace(0, 2 * t1, 21)
        traj = dynamics.evolve_master(
            excited_density(dev, "q1"), schedule, dev, None, times
        )
        assert np.abs(traj.observables["q1"] - np.exp(-times / t1)).max() < 1e-5

    @pytest.mark.parametrize("t1", [0.380, 0.320])
    def test_mode_decay_exponential(self, t1):
        dev = make_decay_device(t1, "mode")
        schedule = pulses.compile([Idle(2 * t1)], dev)
        times = np.linspace(0, 2 * t1, 21)
        traj = dynamics.evolve_master(
            excited_density(dev, "m1_0"), schedule, dev, None, times
        )
        assert np.abs(traj.observables["m1_0"] - np.exp(-times / t1)).max() < 1e-5

    def test_population_at_t1_is_inverse_e(self):
        dev = make_decay_device(2.2, "qubit")
        schedule = pulses.compile([Idle(2.2)], dev)
        traj = dynamics.evolve_master(
            excited_density(dev, "q1"), schedule, dev, None, np.array([2.2])
        )
        assert traj.observables["q1"][0] == pytest.approx(np.exp(-1), abs=1e-5)

    def test_ramsey_coherence_decay(self):
        # |rho_eg(t)| = exp(-(1/(2 T1) + Gamma_phi) t) / 2
        t1, t2 = 2.41, 1.02
        q1 = model.QubitSpec("q1", 3.7778, 3.6, 4.5, t1=t1, t2=t2)
        q2 = model.QubitSpec("q2", 3.7778, 3.6, 4.5, t1=2.2, t2=4.0)
        dev = model.DeviceSpec(q1, q2, (), (), qq_two_g=1e-12, frame_freq=3.7778)
        layout = model.build_layout(dev)
        vec = np.zeros(4, dtype=complex)
        vec[0b00] = vec[0b10] = 1 / np.sqrt(2)
        rho0 = opalg.State(layout, "vector", vec).to_density()
        schedule = pulses.compile([Idle(1.5)], dev)
        times = np.linspace(0, 1.5, 11)
        config = IntegratorConfig(store_states=True)
        traj = dynamics.evolve_master(rho0, schedule, dev, config, times)
        rate = 1 / (2 * t1) + (1 / t2 - 1 / (2 * t1))
        for t, state in zip(times, traj.states):
            coherence = abs(state.data[0b10, 0b00])
            assert coherence == pytest.approx(0.5 * np.exp(-rate * t), abs=1e-5)

    def test_ramsey_clamped_qubit(self):
        # T2 slightly above 2 T1: dephasing clamps to zero, coherence decays
        # at 1/(2 T1) alone.
        t1, t2 = 2.2, 4.41
        q1 = model.QubitSpec("q1", 3.7778, 3.6, 4.5, t1=t1, t2=t2)
        q2 = model.QubitSpec("q2", 3.7778, 3.6, 4.5, t1=2.41, t2=1.02)
        dev = model.DeviceSpec(q1, q2, (), (), qq_two_g=1e-12, frame_freq=3.7778)
        layout = model.build_layout(dev)
        vec = np.zeros(4, dtype=complex)
        vec[0b00] = vec[0b10] = 1 / np.sqrt(2)
        rho0 = opalg.State(layout, "vector", vec).to_density()
        schedule = pulses.compile([Idle(2.0)], dev)
        config = IntegratorConfig(store_states=True)
        traj = dynamics.evolve_master(rho0, schedule, dev, config, np.array([2.0]))
        coherence = abs(traj.states[0].data[0b10, 0b00])
        assert coherence == pytest.approx(0.5 * np.exp(-2.0 / (2 * t1)), abs=1e-5)


class TestVacuumRabi:
    def test_resonant_exchange_closed_form(self):
        dev = make_pair_device(two_g=2.55)
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885, 0.45)], dev
        )
        times = np.linspace(0, 0.45, 181)
        traj = dynamics.evolve_master(
            ground_density(dev), schedule, dev, None, times,
            include_decoherence=False,
        )
        analytic = 0.5 * (1 + np.cos(2 * np.pi * 2.55 * times))
        assert np.abs(traj.observables["q1"] - analytic).max() < 1e-6

    def test_full_swap_time(self):
        dev = make_pair_device(two_g=2.55)
        t_swap = 1 / (2 * 2.55)
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885, 0.25)], dev
        )
        times = np.linspace(0.15, 0.25, 1001)
        traj = dynamics.evolve_master(
            ground_density(dev), schedule, dev, None, times,
            include_decoherence=False,
        )
        from hbarsim.experiments import first_minimum_time

        tmin = first_minimum_time(times, traj.observables["q1"])
        assert abs(tmin - t_swap) * 1e3 < 0.5  # ns


class TestUnitary:
    def test_zero_hamiltonian_is_identity(self):
        import dataclasses

        dev = make_two_qubit_device(qq_two_g=1e-12, q1_op=3.7, q2_op=3.7)
        dev = dataclasses.replace(dev, frame_freq=3.7)
        layout = model.build_layout(dev)
        rng = np.random.default_rng(1)
        vec = rng.normal(size=4) + 1j * rng.normal(size=4)
        vec /= np.linalg.norm(vec)
        psi0 = opalg.State(layout, "vector", vec)
        schedule = pulses.compile([Idle(1.0)], dev)
        traj = dynamics.evolve_unitary(
            psi0, schedule, dev, IntegratorConfig(store_states=True), np.array([1.0])
        )
        final = traj.states[0].data
        phase = final[np.argmax(np.abs(vec))] / vec[np.argmax(np.abs(vec))]
        assert np.abs(final - phase * vec).max() < 1e-9

    def test_detuned_rabi_contrast(self):
        # contrast (2g)^2 / ((2g)^2 + Delta^2) = 1/2 at Delta = 2g
        dev = make_pair_device(two_g=2.55, mode_offset_mhz=2.55)
        layout = model.build_layout(dev)
        psi0 = opalg.basis_state(layout, {"q1": 1})
        schedule = pulses.compile([FluxSquare("q1", 3.7885, 1.2)], dev)
        times = np.linspace(0, 1.2, 1201)
        traj = dynamics.evolve_unitary(psi0, schedule, dev, None, times)
        contrast = 1.0 - traj.observables["q1"].min()
        assert contrast == pytest.approx(0.5, abs=1e-3)

    def test_matches_single_excitation_propagation(self):
        dev = make_pair_device(two_g=2.55, mode_offset_mhz=1.3)
        layout = model.build_layout(dev)
        psi0 = opalg.basis_state(layout, {"q1": 1})
        schedule = pulses.compile([FluxSquare("q1", 3.7885, 0.5)], dev)
        times = np.linspace(0, 0.5, 26)
        traj = dynamics.evolve_unitary(psi0, schedule, dev, None, times)
        # independent oracle: dense propagation of the one-excitation block
        h = model.single_excitation_hamiltonian(dev, (3.7885, 3.80))
        labels = model.single_excitation_labels(dev)
        w, v = np.linalg.eigh(h)
        c0 = np.zeros(len(labels), dtype=complex)
        c0[labels.index("q1")] = 1.0
        for i, t in enumerate(times):
            c = v @ (np.exp(-1j * w * t) * (v.conjugate().T @ c0))
            for k, label in enumerate(labels):
                assert abs(abs(c[k]) ** 2 - traj.observables[label][i]) < 1e-8

    def test_population_preserved_when_uncoupled(self):
        dev = make_decay_device(2.2, "qubit")
        layout = model.build_layout(dev)
        psi0 = opalg.basis_state(layout, {"q1": 1})
        schedule = pulses.compile([Idle(0.5)], dev)
        traj = dynamics.evolve_unitary(psi0, schedule, dev, None, np.array([0.5]))
        assert traj.observables["q1"][0] == pytest.approx(1.0, abs=1e-12)


class TestMasterInvariants:
    def _rabi_run(self, include_decoherence, config=None, two_g=2.55):
        dev = make_pair_device(two_g=two_g)
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885, 0.6)], dev
        )
        times = np.linspace(0, 0.6, 25)
        traj = dynamics.evolve_master(
            ground_density(dev),
            schedule,
            dev,
            config or IntegratorConfig(store_states=True),
            times,
            include_decoherence=include_decoherence,
        )
        return traj

    def test_trace_hermiticity_positivity(self):
        traj = self._rabi_run(True, IntegratorConfig(store_states=True))
        for state in traj.states:
            rho = state.data
            assert abs(np.trace(rho).real - 1.0) < 1e-7
            assert np.abs(rho - rho.conjugate().T).max() < 1e-8
            assert np.linalg.eigvalsh(rho).min() > -1e-6

    def test_excitation_conserved_without_rates(self):
        traj = self._rabi_run(False)
        total = traj.total_excitation()
        assert np.abs(total - total[0]).max() < 1e-7

    def test_dt_halving_stability(self):
        t1 = self._rabi_run(True, IntegratorConfig())
        t2 = self._rabi_run(True, IntegratorConfig(steps_per_cycle=256))
        for label in t1.observables:
            assert np.abs(t1.observables[label] - t2.observables[label]).max() < 1e-6

    def test_master_agrees_with_unitary_at_zero_rates(self):
        dev = make_pair_device()
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885 + 1.1e-3, 0.8)], dev
        )
        times = np.linspace(0, 0.8, 33)
        trm = dynamics.evolve_master(
            ground_density(dev), schedule, dev, None, times,
            include_decoherence=False,
        )
        layout = model.build_layout(dev)
        tru = dynamics.evolve_unitary(
            opalg.ground_state(layout), schedule, dev, None, times
        )
        for label in trm.observables:
            assert (
                np.abs(trm.observables[label] - tru.observables[label]).max() < 1e-6
            )

    def test_vanishing_rates_approach_unitary(self):
        # continuity: rates of 1e-6 / us stay within 1e-4 of lossless
        dev = make_pair_device(q1_t1=1e6, q1_t2=2e6, mode_t1=1e6)
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885, 0.6)], dev
        )
        times = np.linspace(0, 0.6, 13)
        trm = dynamics.evolve_master(ground_density(dev), schedule, dev, None, times)
        layout = model.build_layout(dev)
        tru = dynamics.evolve_unitary(
            opalg.ground_state(layout), schedule, dev, None, times
        )
        assert (
            np.abs(trm.observables["q1"] - tru.observables["q1"]).max() < 1e-4
        )


class TestAdaptive:
    def test_rk45_matches_rk4(self):
        dev = make_pair_device()
        schedule = pulses.compile(
            [PiPulse("q1"), FluxSquare("q1", 3.7885, 0.4)], dev
        )
        times = np.linspace(0, 0.4, 9)
        fixed = dynamics.evolve_master(ground_density(dev), schedule, dev, None, times)
        adaptive = dynamics.evolve_master(
            ground_density(dev),
            schedule,
            dev,
            IntegratorConfig(method="rk45", rel_tol=1e-10, abs_tol=1e-13),
            times,
        )
        for label in fixed.observables:
            assert (
                np.abs(fixed.observables[label] - adaptive.observables[label]).max()
                < 1e-6
            )

    def test_step_underflow_raises(self):
        dev = make_pair_device()
        schedule = pulses.compile([PiPulse("q1"), FluxSquare("q1", 3.7885, 0.1)], dev)
        config = IntegratorConfig(method="rk45", rel_tol=1e-300, abs_tol=1e-300)
        with pytest.raises(IntegrationError, match="underflow"):
            dynamics.evolve_master(
                ground_density(dev), schedule, dev, config, np.array([0.1])
            )


class TestValidation:
    def test_sample_time_outside_schedule(self):
        dev = make_pair_device()
        schedule = pulses.compile([Idle(0.5)], dev)
        with pytest.raises(ValueError, match="span"):
            dynamics.evolve_master(
                ground_density(dev), schedule, dev, None, np.array([0.6])
            )

    def test_sample_times_must_ascend(self):
        dev = make_pair_device()
        schedule = pulses.compile([Idle(0.5)], dev)
        with pytest.raises(ValueError, match="ascending"):
            dynamics.evolve_master(
                ground_density(dev), schedule, dev, None, np.array([0.4, 0.2])
            )

    def test_wrong_state_kind(self):
        dev = make_pair_device()
        layout = model.build_layout(dev)
        schedule = pulses.compile([Idle(0.5)], dev)
        with pytest.raises(ValueError, match="density"):
            dynamics.evolve_master(
                opalg.ground_state(layout), schedule, dev, None, np.array([0.1])
            )
        with pytest.raises(ValueError, match="vector"):
            dynamics.evolve_unitary(
                ground_density(dev), schedule, dev, None, np.array([0.1])
            )

    def test_mid_schedule_prep(self):
        dev = make_pair_device()
        schedule = pulses.compile([Idle(0.2), PiPulse("q1"), Idle(0.2)], dev)
        times = np.array([0.0, 0.19, 0.2, 0.4])
        traj = dynamics.evolve_master(
            ground_density(dev), schedule, dev, None, times,
            include_decoherence=False,
        )
        pops = traj.observables["q1"]
        assert pops[0] == pytest.approx(0.0, abs=1e-9)
        assert pops[1] == pytest.approx(0.0, abs=1e-9)
        # the preparation acts before the sample taken at the same instant
        assert pops[2] == pytest.approx(1.0, abs=1e-9)

    def test_trajectory_validation(self):
        with pytest.raises(ValueError, match="length"):
            Trajectory(np.array([0.0, 1.0]), {"q1": np.array([0.5])})
        with pytest.raises(ValueError, match="outside"):
            Trajectory(np.array([0.0]), {"q1": np.array([1.5])})

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(method="euler")
        with pytest.raises(ValueError):
            IntegratorConfig(dt_max=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(steps_per_cycle=10)

"""
Pulse Simulator Tests
=====================

Two-level dynamics against a matrix-exponential reference, sampling and
error handling.
"""

import math
import random
import sys
import unittest
from pathlib import Path

import numpy as np
from scipy.linalg import expm

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.core.device import load_descriptor
from src.core.errors import PostMeasurementInstruction, SimulationError, UnknownSite, UntimedSchedule
from src.core.lowering import Gate, GateCircuit, device_frames, lower
from src.core.passes import resolve_timing
from src.core.pulse import (
    Delay,
    Frame,
    Measure,
    Play,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftPhase,
    make_sampled_waveform,
)
from src.core.simulator import (
    PulseSimulator,
    QubitModel,
    execute,
    expectation_z,
    fidelity,
    final_states,
    step_unitary,
)

SIM = ROOT / "data" / "devices" / "sim.json"

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def reference_step(delta_hz, rabi_hz, drive, dt, substeps=1):
    """Propagator from scipy's expm, optionally split into equal substeps."""
    h = math.pi * (delta_hz * SZ + rabi_hz * (drive.real * SX + drive.imag * SY))
    u = expm(-1j * h * dt / substeps)
    return np.linalg.matrix_power(u, substeps)


def rotation(theta, axis_rad):
    return expm(-0.5j * theta * (math.cos(axis_rad) * SX + math.sin(axis_rad) * SY))


class SimulatorTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dev = load_descriptor(SIM)
        cls.models = cls.dev.simulation
        cls.sim = PulseSimulator(cls.dev.ports, cls.models)

    def timed(self, *gates, num_sites=1):
        circuit = GateCircuit(num_sites, tuple(gates))
        return resolve_timing(lower(circuit, self.dev.default_calibrations, self.dev))


class TestModels(unittest.TestCase):

    def test_qubit_model_validation(self):
        with self.assertRaises(ValueError):
            QubitModel(-1, 5e9, 1e7)
        with self.assertRaises(ValueError):
            QubitModel(0, 5e9, 0.0)
        with self.assertRaises(ValueError):
            QubitModel(0, math.nan, 1e7)
        model = QubitModel(1, 5.1e9, 2.5e7)
        self.assertEqual(QubitModel.from_dict(model.to_dict()), model)

    def test_duplicate_models(self):
        with self.assertRaises(ValueError):
            PulseSimulator([], [QubitModel(0, 5e9, 1e7), QubitModel(0, 5e9, 1e7)])


class TestDynamics(SimulatorTestCase):

    def test_step_matches_matrix_exponential(self):
        rng = random.Random(5)
        for _ in range(50):
            delta = rng.uniform(-5e7, 5e7)
            drive = complex(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7))
            np.testing.assert_allclose(step_unitary(delta, 2.5e7, drive, 1e-9),
                                       reference_step(delta, 2.5e7, drive, 1e-9), atol=1e-12)

    def test_detuned_play_against_fine_steps(self):
        rng = np.random.default_rng(17)
        samples = 0.6 * np.exp(1j * rng.uniform(0, 2 * math.pi, 24)) * rng.uniform(0.2, 1.0, 24)
        frames = device_frames(self.dev)
        s = Schedule(frames, (
            SetFrequency('q0_drive', 5.003e9),
            SetPhase('q0_drive', 0.7),
            Delay('q0_drive', 16),
            Play('q0_drive', make_sampled_waveform(list(samples))),
        ))
        psi = self.sim.final_states(resolve_timing(s))[0]

        delta, dt = 3e6, 1e-9
        expected = np.array([1, 0], dtype=complex)
        expected = reference_step(delta, 0.0, 0j, dt * 16, substeps=16) @ expected
        for a in samples:
            expected = reference_step(delta, 2.5e7, a * np.exp(0.7j), dt, substeps=20) @ expected
        self.assertGreater(fidelity(psi, expected), 1 - 1e-10)

    def test_pi_pulse_flips(self):
        histogram = self.sim.execute(self.timed(Gate.x(0), Gate.measure(0, 0)), 100_000, seed=11)
        self.assertEqual(sum(histogram.values()), 100_000)
        self.assertGreaterEqual(histogram.get('1', 0) / 100_000, 0.999)

    def test_half_pi_pulse_balances(self):
        z = self.sim.expectation_z(self.timed(Gate.sx(0)))
        self.assertAlmostEqual(z[0], 0.0, places=9)
        self.assertAlmostEqual(z[1], 1.0, places=12)

    def test_virtual_z(self):
        rng = random.Random(23)
        for _ in range(20):
            phi = rng.uniform(-math.pi, math.pi)
            with self.subTest(phi=phi):
                s = self.timed(Gate.sx(0), Gate.rz(0, phi), Gate.sx(0))
                psi = self.sim.final_states(s)[0]
                expected = rotation(math.pi / 2, -phi) @ rotation(math.pi / 2, 0.0) @ np.array([1, 0], dtype=complex)
                self.assertGreater(fidelity(psi, expected), 1 - 1e-9)
                self.assertAlmostEqual(self.sim.expectation_z(s)[0], -math.cos(phi), places=9)

    def test_full_turn_phase_shift_is_invisible(self):
        rng = random.Random(29)
        frames = device_frames(self.dev)
        for _ in range(20):
            phi = rng.uniform(-math.pi, math.pi)
            k = rng.choice([-2, -1, 1, 3])
            w = make_sampled_waveform([0.3 * complex(math.cos(phi), math.sin(phi))] * 24)
            plain = Schedule(frames, (Play('q0_drive', w), SetPhase('q0_drive', phi), Play('q0_drive', w)))
            shifted = Schedule(frames, (
                Play('q0_drive', w),
                SetPhase('q0_drive', phi + 2 * math.pi * k),
                ShiftPhase('q0_drive', 2 * math.pi * k),
                Play('q0_drive', w),
            ))
            expected = self.sim.final_states(resolve_timing(plain))[0]
            actual = self.sim.final_states(resolve_timing(shifted))[0]
            self.assertGreater(fidelity(expected, actual), 1 - 1e-9)

    def test_sites_evolve_independently(self):
        s = self.timed(Gate.x(1), Gate.measure(0, 0), Gate.measure(1, 1), num_sites=2)
        histogram = execute(s, self.models, 2000, 3, self.dev.ports)
        self.assertGreaterEqual(histogram.get('01', 0), 1990)

    def test_module_functions_agree(self):
        s = self.timed(Gate.sx(0))
        self.assertEqual(expectation_z(s, self.models, self.dev.ports), self.sim.expectation_z(s))
        np.testing.assert_allclose(final_states(s, self.models, self.dev.ports)[0], self.sim.final_states(s)[0])


class TestSampling(SimulatorTestCase):

    def test_seeded_sampling_is_reproducible(self):
        s = self.timed(Gate.sx(0), Gate.measure(0, 0))
        self.assertEqual(self.sim.execute(s, 500, seed=4), self.sim.execute(s, 500, seed=4))

    def test_histogram_width_follows_results(self):
        s = self.timed(Gate.measure(0, 2))
        histogram = self.sim.execute(s, 50, seed=0)
        self.assertEqual(histogram, {'000': 50})
        self.assertEqual(self.sim.execute(s, 50, seed=0, num_results=4), {'0000': 50})

    def test_wide_result_registers(self):
        s = self.timed(Gate.x(0), Gate.x(1), Gate.measure(0, 0), Gate.measure(1, 69), num_sites=2)
        histogram = self.sim.execute(s, 200, seed=8)
        self.assertTrue(all(len(key) == 70 and set(key) <= {'0', '1'} for key in histogram))
        self.assertEqual(sum(histogram.values()), 200)
        self.assertGreaterEqual(histogram.get('1' + '0' * 68 + '1', 0), 195)

        s = self.timed(Gate.x(0), Gate.measure(0, 63), num_sites=1)
        histogram = self.sim.execute(s, 50, seed=2, num_results=66)
        self.assertGreaterEqual(histogram.get('0' * 63 + '1' + '00', 0), 49)

    def test_empty_schedule(self):
        self.assertEqual(self.sim.execute(Schedule(timing=()), 10, seed=1), {'0': 10})

    def test_shots_must_be_positive(self):
        with self.assertRaises(ValueError):
            self.sim.execute(self.timed(Gate.x(0)), 0)


class TestErrors(SimulatorTestCase):

    def test_untimed(self):
        s = lower(GateCircuit(1, (Gate.x(0),)), self.dev.default_calibrations, self.dev)
        with self.assertRaises(UntimedSchedule):
            self.sim.run(s)

    def test_instruction_after_measurement(self):
        s = self.timed(Gate.x(0), Gate.measure(0, 0), Gate.x(0))
        with self.assertRaises(PostMeasurementInstruction):
            self.sim.run(s)

    def test_overlapping_plays_on_one_site(self):
        frames = {'a': Frame('a', 'q0_drive', 5e9), 'b': Frame('b', 'q0_drive', 5e9)}
        w = make_sampled_waveform([0.1] * 16)
        s = Schedule(frames, (Play('a', w), Play('b', w)), (0, 8))
        with self.assertRaises(SimulationError):
            self.sim.run(s)

    def test_unknown_site(self):
        partial = PulseSimulator(self.dev.ports, [QubitModel(0, 5e9, 2.5e7)])
        with self.assertRaises(UnknownSite):
            partial.run(self.timed(Gate.x(1), num_sites=2))
        with self.assertRaises(UnknownSite):
            partial.run(Schedule({}, (Measure(4, 0),), (0,)))

    def test_frame_on_unknown_port(self):
        s = Schedule({'d': Frame('d', 'q9_drive')}, (Play('d', make_sampled_waveform([0.1])),), (0,))
        with self.assertRaises(SimulationError):
            self.sim.run(s)


if __name__ == '__main__':
    unittest.main()

"""
Control VQE Tests
=================
"""

import sys
import unittest
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.core.device import load_descriptor
from src.core.errors import NotSupported, UnknownSite
from src.core.passes import LegalizationMode, has_errors, legalize
from src.core.vqe import PulseParams, PulseVQE, run_vqe

SIM = ROOT / "data" / "devices" / "sim.json"


class TestPulseVQE(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dev = load_descriptor(SIM)
        cls.result = run_vqe(cls.dev, iterations=200, seed=42)

    def test_reaches_excited_state(self):
        self.assertLessEqual(self.result.energy, -0.99)
        self.assertLessEqual(self.result.iterations, 200)

    def test_energy_never_increases(self):
        energies = [step.energy for step in self.result.trace]
        self.assertEqual(energies, sorted(energies, reverse=True))
        self.assertEqual([step.iteration for step in self.result.trace], list(range(len(energies))))

    def test_parameters_stay_legal(self):
        vqe = PulseVQE(self.dev, seed=42)
        for step in self.result.trace:
            p = step.params
            self.assertEqual(p.duration_samples % 8, 0)
            self.assertTrue(16 <= p.duration_samples <= 256)
            self.assertTrue(0.0 <= p.amp <= 1.0)
        _, diagnostics = legalize(vqe.schedule(self.result.params), self.dev, LegalizationMode.STRICT)
        self.assertFalse(has_errors(diagnostics))

    def test_deterministic_for_a_seed(self):
        again = run_vqe(self.dev, iterations=200, seed=42)
        self.assertEqual(again.trace, self.result.trace)

    def test_zero_iterations(self):
        steps = []
        result = run_vqe(self.dev, iterations=0, seed=3, callback=steps.append)
        self.assertEqual(result.iterations, 0)
        self.assertEqual(steps, result.trace)
        self.assertEqual(result.params, PulseVQE(self.dev, seed=3).initial_params())

    def test_callback_sees_every_step(self):
        steps = []
        result = run_vqe(self.dev, iterations=5, seed=1, callback=steps.append)
        self.assertEqual(steps, result.trace)
        self.assertEqual(len(steps), 6)

    def test_energy_of_a_pi_pulse(self):
        vqe = PulseVQE(self.dev)
        self.assertAlmostEqual(vqe.energy(PulseParams(0.5, 40, 1.0)), -1.0, places=9)
        self.assertAlmostEqual(vqe.energy(PulseParams(0.0, 40, 0.0)), 1.0, places=12)

    def test_second_site(self):
        result = run_vqe(self.dev, iterations=100, seed=5, site=1)
        self.assertLess(result.energy, result.trace[0].energy)

    def test_rejected_devices_and_arguments(self):
        with self.assertRaises(NotSupported):
            PulseVQE(replace(self.dev, name="bench", simulation=None))
        with self.assertRaises(UnknownSite):
            PulseVQE(self.dev, site=5)
        with self.assertRaises(ValueError):
            PulseVQE(self.dev).optimize(iterations=-1)


if __name__ == '__main__':
    unittest.main()

"""
Pulse Core Tests
================

Ports, waveforms, frames, instructions, schedules and the builder.
"""

import math
import random
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.errors import (
    AmplitudeOutOfRange,
    EmptyWaveform,
    InvalidInstruction,
    InvalidParams,
    NonFinite,
    UnknownFrame,
)
from src.core.pulse import (
    Barrier,
    Capture,
    Delay,
    Frame,
    Measure,
    Play,
    Port,
    PortConstraints,
    PortKind,
    PulseBuilder,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftPhase,
    make_parametric_waveform,
    make_sampled_waveform,
    normalize_phase,
    render_signal,
    resolve_waveform,
    waveform_array,
    waveform_duration,
)


class TestPhase(unittest.TestCase):

    def test_normalize_range(self):
        self.assertEqual(normalize_phase(0.0), 0.0)
        self.assertAlmostEqual(normalize_phase(-math.pi / 2), 1.5 * math.pi)
        self.assertAlmostEqual(normalize_phase(5 * math.pi), math.pi)
        self.assertEqual(normalize_phase(2 * math.pi), 0.0)
        self.assertLess(normalize_phase(-1e-18), 2 * math.pi)

    def test_periodic_and_idempotent(self):
        rng = random.Random(41)
        for _ in range(500):
            x = rng.uniform(-100.0, 100.0)
            k = rng.randint(-20, 20)
            once = normalize_phase(x)
            self.assertEqual(normalize_phase(once), once)
            gap = abs(normalize_phase(x + 2 * math.pi * k) - once)
            self.assertLess(min(gap, 2 * math.pi - gap), 1e-9)

    def test_non_finite(self):
        with self.assertRaises(NonFinite):
            normalize_phase(float('nan'))
        with self.assertRaises(NonFinite):
            normalize_phase(float('inf'))


class TestPorts(unittest.TestCase):

    def test_constraints_validation(self):
        with self.assertRaises(ValueError):
            PortConstraints(0.0)
        with self.assertRaises(ValueError):
            PortConstraints(1e-9, granularity_samples=8, min_duration_samples=12)
        with self.assertRaises(ValueError):
            PortConstraints(1e-9, max_amplitude=1.5)
        with self.assertRaises(ValueError):
            PortConstraints(1e-9, frequency_range_hz=(5e9, 4e9))

    def test_port_round_trip(self):
        port = Port('q0_drive', PortKind.DRIVE, (0,),
                    PortConstraints(1e-9, 8, 16, 0.9, (4e9, 6e9)), default_frequency_hz=5e9)
        self.assertEqual(Port.from_dict(port.to_dict()), port)

    def test_carrier_frequency_default(self):
        constraints = PortConstraints(1e-9, frequency_range_hz=(4e9, 6e9))
        port = Port('d0', PortKind.DRIVE, (0,), constraints)
        self.assertEqual(port.carrier_frequency_hz, 5e9)
        self.assertEqual(Port('d1', PortKind.DRIVE, (0,), constraints, 4.5e9).carrier_frequency_hz, 4.5e9)
        self.assertEqual(Port('d2', PortKind.DRIVE, (0,), PortConstraints(1e-9)).carrier_frequency_hz, 0.0)

    def test_coupler_needs_two_sites(self):
        with self.assertRaises(ValueError):
            Port('c0', PortKind.COUPLER, (0,), PortConstraints(1e-9))
        Port('c0', PortKind.COUPLER, (0, 1), PortConstraints(1e-9))

    def test_invalid_port_id(self):
        with self.assertRaises(ValueError):
            Port('Q0 drive', PortKind.DRIVE, (0,), PortConstraints(1e-9))


class TestWaveforms(unittest.TestCase):

    def test_sampled(self):
        w = make_sampled_waveform([0.1, 0.5j, (0.3, -0.4)])
        self.assertEqual(waveform_duration(w), 3)
        self.assertEqual(w.samples[2], complex(0.3, -0.4))

    def test_sampled_errors(self):
        with self.assertRaises(EmptyWaveform):
            make_sampled_waveform([])
        with self.assertRaises(AmplitudeOutOfRange):
            make_sampled_waveform([0.8 + 0.8j])
        with self.assertRaises(NonFinite):
            make_sampled_waveform([float('nan')])
        # Waveform errors are also value errors
        with self.assertRaises(ValueError):
            make_sampled_waveform([2.0])

    def test_unit_amplitude_allowed(self):
        w = make_sampled_waveform([1.0, -1.0, 1j])
        self.assertEqual(w.duration, 3)

    def test_constant_template(self):
        w = make_parametric_waveform('constant', 16, amp=0.5, phase=math.pi / 2)
        samples = waveform_array(w)
        self.assertEqual(len(samples), 16)
        np.testing.assert_allclose(samples, 0.5j, atol=1e-15)

    def test_gaussian_template(self):
        w = make_parametric_waveform('gaussian', 33, amp=0.8, phase=0.0, sigma_samples=4.0)
        samples = waveform_array(w).real
        self.assertAlmostEqual(samples[16], 0.8)
        self.assertAlmostEqual(samples[0], samples[-1])
        self.assertLess(samples[0], 0.01)

    def test_gaussian_square_has_flat_top(self):
        w = make_parametric_waveform('gaussian_square', 64, amp=0.4, phase=0.0,
                                     sigma_samples=4.0, width_samples=32.0)
        samples = waveform_array(w).real
        np.testing.assert_allclose(samples[20:44], 0.4)
        self.assertLess(samples[0], 0.4)

    def test_parametric_errors(self):
        with self.assertRaises(InvalidParams):
            make_parametric_waveform('constant', 16, amp=0.5)
        with self.assertRaises(InvalidParams):
            make_parametric_waveform('constant', 0, amp=0.5, phase=0.0)
        with self.assertRaises(InvalidParams):
            make_parametric_waveform('gaussian', 16, amp=0.5, phase=0.0, sigma_samples=-1.0)
        with self.assertRaises(InvalidParams):
            make_parametric_waveform('constant', 16, amp=1.5, phase=0.0)
        with self.assertRaises(ValueError):
            make_parametric_waveform('triangle', 16, amp=0.5, phase=0.0)

    def test_resolve_is_identity_on_sampled(self):
        w = make_sampled_waveform([0.1, 0.2])
        self.assertIs(resolve_waveform(w), w)

    def test_render_signal(self):
        w = make_sampled_waveform([1.0] * 4)
        f = Frame('d0', 'd0', frequency_hz=0.25e9)
        signal = render_signal(w, f, 0, 1e-9)
        np.testing.assert_allclose(signal, [1.0, 0.0, -1.0, 0.0], atol=1e-12)


class TestInstructions(unittest.TestCase):

    def test_frame_normalizes_phase(self):
        f = Frame('d0', 'd0', 5e9, -math.pi)
        self.assertAlmostEqual(f.phase_rad, math.pi)

    def test_negative_delay(self):
        with self.assertRaises(InvalidInstruction):
            Delay('d0', -1)

    def test_barrier_needs_two_frames(self):
        with self.assertRaises(InvalidInstruction):
            Barrier(frozenset({'d0'}))
        self.assertEqual(Barrier(frozenset({'d1', 'd0'})).frame_ids(), ('d0', 'd1'))

    def test_durations(self):
        w = make_sampled_waveform([0.1] * 5)
        self.assertEqual(Play('d0', w).duration, 5)
        self.assertEqual(Delay('d0', 7).duration, 7)
        self.assertEqual(ShiftPhase('d0', 1.0).duration, 0)
        self.assertEqual(Capture('m0', 0).duration, 0)
        self.assertEqual(Measure(0, 0).frame_ids(), ())


class TestSchedule(unittest.TestCase):

    def setUp(self):
        self.frames = {
            'd0': Frame('d0', 'd0', 5e9),
            'm0': Frame('m0', 'm0', 7e9),
            'spare': Frame('spare', 'd0', 5.1e9),
        }
        self.w = make_sampled_waveform([0.1] * 8)

    def test_frames_and_ports_used(self):
        s = Schedule(self.frames, (Delay('m0', 4), Play('d0', self.w), Capture('m0', 0)))
        self.assertEqual(s.frames_used(), ['m0', 'd0'])
        self.assertEqual(s.ports_used(), ['m0', 'd0'])
        self.assertEqual(s.results(), [0])

    def test_check_frames(self):
        s = Schedule(self.frames, (Play('d0', self.w), Delay('nope', 3)))
        with self.assertRaises(UnknownFrame) as ctx:
            s.check_frames()
        self.assertEqual(ctx.exception.index, 1)

    def test_timing_length_checked(self):
        with self.assertRaises(ValueError):
            Schedule(self.frames, (Play('d0', self.w),), (0, 1))

    def test_duration_and_untimed(self):
        s = Schedule(self.frames, (Play('d0', self.w), Delay('m0', 20)), (0, 0))
        self.assertEqual(s.duration(), 20)
        self.assertFalse(s.untimed().is_timed)
        self.assertFalse(s.with_instructions(s.instructions).is_timed)
        with self.assertRaises(ValueError):
            s.untimed().duration()


class TestPulseBuilder(unittest.TestCase):

    def test_primitives(self):
        b = PulseBuilder([Frame('d0', 'q0_drive', 5e9), Frame('d0b', 'q0_drive', 5.2e9), Frame('m0', 'q0_readout', 7e9)])
        w = b.waveform([0.5] * 16)
        s = (b.frame_change('q0_drive', 5.1e9, 0.5)
              .play('q0_drive', w)
              .delay('d0b', 8)
              .barrier('d0', 'm0')
              .capture('q0_readout', 0)
              .build())
        self.assertEqual(s.instructions[0], SetFrequency('d0', 5.1e9))
        self.assertEqual(s.instructions[1], SetPhase('d0', 0.5))
        self.assertEqual(s.instructions[2], Play('d0', w))
        self.assertEqual(s.instructions[3], Delay('d0b', 8))
        self.assertEqual(s.instructions[4], Barrier(frozenset({'d0', 'm0'})))
        self.assertEqual(s.instructions[5], Capture('m0', 0))
        self.assertFalse(s.is_timed)

    def test_unknown_port(self):
        b = PulseBuilder([Frame('d0', 'q0_drive')])
        with self.assertRaises(UnknownFrame):
            b.shift_phase('q9_drive', 1.0)

    def test_duplicate_frame(self):
        b = PulseBuilder([Frame('d0', 'q0_drive')])
        with self.assertRaises(ValueError):
            b.add_frame(Frame('d0', 'q1_drive'))


if __name__ == '__main__':
    unittest.main()

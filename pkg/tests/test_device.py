"""
Device Descriptor Tests
=======================

Descriptor loading and capability queries.
"""

import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.core.device import (
    PQIR_PULSE,
    PropertyKey,
    PulseSupport,
    Scope,
    descriptor_from_dict,
    describe,
    load_descriptor,
    query_descriptor,
)
from src.core.errors import InvalidDescriptor, InvalidScope, NotSupported
from src.core.lowering import CalibrationEntry, TemplateInstruction
from src.core.pulse import PortKind
from src.utils.import_export import import_export

SIM = ROOT / "data" / "devices" / "sim.json"


def port(pid, kind, sites, **constraints):
    constraints.setdefault('sample_period_s', 1e-9)
    return {'id': pid, 'kind': kind, 'sites': sites, 'constraints': constraints}


def minimal(**overrides):
    data = {'name': 'bench', 'num_sites': 1, 'ports': [port('q0_drive', 'drive', [0])]}
    data.update(overrides)
    return data


class TestDescriptorLoading(unittest.TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_sim_descriptor(self):
        dev = load_descriptor(SIM)
        self.assertEqual(dev.name, 'sim')
        self.assertEqual(dev.num_sites, 2)
        self.assertIs(dev.pulse_support, PulseSupport.PORT_LEVEL)
        self.assertEqual([p.id for p in dev.ports], ['q0_drive', 'q1_drive', 'q0_readout', 'q1_readout'])
        self.assertEqual(dev.port_for(PortKind.READOUT, 1).id, 'q1_readout')
        self.assertTrue(dev.is_simulator)
        self.assertEqual(dev.default_calibrations.gate_names(), ['measure', 'rz', 'sx', 'x'])

    def test_defaults(self):
        dev = descriptor_from_dict(minimal())
        self.assertEqual(dev.supported_formats, (PQIR_PULSE,))
        self.assertEqual(dev.operations, ())
        self.assertFalse(dev.is_simulator)
        self.assertEqual(len(dev.sites), 1)
        self.assertIsNone(dev.sites[0].t1_s)

    def test_dict_round_trip(self):
        dev = load_descriptor(SIM)
        again = descriptor_from_dict(dev.to_dict())
        self.assertEqual(again.ports, dev.ports)
        self.assertEqual(again.simulation, dev.simulation)
        self.assertEqual(again.default_calibrations.gate_names(), dev.default_calibrations.gate_names())
        self.assertEqual(again.default_calibrations.lookup('x', (0,)), dev.default_calibrations.lookup('x', (0,)))

    def test_invalid_documents(self):
        cases = {
            'missing name': {'num_sites': 1, 'ports': []},
            'no sites': minimal(num_sites=0),
            'bad port id': minimal(ports=[port('Q0 drive', 'drive', [0])]),
            'unknown kind': minimal(ports=[port('q0_drive', 'laser', [0])]),
            'site out of range': minimal(ports=[port('q0_drive', 'drive', [3])]),
            'duplicate port': minimal(ports=[port('q0_drive', 'drive', [0]), port('q0_drive', 'drive', [0])]),
            'port level without ports': minimal(ports=[]),
            'granularity': minimal(ports=[port('q0_drive', 'drive', [0], granularity_samples=8,
                                               min_duration_samples=12)]),
            'site entries': minimal(sites=[{'t1_s': 1e-4}, {'t1_s': 1e-4}]),
            'coupler body without coupler': minimal(calibrations=[{
                'gate': 'cz', 'sites': 'any',
                'body': [{'op': 'delay', 'frame_role': 'coupler', 'duration_samples': 8}],
            }]),
            'simulation site': minimal(simulation={'models': [
                {'site': 4, 'qubit_frequency_hz': 5e9, 'rabi_rate_hz_per_unit_amplitude': 1e7}]}),
            'not an object': ['sim'],
        }
        for label, data in cases.items():
            with self.subTest(label):
                with self.assertRaises(InvalidDescriptor):
                    descriptor_from_dict(data)

    def test_descriptor_errors_are_value_errors(self):
        with self.assertRaises(ValueError):
            descriptor_from_dict(minimal(num_sites=-1))

    def test_unreadable_files(self):
        with self.assertRaises(InvalidDescriptor):
            load_descriptor(self.tmp / "missing.json")
        broken = self.tmp / "broken.json"
        broken.write_text("{ not json", encoding='utf-8')
        with self.assertRaises(InvalidDescriptor):
            load_descriptor(broken)
        wrong_suffix = self.tmp / "device.yaml"
        wrong_suffix.write_text(json.dumps(minimal()), encoding='utf-8')
        with self.assertRaises(InvalidDescriptor) as ctx:
            load_descriptor(wrong_suffix)
        self.assertIn("Unsupported file format", str(ctx.exception))

    def test_descriptor_read_through_import_export(self):
        path = self.tmp / "dev.json"
        path.write_text(json.dumps(minimal()), encoding='utf-8')
        with patch.object(import_export, 'load_device_document', wraps=import_export.load_device_document) as reader:
            dev = load_descriptor(path)
        reader.assert_called_once_with(path)
        self.assertEqual(dev.name, minimal()['name'])

    def test_file_calibrations_layer_over_builtins(self):
        path = self.tmp / "bench.json"
        path.write_text(json.dumps(minimal(calibrations=[{
            'gate': 'rz', 'sites': 'any', 'params': ['theta'],
            'body': [{'op': 'shift_phase', 'frame_role': 'drive', 'delta_rad': '${theta}'}],
        }])), encoding='utf-8')
        dev = load_descriptor(path)
        entry = dev.default_calibrations.lookup('rz', (0,))
        self.assertEqual(entry.body[0].fields['delta_rad'], '${theta}')


class TestQueries(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dev = load_descriptor(SIM)

    def query(self, scope, key):
        return query_descriptor(self.dev, scope, key)

    def test_device_scope(self):
        self.assertEqual(self.query(Scope.device(), 'name'), 'sim')
        self.assertEqual(self.query(Scope.device(), PropertyKey.NUM_SITES), 2)
        self.assertEqual(self.query(Scope.device(), 'pulse_support'), 'port_level')
        self.assertEqual(self.query(Scope.device(), 'supported_formats'), ['pqir_pulse'])

    def test_site_scope(self):
        self.assertEqual(self.query(Scope.site(0), 't1_s'), 1.0e-4)
        self.assertEqual(self.query(Scope.site(1), 't2_s'), 9.0e-5)
        self.assertEqual(self.query(Scope.site(1), 'drive_port'), 'q1_drive')
        self.assertEqual(self.query(Scope.site(0), 'readout_port'), 'q0_readout')
        with self.assertRaises(InvalidScope):
            self.query(Scope.site(2), 't1_s')

    def test_port_scope(self):
        self.assertEqual(self.query(Scope.port('q0_drive'), 'kind'), 'drive')
        self.assertEqual(self.query(Scope.port('q0_drive'), 'granularity_samples'), 8)
        self.assertEqual(self.query(Scope.port('q0_readout'), 'min_duration_samples'), 16)
        self.assertEqual(self.query(Scope.port('q0_readout'), 'frequency_range_hz'), [6.5e9, 7.5e9])
        with self.assertRaises(InvalidScope):
            self.query(Scope.port('q7_drive'), 'kind')

    def test_operation_scope(self):
        self.assertTrue(self.query(Scope.operation('X'), 'has_default_calibration'))
        self.assertEqual(self.query(Scope.operation('x'), 'duration_samples'), 40)
        self.assertEqual(self.query(Scope.operation('measure'), 'duration_samples'), 64)
        self.assertEqual(self.query(Scope.operation('rz'), 'duration_samples'), 0)
        with self.assertRaises(InvalidScope):
            self.query(Scope.operation('cz'), 'has_default_calibration')

    def test_registry_override(self):
        slow = CalibrationEntry('x', None, (), (TemplateInstruction('play', ('drive',), {
            'waveform': {'template': 'constant', 'duration_samples': 80, 'params': {'amp': 0.25, 'phase': 0.0}}}),))
        registry = self.dev.default_calibrations.register(slow)
        self.assertEqual(query_descriptor(self.dev, Scope.operation('x'), 'duration_samples', registry), 80)
        self.assertEqual(self.query(Scope.operation('x'), 'duration_samples'), 40)

    def test_key_not_in_scope(self):
        with self.assertRaises(NotSupported):
            self.query(Scope.device(), 'kind')
        with self.assertRaises(NotSupported):
            self.query(Scope.site(0), 'color')

    def test_unreported_value(self):
        dev = descriptor_from_dict(minimal())
        with self.assertRaises(NotSupported):
            query_descriptor(dev, Scope.site(0), 't1_s')
        with self.assertRaises(NotSupported):
            query_descriptor(dev, Scope.site(0), 'readout_port')

    def test_without_pulse_support(self):
        dev = descriptor_from_dict({'name': 'gates', 'num_sites': 1, 'pulse_support': 'none',
                                    'operations': ['x']})
        self.assertFalse(query_descriptor(dev, Scope.operation('x'), 'has_default_calibration'))
        with self.assertRaises(InvalidScope):
            query_descriptor(dev, Scope.port('q0_drive'), 'kind')
        with self.assertRaises(NotSupported):
            query_descriptor(dev, Scope.site(0), 'drive_port')

    def test_describe(self):
        rows = dict(describe(self.dev))
        self.assertEqual(rows['name'], 'sim')
        self.assertEqual(rows['site(1).drive_port'], 'q1_drive')
        self.assertEqual(rows['port(q1_readout).kind'], 'readout')
        self.assertEqual(rows['operation(sx).duration_samples'], 40)
        self.assertTrue(rows['operation(measure).has_default_calibration'])
        labels = [label for label, _ in describe(self.dev)]
        self.assertEqual(labels, [label for label, _ in describe(self.dev)])
        self.assertLess(labels.index('num_sites'), labels.index('site(0).t1_s'))


if __name__ == '__main__':
    unittest.main()

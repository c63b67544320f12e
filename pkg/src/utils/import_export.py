"""
Import/Export Utilities
=======================

File handling for circuit, calibration and exchange-format documents with
schema validation.
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate, validates_schema

from ..core.errors import InvalidBody, InvalidCircuit
from ..core.lowering import CalibrationEntry, Gate, GateCircuit, TemplateInstruction
from .log import logger

MAX_FILE_SIZE = 50 * 1024 * 1024


class GateSchema(Schema):
    """One gate object of a circuit file."""

    class Meta:
        unknown = RAISE

    gate = fields.String(required=True, validate=validate.Length(min=1))
    site = fields.Integer(validate=validate.Range(min=0))
    sites = fields.List(fields.Integer(validate=validate.Range(min=0)), validate=validate.Length(min=1))
    theta = fields.Float()
    result = fields.Integer(validate=validate.Range(min=0))
    params = fields.Dict(keys=fields.String(), values=fields.Float())

    @validates_schema
    def check_gate(self, data: Dict[str, Any], **kwargs):
        if ('site' in data) == ('sites' in data):
            raise ValidationError("exactly one of 'site' or 'sites' is required")
        name = data['gate'].lower()
        if name == 'rz' and 'theta' not in data:
            raise ValidationError("rz requires 'theta'", 'theta')
        if name == 'measure' and 'result' not in data:
            raise ValidationError("measure requires 'result'", 'result')
        if name != 'measure' and 'result' in data:
            raise ValidationError("only measure writes a result", 'result')

    @post_load
    def make_gate(self, data: Dict[str, Any], **kwargs) -> Gate:
        sites = (data['site'],) if 'site' in data else tuple(data['sites'])
        params = dict(data.get('params', {}))
        if 'theta' in data:
            params['theta'] = data['theta']
        return Gate(data['gate'], sites, params, data.get('result'))


class CircuitSchema(Schema):
    class Meta:
        unknown = RAISE

    num_sites = fields.Integer(validate=validate.Range(min=1))
    gates = fields.List(fields.Nested(GateSchema), required=True)


class SitesField(fields.Field):
    """``"any"`` or a non-empty list of site indices."""

    def _deserialize(self, value, attr, data, **kwargs):
        if value == 'any':
            return None
        if (isinstance(value, list) and value
                and all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in value)):
            return tuple(value)
        raise ValidationError("sites must be \"any\" or a non-empty list of site indices")

    def _serialize(self, value, attr, obj, **kwargs):
        return 'any' if value is None else list(value)


class CalibrationEntrySchema(Schema):
    """One entry of a calibration file."""

    class Meta:
        unknown = RAISE

    gate = fields.String(required=True, validate=validate.Length(min=1))
    sites = SitesField(load_default=None)
    params = fields.List(fields.String(), load_default=list)
    body = fields.List(fields.Dict(keys=fields.String()), required=True)

    @post_load
    def make_entry(self, data: Dict[str, Any], **kwargs) -> CalibrationEntry:
        return CalibrationEntry(
            gate_name=data['gate'],
            sites=data['sites'],
            params=tuple(data['params']),
            body=tuple(TemplateInstruction.from_dict(i) for i in data['body']),
        )


def _messages(error: ValidationError) -> str:
    return json.dumps(error.messages, sort_keys=True)


class ImportExportManager:
    """Validated reading and writing of the toolchain's document files."""

    CIRCUIT_EXTENSIONS = ('.json',)
    CALIBRATION_EXTENSIONS = ('.json',)
    DEVICE_EXTENSIONS = ('.json',)
    PQIR_EXTENSIONS = ('.pqir', '.ll', '.txt')

    def __init__(self, max_file_size: int = MAX_FILE_SIZE):
        self.max_file_size = max_file_size

    def _validate_file(self, file_path: Path, extensions: Iterable[str]) -> bool:
        """Validate file before processing."""
        if not file_path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")

        if file_path.suffix.lower() not in tuple(extensions):
            raise ValueError(f"Unsupported file format: {file_path.suffix}")

        if file_path.stat().st_size > self.max_file_size:
            raise ValueError(f"File too large. Maximum size: {self.max_file_size // (1024*1024)}MB")

        return True

    def _read_json(self, file_path: Path, extensions: Iterable[str]) -> Any:
        self._validate_file(file_path, extensions)
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    # Circuits

    def parse_circuit(self, data: Any, num_sites: Optional[int] = None) -> GateCircuit:
        """Build a circuit from a gate list or a ``{"num_sites", "gates"}`` object."""
        try:
            if isinstance(data, list):
                gates: List[Gate] = GateSchema(many=True).load(data)
            else:
                loaded = CircuitSchema().load(data)
                gates = loaded['gates']
                num_sites = loaded.get('num_sites', num_sites)
        except ValidationError as e:
            raise InvalidCircuit(f"Invalid circuit: {_messages(e)}")
        if num_sites is None:
            num_sites = max((s + 1 for g in gates for s in g.sites), default=1)
        return GateCircuit(num_sites, tuple(gates))

    def load_circuit(self, file_path: Path) -> GateCircuit:
        try:
            data = self._read_json(Path(file_path), self.CIRCUIT_EXTENSIONS)
        except json.JSONDecodeError as e:
            raise InvalidCircuit(f"{file_path}: {e}")
        circuit = self.parse_circuit(data)
        logger.info("Circuit loaded", path=str(file_path), gates=len(circuit.gates))
        return circuit

    # Calibrations

    def parse_calibrations(self, data: Any) -> List[CalibrationEntry]:
        if not isinstance(data, list):
            raise InvalidBody("Calibration document must be a list of entries")
        try:
            return CalibrationEntrySchema(many=True).load(data)
        except ValidationError as e:
            raise InvalidBody(f"Invalid calibration entries: {_messages(e)}")

    def load_calibrations(self, file_path: Path) -> List[CalibrationEntry]:
        try:
            data = self._read_json(Path(file_path), self.CALIBRATION_EXTENSIONS)
        except json.JSONDecodeError as e:
            raise InvalidBody(f"{file_path}: {e}")
        entries = self.parse_calibrations(data)
        logger.info("Calibrations loaded", path=str(file_path), entries=len(entries))
        return entries

    # Device descriptors

    def load_device_document(self, file_path: Path) -> Any:
        """Raw descriptor JSON; schema checks belong to the device layer."""
        return self._read_json(Path(file_path), self.DEVICE_EXTENSIONS)

    # Exchange-format text

    def read_text(self, file_path: Path) -> str:
        file_path = Path(file_path)
        self._validate_file(file_path, self.PQIR_EXTENSIONS)
        return file_path.read_text(encoding='utf-8')

    def write_text(self, file_path: Path, text: str):
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(text, encoding='utf-8')
        logger.audit("export_file", path=str(file_path), size=len(text))


# Global import/export manager
import_export = ImportExportManager()

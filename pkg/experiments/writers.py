"""
Output writers for experiment runs.
CSV floats are printed with 17 significant digits so reruns reproduce the bytes exactly.
"""

import hashlib
import json
import math
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

from spectral.fourier_core import PeriodicField
from utils.field_io import write_field, write_operator_dump
from utils.log_setup import get_logger

logger = get_logger('writers')

FLOAT_FORMAT = '%.17g'


def generate_checksum(data: bytes) -> str:
    """Generate SHA-256 checksum for data."""
    try:
        return hashlib.sha256(data).hexdigest()
    except Exception as e:
        logger.error(f"Failed to generate checksum: {str(e)}")
        return ""


def file_checksum(path: str) -> str:
    with open(path, 'rb') as f:
        return generate_checksum(f.read())


def _jsonable(value: Any) -> Any:
    """Plain JSON values; non-finite floats become the strings 'nan', 'inf', '-inf'."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    if isinstance(value, (np.complexfloating, complex)):
        return [_jsonable(value.real), _jsonable(value.imag)]
    return value


class OutputWriter:
    """Writes the files of one run and remembers their checksums."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.checksums: Dict[str, str] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _record(self, name: str) -> str:
        checksum = file_checksum(self.path(name))
        self.checksums[name] = checksum
        logger.info(f"Wrote {name} (sha256 {checksum[:12]})")
        return checksum

    def csv(self, name: str, frame: pd.DataFrame) -> str:
        frame.to_csv(self.path(name), index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self._record(name)

    def json(self, name: str, payload: Any) -> str:
        with open(self.path(name), 'w', encoding='utf-8') as f:
            json.dump(_jsonable(payload), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        return self._record(name)

    def field(self, name: str, u: PeriodicField) -> str:
        write_field(u, self.path(name))
        return self._record(name)

    def operator(self, name: str, op) -> str:
        write_operator_dump(op, self.path(name))
        return self._record(name)

    def take(self) -> Dict[str, str]:
        """Checksums written since the last call."""
        taken, self.checksums = self.checksums, {}
        return taken

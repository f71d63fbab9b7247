"""
Preset potentials and field sources for experiment configs.
Defaults live in config/presets.json.
"""

import json
import os
from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np

from experiments.config_loader import CONFIG_DIR
from models.config_models import FieldSource
from spectral.dbar_model import dbar_apply
from spectral.errors import BlochSentinelError, ConfigError, UnknownPresetError
from spectral.fourier_core import Lattice, PeriodicField
from utils.field_io import parse_field_literal
from utils.log_setup import get_logger

logger = get_logger('presets')

PRESETS_FILE = os.path.join(CONFIG_DIR, 'presets.json')


@lru_cache(maxsize=1)
def load_presets() -> Dict[str, Dict[str, Any]]:
    with open(PRESETS_FILE, 'r', encoding='utf-8') as f:
        return json.load(f)


def _merged_params(name: str, params: Dict[str, Any]) -> Dict[str, Any]:
    presets = load_presets()
    if name not in presets:
        logger.error(f"Unknown preset: {name}")
        raise UnknownPresetError(f"unknown preset {name!r}; known: {', '.join(sorted(presets))}",
                                 path='preset')
    defaults = presets[name]['params']
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"preset {name!r} does not take {unknown}", path=f"params.{unknown[0]}")
    merged = dict(defaults)
    merged.update(params)
    return merged


def _unit(d: int, axis: int) -> tuple:
    return tuple(1 if i == axis else 0 for i in range(d))


def _mode(value, lattice: Lattice, default_axis: int) -> tuple:
    mode = tuple(int(x) for x in value) if value is not None else _unit(lattice.d, default_axis)
    if not lattice.contains(mode):
        raise ConfigError(f"mode {mode} lies outside the lattice d={lattice.d}, N={lattice.N}",
                          path='params')
    return mode


def _cosine(lattice: Lattice, mode: tuple, amp: float) -> np.ndarray:
    coeffs = np.zeros(lattice.size, dtype=complex)
    coeffs[lattice.index_of(mode)] += amp / 2
    coeffs[lattice.index_of(tuple(-x for x in mode))] += amp / 2
    return coeffs


def _gauss_coeffs(lattice: Lattice, rng: np.random.Generator, w: float, amp: float,
                  real: bool, mean_zero: bool) -> np.ndarray:
    if w <= 0:
        raise ConfigError(f"gauss-decay width w must be positive, got {w}", path='params.w')
    raw = rng.standard_normal(lattice.size) + 1j * rng.standard_normal(lattice.size)
    coeffs = amp * raw * np.exp(-lattice.norms_squared / w)
    if real:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    if mean_zero:
        coeffs[lattice.zero_index] = 0
    return coeffs


def _require_plane(name: str, lattice: Lattice):
    if lattice.d != 2:
        raise ConfigError(f"preset {name!r} needs d=2, got d={lattice.d}", path='lattice.d')


def preset_potential(name: str, params: Optional[Dict[str, Any]], lattice: Lattice,
                     default_seed: int = 0) -> PeriodicField:
    """Build a preset field on the lattice; a missing seed falls back to default_seed."""
    p = _merged_params(name, params or {})
    seed = p.get('seed')
    rng = np.random.default_rng(default_seed if seed is None else int(seed))

    if name == 'cos':
        mode = _mode(p['mode'], lattice, 0)
        return PeriodicField(lattice, _cosine(lattice, mode, float(p['amp'])), real=True, name='cos')
    if name == 'mathieu':
        return PeriodicField(lattice, _cosine(lattice, _unit(lattice.d, 0), 2 * float(p['c'])),
                             real=True, name='mathieu')
    if name == 'gauss-decay':
        if p['rank'] not in ('scalar', 'vector'):
            raise ConfigError(f"gauss-decay rank must be scalar or vector, got {p['rank']!r}",
                              path='params.rank')
        columns = 1 if p['rank'] == 'scalar' else lattice.d
        coeffs = np.stack([_gauss_coeffs(lattice, rng, float(p['w']), float(p['amp']), True,
                                         bool(p['mean_zero'])) for _ in range(columns)], axis=-1)
        if p['rank'] == 'scalar':
            coeffs = coeffs[:, 0]
        return PeriodicField(lattice, coeffs, p['rank'], real=True, mean_zero=bool(p['mean_zero']),
                             name='gauss-decay')
    if name == 'single-mode-A':
        q = _mode(p['q'], lattice, 1 if lattice.d > 1 else 0)
        component = int(p['component'])
        if not 0 <= component < lattice.d:
            raise ConfigError(f"component must lie in [0, {lattice.d})", path='params.component')
        coeffs = np.zeros((lattice.size, lattice.d), dtype=complex)
        coeffs[:, component] = _cosine(lattice, q, float(p['amp']))
        return PeriodicField(lattice, coeffs, 'vector', real=True, name='single-mode-A')
    if name == 'constant':
        value = complex(float(p['value']), float(p['imag']))
        return PeriodicField.constant(lattice, value, name='constant')
    if name == 'manufactured-dbar':
        _require_plane(name, lattice)
        radius = int(p['radius'])
        coeffs = _gauss_coeffs(lattice, rng, float(p['w']), float(p['amp']), False, True)
        coeffs[np.max(np.abs(lattice.modes), axis=1) > radius] = 0
        h = PeriodicField(lattice, coeffs, mean_zero=True, name='h')
        return dbar_apply(h).replace(name='manufactured-dbar')
    if name in ('matrix-diagonal', 'matrix-nilpotent', 'matrix-random'):
        _require_plane(name, lattice)
        q = 2 if name == 'matrix-nilpotent' else int(p['q'])
        coeffs = np.zeros((lattice.size, q, q), dtype=complex)
        for a in range(q):
            for b in range(q):
                wanted = {'matrix-diagonal': a == b, 'matrix-nilpotent': (a, b) == (0, 1),
                          'matrix-random': True}[name]
                if wanted:
                    coeffs[:, a, b] = _gauss_coeffs(lattice, rng, float(p['w']), float(p['amp']),
                                                    False, True)
        return PeriodicField(lattice, coeffs, 'matrix', name=name)
    raise UnknownPresetError(f"preset {name!r} has no builder", path='preset')


def resolve_source(source: FieldSource, lattice: Lattice, default_seed: int = 0,
                   path: str = '') -> PeriodicField:
    """Turn a config field source into a field; errors are reported against the config path."""
    try:
        if source.preset is not None:
            field = preset_potential(source.preset, source.params, lattice, default_seed)
        elif source.literal is not None:
            field = parse_field_literal(source.literal, lattice)
        else:
            with open(source.file, 'r', encoding='utf-8') as f:
                field = parse_field_literal(f.read(), lattice)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}", path=f"{path}.{e.path}" if e.path else path) from e
    except (BlochSentinelError, OSError, ValueError) as e:
        raise ConfigError(f"{path}: {e}", path=path) from e
    changes = {}
    if source.name:
        changes['name'] = source.name
    if source.smoothness is not None:
        changes['smoothness'] = source.smoothness
    return field.replace(**changes) if changes else field

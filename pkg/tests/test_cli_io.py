"""
Tests for config validation, presets, field literals and the command center
"""

import json
import os

import numpy as np
import pandas as pd
import pytest

from cli.command_center import main
from experiments.config_loader import SmoothnessWarning, emit_config, load_config, parse_config
from experiments.presets import preset_potential
from spectral.errors import ConfigError, ShapeError, UnknownPresetError
from spectral.fourier_core import Lattice, PeriodicField, lambda_weights
from spectral.operator_assembly import ComplexQuasimomentum, assemble, symbol_table
from utils.field_io import format_field_literal, format_operator_dump, parse_field_literal, \
    parse_operator_dump

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLES_DIR = os.path.join(PROJECT_ROOT, 'config', 'experiments')

MINIMAL_BANDS = {
    "experiment": "bands",
    "lattice": {"d": 1, "N": 8},
    "V": {"preset": "cos"},
    "quasimomentum": {"k_points": 33},
}

SMALL_THOMAS = {
    "experiment": "thomas",
    "lattice": {"d": 2, "N": 6},
    "quasimomentum": {"e": [1.0, 0.0], "beta": 0.5, "rho": [5.0, 10.0]},
    "thomas": {"estimate_samples": 4},
    "cover": {"delta": 0.5},
    "seed": 0,
}


def write_config(tmp_path, payload, name='config.json'):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


class TestConfigParsing:
    """Test strict experiment config validation."""

    def test_minimal_bands(self):
        """Test a minimal bands config fills in defaults."""
        config = parse_config(json.dumps(MINIMAL_BANDS))
        assert config.experiment.value == 'bands'
        assert config.lattice.d == 1 and config.lattice.N == 8
        assert config.V.preset == 'cos'
        assert config.quasimomentum.k_points == 33
        assert config.bands.count == 5

    def test_unknown_key_names_path(self):
        """Test an unknown key is rejected with its dotted path."""
        bad = dict(MINIMAL_BANDS, rho_lost=[1.0])
        with pytest.raises(ConfigError, match='rho_lost') as info:
            parse_config(bad)
        assert info.value.path == 'rho_lost'

    def test_nested_unknown_key(self):
        """Test nested typos report the section."""
        bad = dict(MINIMAL_BANDS, quasimomentum={"k_point": 3})
        with pytest.raises(ConfigError) as info:
            parse_config(bad)
        assert info.value.path == 'quasimomentum.k_point'

    def test_smoothness_warning(self):
        """Test s <= 3d/2 - 1 warns but still parses."""
        payload = dict(SMALL_THOMAS, A={"preset": "single-mode-A", "smoothness": 1.0})
        with pytest.warns(SmoothnessWarning):
            config = parse_config(payload)
        assert config.A.smoothness == 1.0

    def test_non_unit_direction(self):
        """Test |e| != 1 is rejected."""
        bad = dict(SMALL_THOMAS, quasimomentum={"e": [1.0, 1.0], "rho": [5.0]})
        with pytest.raises(ConfigError):
            parse_config(bad)

    @pytest.mark.parametrize("delta", [0.0, 1.0, 1.2])
    def test_delta_outside_unit_interval(self, delta):
        """Test δ must lie in (0, 1)."""
        with pytest.raises(ConfigError) as info:
            parse_config(dict(SMALL_THOMAS, cover={"delta": delta}))
        assert info.value.path == 'cover.delta'

    def test_thomas_needs_rho(self):
        """Test a thomas run without heights is rejected."""
        with pytest.raises(ConfigError):
            parse_config(dict(SMALL_THOMAS, quasimomentum={"e": [1.0, 0.0]}))

    def test_field_source_needs_one_origin(self):
        """Test preset and literal together are rejected."""
        bad = dict(MINIMAL_BANDS, V={"preset": "cos", "literal": "0 1 0"})
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_emit_then_parse(self):
        """Test an emitted config parses back to an equal config."""
        config = parse_config(SMALL_THOMAS)
        assert parse_config(emit_config(config)) == config

    def test_load_with_overrides(self, tmp_path):
        """Test top-level overrides land before validation."""
        path = write_config(tmp_path, SMALL_THOMAS)
        assert load_config(path, {'seed': 9, 'workers': 2}).seed == 9

    def test_malformed_json(self):
        """Test invalid JSON is a config error."""
        with pytest.raises(ConfigError):
            parse_config('{"experiment": ')

    @pytest.mark.parametrize("name", sorted(os.listdir(EXAMPLES_DIR)))
    def test_shipped_examples_parse(self, name):
        """Test every shipped experiment file validates."""
        assert load_config(os.path.join(EXAMPLES_DIR, name)).experiment is not None


class TestPresets:
    """Test preset potentials."""

    def test_cos(self):
        """Test cos gives 1/2 at ±e_1."""
        field = preset_potential('cos', {}, Lattice(1, 4))
        assert field.coefficient((1,)) == 0.5
        assert field.coefficient((-1,)) == 0.5
        assert field.real

    def test_mathieu(self):
        """Test mathieu with c=1 gives 1 at ±e_1."""
        field = preset_potential('mathieu', {'c': 1.0}, Lattice(1, 4))
        assert field.coefficient((1,)) == 1.0
        assert field.coefficient((-1,)) == 1.0

    def test_gauss_decay_is_seeded(self):
        """Test the same seed gives identical coefficients."""
        lattice = Lattice(2, 4)
        first = preset_potential('gauss-decay', {'seed': 7}, lattice)
        second = preset_potential('gauss-decay', {'seed': 7}, lattice)
        np.testing.assert_array_equal(first.coeffs, second.coeffs)
        third = preset_potential('gauss-decay', {'seed': 8}, lattice)
        assert not np.array_equal(first.coeffs, third.coeffs)

    def test_default_seed_used(self):
        """Test a missing preset seed falls back to the run seed."""
        lattice = Lattice(2, 4)
        a = preset_potential('gauss-decay', {}, lattice, default_seed=3)
        b = preset_potential('gauss-decay', {'seed': 3}, lattice)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_unknown_preset(self):
        """Test an unknown preset name is rejected."""
        with pytest.raises(UnknownPresetError):
            preset_potential('sawtooth', {}, Lattice(1, 2))

    def test_unknown_parameter(self):
        """Test an unknown parameter names its path."""
        with pytest.raises(ConfigError) as info:
            preset_potential('cos', {'ampl': 2.0}, Lattice(1, 2))
        assert info.value.path == 'params.ampl'

    def test_plane_only_presets(self):
        """Test ∂̄ presets need d=2."""
        with pytest.raises(ConfigError):
            preset_potential('manufactured-dbar', {}, Lattice(3, 2))


class TestFieldLiterals:
    """Test the text codecs."""

    def test_parse_literal(self):
        """Test header flags and coefficients are read."""
        text = "# rank=scalar real=true s=2.5 name=V\n1 0.5 0\n-1 0.5 0\n"
        field = parse_field_literal(text, Lattice(1, 3))
        assert field.real and field.smoothness == 2.5 and field.name == 'V'
        assert field.coefficient((1,)) == 0.5

    def test_literal_outside_lattice(self):
        """Test a mode outside the box is a shape error."""
        with pytest.raises(ShapeError):
            parse_field_literal("5 1 0\n", Lattice(1, 2))

    def test_format_then_parse(self, rng):
        """Test emitted literals read back exactly."""
        lattice = Lattice(2, 2)
        coeffs = rng.standard_normal((lattice.size, 2)) + 1j * rng.standard_normal((lattice.size, 2))
        field = PeriodicField(lattice, coeffs, 'vector', name='A')
        back = parse_field_literal(format_field_literal(field), lattice)
        np.testing.assert_array_equal(back.coeffs, field.coeffs)
        assert back.rank == 'vector'

    def test_operator_dump(self):
        """Test the dump lists nonzero entries that parse back to the matrix."""
        lattice = Lattice(1, 3)
        V = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0}, real=True)
        op = assemble(None, V, ComplexQuasimomentum((1.0,), 0.5, 2.0), lattice)
        header, matrix = parse_operator_dump(format_operator_dump(op))
        np.testing.assert_array_equal(matrix, op.matrix)
        assert header['N'] == '3'


class TestCommandCenter:
    """Test end-to-end runs through the CLI entry point."""

    def test_thomas_run(self, tmp_path):
        """Test σ_min_H in the CSV matches the diagonal brute force."""
        config = write_config(tmp_path, SMALL_THOMAS)
        out = tmp_path / 'run'
        assert main(['thomas', '--config', config, '--out', str(out)]) == 0
        frame = pd.read_csv(out / 'thomas_scan.csv')
        lattice = Lattice(2, 6)
        for rho, sigma, pre in zip(frame['rho'], frame['sigma_min_H'], frame['sigma_min_precond']):
            values = np.abs(symbol_table(ComplexQuasimomentum((1.0, 0.0), 0.5, rho), lattice.modes))
            assert sigma == pytest.approx(values.min(), rel=1e-9)
            assert pre == pytest.approx((values / lambda_weights(lattice, rho)).min(), rel=1e-9)
        assert (frame['T_rho_norm'] <= 1e-8).all()
        manifest = read_json(out / 'manifest.json')
        assert manifest['exit_status'] == 0
        assert [s['stage'] for s in manifest['stages']] == ['prepare', 'scan', 'estimate_check',
                                                           'relative_bound']
        assert 'thomas_scan.csv' in manifest['stages'][1]['outputs']

    def test_rerun_is_byte_identical(self, tmp_path):
        """Test rerunning a manifest reproduces every CSV byte for byte."""
        config = write_config(tmp_path, SMALL_THOMAS)
        out = tmp_path / 'run'
        assert main(['thomas', '--config', config, '--out', str(out)]) == 0
        assert main(['rerun', '--manifest', str(out / 'manifest.json')]) == 0
        for name in ('thomas_scan.csv', 'estimate_check.json', 'thomas_summary.json'):
            assert (out / name).read_bytes() == (out / 'rerun' / name).read_bytes()

    def test_obstructed_gauge_succeeds(self, tmp_path):
        """Test an obstructed gauge is a result, not a failure."""
        config = os.path.join(EXAMPLES_DIR, 'gauge_constant.json')
        out = tmp_path / 'gauge'
        assert main(['gauge', '--config', config, '--out', str(out)]) == 0
        report = read_json(out / 'gauge_report.json')
        assert report['verdict'] == 'obstructed'
        assert report['obstruction'] == [0.75, 0.0]

    def test_bands_run(self, tmp_path):
        """Test the Mathieu example writes its table and flat-band report."""
        config = os.path.join(EXAMPLES_DIR, 'bands_mathieu.json')
        out = tmp_path / 'bands'
        assert main(['bands', '--config', config, '--out', str(out), '--workers', '2']) == 0
        assert len(pd.read_csv(out / 'bands.csv')) == 65 * 5
        assert read_json(out / 'flat_bands.json')['flagged'] == []
        assert read_json(out / 'gauge_check.json')['max_abs_difference'] <= 1e-8

    def test_cover_run(self, tmp_path):
        """Test one cover row per ρ and a per-patch table."""
        payload = dict(SMALL_THOMAS, experiment='cover')
        config = write_config(tmp_path, payload)
        out = tmp_path / 'cover'
        assert main(['cover', '--config', config, '--out', str(out)]) == 0
        frame = pd.read_csv(out / 'cover.csv')
        assert list(frame['rho']) == [5.0, 10.0]
        assert (frame['T_rho_norm'] <= 1e-8).all()
        patches = pd.read_csv(out / 'cover_patches.csv')
        assert set(patches['classification']) <= {'near', 'far'}

    def test_matrix_gauge_run(self, tmp_path):
        """Test the nilpotent example converges and traces its iterations."""
        config = os.path.join(EXAMPLES_DIR, 'matrix_gauge_nilpotent.json')
        out = tmp_path / 'matrix'
        assert main(['matrix-gauge', '--config', config, '--out', str(out)]) == 0
        assert read_json(out / 'matrix_gauge_report.json')['verdict'] == 'converged'
        trace = pd.read_csv(out / 'matrix_gauge_trace.csv')
        assert list(trace.columns) == ['iteration', 'update', 'obstruction']
        assert trace['update'].iloc[-1] <= 1e-12

    def test_budget_exit_code(self, tmp_path, monkeypatch):
        """Test an oversized lattice exits 4 and records the failed stage."""
        monkeypatch.setenv('BLOCH_MEMORY_BUDGET_MB', '0.001')
        config = write_config(tmp_path, SMALL_THOMAS)
        out = tmp_path / 'run'
        assert main(['thomas', '--config', config, '--out', str(out)]) == 4
        manifest = read_json(out / 'manifest.json')
        assert manifest['exit_status'] == 4
        assert manifest['stages'][-1]['status'] == 'error'
        assert 'SizeError' in manifest['stages'][-1]['error']

    def test_subcommand_mismatch(self, tmp_path):
        """Test a config for another experiment exits 2."""
        config = os.path.join(EXAMPLES_DIR, 'gauge_constant.json')
        assert main(['thomas', '--config', config, '--out', str(tmp_path)]) == 2

    def test_missing_config(self, tmp_path):
        """Test a missing file exits 2."""
        assert main(['bands', '--config', str(tmp_path / 'nope.json')]) == 2

    def test_seed_override(self, tmp_path):
        """Test --seed replaces the configured seed in the manifest echo."""
        config = os.path.join(EXAMPLES_DIR, 'gauge_constant.json')
        out = tmp_path / 'gauge'
        assert main(['gauge', '--config', config, '--out', str(out), '--seed', '3']) == 0
        assert read_json(out / 'manifest.json')['config']['seed'] == 3

    def test_presets_listing(self, capsys):
        """Test the presets subcommand prints every preset."""
        assert main(['presets']) == 0
        printed = capsys.readouterr().out
        assert 'mathieu' in printed and 'manufactured-dbar' in printed

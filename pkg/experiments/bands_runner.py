"""
Bands experiment: band table over the Brillouin grid, flat-band report and
an optional gauge-invariance rerun.
"""

import numpy as np

from experiments.context import RunContext
from experiments.presets import resolve_source
from experiments.writers import OutputWriter
from spectral.bloch_analysis import brillouin_grid, compute_bands, detect_flat_bands
from spectral.operator_assembly import gauge_shift
from utils.log_setup import get_logger

logger = get_logger('bands_runner')


def run_bands(ctx: RunContext, out: OutputWriter) -> None:
    config = ctx.config
    grid = brillouin_grid(ctx.lattice.d, config.quasimomentum.k_points)
    table = compute_bands(ctx.A, ctx.V, ctx.lattice, grid, config.bands.count, ctx.workers)
    ctx.state['bands'] = table
    out.csv('bands.csv', table.to_frame())


def run_flat_bands(ctx: RunContext, out: OutputWriter) -> None:
    section = ctx.config.bands
    table = ctx.state['bands']
    report = detect_flat_bands(table, section.flat_tol, section.relative_tol)
    payload = report.to_dict()
    payload['hermitian_residual'] = table.hermitian_residual
    payload['band_count'] = table.band_count
    payload['k_points'] = int(len(table.k_grid))
    out.json('flat_bands.json', payload)


def run_gauge_check(ctx: RunContext, out: OutputWriter) -> None:
    """Bands for A + ∇χ compared against the stored table."""
    source = ctx.config.bands.gauge_chi
    if source is None:
        logger.info("No gauge_chi configured, skipping gauge check")
        return
    chi = resolve_source(source, ctx.lattice, ctx.seed, 'bands.gauge_chi')
    shifted = gauge_shift(ctx.A, chi)
    table = ctx.state['bands']
    other = compute_bands(shifted, ctx.V, ctx.lattice, table.k_grid, table.band_count, ctx.workers)
    difference = float(np.max(np.abs(other.eigenvalues - table.eigenvalues)))
    logger.info(f"Gauge check with chi={chi.name or '<anon>'}: max |Δλ| = {difference:.3e}")
    out.json('gauge_check.json', {'chi': chi.name, 'max_abs_difference': difference,
                                  'band_count': table.band_count})


STAGES = [
    ("bands", run_bands),
    ("flat_bands", run_flat_bands),
    ("gauge_check", run_gauge_check),
]

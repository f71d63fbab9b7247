"""
Thomas experiment: σ_min scan along k = 2π(β + iρ)e with the parametrix
residual per ρ, a sampled check of the full lower bound, and the optional
relative-bound estimate for V.
"""

import dataclasses

from experiments.context import RunContext
from experiments.writers import OutputWriter
from spectral.fourier_core import PeriodicField
from spectral.operator_assembly import ComplexQuasimomentum, estimate_relative_bound
from spectral.thomas_engine import estimate_check, parametrix_run, thomas_scan
from utils.log_setup import get_logger

logger = get_logger('thomas_runner')


def run_scan(ctx: RunContext, out: OutputWriter) -> None:
    config = ctx.config
    qm = config.quasimomentum
    scan = thomas_scan(ctx.A, ctx.V, ctx.direction, qm.beta, qm.rho, ctx.lattice,
                       config.thomas.sigma_floor, ctx.workers, config.thomas.method)
    t_norms = []
    for rho in scan.rhos:
        k = ComplexQuasimomentum(ctx.direction, qm.beta, rho)
        _, report = parametrix_run(ctx.A, ctx.V, k, ctx.lattice, config.cover.delta,
                                   config.cover.thickness, config.cover.near_mode.value,
                                   config.cover.neumann_order, ctx.workers)
        t_norms.append(report.t_norm)
    scan = dataclasses.replace(scan, t_norms=tuple(t_norms))
    ctx.state['scan'] = scan
    out.csv('thomas_scan.csv', scan.to_frame())
    out.json('thomas_summary.json', {'e': list(scan.e), 'beta': scan.beta, 'fitted_C': scan.fitted_c,
                                     'floor': scan.floor, 'flagged_rho': list(scan.flagged),
                                     'methods': list(scan.methods)})


def run_estimate_check(ctx: RunContext, out: OutputWriter) -> None:
    section = ctx.config.thomas
    if section.estimate_samples == 0:
        logger.info("estimate_samples is 0, skipping estimate check")
        return
    scan = ctx.state['scan']
    rho = scan.rhos[-1]
    constant = section.estimate_fraction * scan.fitted_c
    k = ComplexQuasimomentum(ctx.direction, scan.beta, rho)
    check = estimate_check(ctx.A, ctx.V, k, ctx.lattice, constant, section.estimate_samples, ctx.seed)
    if not check.holds:
        logger.warning(f"Lower bound with C={constant:.4g} fails at ρ={rho}: min ratio {check.min_ratio:.4g}")
    out.json('estimate_check.json', dataclasses.asdict(check))


def run_relative_bound(ctx: RunContext, out: OutputWriter) -> None:
    section = ctx.config.thomas.relative_bound
    if section is None:
        return
    V = ctx.V if ctx.V is not None else PeriodicField.zeros(ctx.lattice, name='0')
    report = estimate_relative_bound(V, section.eps, section.trials, ctx.seed)
    out.json('relative_bound.json', dataclasses.asdict(report))


STAGES = [
    ("scan", run_scan),
    ("estimate_check", run_estimate_check),
    ("relative_bound", run_relative_bound),
]

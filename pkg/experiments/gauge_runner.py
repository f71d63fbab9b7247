"""
Gauge experiments for the model ∂̄ problem: scalar (with optional mode split
and plane reduction when d > 2) and the experimental matrix iteration.
"""

import pandas as pd

from experiments.context import RunContext
from experiments.presets import resolve_source
from experiments.writers import OutputWriter
from spectral.dbar_model import (
    gauge_matrix,
    gauge_scalar,
    restrict_to_plane,
    select_plane,
    split_and_gauge,
)
from spectral.errors import ShapeError
from utils.log_setup import get_logger

logger = get_logger('gauge_runner')

DEFAULT_PLANE_BOUND = 2


def run_gauge(ctx: RunContext, out: OutputWriter) -> None:
    section = ctx.config.gauge
    g = resolve_source(section.g, ctx.lattice, ctx.seed, 'gauge.g')
    if g.rank != 'scalar':
        raise ShapeError(f"gauge experiments take a scalar g, got {g.rank}; use matrix-gauge")
    payload = {}
    if ctx.lattice.d > 2:
        # the plane is chosen against A when one is configured, else against g itself
        reference = ctx.A if ctx.A is not None else g
        plane = select_plane(reference, section.plane_bound or DEFAULT_PLANE_BOUND)
        logger.info(f"Restricting g to plane l={plane.l}, n={plane.n}")
        g = restrict_to_plane(g, plane)
        payload['plane'] = plane.to_dict()
    elif ctx.lattice.d < 2:
        raise ShapeError(f"the ∂̄ model needs d >= 2, got d={ctx.lattice.d}")

    if section.split_M is not None:
        split = split_and_gauge(g, section.split_M, section.tol)
        result = split.result
        payload.update(split.to_dict())
        payload['split_M'] = section.split_M
        out.field('remainder.field', split.remainder)
    else:
        result = gauge_scalar(g, section.tol)
        payload.update(result.to_dict())
    payload['g'] = g.name
    out.json('gauge_report.json', payload)
    out.field('g.field', g)
    if result.f is not None:
        out.field('f.field', result.f)
    if result.h is not None:
        out.field('h.field', result.h)


def run_matrix_gauge(ctx: RunContext, out: OutputWriter) -> None:
    section = ctx.config.matrix_gauge
    G = resolve_source(section.G, ctx.lattice, ctx.seed, 'matrix_gauge.G')
    result = gauge_matrix(G, section.maxiter, section.tol, section.damping, section.obstruction_tol)
    payload = result.to_dict()
    trace = payload.pop('iterations')
    payload['G'] = G.name
    payload['q'] = G.q
    out.json('matrix_gauge_report.json', payload)
    out.csv('matrix_gauge_trace.csv', pd.DataFrame(trace, columns=['iteration', 'update', 'obstruction']))
    out.field('G.field', G)
    if result.f is not None:
        out.field('f.field', result.f)


GAUGE_STAGES = [
    ("gauge", run_gauge),
]

MATRIX_GAUGE_STAGES = [
    ("matrix_gauge", run_matrix_gauge),
]

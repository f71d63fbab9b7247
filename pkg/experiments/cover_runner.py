"""
Cover experiment: zero set, dual cover and parametrix for every ρ in the family.
"""

import pandas as pd

from experiments.context import RunContext
from experiments.writers import OutputWriter
from spectral.operator_assembly import ComplexQuasimomentum
from spectral.thomas_engine import parametrix_run
from utils.log_setup import get_logger

logger = get_logger('cover_runner')


def run_cover(ctx: RunContext, out: OutputWriter) -> None:
    config = ctx.config
    section = config.cover
    rows, patch_frames = [], []
    for rho in config.quasimomentum.rho:
        k = ComplexQuasimomentum(ctx.direction, config.quasimomentum.beta, rho)
        cover, report = parametrix_run(ctx.A, ctx.V, k, ctx.lattice, section.delta, section.thickness,
                                       section.near_mode.value, section.neumann_order, ctx.workers)
        rows.append({'rho': rho, 'side': cover.side, 'widen': cover.widen,
                     'patches': len(cover.patches), 'near_patches': len(cover.near_patches()),
                     'multiplicity': report.multiplicity,
                     'max_R_local_norm': max(report.local_norms),
                     'max_T_local_norm': max(report.local_residuals),
                     'R_rho_norm': report.r_norm, 'T_rho_norm': report.t_norm})
        frame = report.to_frame()
        frame.insert(3, 'classification', [p.classification for p in cover.patches])
        frame.insert(4, 'center', [' '.join(str(x) for x in p.center) for p in cover.patches])
        patch_frames.append(frame)
    out.csv('cover.csv', pd.DataFrame(rows))
    out.csv('cover_patches.csv', pd.concat(patch_frames, ignore_index=True))


STAGES = [
    ("cover", run_cover),
]

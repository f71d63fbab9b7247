"""
Experiment pipelines: one stage list per experiment kind, run in order by a
single orchestration thread. The manifest is written after every other file.
"""

import time
from typing import Callable, Dict, List, Tuple

import numpy as np

from experiments import bands_runner, cover_runner, gauge_runner, thomas_runner
from experiments.context import RunContext
from experiments.presets import resolve_source
from experiments.writers import OutputWriter
from models.config_models import ExperimentConfig, ExperimentKind
from models.report_models import RunManifest, StageRecord
from spectral import __version__
from spectral.errors import BlochSentinelError, ConfigError
from spectral.fourier_core import build_lattice
from spectral.operator_assembly import ComplexQuasimomentum, assemble
from utils.log_setup import get_logger

logger = get_logger('pipeline')

MANIFEST_NAME = 'manifest.json'

Stage = Tuple[str, Callable[[RunContext, OutputWriter], None]]


def prepare(ctx: RunContext, out: OutputWriter) -> None:
    """Lattice, potentials and the optional operator dump."""
    config = ctx.config
    ctx.lattice = build_lattice(config.lattice.d, config.lattice.N)
    if config.A is not None:
        ctx.A = resolve_source(config.A, ctx.lattice, config.seed, 'A')
        if ctx.A.rank != 'vector':
            raise ConfigError(f"A must be a vector field, got {ctx.A.rank}", path='A')
        out.field('A.field', ctx.A)
    if config.V is not None:
        ctx.V = resolve_source(config.V, ctx.lattice, config.seed, 'V')
        if ctx.V.rank != 'scalar':
            raise ConfigError(f"V must be a scalar field, got {ctx.V.rank}", path='V')
        out.field('V.field', ctx.V)
    if config.output.dump_operator:
        qm = config.quasimomentum
        if qm.rho:
            k = ComplexQuasimomentum(ctx.direction, qm.beta, qm.rho[0])
        else:
            k = 2 * np.pi * qm.beta * np.asarray(ctx.direction)
        out.operator('operator.dump', assemble(ctx.A, ctx.V, k, ctx.lattice))


PIPELINES: Dict[ExperimentKind, List[Stage]] = {
    ExperimentKind.BANDS: bands_runner.STAGES,
    ExperimentKind.THOMAS: thomas_runner.STAGES,
    ExperimentKind.COVER: cover_runner.STAGES,
    ExperimentKind.GAUGE: gauge_runner.GAUGE_STAGES,
    ExperimentKind.MATRIX_GAUGE: gauge_runner.MATRIX_GAUGE_STAGES,
}


def run(config: ExperimentConfig, out_dir: str) -> RunManifest:
    """Run every stage of the configured experiment and write the manifest last.

    A failing stage stops the pipeline; its error and exit code land in the manifest.
    """
    started = time.perf_counter()
    ctx = RunContext(config)
    out = OutputWriter(out_dir)
    stages: List[Stage] = [("prepare", prepare)] + PIPELINES[config.experiment]
    records: List[StageRecord] = []
    exit_status = 0
    logger.info(f"Starting {config.experiment.value} run into {out_dir} (seed {config.seed})")

    for name, stage in stages:
        logger.info(f"Running stage {name}")
        try:
            stage(ctx, out)
        except BlochSentinelError as e:
            exit_status = e.exit_code
            logger.error(f"Stage {name} failed ({type(e).__name__}): {e}")
            records.append(StageRecord(stage=name, status='error', outputs=out.take(),
                                       error=f"{name}: {type(e).__name__}: {e}"))
            break
        except Exception as e:
            exit_status = 1
            logger.exception(f"Stage {name} crashed: {e}")
            records.append(StageRecord(stage=name, status='error', outputs=out.take(),
                                       error=f"{name}: {type(e).__name__}: {e}"))
            break
        records.append(StageRecord(stage=name, outputs=out.take()))

    manifest = RunManifest(config=config.model_dump(mode='json'), version=__version__,
                           wall_time=time.perf_counter() - started, stages=records,
                           exit_status=exit_status)
    out.json(MANIFEST_NAME, manifest.model_dump(mode='json'))
    logger.info(f"Finished {config.experiment.value} run with exit status {exit_status} "
                f"in {manifest.wall_time:.2f}s")
    return manifest

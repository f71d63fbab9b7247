import os
import sys
import json
import argparse
from typing import Dict, List, Optional, Tuple

# Get the absolute path to the project root directory
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(SCRIPT_DIR)  # Go up one level from cli/ to project root
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from experiments.config_loader import load_config, parse_config
from experiments.pipeline import MANIFEST_NAME, run
from experiments.presets import load_presets
from spectral.errors import BlochSentinelError, ConfigError
from utils.log_setup import attach_console, get_logger

# Logging setup for Command Center
USER_ID = 'command_center_user'
logger = get_logger('command_center', USER_ID)

# Experiment subcommands and what they run
EXPERIMENTS: List[Tuple[str, str]] = [
    ("bands", "Band structure over the Brillouin zone + flat-band report"),
    ("thomas", "σ_min scan along a complex quasimomentum family + parametrix residual"),
    ("cover", "Dual-space cover and parametrix per ρ"),
    ("gauge", "Scalar ∂̄ gauge for the model Cauchy-Riemann problem"),
    ("matrix-gauge", "Experimental matrix ∂̄ gauge iteration"),
]

DEFAULT_OUT_ROOT = os.path.join(PROJECT_ROOT, 'runs')


def resolve_out_dir(kind: str, out: Optional[str], configured: Optional[str]) -> str:
    """--out wins over output.dir; otherwise runs/<experiment>."""
    return out or configured or os.path.join(DEFAULT_OUT_ROOT, kind)


def run_experiment(kind: str, config_path: str, out: Optional[str] = None, seed: Optional[int] = None,
                   workers: Optional[int] = None) -> int:
    """Load, validate and run one experiment; return the process exit status."""
    overrides: Dict[str, int] = {}
    if seed is not None:
        overrides['seed'] = seed
    if workers is not None:
        overrides['workers'] = workers
    config = load_config(config_path, overrides)
    if config.experiment.value != kind:
        raise ConfigError(f"experiment: config describes {config.experiment.value!r}, "
                          f"subcommand is {kind!r}", path='experiment')
    out_dir = resolve_out_dir(kind, out, config.output.dir)
    logger.info(f"Running {kind} from {config_path} into {out_dir}")
    print(f"Running {kind} experiment -> {out_dir}")
    manifest = run(config, out_dir)
    report_manifest(manifest)
    return manifest.exit_status


def rerun(manifest_path: str, out: Optional[str] = None) -> int:
    """Run again from the config echo of an emitted manifest."""
    if not os.path.exists(manifest_path):
        logger.error(f"Manifest not found: {manifest_path}")
        raise ConfigError(f"manifest not found: {manifest_path}")
    with open(manifest_path, 'r', encoding='utf-8') as f:
        try:
            recorded = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"manifest is not valid JSON: {e}") from e
    if 'config' not in recorded:
        raise ConfigError("manifest has no config echo", path='config')
    config = parse_config(recorded['config'])
    kind = config.experiment.value
    out_dir = resolve_out_dir(kind, out, os.path.join(os.path.dirname(os.path.abspath(manifest_path)), 'rerun'))
    logger.info(f"Rerunning {kind} from manifest {manifest_path} into {out_dir}")
    print(f"Rerunning {kind} experiment -> {out_dir}")
    manifest = run(config, out_dir)
    report_manifest(manifest)
    return manifest.exit_status


def report_manifest(manifest) -> None:
    for stage in manifest.stages:
        print(f"  [{stage.status.upper()}] {stage.stage}")
        for name, checksum in stage.outputs.items():
            print(f"      {name}  sha256:{checksum[:16]}")
        if stage.error:
            print(f"      Error: {stage.error}")
    print(f"Wall time: {manifest.wall_time:.2f}s | Exit status: {manifest.exit_status}")


def list_presets() -> None:
    """List preset potentials with their default parameters."""
    print("Available Presets:")
    for name, preset in load_presets().items():
        print(f"  {name}: {preset['description']}")
        print(f"      defaults: {json.dumps(preset['params'])}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='command_center',
        description="Command Center CLI for Bloch Sentinel",
        epilog="Example: python cli/command_center.py thomas --config config/experiments/thomas_free.json --out runs/free")
    sub = parser.add_subparsers(dest='command', required=True)
    for kind, help_text in EXPERIMENTS:
        p = sub.add_parser(kind, help=help_text)
        p.add_argument('--config', required=True, help="Experiment JSON file")
        p.add_argument('--out', help="Output directory (overrides output.dir)")
        p.add_argument('--seed', type=int, help="Override the config seed")
        p.add_argument('--workers', type=int, help="Override the worker count")
    p = sub.add_parser('rerun', help="Rerun the config echoed in a manifest")
    p.add_argument('--manifest', required=True, help=f"Path to a {MANIFEST_NAME}")
    p.add_argument('--out', help="Output directory (default: <manifest dir>/rerun)")
    sub.add_parser('presets', help="List preset potentials")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function for Command Center CLI."""
    attach_console(logger, USER_ID)
    args = build_parser().parse_args(argv)
    try:
        if args.command == 'presets':
            list_presets()
            return 0
        if args.command == 'rerun':
            return rerun(args.manifest, args.out)
        return run_experiment(args.command, args.config, args.out, args.seed, args.workers)
    except BlochSentinelError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"Error: {str(e)}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"{args.command} crashed: {str(e)}")
        print(f"Error: {str(e)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

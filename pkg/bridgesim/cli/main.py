"""
bridgesim <subcommand> --config <file> --out <dir> [--seed <u64>] [--threads <n>]
"""
import sys
import time
from datetime import datetime, timezone

import click

import bridgesim
from bridgesim.cli.artifacts import RunArtifacts, version_string
from bridgesim.cli.config import load_config
from bridgesim.cli.pipelines import PIPELINES, RunContext, run_pipeline
from bridgesim.core import config
from bridgesim.core.errors import BridgeSimError, ConfigError
from bridgesim.core.logger import get_logger

logger = get_logger("bridgesim", config.LOG_LEVEL)

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def run_experiment(command: str, config_path: str, out_dir: str, seed=None, threads=None) -> int:
    """Run one pipeline and write its manifest. Returns the process exit code."""
    started = time.perf_counter()
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        click.echo(str(e), err=True)
        return EXIT_USAGE

    seed = cfg.seed if seed is None else seed
    artifacts = RunArtifacts(out_dir)
    manifest = {
        "command": command,
        "config": dict(cfg.echo(), seed=seed),
        "seed": seed,
        "version": version_string(),
        "started_at": datetime.now(timezone.utc).isoformat(),
    }
    code = 0
    try:
        threads = manifest["threads"] = config.resolve_threads(threads if threads is not None else cfg.threads)
        summary = run_pipeline(RunContext(command, cfg, seed, threads, artifacts))
        if summary.get("passed") is False:
            manifest["status"] = "checks_failed"
            code = EXIT_RUNTIME
        else:
            manifest["status"] = "ok"
    except ConfigError as e:
        logger.error(f"Config error in {command}: {e}")
        manifest.update(status="error", error={"type": type(e).__name__, "message": str(e)})
        code = EXIT_USAGE
    except BridgeSimError as e:
        logger.error(f"{command} failed: {e}", exc_info=True)
        manifest.update(status="error", error={"type": type(e).__name__, "message": str(e)})
        code = EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"{command} crashed: {e}")
        manifest.update(status="error", error={"type": type(e).__name__, "message": str(e)})
        code = EXIT_RUNTIME
    manifest["wall_time_s"] = time.perf_counter() - started
    artifacts.write_manifest(manifest)
    return code


@click.group()
@click.version_option(version=bridgesim.__version__, prog_name="bridgesim")
def cli():
    """Diffusion bridge simulation with guided proposals."""


def _register(name: str):
    @cli.command(name=name, help=(PIPELINES[name].__doc__ or f"Run the {name} pipeline.").strip())
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
    @click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None)
    @click.option("--threads", type=click.IntRange(1), default=None)
    def command(config_path, out_dir, seed, threads):
        sys.exit(run_experiment(name, config_path, out_dir, seed, threads))


for _name in PIPELINES:
    _register(_name)


def main():
    cli()


if __name__ == "__main__":
    main()

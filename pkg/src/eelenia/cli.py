"""Command line entry points: run, resume, analyze, export, render."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import analysis, engine, plots
from .archive import Archive
from .config import ConfigError, RunConfig
from .embedding import image_to_png_bytes
from .genome import Genome
from .simulator import image_to_uint8, save_raw_state, simulate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="eelenia", description="Explore Flow Lenia behaviors")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="start a new run")
    p_run.add_argument("--config", type=Path, default=None, help="TOML config file")
    p_run.add_argument("--out", type=Path, required=True, help="run directory")
    p_run.add_argument("--mode", choices=("ee", "ns", "random_ga", "random_params"))
    p_run.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )

    p_resume = sub.add_parser("resume", help="continue a checkpointed run")
    p_resume.add_argument("--out", type=Path, required=True)

    p_analyze = sub.add_parser("analyze", help="diversity + genealogy reports")
    p_analyze.add_argument("--out", type=Path, required=True)
    p_analyze.add_argument("--backend", default=None, help="label for the report rows")

    p_export = sub.add_parser("export", help="write embeddings or genealogy exports")
    p_export.add_argument("--out", type=Path, required=True)
    p_export.add_argument("--what", choices=("embeddings", "genealogy"), required=True)

    p_render = sub.add_parser("render", help="re-simulate one record's behavior")
    p_render.add_argument("--out", type=Path, required=True)
    p_render.add_argument("--id", type=int, required=True)
    p_render.add_argument(
        "--raw", action="store_true", help="also dump the final mass field (FLST float32)"
    )
    return parser


def _cmd_run(args) -> int:
    config = RunConfig.from_file(args.config, args.overrides)
    if args.mode:
        config = config.with_mode(args.mode)
    state = engine.run(config, args.out)
    print(f"run complete: {state.iteration} iterations, archive size {len(state.archive)}")
    return EXIT_OK


def _cmd_resume(args) -> int:
    manifest = json.loads((args.out / "manifest.json").read_text())
    config = RunConfig(data=manifest["config"])
    config.validate()
    state = engine.resume(config, args.out)
    print(f"resume complete: {state.iteration} iterations, archive size {len(state.archive)}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    archive = Archive.load(args.out)
    manifest = json.loads((args.out / "manifest.json").read_text())
    checkpoint_every = manifest.get("config", {}).get("run", {}).get("checkpoint_every", 500)
    backend = args.backend or archive.backend_id
    out = args.out / "analysis"
    out.mkdir(exist_ok=True)

    curve = analysis.diversity_curve(archive, checkpoint_every=checkpoint_every)
    with (out / "diversity.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["checkpoint", "backend", "diversity"])
        for size, value in curve:
            writer.writerow([size, backend, repr(value)])

    run_cfg = manifest.get("config", {}).get("run", {})
    schedule = None
    if manifest.get("mode") == "ee" and run_cfg:
        schedule = (
            run_cfg["iterations"],
            run_cfg["seed_iterations"],
            run_cfg["expedition_period"],
        )
    stats = analysis.genealogy_stats(archive, null_schedule=schedule)
    (out / "genealogy.json").write_text(json.dumps(asdict(stats), indent=2))

    plots.plot_diversity_curve(curve, backend, out / "diversity.png")
    plots.plot_origin_census(stats.origin_counts, out / "origins.png")
    plots.plot_expedition_traces(args.out, out / "expedition_traces.png")
    print(f"analysis written to {out}")
    return EXIT_OK


def _cmd_export(args) -> int:
    archive = Archive.load(args.out)
    out = args.out / "analysis"
    out.mkdir(exist_ok=True)
    if args.what == "embeddings":
        path = analysis.export_embeddings(archive, out / "embeddings.csv")
    else:
        stats = analysis.genealogy_stats(archive)
        path = out / "genealogy.json"
        path.write_text(json.dumps(asdict(stats), indent=2))
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_render(args) -> int:
    archive = Archive.load(args.out)
    manifest = json.loads((args.out / "manifest.json").read_text())
    config = RunConfig(data=manifest["config"])
    if not 0 <= args.id < len(archive):
        raise _UsageError(f"record id {args.id} outside archive of {len(archive)}")
    record = archive.records[args.id]
    result = simulate(
        Genome(record.theta),
        config.layout,
        config.data["simulator"]["init_seed"],
        config.sim,
    )
    path = args.out / f"render_{args.id:06d}.png"
    path.write_bytes(image_to_png_bytes(image_to_uint8(result.image)))
    print(f"wrote {path}")
    if args.raw:
        raw_path = args.out / f"render_{args.id:06d}.flst"
        save_raw_state(result.final, raw_path)
        print(f"wrote {raw_path}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "resume": _cmd_resume,
    "analyze": _cmd_analyze,
    "export": _cmd_export,
    "render": _cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (_UsageError, ConfigError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - CLI boundary
        log.error("%s", err)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

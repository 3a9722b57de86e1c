"""Command-line entry point for the batch pipeline.

Usage: gid <stage> --config <file>

Stages: gen, impute, samples, measures, akm, indicators, mobility,
decompose, microagg run that stage (and its prerequisites the first
time, via cached upstream results); run executes the whole pipeline;
report prints the output inventory.  The config file is JSON with the
fields of RunConfig.  Exit code 0 on success, 1 with the failing stage
named on stderr otherwise.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import STAGE_ORDER, RunConfig, StageError, emit_report, run_pipeline

SUBCOMMANDS = ["gen", "impute", "samples", "measures", "akm", "indicators",
               "mobility", "decompose", "microagg", "report", "run"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gid", description="group earnings dynamics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage"
                           if name not in ("run", "report")
                           else {"run": "run every stage",
                                 "report": "summarize outputs"}[name])
        p.add_argument("--config", required=True, help="path to a JSON config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_json(args.config)
    except Exception as e:  # noqa: BLE001 - user-facing config errors
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        if args.command == "report":
            print(emit_report(config.outdir), end="")
        elif args.command == "run":
            manifest = run_pipeline(config)
            done = [s for s, r in manifest["stages"].items()
                    if r.get("status") in ("done", "cached")]
            print(f"completed stages: {', '.join(done)}")
        else:
            # run the requested stage plus any prerequisite stages whose
            # outputs are absent (cached stages are skipped automatically)
            target = args.command
            upstream = STAGE_ORDER[:STAGE_ORDER.index(target) + 1]
            stages = {s: config.stages.get(s, True) if s in upstream else False
                      for s in STAGE_ORDER}
            sub_config = RunConfig(**{**vars(config), "stages": stages})
            manifest = run_pipeline(sub_config)
            record = manifest["stages"].get(target, {})
            print(f"{target}: {record.get('status', 'skipped')} "
                  f"-> {', '.join(record.get('outputs', [])) or 'no files'}")
    except StageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - keep the contract: name the failure
        print(f"stage {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

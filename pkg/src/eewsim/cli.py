"""Command-line front end.

Verbs::

    eewsim simulate --scenario S --out triggers.jsonl [--seed N]
    eewsim detect   --scenario S --triggers triggers.jsonl --out detections.jsonl
    eewsim run      --scenario S --out DIR [--seed N]
    eewsim ensemble --scenario S --out DIR --runs N [--seed N] [--jobs K]
    eewsim quality  waveform.csv [--trigger-time T]

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from eewsim import __version__
from eewsim.errors import EEWError, EstimationError, InsufficientDataError
from eewsim.formats import (
    detection_to_dict,
    read_triggers,
    write_json,
    write_jsonl,
    write_metrics,
    write_triggers,
)
from eewsim.metrics import aggregate
from eewsim.pipeline import detect, run_once, simulate, snapshot, warnings_for
from eewsim.quality import load_waveform_csv, quality_report
from eewsim.scenario import load_scenario

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def truth_path(triggers_path) -> Path:
    """Sidecar next to a trigger file: ``x.jsonl`` -> ``x.truth.json``."""
    p = Path(triggers_path)
    return p.with_name(p.name.split(".")[0] + ".truth.json")


def _scenario(args):
    return load_scenario(args.scenario, args.seed)


def _detections(events, sc):
    return [detection_to_dict(e, warnings_for(e, sc)) for e in events]


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    sim = simulate(sc)
    write_triggers(args.out, sim.stream)
    write_json(truth_path(args.out), sim.truth())
    return EXIT_OK


def cmd_detect(args) -> int:
    sc = _scenario(args)
    stream = read_triggers(args.triggers)
    write_jsonl(args.out, _detections(detect(stream, sc), sc))
    return EXIT_OK


def _snapshot_name(t: float) -> str:
    return f"snapshot_{t:g}s.geojson"


def cmd_run(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    res = run_once(sc)
    sim = res.simulation
    write_triggers(out / "triggers.jsonl", sim.stream)
    write_json(out / "truth.json", sim.truth())
    write_jsonl(out / "detections.jsonl", _detections(res.events, sc))
    write_metrics(out / "metrics.csv", [res.metrics], aggregate([res.metrics]), [sc.seed])
    for t in sc.snapshots_s:
        write_json(out / _snapshot_name(t), snapshot(sim, res.events, t))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    sc = _scenario(args)
    seeds = [sc.seed + i for i in range(args.runs)]

    def one(seed):
        return run_once(sc, seed).metrics

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            runs = list(pool.map(one, seeds))
    else:
        runs = [one(s) for s in seeds]
    summary = aggregate(runs)
    out = Path(args.out)
    write_metrics(out / "metrics.csv", runs, summary, seeds)
    write_json(out / "summary.json", summary.as_dict())
    return EXIT_OK


def cmd_quality(args) -> int:
    rec = load_waveform_csv(args.waveform, args.trigger_time)
    json.dump(asdict(quality_report(rec)), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eewsim", description="Smartphone earthquake early warning simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def scenario_cmd(name, help_, fn, out_help):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--scenario", required=True, help="scenario JSON file")
        s.add_argument("--out", required=True, help=out_help)
        s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        s.set_defaults(fn=fn)
        return s

    scenario_cmd("simulate", "simulate a trigger stream", cmd_simulate,
                 "trigger JSONL path; truth goes to <stem>.truth.json")
    d = scenario_cmd("detect", "replay a trigger file through the detector", cmd_detect,
                     "detections JSONL path")
    d.add_argument("--triggers", required=True, help="sorted trigger JSONL file")
    scenario_cmd("run", "simulate, detect, score and snapshot one run", cmd_run, "output directory")
    e = scenario_cmd("ensemble", "score many seeded runs", cmd_ensemble, "output directory")
    e.add_argument("--runs", type=int, required=True, help="number of runs (seeds seed..seed+runs-1)")
    e.add_argument("--jobs", type=int, default=1, help="worker threads")

    q = sub.add_parser("quality", help="quality report for a waveform CSV")
    q.add_argument("waveform", help="CSV with header t,x,y,z")
    q.add_argument("--trigger-time", type=float, default=None,
                   help="trigger epoch (default: first sample + 60 s)")
    q.set_defaults(fn=cmd_quality)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EEWError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Commands: run, sweep, verify, schedules dump. Flags can also be supplied via
environment variables prefixed DIFFLAB_ (e.g. DIFFLAB_SEED=3 difflab run ...).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .config import RunSpec, SpecError, SweepSpec
from .runner import execute_run, execute_sweep
from .verification import run_all_checks

ENV_PREFIX = "DIFFLAB_"


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _resolve_spec_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    bundled = resources.files("difflab").joinpath("specs", f"{arg}.json")
    if bundled.is_file():
        return Path(str(bundled))
    raise SystemExit(f"error: spec file not found: {arg}")


def _apply_run_overrides(spec: RunSpec, args) -> RunSpec:
    seed = args.seed if args.seed is not None else _env("seed")
    chains = args.chains if args.chains is not None else _env("chains")
    threads = args.threads if args.threads is not None else _env("threads")
    no_traj = args.no_trajectories or _env("no_trajectories") not in (None, "", "0")
    if seed is not None:
        spec = replace(spec, seed=int(seed))
    if chains is not None:
        spec = replace(spec, n_chains=int(chains))
    if threads is not None:
        spec = replace(spec, threads=int(threads))
    if no_traj:
        spec = replace(spec, trajectories=False)
    return spec.validate()


def _out_dir(args) -> Path:
    out = args.out_dir if args.out_dir is not None else _env("out_dir")
    return Path(out) if out is not None else Path("runs/latest")


def cmd_run(args) -> int:
    spec = _apply_run_overrides(RunSpec.from_json(_resolve_spec_path(args.spec)), args)
    out = _out_dir(args)
    result = execute_run(spec, out)
    if spec.n_chains == 0:
        print("warning: n_chains=0, outputs are empty", file=sys.stderr)
    print(f"wrote {spec.n_chains} chains to {out}")
    if result.metrics:
        print(json.dumps(result.metrics, indent=2, default=str))
    return 0


def cmd_sweep(args) -> int:
    sweep = SweepSpec.from_json(_resolve_spec_path(args.spec))
    base = _apply_run_overrides(sweep.base, args)
    sweep = SweepSpec(base=base, axis=sweep.axis, values=sweep.values,
                      seeds_per_cell=sweep.seeds_per_cell)
    out = _out_dir(args)
    rows = execute_sweep(sweep, out)
    print(f"swept {sweep.axis} over {list(sweep.values)} "
          f"({len(rows)} cells) -> {out / 'sweep.csv'}")
    return 0


def cmd_verify(args) -> int:
    report = run_all_checks()
    out = args.out if args.out is not None else "verify_report.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: observed {check['observed']} "
              f"(expected {check['expected']})")
    print(f"report written to {out}")
    return 0 if report["passed"] else 1


def cmd_schedules_dump(args) -> int:
    spec = RunSpec.from_json(_resolve_spec_path(args.spec))
    sched = spec.build_schedule()
    parent = getattr(sched, "parent", sched)
    out = args.out if args.out is not None else "schedule.csv"
    parent.to_csv(out)
    print(f"schedule ({parent.T} steps) written to {out}")
    return 0


def _add_run_flags(p) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--no-trajectories", action="store_true")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difflab",
        description="Toy diffusion sampling lab: vanilla, momentum and "
                    "adaptive-momentum reverse samplers on analytic mixtures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run spec")
    p_run.add_argument("spec", help="path to a run spec JSON, or a bundled name (toy_fig4)")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a hyperparameter sweep")
    p_sweep.add_argument("spec", help="path to a sweep spec JSON")
    _add_run_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the consistency-check suite")
    p_verify.add_argument("--out", default=None, help="report JSON path")
    p_verify.set_defaults(func=cmd_verify)

    p_sched = sub.add_parser("schedules", help="schedule utilities")
    sched_sub = p_sched.add_subparsers(dest="sched_command", required=True)
    p_dump = sched_sub.add_parser("dump", help="dump a spec's schedule to CSV")
    p_dump.add_argument("spec")
    p_dump.add_argument("--out", default=None)
    p_dump.set_defaults(func=cmd_schedules_dump)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""``sharepass-harness``: run scenarios, sweeps and timing profiles as CSV."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict

from ..group import generate_params
from .faults import FaultPlan, PlanError
from .scenario import fault_tolerance_sweep, load_scenario, run_scenario
from .timing import timing_matrix


def _group(text: str) -> tuple[int, int]:
    t, _, n = text.partition(",")
    return int(t), int(n)


def cmd_run(args: argparse.Namespace) -> int:
    doc = load_scenario(args.scenario)
    params = generate_params(int(doc.get("p_bits", args.p_bits)), seed=int(doc.get("params_seed", 1)))
    plan = FaultPlan.from_dict(doc.get("plan", {"seed": doc.get("seed", 0)}))
    result = run_scenario(plan, int(doc["t"]), int(doc["n"]), params, doc["script"],
                          backup_keys=bool(doc.get("backup_keys", False)))
    out = csv.writer(sys.stdout)
    out.writerow(["step", "action", "user", "client", "ok", "code", "token_issued"])
    for i, a in enumerate(result.actions, 1):
        out.writerow([i, a.action, a.user, a.client, int(a.ok), a.code, int(bool(a.token))])
    print(f"outcome={result.outcome} trace={result.trace_digest[:16]} "
          f"errors={dict(sorted(result.codes.items()))}", file=sys.stderr)
    if args.report:
        print(result.report, file=sys.stderr)
    return 0 if result.outcome == "success" or not args.strict else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    params = generate_params(args.p_bits, seed=args.params_seed)
    out = csv.writer(sys.stdout)
    out.writerow(["t", "n", "down", "outcome", "within_bound"])
    for row in fault_tolerance_sweep(args.t, args.n, params, seed=args.seed):
        out.writerow([row.t, row.n, row.down, row.outcome, int(row.down <= row.n - row.t)])
    return 0


def cmd_timing(args: argparse.Namespace) -> int:
    out = csv.writer(sys.stdout)
    fields = ["phase", "t", "n", "p_bits", "concurrency", "mean_latency", "samples"]
    out.writerow(fields)
    setups = []
    for p_bits in args.p_bits:
        params = generate_params(p_bits, seed=args.params_seed)
        setups.extend((t, n, params) for t, n in args.groups)
    for row in timing_matrix(setups, args.concurrency, repeats=args.repeats,
                             min_samples=args.min_samples, transport=args.transport):
        d = asdict(row)
        d["mean_latency"] = f"{row.mean_latency:.6f}"
        out.writerow([d[f] for f in fields])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sharepass-harness")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--p-bits", type=int, default=166)
    run.add_argument("--report", action="store_true", help="print the logger report to stderr")
    run.add_argument("--strict", action="store_true", help="exit 1 unless the outcome is success")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="login success versus shareholders down")
    sweep.add_argument("--t", type=int, required=True)
    sweep.add_argument("--n", type=int, required=True)
    sweep.add_argument("--p-bits", type=int, default=166)
    sweep.add_argument("--params-seed", type=int, default=1)
    sweep.add_argument("--seed", default="0")
    sweep.set_defaults(func=cmd_sweep)

    timing = sub.add_parser("timing", help="wall-clock latency per phase")
    timing.add_argument("--p-bits", type=int, nargs="+", default=[166])
    timing.add_argument("--groups", type=_group, nargs="+", default=[(3, 5)], metavar="T,N")
    timing.add_argument("--concurrency", type=int, nargs="+", default=[1, 10, 20, 30, 40, 50])
    timing.add_argument("--repeats", type=int, default=1)
    timing.add_argument("--min-samples", type=int, default=1,
                        help="repeat small levels until each phase has this many samples")
    timing.add_argument("--transport", choices=["local", "tcp"], default="local")
    timing.add_argument("--params-seed", type=int, default=1)
    timing.set_defaults(func=cmd_timing)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PlanError, ValueError, OSError) as exc:
        print(f"sharepass-harness: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: attack campaigns, predictions, probe tables,
fault simulation, key generation and report aggregation.

Exit codes: 0 all trials succeeded, 1 at least one trial failed,
2 invalid invocation. Reports are versioned JSON; identical invocations
(including --seed) reproduce byte-identical reports. The only
environment override honored is FAULTKEM_OUTPUT_DIR for output paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__
from .attack import FaultSimSpec, predict_queries, run_campaign
from .errors import NoProbeError, ParameterError
from .faultsim import (
    FLIP_1_TO_0,
    MemoryModel,
    build_pipeline,
    collision_probability,
    induce_flip,
    template,
)
from .oracle import IDEAL, MATCHED
from .ring import Seed
from .schemes import SCHEME_IDS, get_params, kem_keygen
from .serial import keypair_to_text, public_key_to_text
from .tree import probe_plan

SCHEMA_VERSION = "1"


def _out_path(path: str) -> Path:
    base = os.environ.get("FAULTKEM_OUTPUT_DIR")
    p = Path(path)
    return Path(base) / p if base and not p.is_absolute() else p


def _write_json(path: str, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    target = _out_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _emit(payload: dict, output: str | None):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if output:
        target = _out_path(output)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text + "\n")
    else:
        print(text)


def _cmd_attack(args) -> int:
    fault_spec = None
    if args.faultsim:
        fault_spec = FaultSimSpec(
            n_addresses=args.faultsim_n1,
            n_vulnerable=args.faultsim_planted,
            flag_offset=args.flag_offset,
            stride=args.stride,
            latency_bound=args.latency_bound,
        )
    report = run_campaign(
        scheme_id=args.scheme,
        t=args.t,
        oracle_mode=args.mode,
        probe_mode=args.probe_mode,
        trials=args.trials,
        seed=args.seed,
        workers=args.workers,
        allow_large_t=args.allow_large_t,
        fault_spec=fault_spec,
    )
    scheme = get_params(args.scheme)
    report["scheme_constants"] = {
        "n": scheme.n,
        "l": scheme.l,
        "q": scheme.q,
        "p": scheme.p,
        "T": scheme.T,
        "eta": scheme.eta1,
    }
    if args.output:
        _write_json(args.output, report)
    else:
        _emit(report, None)
    if args.csv:
        _write_csv(args.csv, report["trial_records"])
    failing = [r["trial"] for r in report["trial_records"] if not r["success"]]
    if failing:
        print(f"failing trials: {failing}", file=sys.stderr)
        return 1
    return 0


def _write_csv(path: str, records: list[dict]):
    target = _out_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fields = [
        "trial",
        "queries",
        "faults",
        "offline_hash_evals",
        "block_queries",
        "index_queries",
        "success",
        "identity_ok",
    ]
    with target.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec)


def _cmd_predict(args) -> int:
    count = predict_queries(args.scheme, args.t, args.case)
    payload = {
        "scheme": args.scheme,
        "t": args.t,
        "case": args.case,
        "queries": count,
    }
    if args.output:
        _write_json(args.output, payload)
    print(count)
    return 0


def _cmd_tables(args) -> int:
    plan = probe_plan(args.scheme)
    table = plan.table
    heads = [f"k_u={k:#x} d={d}" for k, d in table.columns]
    width = max(len(h) for h in heads) + 2
    print(f"scheme: {args.scheme}  (v filler {table.v_filler})")
    print("s".rjust(4) + "".join(h.rjust(width) for h in heads))
    for s in sorted(table.rows):
        bits = table.rows[s]
        print(f"{s:>4}" + "".join(str(b).rjust(width) for b in bits))
    payload = {
        "scheme": args.scheme,
        "k_u_block": table.k_u_block,
        "k_u_index": table.k_u_index,
        "v_filler": table.v_filler,
        "columns": [list(c) for c in table.columns],
        "rows": {str(s): list(bits) for s, bits in sorted(table.rows.items())},
        "mismatches": table.verify(get_params(args.scheme)),
    }
    if args.json or args.output:
        _emit(payload, args.output)
    return 0 if not payload["mismatches"] else 1


def _cmd_simulate(args) -> int:
    seed = Seed.from_int(args.seed)
    model = MemoryModel.plant(
        args.n1,
        args.planted,
        seed,
        stride=args.stride,
        ensure_offset=args.flag_offset if args.ensure_offset else None,
    )
    cells = template(model, direction=FLIP_1_TO_0 if args.only_1to0 else None)
    pipeline = None
    budget = None
    if args.inductions:
        pipeline = build_pipeline(
            n_addresses=args.n1,
            n_vulnerable=args.planted,
            flag_offset=args.flag_offset,
            stride=args.stride,
            latency_bound=args.latency_bound,
            seed=seed,
        )
        for _ in range(args.inductions):
            induce_flip(pipeline)
        budget = {
            "inductions": pipeline.inductions,
            "latency_bound_s": args.latency_bound,
            "total_latency_s": pipeline.total_latency,
            "budget_bound_s": args.inductions * args.latency_bound,
        }
    prob = collision_probability(args.planted, args.n1)
    payload = {
        "n1": args.n1,
        "planted": args.planted,
        "stride": args.stride,
        "flag_offset": args.flag_offset,
        "random_collision_probability": f"{prob.numerator}/{prob.denominator}",
        "templated": [
            {"address": c.address, "page_offset": c.page_offset, "direction": c.direction}
            for c in cells
        ],
        "fault_budget": budget,
    }
    _emit(payload, args.output)
    return 0


def _cmd_keygen(args) -> int:
    params = get_params(args.scheme)
    kp = kem_keygen(params, Seed.from_int(args.seed))
    prefix = _out_path(args.output_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    pk_path = Path(f"{prefix}.pk")
    sk_path = Path(f"{prefix}.sk")
    pk_path.write_text(public_key_to_text(kp.pk))
    sk_path.write_text(keypair_to_text(kp))
    print(f"wrote {pk_path} and {sk_path}")
    return 0


def _cmd_report(args) -> int:
    records = []
    runs = []
    for path in args.inputs:
        data = json.loads(Path(path).read_text())
        runs.append(data.get("run", {}))
        records.extend(data.get("trial_records", []))
    if not records:
        raise ParameterError("no trial records in the given inputs")
    queries = [r["queries"] for r in records]
    payload = {
        "runs": runs,
        "trials": len(records),
        "successes": sum(1 for r in records if r["success"]),
        "queries_mean": sum(queries) / len(queries),
        "queries_min": min(queries),
        "queries_max": max(queries),
        "faults_total": sum(r["faults"] for r in records),
    }
    _emit(payload, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultkem",
        description="Fault-assisted chosen-ciphertext key recovery on LPR-style KEMs",
    )
    parser.add_argument("--version", action="version", version=f"faultkem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run a key-recovery campaign")
    p.add_argument("--scheme", required=True, choices=SCHEME_IDS)
    p.add_argument("--t", type=int, required=True, help="parallelization factor")
    p.add_argument("--mode", choices=(IDEAL, MATCHED), default=MATCHED)
    p.add_argument(
        "--probe-mode", choices=("sign-normalized", "paper-literal"), default="sign-normalized"
    )
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, required=True, help="campaign seed (mandatory)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-large-t", action="store_true")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--csv", help="also flatten per-trial records to CSV")
    p.add_argument("--faultsim", action="store_true", help="back faults with the Rowhammer pipeline")
    p.add_argument("--faultsim-n1", type=int, default=1 << 30)
    p.add_argument("--faultsim-planted", type=int, default=8)
    p.add_argument("--flag-offset", type=lambda v: int(v, 0), default=0x040)
    p.add_argument("--stride", type=lambda v: int(v, 0), default=0x020)
    p.add_argument("--latency-bound", type=float, default=0.350)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("predict", help="closed-form query counts")
    p.add_argument("--scheme", required=True, choices=SCHEME_IDS)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--case", choices=("best", "average"), default="average")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("tables", help="print a scheme's probe table")
    p.add_argument("--scheme", required=True, choices=SCHEME_IDS)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_tables)

    p = sub.add_parser("simulate", help="rowhammer templating and fault budget")
    p.add_argument("--n1", type=int, default=1 << 30)
    p.add_argument("--planted", type=int, default=8)
    p.add_argument("--stride", type=lambda v: int(v, 0), default=0x020)
    p.add_argument("--flag-offset", type=lambda v: int(v, 0), default=0x040)
    p.add_argument("--latency-bound", type=float, default=0.350)
    p.add_argument("--inductions", type=int, default=0)
    p.add_argument("--only-1to0", action="store_true")
    p.add_argument("--ensure-offset", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("keygen", help="emit a victim keypair")
    p.add_argument("--scheme", required=True, choices=SCHEME_IDS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output-prefix", default="victim")
    p.set_defaults(func=_cmd_keygen)

    p = sub.add_parser("report", help="aggregate prior attack reports")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, NoProbeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

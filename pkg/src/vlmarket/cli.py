"""Command-line interface: clearing runs, capacity sweeps, comparisons, audits.

Exit codes: 0 success (and all audits passed), 1 audit failure, 2 input
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as vio
from . import lp as lpmod
from .analysis import esr_remuneration, full_audit, volatility
from .formulations import FormulationKind, ScenarioError, SolverError, clear
from .model import Scenario

EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3

_FORMULATIONS = {k.value: k for k in FormulationKind}


class InputError(Exception):
    pass


def _load_scenario(args) -> Scenario:
    """Resolve --case into a scenario: builtin:N, a scenario YAML, or a
    MATPOWER-style case file (loads sampled with --seed, storage sized by
    --esr-k at --esr-nodes)."""
    case_ref = args.case
    if case_ref.startswith("builtin:"):
        try:
            return vio.builtin_single_node(int(case_ref.split(":", 1)[1]))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    path = Path(case_ref)
    if not path.exists():
        raise InputError(f"case file not found: {case_ref}")
    if path.suffix in (".yaml", ".yml"):
        return vio.load_scenario_config(path)
    if path.suffix == ".m":
        case = vio.load_case(path)
        T = args.T
        loads = vio.sample_loads(case, T, seed=args.seed)
        esrs = tuple(vio.esr_from_multiplier(node, args.esr_k)
                     for node in args.esr_nodes.split(",")) if args.esr_k else ()
        return vio.scenario_from_case(case, T, loads, esrs=esrs)
    raise InputError(f"unrecognized case format: {case_ref} (use builtin:N, .yaml, or .m)")


def _emit(records: list[dict], fmt: str) -> None:
    if fmt == "ndjson":
        for rec in records:
            print(json.dumps(rec))
    elif fmt == "csv":
        if records:
            keys = list(records[0])
            print(",".join(keys))
            for rec in records:
                print(",".join(repr(rec[k]) if isinstance(rec[k], float) else str(rec[k])
                               for k in keys))
    else:
        for rec in records:
            print("  ".join(f"{k}={rec[k]:.4f}" if isinstance(rec[k], float)
                            else f"{k}={rec[k]}" for k in rec))


def _cmd_clear(args) -> int:
    scenario = _load_scenario(args)
    kind = _FORMULATIONS[args.formulation]
    result = clear(scenario, kind)
    print(f"formulation={kind.value} welfare={result.welfare:.2f}")
    records = []
    for node in sorted(result.prices):
        prices = result.prices[node]
        records.append({
            "node": node,
            "price_min": min(prices),
            "price_mean": sum(prices) / len(prices),
            "price_max": max(prices),
        })
    _emit(records, args.format)
    if args.out:
        written = vio.write_results(result, args.out)
        print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario = _load_scenario(args)
    results = {}
    for kind in FormulationKind:
        results[kind] = clear(scenario, kind)
    records = [{"formulation": k.value, "welfare": r.welfare}
               for k, r in results.items()]
    _emit(records, args.format)

    wb = results[FormulationKind.BASE].welfare
    we = results[FormulationKind.ESR_RELAXED].welfare
    wr = results[FormulationKind.ESR_ROBUST].welfare
    wv = results[FormulationKind.VIRTUAL_LINK].welfare
    print(f"ordering: base {wb:.2f} <= vl {wv:.2f} = robust {wr:.2f} <= esr {we:.2f}")

    pairs = [(FormulationKind.ESR_RELAXED, FormulationKind.ESR_ROBUST),
             (FormulationKind.ESR_ROBUST, FormulationKind.VIRTUAL_LINK)]
    for a, b in pairs:
        diff = max(abs(results[a].prices[n][t] - results[b].prices[n][t])
                   for n in results[a].prices for t in range(scenario.T))
        print(f"max |price({a.value}) - price({b.value})| = {diff:.4f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = _load_scenario(args)
    kind = _FORMULATIONS[args.formulation]
    result = clear(scenario, kind)

    cert = lpmod.certify(result.lp, result.solution, tol=args.tol)
    print(f"certificate: {cert}")

    audit = full_audit(result, scenario)
    ok = cert.passed
    for entry in audit.complementarity:
        if entry.violated:
            ok = False
            print(f"complementarity VIOLATION esr={entry.esr_id} t={entry.t} "
                  f"charge={entry.charge:.4f} discharge={entry.discharge:.4f} "
                  f"price={entry.price:.4f} price_floor={entry.price_floor:.4f} "
                  f"(allocation not physically realizable)")
        elif entry.floor_violated:
            print(f"note: price {entry.price:.4f} below floor {entry.price_floor:.4f} "
                  f"at esr={entry.esr_id} t={entry.t}, dispatch still exclusive "
                  f"(floor breach is necessary, not sufficient)")
    for entry in audit.duality:
        status = "ok" if entry.passed else "GAP"
        if not entry.passed:
            ok = False
        print(f"duality {entry.esr_id}: cleared={entry.cleared_profit:.4f} "
              f"max={entry.max_profit:.4f} gap={entry.gap:.3e} [{status}]")
    print("verify: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_AUDIT


def _cmd_export_lp(args) -> int:
    scenario = _load_scenario(args)
    kind = _FORMULATIONS[args.formulation]
    if kind is FormulationKind.BASE:
        from .formulations import build_base as builder
        prog = builder(scenario)
    elif kind is FormulationKind.ESR_RELAXED:
        from .formulations import build_esr
        prog = build_esr(scenario)
    elif kind is FormulationKind.ESR_ROBUST:
        from .formulations import build_robust
        prog = build_robust(scenario)
    else:
        from .formulations import build_vl
        from .virtual_links import enumerate_links
        prog = build_vl(scenario, enumerate_links(scenario))
    text = lpmod.to_mps(prog)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(f"wrote {out} ({prog.num_variables} columns, {prog.num_constraints} rows)")
    return EXIT_OK


def run_sweep(config: vio.SweepConfig):
    """Clear the case for every multiplier (sharing one sampled load set) and
    collect volatility/remuneration tables.

    Mode ``all`` clears with every storage unit installed; mode ``single``
    additionally clears once per unit, alone, with its capacity multiplied by
    ``single_capacity_factor``.
    """
    case = vio.load_case(config.case)
    loads = vio.sample_loads(case, config.horizon, seed=config.seed)

    vol_rows, rem_rows, sum_rows = [], [], []

    def _unit(node: str, K: int):
        return vio.esr_from_multiplier(node, K, charge_bid=config.esr_charge_bid,
                                       discharge_bid=config.esr_discharge_bid)

    def _one(K: int, participant: str, esrs):
        scenario = vio.scenario_from_case(case, config.horizon, loads, esrs=esrs,
                                          load_bid=config.load_bid)
        result = clear(scenario, FormulationKind.VIRTUAL_LINK)
        vol = volatility(result)
        for node in sorted(vol.temporal):
            vol_rows.append((node, K, config.mode, participant, vol.temporal[node]))
        for esr_id, rem in sorted(esr_remuneration(result, scenario).items()):
            rem_rows.append((esr_id, K, config.mode, rem.total, rem.net_profit))
        sum_rows.append((K, config.mode, participant, result.welfare,
                         vol.system_mean_temporal, config.seed, "PCG64",
                         config.esr_charge_bid, config.esr_discharge_bid))

    for K in config.k_values:
        if config.mode == "all":
            _one(K, "all", tuple(_unit(n, K) for n in config.esr_nodes))
        else:
            for node in config.esr_nodes:
                _one(K, node, (_unit(node, K * config.single_capacity_factor),))
    return vol_rows, rem_rows, sum_rows


def _cmd_sweep(args) -> int:
    if args.config:
        config = vio.load_sweep_config(args.config)
    else:
        if not args.case:
            raise InputError("sweep needs --case or --config")
        config = vio.SweepConfig(
            case=args.case,
            horizon=args.T,
            k_values=tuple(int(k) for k in args.K.split(",")),
            seed=args.seed,
            esr_nodes=tuple(args.esr_nodes.split(",")),
            mode=args.mode,
        )
    vol_rows, rem_rows, sum_rows = run_sweep(config)
    written = vio.write_sweep(vol_rows, rem_rows, sum_rows, args.out)
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlmarket",
        description="Day-ahead market clearing with energy storage via virtual links")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_case_opts(p):
        p.add_argument("--case", required=True,
                       help="builtin:N, scenario .yaml, or MATPOWER-style .m")
        p.add_argument("--T", type=int, default=24,
                       help="horizon for .m cases (default 24)")
        p.add_argument("--seed", type=int, default=vio.DEFAULT_SEED,
                       help=f"load-sampling seed for .m cases (default {vio.DEFAULT_SEED})")
        p.add_argument("--esr-k", type=int, default=0, dest="esr_k",
                       help="storage multiplier for .m cases (default 0)")
        p.add_argument("--esr-nodes", default="5,15,24", dest="esr_nodes",
                       help="comma-separated storage nodes for .m cases")
        p.add_argument("--format", choices=("plain", "csv", "ndjson"), default="plain")
        p.add_argument("--tol", type=float, default=lpmod.CERTIFY_TOL,
                       help="certification tolerance")

    p = sub.add_parser("clear", help="clear one market and emit results")
    add_case_opts(p)
    p.add_argument("--formulation", required=True, choices=sorted(_FORMULATIONS))
    p.add_argument("--out", help="directory for result CSVs")
    p.set_defaults(func=_cmd_clear)

    p = sub.add_parser("compare", help="run all four formulations and diff them")
    add_case_opts(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="certify optimality and audit the result")
    add_case_opts(p)
    p.add_argument("--formulation", required=True, choices=sorted(_FORMULATIONS))
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("export-lp", help="write the clearing LP in MPS format")
    add_case_opts(p)
    p.add_argument("--formulation", required=True, choices=sorted(_FORMULATIONS))
    p.add_argument("--out", required=True, help="output .mps path")
    p.set_defaults(func=_cmd_export_lp)

    p = sub.add_parser("sweep", help="storage capacity sweep over a case file")
    p.add_argument("--case", help="MATPOWER-style .m case")
    p.add_argument("--config", help="sweep config YAML (overrides other options)")
    p.add_argument("--K", default="0,1,5,10,15,20,25,50",
                   help="comma-separated multipliers")
    p.add_argument("--T", type=int, default=24)
    p.add_argument("--seed", type=int, default=vio.DEFAULT_SEED)
    p.add_argument("--mode", choices=("all", "single"), default="all")
    p.add_argument("--esr-nodes", default="5,15,24", dest="esr_nodes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScenarioError, vio.CaseError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

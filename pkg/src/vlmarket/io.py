"""Case ingestion, built-in study scenarios, load sampling, and result emission.

Input formats
-------------
* MATPOWER-style text subset: the ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``,
  ``mpc.branch`` and ``mpc.gencost`` matrices (whitespace-separated numbers,
  ``;``-terminated rows, ``%`` comments). Only the columns the market needs
  are read: bus id and active load, branch endpoints/reactance/rating,
  generator bus/capacity, and the linear cost coefficient used as the bid.
* Scenario and sweep configuration in YAML (schema in the README).

Randomness flows through numpy's PCG64 generator (``default_rng``); given a
seed the whole pipeline is deterministic, including emitted files.

Output: CSV with a header row, UTF-8, LF line endings, full-precision
(shortest round-trip) decimals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .model import Consumer, Esr, Horizon, Node, Scenario, Supplier, TransmissionLine

__all__ = [
    "DEFAULT_SEED",
    "CaseBus",
    "CaseBranch",
    "CaseGenerator",
    "CaseFile",
    "CaseError",
    "parse_case",
    "load_case",
    "write_case",
    "bundled_case_path",
    "sample_loads",
    "esr_from_multiplier",
    "scenario_from_case",
    "builtin_single_node",
    "SweepConfig",
    "load_scenario_config",
    "load_sweep_config",
    "write_results",
    "write_sweep",
]

#: used whenever a seed is not supplied explicitly
DEFAULT_SEED = 7

#: constant bid of sampled loads, a value-of-lost-load style curtailment price
DEFAULT_LOAD_BID = 200.0


class CaseError(ValueError):
    pass


@dataclass(frozen=True)
class CaseBus:
    id: int
    load: float  # MW


@dataclass(frozen=True)
class CaseBranch:
    from_bus: int
    to_bus: int
    reactance: float  # per unit
    rating: float     # MW; 0 means unrated


@dataclass(frozen=True)
class CaseGenerator:
    bus: int
    p_max: float       # MW
    cost_linear: float  # $/MWh, the bid


@dataclass(frozen=True)
class CaseFile:
    name: str
    base_mva: float
    buses: tuple[CaseBus, ...]
    branches: tuple[CaseBranch, ...]
    generators: tuple[CaseGenerator, ...]

    def bus_ids(self) -> set[int]:
        return {b.id for b in self.buses}

    def load_buses(self) -> list[CaseBus]:
        return [b for b in self.buses if b.load > 0]


_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.DOTALL)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9eE+.\-]+)\s*;")
_NAME_RE = re.compile(r"function\s+mpc\s*=\s*(\w+)")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(body: str, what: str) -> list[list[float]]:
    rows = []
    for chunk in body.replace("\n", " ").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in chunk.split()])
        except ValueError as exc:
            raise CaseError(f"malformed row in mpc.{what}: {chunk!r}") from exc
    return rows


def parse_case(text: str) -> CaseFile:
    """Parse the documented MATPOWER-style subset into a :class:`CaseFile`."""
    stripped = _strip_comments(text)
    name_match = _NAME_RE.search(stripped)
    name = name_match.group(1) if name_match else "case"

    scalars = {m.group(1): float(m.group(2)) for m in _SCALAR_RE.finditer(stripped)}
    matrices = {m.group(1): _parse_matrix(m.group(2), m.group(1))
                for m in _MATRIX_RE.finditer(stripped)}
    for required in ("bus", "gen", "branch", "gencost"):
        if required not in matrices:
            raise CaseError(f"missing mpc.{required} matrix")

    base_mva = scalars.get("baseMVA", 100.0)

    buses = []
    for row in matrices["bus"]:
        if len(row) < 3:
            raise CaseError(f"bus row too short: {row}")
        buses.append(CaseBus(id=int(row[0]), load=row[2]))
    bus_ids = {b.id for b in buses}
    if len(bus_ids) != len(buses):
        raise CaseError("duplicate bus ids")

    branches = []
    for row in matrices["branch"]:
        if len(row) < 6:
            raise CaseError(f"branch row too short: {row}")
        fb, tb, x, rating = int(row[0]), int(row[1]), row[3], row[5]
        if fb not in bus_ids or tb not in bus_ids:
            raise CaseError(f"branch {fb}-{tb} references unknown bus")
        if x <= 0:
            raise CaseError(f"branch {fb}-{tb} has nonpositive reactance {x}")
        branches.append(CaseBranch(from_bus=fb, to_bus=tb, reactance=x, rating=rating))

    gen_rows = matrices["gen"]
    cost_rows = matrices["gencost"]
    if len(cost_rows) < len(gen_rows):
        raise CaseError("gencost has fewer rows than gen")
    generators = []
    for row, cost in zip(gen_rows, cost_rows):
        if len(row) < 9:
            raise CaseError(f"gen row too short: {row}")
        bus = int(row[0])
        if bus not in bus_ids:
            raise CaseError(f"generator references unknown bus {bus}")
        # polynomial cost rows are [model startup shutdown n c_{n-1} ... c_0];
        # the linear coefficient is the second-to-last entry
        if len(cost) < 6 or int(cost[0]) != 2:
            raise CaseError(f"unsupported gencost row (need polynomial model 2): {cost}")
        generators.append(CaseGenerator(bus=bus, p_max=row[8], cost_linear=cost[-2]))

    return CaseFile(name=name, base_mva=base_mva, buses=tuple(buses),
                    branches=tuple(branches), generators=tuple(generators))


def load_case(path) -> CaseFile:
    return parse_case(Path(path).read_text(encoding="utf-8"))


def write_case(case: CaseFile) -> str:
    """Emit the parsed subset back to MATPOWER-style text (round-trips
    through :func:`parse_case`)."""
    out = [f"function mpc = {case.name}", "mpc.version = '2';",
           f"mpc.baseMVA = {case.base_mva!r};", "", "mpc.bus = ["]
    for b in case.buses:
        out.append(f"\t{b.id}\t1\t{b.load!r}\t0\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;")
    out.append("];")
    out.append("")
    out.append("mpc.gen = [")
    for g in case.generators:
        out.append(f"\t{g.bus}\t0\t0\t0\t0\t1\t{case.base_mva!r}\t1\t{g.p_max!r}\t0;")
    out.append("];")
    out.append("")
    out.append("mpc.branch = [")
    for br in case.branches:
        out.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.reactance!r}\t0\t"
                   f"{br.rating!r}\t0\t0\t0\t0\t1\t-360\t360;")
    out.append("];")
    out.append("")
    out.append("mpc.gencost = [")
    for g in case.generators:
        out.append(f"\t2\t0\t0\t3\t0\t{g.cost_linear!r}\t0;")
    out.append("];")
    return "\n".join(out) + "\n"


def bundled_case_path() -> Path:
    """The pinned stressed IEEE 30-node fixture shipped with the package."""
    return Path(__file__).parent / "data" / "case30_api.m"


def sample_loads(case: CaseFile, T: int, seed: int = DEFAULT_SEED) -> dict[int, tuple[float, ...]]:
    """Per-interval demand caps: case load times u ~ U(0.75, 1.25), drawn per
    (load bus, interval) from PCG64 seeded with ``seed``; deterministic."""
    rng = np.random.default_rng(seed)
    out = {}
    for bus in case.load_buses():
        u = rng.uniform(0.75, 1.25, size=T)
        out[bus.id] = tuple(float(bus.load * f) for f in u)
    return out


def esr_from_multiplier(node: str, K: int, ident: str | None = None,
                        charge_bid: float = 0.1, discharge_bid: float = 0.1) -> Esr:
    """Storage unit scaled by the integer multiplier K: energy range 4K MWh
    starting half full, power 1K MW, efficiencies 0.95/0.85. K = 0 is the
    no-storage baseline (all capacities zero, unit kept for stable naming)."""
    if K < 0:
        raise ValueError("capacity multiplier must be >= 0")
    return Esr(
        id=ident or f"esr{node}",
        node=node,
        eta_c=0.95,
        eta_d=0.85,
        soc_min=0.0,
        soc_max=4.0 * K,
        soc_init=2.0 * K,
        power_cap=1.0 * K,
        charge_bid=charge_bid,
        discharge_bid=discharge_bid,
    )


def scenario_from_case(case: CaseFile, T: int,
                       loads: dict[int, tuple[float, ...]],
                       esrs: tuple[Esr, ...] = (),
                       load_bid: float = DEFAULT_LOAD_BID,
                       flow_bid: float = 0.0) -> Scenario:
    """Assemble a market scenario from a parsed case.

    Node ids are the bus numbers as strings. Line susceptance is
    base_mva/reactance (MW/rad), ratings map to flow caps (0 = unrated =
    unlimited), and angle caps are left unconstrained so the effective cap
    comes from the flow rating alone.
    """
    nodes = tuple(Node(str(b.id)) for b in case.buses)
    lines = tuple(
        TransmissionLine(
            id=f"br{i}",
            snd=str(br.from_bus),
            rec=str(br.to_bus),
            susceptance=case.base_mva / br.reactance,
            flow_cap=(br.rating if br.rating > 0 else math.inf),
            flow_bid=flow_bid,
        )
        for i, br in enumerate(case.branches, start=1))
    suppliers = tuple(
        Supplier(id=f"g{i}", node=str(g.bus), capacity=g.p_max, bid=g.cost_linear)
        for i, g in enumerate(case.generators, start=1))
    consumers = tuple(
        Consumer(id=f"load{bus_id}", node=str(bus_id), max_demand=series, bid=load_bid)
        for bus_id, series in sorted(loads.items()))
    return Scenario(horizon=Horizon(T), nodes=nodes, lines=lines,
                    suppliers=suppliers, consumers=consumers, esrs=esrs)


_SINGLE_NODE_PARAMS = {1: (25.0, 50.0), 2: (15.0, 50.0), 3: (15.0, 95.0), 4: (5.0, 50.0)}


def builtin_single_node(scenario_id: int) -> Scenario:
    """The four 3-hour single-node study scenarios.

    One generator (bid 5/20/10 $/MWh, 50 MW, ramp-limited), one load
    (25/100/25 MWh at 30/60/40 $/MWh), one storage unit (efficiencies
    0.9/0.8, 0..100 MWh, 10 MW, service bids 0.1 $/MWh). The scenarios vary
    the ramp limit and initial state of charge.
    """
    if scenario_id not in _SINGLE_NODE_PARAMS:
        raise ValueError(f"unknown builtin scenario {scenario_id!r} (use 1..4)")
    ramp, s0 = _SINGLE_NODE_PARAMS[scenario_id]
    return Scenario(
        horizon=Horizon(3),
        nodes=(Node("n1"),),
        suppliers=(Supplier("gen", "n1", capacity=50.0,
                            bid=(5.0, 20.0, 10.0), ramp_limit=ramp),),
        consumers=(Consumer("load", "n1", max_demand=(25.0, 100.0, 25.0),
                            bid=(30.0, 60.0, 40.0)),),
        esrs=(Esr("bat", "n1", eta_c=0.9, eta_d=0.8, soc_min=0.0, soc_max=100.0,
                  soc_init=s0, power_cap=10.0, charge_bid=0.1, discharge_bid=0.1),),
    )


@dataclass
class SweepConfig:
    """Configuration of a storage-capacity sweep over a case file."""

    case: str
    horizon: int = 24
    k_values: tuple[int, ...] = (0, 1, 5, 10, 15, 20, 25, 50)
    seed: int = DEFAULT_SEED
    esr_nodes: tuple[str, ...] = ("5", "15", "24")
    mode: str = "all"  # "all": every ESR participates; "single": one at a time
    single_capacity_factor: int = 3
    load_bid: float = DEFAULT_LOAD_BID
    esr_charge_bid: float = 0.1
    esr_discharge_bid: float = 0.1

    def __post_init__(self):
        if self.mode not in ("all", "single"):
            raise ValueError(f"mode must be 'all' or 'single', got {self.mode!r}")
        if any(k < 0 or k != int(k) for k in self.k_values):
            raise ValueError("k_values must be nonnegative integers")
        self.k_values = tuple(int(k) for k in self.k_values)
        self.esr_nodes = tuple(str(n) for n in self.esr_nodes)


def _series_from_config(value, what: str):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    raise CaseError(f"{what} must be a number or a list, got {value!r}")


def load_scenario_config(path) -> Scenario:
    """Read a scenario from the YAML schema documented in the README."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or "horizon" not in raw or "nodes" not in raw:
        raise CaseError("scenario config needs at least 'horizon' and 'nodes'")
    lines = tuple(
        TransmissionLine(
            id=str(l["id"]), snd=str(l["from"]), rec=str(l["to"]),
            susceptance=float(l["susceptance"]),
            flow_cap=_series_from_config(l["flow_cap"], "flow_cap"),
            flow_bid=_series_from_config(l.get("flow_bid", 0.0), "flow_bid"),
            angle_cap=_series_from_config(l.get("angle_cap", math.inf), "angle_cap"),
        ) for l in raw.get("lines", []))
    suppliers = tuple(
        Supplier(
            id=str(s["id"]), node=str(s["node"]),
            capacity=_series_from_config(s["capacity"], "capacity"),
            bid=_series_from_config(s["bid"], "bid"),
            ramp_limit=(float(s["ramp_limit"]) if "ramp_limit" in s else None),
        ) for s in raw.get("suppliers", []))
    consumers = tuple(
        Consumer(
            id=str(c["id"]), node=str(c["node"]),
            max_demand=_series_from_config(c["max_demand"], "max_demand"),
            bid=_series_from_config(c["bid"], "bid"),
        ) for c in raw.get("consumers", []))
    esrs = tuple(
        Esr(
            id=str(b["id"]), node=str(b["node"]),
            eta_c=float(b["eta_c"]), eta_d=float(b["eta_d"]),
            soc_min=float(b["soc_min"]), soc_max=float(b["soc_max"]),
            soc_init=float(b["soc_init"]), power_cap=float(b["power_cap"]),
            charge_bid=_series_from_config(b.get("charge_bid", 0.0), "charge_bid"),
            discharge_bid=_series_from_config(b.get("discharge_bid", 0.0), "discharge_bid"),
        ) for b in raw.get("esrs", []))
    return Scenario(
        horizon=Horizon(int(raw["horizon"])),
        nodes=tuple(Node(str(n)) for n in raw["nodes"]),
        lines=lines, suppliers=suppliers, consumers=consumers, esrs=esrs)


def load_sweep_config(path) -> SweepConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or "case" not in raw:
        raise CaseError("sweep config needs a 'case' entry")
    case_path = Path(path).parent / str(raw["case"])
    kwargs = {}
    for key in ("horizon", "seed", "single_capacity_factor"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "k_values" in raw:
        kwargs["k_values"] = tuple(int(k) for k in raw["k_values"])
    if "esr_nodes" in raw:
        kwargs["esr_nodes"] = tuple(str(n) for n in raw["esr_nodes"])
    if "mode" in raw:
        kwargs["mode"] = str(raw["mode"])
    if "load_bid" in raw:
        kwargs["load_bid"] = float(raw["load_bid"])
    return SweepConfig(case=str(case_path), **kwargs)


# -- emission -----------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    # write-then-rename so concurrent readers never observe partial files
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    tmp.replace(path)


def write_results(result, outdir) -> list[Path]:
    """Emit prices.csv, allocations.csv, esr_ops.csv, summary.csv."""
    outdir = Path(outdir)
    written = []

    path = outdir / "prices.csv"
    _write_csv(path, ["node", "t", "price"],
               ((n, t + 1, result.prices[n][t])
                for n in sorted(result.prices) for t in range(len(result.prices[n]))))
    written.append(path)

    def _alloc_rows():
        for label, series_map in (("supply", result.supply), ("demand", result.demand),
                                  ("flow", result.flows), ("angle", result.angles)):
            for ident in sorted(series_map):
                for t, v in enumerate(series_map[ident], start=1):
                    yield (label, ident, t, v)

    path = outdir / "allocations.csv"
    _write_csv(path, ["kind", "id", "t", "value"], _alloc_rows())
    written.append(path)

    def _esr_rows():
        for ident in sorted(result.charge):
            nc = result.net_charge.get(ident)
            nd = result.net_discharge.get(ident)
            for t in range(len(result.charge[ident])):
                yield (ident, t + 1,
                       result.charge[ident][t], result.discharge[ident][t],
                       result.soc[ident][t],
                       nc[t] if nc else 0.0, nd[t] if nd else 0.0)

    path = outdir / "esr_ops.csv"
    _write_csv(path, ["esr", "t", "charge", "discharge", "soc",
                      "net_charge", "net_discharge"], _esr_rows())
    written.append(path)

    path = outdir / "summary.csv"
    _write_csv(path, ["key", "value"], [
        ("formulation", result.kind.value),
        ("welfare", result.welfare),
        ("objective", -result.welfare),
        ("variables", result.lp.num_variables if result.lp else 0),
        ("constraints", result.lp.num_constraints if result.lp else 0),
    ])
    written.append(path)
    return written


def write_sweep(volatility_rows, remuneration_rows, summary_rows, outdir) -> list[Path]:
    """Emit volatility_by_K.csv, remuneration_by_K.csv, sweep_summary.csv.

    ``volatility_rows``: (node, K, mode, participant, temporal_std);
    ``remuneration_rows``: (esr, K, mode, gross, net);
    ``summary_rows``: (K, mode, participant, welfare, mean_temporal_std,
    seed, rng, esr_charge_bid, esr_discharge_bid).
    """
    outdir = Path(outdir)
    written = []
    path = outdir / "volatility_by_K.csv"
    _write_csv(path, ["node", "K", "mode", "participant", "temporal_std"], volatility_rows)
    written.append(path)
    path = outdir / "remuneration_by_K.csv"
    _write_csv(path, ["esr", "K", "mode", "gross", "net"], remuneration_rows)
    written.append(path)
    path = outdir / "sweep_summary.csv"
    _write_csv(path, ["K", "mode", "participant", "welfare", "mean_temporal_std",
                      "seed", "rng", "esr_charge_bid", "esr_discharge_bid"], summary_rows)
    written.append(path)
    return written

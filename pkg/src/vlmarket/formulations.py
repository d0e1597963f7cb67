"""The four market-clearing formulations and the clearing driver.

Every formulation minimizes negative social surplus (supply, transmission,
and storage-service bid costs minus the bid value of demand served) over a
space-time network with DC power flow. They differ only in how storage
operations enter:

* ``BASE``           - storage ignored.
* ``ESR_RELAXED``    - charge/discharge with exact running SOC bounds; the
                       charge-or-discharge exclusivity is not imposed, so
                       sufficiently negative prices can clear simultaneous
                       charge and discharge (not physically realizable).
* ``ESR_ROBUST``     - same, with a conservative running upper bound on SOC
                       (net charge priced at eta_c/eta_d) whose vertex
                       solutions are always physically realizable.
* ``VIRTUAL_LINK``   - storage modeled as temporal transfer flows plus net
                       charge/discharge; exchangeable with ESR_ROBUST when
                       links carry the cost-recovery bid.

Nodal prices are the duals of the balance rows, written as
(inflow + generation + discharge) - (outflow + load + charge) = 0, so a
positive dual is the marginal value of one extra MWh withdrawn at that
space-time node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from . import lp as lpmod
from .model import Scenario, Series, soc_bounds, validate
from .virtual_links import VirtualFlowPlan, VirtualLink, compose, enumerate_links

__all__ = [
    "FormulationKind",
    "ClearingResult",
    "ScenarioError",
    "SolverError",
    "build_base",
    "build_esr",
    "build_robust",
    "build_vl",
    "clear",
]


class FormulationKind(Enum):
    BASE = "base"
    ESR_RELAXED = "esr"
    ESR_ROBUST = "robust"
    VIRTUAL_LINK = "vl"


class ScenarioError(ValueError):
    """Raised when a scenario fails validation; carries the violations."""

    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class SolverError(RuntimeError):
    """Raised when a clearing LP does not solve to optimality.

    The offending program is attached (``.lp``, with ``.mps`` export) for
    debugging.
    """

    def __init__(self, status, message, program):
        self.status = status
        self.lp = program
        super().__init__(f"clearing LP finished with status {status.value}: {message}")

    @property
    def mps(self) -> str:
        return lpmod.to_mps(self.lp)


def _require_valid(scenario: Scenario) -> None:
    violations = validate(scenario)
    if violations:
        raise ScenarioError(violations)


def _network_skeleton(prog: lpmod.LinearProgram, sc: Scenario):
    """Add supply/demand/flow/angle columns and all non-balance network rows;
    return the balance-row coefficient dicts keyed by (node, t)."""
    T = sc.T
    balance: dict[tuple[str, int], dict[str, float]] = {
        (n.id, t): {} for n in sc.nodes for t in range(1, T + 1)}

    for s in sc.suppliers:
        for t in range(1, T + 1):
            name = f"p:{s.id}:{t}"
            prog.add_variable(name, 0.0, s.capacity[t - 1], objective=s.bid[t - 1])
            balance[(s.node, t)][name] = 1.0
    for c in sc.consumers:
        for t in range(1, T + 1):
            name = f"d:{c.id}:{t}"
            prog.add_variable(name, 0.0, c.max_demand[t - 1], objective=-c.bid[t - 1])
            balance[(c.node, t)][name] = -1.0
    for edge_id, snd, rec, line in sc.directed_edges():
        for t in range(1, T + 1):
            name = f"f:{edge_id}:{t}"
            prog.add_variable(name, 0.0, line.flow_cap[t - 1], objective=line.flow_bid[t - 1])
            balance[(rec, t)][name] = 1.0
            balance[(snd, t)][name] = -1.0
    for n in sc.nodes:
        for t in range(1, T + 1):
            prog.add_variable(f"th:{n.id}:{t}", -math.inf, math.inf)

    for line in sc.lines:
        for t in range(1, T + 1):
            prog.add_constraint(
                f"dc:{line.id}:{t}",
                {f"f:{line.id}+:{t}": 1.0, f"f:{line.id}-:{t}": -1.0,
                 f"th:{line.snd}:{t}": -line.susceptance,
                 f"th:{line.rec}:{t}": line.susceptance},
                "=", 0.0)
            cap = line.effective_angle_cap(t)
            if math.isfinite(cap):
                diff = {f"th:{line.snd}:{t}": 1.0, f"th:{line.rec}:{t}": -1.0}
                prog.add_constraint(f"ang_hi:{line.id}:{t}", diff, "<=", cap)
                prog.add_constraint(f"ang_lo:{line.id}:{t}", diff, ">=", -cap)

    for s in sc.suppliers:
        if s.ramp_limit is None:
            continue
        for t in range(1, T):
            step = {f"p:{s.id}:{t + 1}": 1.0, f"p:{s.id}:{t}": -1.0}
            prog.add_constraint(f"ramp_up:{s.id}:{t}", step, "<=", s.ramp_limit)
            prog.add_constraint(f"ramp_dn:{s.id}:{t}", step, ">=", -s.ramp_limit)

    return balance


def _finish_balance(prog: lpmod.LinearProgram, balance) -> None:
    for (node, t), coeffs in balance.items():
        prog.add_constraint(f"bal:{node}:{t}", coeffs, "=", 0.0)


def build_base(scenario: Scenario) -> lpmod.LinearProgram:
    """Clearing LP without storage (storage units are ignored entirely)."""
    _require_valid(scenario)
    prog = lpmod.LinearProgram(name="clearing-base")
    balance = _network_skeleton(prog, scenario)
    _finish_balance(prog, balance)
    return prog


def _ops_ub(esr) -> float:
    # zero-capacity units stay in the program with columns pinned to zero,
    # which keeps row/column naming stable across capacity sweeps
    return 0.0 if esr.power_cap == 0.0 else math.inf


def _add_esr_columns(prog, sc, balance):
    for b in sc.esrs:
        ub = _ops_ub(b)
        for t in range(1, sc.T + 1):
            pc = f"pc:{b.id}:{t}"
            pd = f"pd:{b.id}:{t}"
            prog.add_variable(pc, 0.0, ub, objective=b.charge_bid[t - 1])
            prog.add_variable(pd, 0.0, ub, objective=b.discharge_bid[t - 1])
            balance[(b.node, t)][pc] = -1.0
            balance[(b.node, t)][pd] = 1.0
            prog.add_constraint(f"pcap:{b.id}:{t}", {pc: 1.0, pd: 1.0}, "<=", b.power_cap)


def _soc_rows(prog, sc, robust_upper: bool):
    """Running SOC bounds over cumulative charge/discharge.

    The lower bound is always exact. The upper bound is either exact or the
    conservative form that prices cumulative net charge at eta_c/eta_d, which
    dominates the exact accounting and therefore guarantees any feasible
    point is physically realizable.
    """
    for b in sc.esrs:
        for t in range(1, sc.T + 1):
            lo, hi = soc_bounds(b, t, sc.T)
            lo_coeffs: dict[str, float] = {}
            hi_coeffs: dict[str, float] = {}
            for u in range(1, t + 1):
                lo_coeffs[f"pc:{b.id}:{u}"] = b.eta_c
                lo_coeffs[f"pd:{b.id}:{u}"] = -1.0 / b.eta_d
                if robust_upper:
                    hi_coeffs[f"pc:{b.id}:{u}"] = b.eta_c / b.eta_d
                    hi_coeffs[f"pd:{b.id}:{u}"] = -b.eta_c / b.eta_d
                else:
                    hi_coeffs[f"pc:{b.id}:{u}"] = b.eta_c
                    hi_coeffs[f"pd:{b.id}:{u}"] = -1.0 / b.eta_d
            prog.add_constraint(f"soc_lo:{b.id}:{t}", lo_coeffs, ">=", lo)
            prog.add_constraint(f"soc_hi:{b.id}:{t}", hi_coeffs, "<=", hi)


def build_esr(scenario: Scenario) -> lpmod.LinearProgram:
    """Clearing LP with storage under exact running SOC bounds
    (charge/discharge exclusivity relaxed)."""
    _require_valid(scenario)
    prog = lpmod.LinearProgram(name="clearing-esr")
    balance = _network_skeleton(prog, scenario)
    _add_esr_columns(prog, scenario, balance)
    _soc_rows(prog, scenario, robust_upper=False)
    _finish_balance(prog, balance)
    return prog


def build_robust(scenario: Scenario) -> lpmod.LinearProgram:
    """Clearing LP with the conservative SOC upper bound; its solutions
    always satisfy charge/discharge exclusivity."""
    _require_valid(scenario)
    prog = lpmod.LinearProgram(name="clearing-robust")
    balance = _network_skeleton(prog, scenario)
    _add_esr_columns(prog, scenario, balance)
    _soc_rows(prog, scenario, robust_upper=True)
    _finish_balance(prog, balance)
    return prog


def build_vl(scenario: Scenario, links: tuple[VirtualLink, ...]) -> lpmod.LinearProgram:
    """Clearing LP in the virtual-link representation.

    Columns are link flows (MWh charged) plus per-ESR net charge/discharge.
    The SOC rows are the exact image of the robust formulation's rows under
    the flow-to-operations mapping, which keeps the two formulations
    exchangeable whichever side of the mapping the optimizer lands on: net
    operations consume SOC headroom at the same eta_c/eta_d rate as link
    flows.
    """
    _require_valid(scenario)
    esr_ids = {b.id for b in scenario.esrs}
    for link in links:
        if link.esr not in esr_ids:
            raise ValueError(f"link {link.id} references unknown ESR {link.esr!r}")
        if not (1 <= link.t_charge <= scenario.T and 1 <= link.t_discharge <= scenario.T):
            raise ValueError(f"link {link.id} outside horizon 1..{scenario.T}")

    prog = lpmod.LinearProgram(name="clearing-vl")
    balance = _network_skeleton(prog, scenario)

    esr_by_id = {b.id: b for b in scenario.esrs}
    for link in links:
        prog.add_variable(f"delta:{link.id}", 0.0, _ops_ub(esr_by_id[link.esr]),
                          objective=link.bid)
    for b in scenario.esrs:
        ub = _ops_ub(b)
        for t in range(1, scenario.T + 1):
            prog.add_variable(f"pnc:{b.id}:{t}", 0.0, ub, objective=b.charge_bid[t - 1])
            prog.add_variable(f"pnd:{b.id}:{t}", 0.0, ub, objective=b.discharge_bid[t - 1])
            balance[(b.node, t)][f"pnc:{b.id}:{t}"] = -1.0
            balance[(b.node, t)][f"pnd:{b.id}:{t}"] = 1.0
    for link in links:
        esr = esr_by_id[link.esr]
        node = esr.node
        var = f"delta:{link.id}"
        bal_out = balance[(node, link.t_charge)]
        bal_in = balance[(node, link.t_discharge)]
        bal_out[var] = bal_out.get(var, 0.0) - 1.0
        bal_in[var] = bal_in.get(var, 0.0) + esr.round_trip

    for b in scenario.esrs:
        lam = b.eta_c / b.eta_d
        out_links = [l for l in links if l.esr == b.id]
        for t in range(1, scenario.T + 1):
            lo, hi = soc_bounds(b, t, scenario.T)
            lo_coeffs: dict[str, float] = {}
            hi_coeffs: dict[str, float] = {}
            cap_coeffs: dict[str, float] = {}
            for u in range(1, t + 1):
                lo_coeffs[f"pnc:{b.id}:{u}"] = b.eta_c
                lo_coeffs[f"pnd:{b.id}:{u}"] = -1.0 / b.eta_d
                hi_coeffs[f"pnc:{b.id}:{u}"] = lam
                hi_coeffs[f"pnd:{b.id}:{u}"] = -lam
            for link in out_links:
                var = f"delta:{link.id}"
                if link.t_charge <= t:
                    lo_coeffs[var] = lo_coeffs.get(var, 0.0) + b.eta_c
                    hi_coeffs[var] = hi_coeffs.get(var, 0.0) + lam
                if link.t_discharge <= t:
                    lo_coeffs[var] = lo_coeffs.get(var, 0.0) - b.eta_c
                    hi_coeffs[var] = hi_coeffs.get(var, 0.0) - lam * b.round_trip
                if link.t_charge == t:
                    cap_coeffs[var] = cap_coeffs.get(var, 0.0) + 1.0
                if link.t_discharge == t:
                    cap_coeffs[var] = cap_coeffs.get(var, 0.0) + b.round_trip
            cap_coeffs[f"pnc:{b.id}:{t}"] = 1.0
            cap_coeffs[f"pnd:{b.id}:{t}"] = 1.0
            prog.add_constraint(f"soc_lo:{b.id}:{t}", lo_coeffs, ">=", lo)
            prog.add_constraint(f"soc_hi:{b.id}:{t}", hi_coeffs, "<=", hi)
            prog.add_constraint(f"pcap:{b.id}:{t}", cap_coeffs, "<=", b.power_cap)

    _finish_balance(prog, balance)
    return prog


@dataclass
class ClearingResult:
    """Primal allocations, nodal prices, and welfare of one cleared market."""

    kind: FormulationKind
    welfare: float
    prices: dict[str, Series]
    supply: dict[str, Series]
    demand: dict[str, Series]
    flows: dict[str, Series]
    angles: dict[str, Series]
    charge: dict[str, Series] = field(default_factory=dict)
    discharge: dict[str, Series] = field(default_factory=dict)
    soc: dict[str, Series] = field(default_factory=dict)
    links: tuple[VirtualLink, ...] = ()
    link_flows: dict[str, float] = field(default_factory=dict)
    net_charge: dict[str, Series] = field(default_factory=dict)
    net_discharge: dict[str, Series] = field(default_factory=dict)
    lp: lpmod.LinearProgram | None = None
    solution: lpmod.PrimalDualSolution | None = None

    def price_at(self, node: str, t: int) -> float:
        return self.prices[node][t - 1]


def _series(primal, prefix: str, ident: str, T: int) -> Series:
    return tuple(primal[f"{prefix}:{ident}:{t}"] for t in range(1, T + 1))


def _soc_series(esr, charge: Series, discharge: Series) -> Series:
    soc = []
    level = esr.soc_init
    for pc_t, pd_t in zip(charge, discharge):
        level = level + esr.eta_c * pc_t - pd_t / esr.eta_d
        soc.append(level)
    return tuple(soc)


def clear(scenario: Scenario, kind: FormulationKind,
          links: tuple[VirtualLink, ...] | None = None) -> ClearingResult:
    """Build, solve, and unpack one clearing problem.

    For the virtual-link formulation the link set defaults to the full
    enumeration with cost-recovery bids, and the charge/discharge series are
    reconstructed from the cleared flows. Raises :class:`ScenarioError` on
    invalid input and :class:`SolverError` if the LP does not reach
    optimality.
    """
    _require_valid(scenario)
    if kind is FormulationKind.BASE:
        prog = build_base(scenario)
    elif kind is FormulationKind.ESR_RELAXED:
        prog = build_esr(scenario)
    elif kind is FormulationKind.ESR_ROBUST:
        prog = build_robust(scenario)
    elif kind is FormulationKind.VIRTUAL_LINK:
        if links is None:
            links = enumerate_links(scenario)
        prog = build_vl(scenario, links)
    else:
        raise ValueError(f"unknown formulation {kind!r}")

    sol = lpmod.solve(prog)
    if not sol.is_optimal:
        raise SolverError(sol.status, sol.message, prog)

    T = scenario.T
    result = ClearingResult(
        kind=kind,
        welfare=-sol.objective,
        prices={n.id: _series(sol.duals, "bal", n.id, T) for n in scenario.nodes},
        supply={s.id: _series(sol.primal, "p", s.id, T) for s in scenario.suppliers},
        demand={c.id: _series(sol.primal, "d", c.id, T) for c in scenario.consumers},
        flows={edge_id: _series(sol.primal, "f", edge_id, T)
               for edge_id, _, _, _ in scenario.directed_edges()},
        angles={n.id: _series(sol.primal, "th", n.id, T) for n in scenario.nodes},
        lp=prog,
        solution=sol,
    )

    if kind in (FormulationKind.ESR_RELAXED, FormulationKind.ESR_ROBUST):
        for b in scenario.esrs:
            pc = _series(sol.primal, "pc", b.id, T)
            pd = _series(sol.primal, "pd", b.id, T)
            result.charge[b.id] = pc
            result.discharge[b.id] = pd
            result.soc[b.id] = _soc_series(b, pc, pd)
    elif kind is FormulationKind.VIRTUAL_LINK:
        result.links = tuple(links)
        result.link_flows = {l.id: sol.primal[f"delta:{l.id}"] for l in links}
        for b in scenario.esrs:
            result.net_charge[b.id] = _series(sol.primal, "pnc", b.id, T)
            result.net_discharge[b.id] = _series(sol.primal, "pnd", b.id, T)
        plan = VirtualFlowPlan(
            T=T,
            links=result.links,
            flows=tuple(result.link_flows[l.id] for l in links),
            net_charge=result.net_charge,
            net_discharge=result.net_discharge,
        )
        esr_by_id = {b.id: b for b in scenario.esrs}
        for b_id, (pc, pd) in compose(plan, scenario.esrs).items():
            result.charge[b_id] = pc
            result.discharge[b_id] = pd
            result.soc[b_id] = _soc_series(esr_by_id[b_id], pc, pd)

    return result

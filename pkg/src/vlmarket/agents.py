"""Standalone ESR profit maximization at fixed prices.

The clearing LP's Lagrangian decomposes over participants, so at the cleared
prices every storage unit's cleared operations must solve its own
profit-maximization problem. These solvers make that decomposition
executable; :func:`consistency_check` uses it as an audit of market results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from . import lp as lpmod
from .formulations import ClearingResult, FormulationKind
from .model import Esr, Scenario, soc_bounds
from .virtual_links import VirtualLink

__all__ = [
    "ProfitMaxVariant",
    "AgentResult",
    "ConsistencyEntry",
    "profit_max",
    "cleared_profit",
    "consistency_check",
]


class ProfitMaxVariant(Enum):
    EXACT = "exact"
    ROBUST = "robust"
    VIRTUAL_LINK = "vl"


_VARIANT_FOR_KIND = {
    FormulationKind.ESR_RELAXED: ProfitMaxVariant.EXACT,
    FormulationKind.ESR_ROBUST: ProfitMaxVariant.ROBUST,
    FormulationKind.VIRTUAL_LINK: ProfitMaxVariant.VIRTUAL_LINK,
}


@dataclass
class AgentResult:
    variant: ProfitMaxVariant
    profit: float
    charge: tuple[float, ...] = ()
    discharge: tuple[float, ...] = ()
    link_flows: dict[str, float] = field(default_factory=dict)
    net_charge: tuple[float, ...] = ()
    net_discharge: tuple[float, ...] = ()
    program: lpmod.LinearProgram | None = None
    solution: lpmod.PrimalDualSolution | None = None


def _ops_program(esr: Esr, prices, robust_upper: bool) -> lpmod.LinearProgram:
    T = len(prices)
    prog = lpmod.LinearProgram(name=f"profit-max-{esr.id}")
    for t in range(1, T + 1):
        # maximize (pi - bid_d) pd - (pi + bid_c) pc, negated for minimization
        prog.add_variable(f"pc:{t}", 0.0, math.inf,
                          objective=prices[t - 1] + esr.charge_bid[t - 1])
        prog.add_variable(f"pd:{t}", 0.0, math.inf,
                          objective=-(prices[t - 1] - esr.discharge_bid[t - 1]))
        prog.add_constraint(f"pcap:{t}", {f"pc:{t}": 1.0, f"pd:{t}": 1.0},
                            "<=", esr.power_cap)
    for t in range(1, T + 1):
        lo, hi = soc_bounds(esr, t, T)
        lo_c, hi_c = {}, {}
        for u in range(1, t + 1):
            lo_c[f"pc:{u}"] = esr.eta_c
            lo_c[f"pd:{u}"] = -1.0 / esr.eta_d
            if robust_upper:
                hi_c[f"pc:{u}"] = esr.eta_c / esr.eta_d
                hi_c[f"pd:{u}"] = -esr.eta_c / esr.eta_d
            else:
                hi_c[f"pc:{u}"] = esr.eta_c
                hi_c[f"pd:{u}"] = -1.0 / esr.eta_d
        prog.add_constraint(f"soc_lo:{t}", lo_c, ">=", lo)
        prog.add_constraint(f"soc_hi:{t}", hi_c, "<=", hi)
    return prog


def _vl_program(esr: Esr, prices, links: tuple[VirtualLink, ...]) -> lpmod.LinearProgram:
    T = len(prices)
    prog = lpmod.LinearProgram(name=f"profit-max-vl-{esr.id}")
    eta = esr.round_trip
    lam = esr.eta_c / esr.eta_d
    for link in links:
        # link earns eta * pi(t_d) - pi(t_c) - bid per MWh charged
        margin = eta * prices[link.t_discharge - 1] - prices[link.t_charge - 1] - link.bid
        prog.add_variable(f"delta:{link.id}", 0.0, math.inf, objective=-margin)
    for t in range(1, T + 1):
        prog.add_variable(f"pnc:{t}", 0.0, math.inf,
                          objective=prices[t - 1] + esr.charge_bid[t - 1])
        prog.add_variable(f"pnd:{t}", 0.0, math.inf,
                          objective=-(prices[t - 1] - esr.discharge_bid[t - 1]))
    for t in range(1, T + 1):
        lo, hi = soc_bounds(esr, t, T)
        lo_c, hi_c, cap = {}, {}, {f"pnc:{t}": 1.0, f"pnd:{t}": 1.0}
        for u in range(1, t + 1):
            lo_c[f"pnc:{u}"] = esr.eta_c
            lo_c[f"pnd:{u}"] = -1.0 / esr.eta_d
            hi_c[f"pnc:{u}"] = lam
            hi_c[f"pnd:{u}"] = -lam
        for link in links:
            var = f"delta:{link.id}"
            if link.t_charge <= t:
                lo_c[var] = lo_c.get(var, 0.0) + esr.eta_c
                hi_c[var] = hi_c.get(var, 0.0) + lam
            if link.t_discharge <= t:
                lo_c[var] = lo_c.get(var, 0.0) - esr.eta_c
                hi_c[var] = hi_c.get(var, 0.0) - lam * eta
            if link.t_charge == t:
                cap[var] = cap.get(var, 0.0) + 1.0
            if link.t_discharge == t:
                cap[var] = cap.get(var, 0.0) + eta
        prog.add_constraint(f"soc_lo:{t}", lo_c, ">=", lo)
        prog.add_constraint(f"soc_hi:{t}", hi_c, "<=", hi)
        prog.add_constraint(f"pcap:{t}", cap, "<=", esr.power_cap)
    return prog


def profit_max(esr: Esr, prices, variant: ProfitMaxVariant,
               links: tuple[VirtualLink, ...] | None = None) -> AgentResult:
    """Optimal operations and profit for one ESR facing a fixed price series.

    Zero operation is always feasible, so the optimal profit is nonnegative
    for any prices. ``prices`` is the series at the ESR's node, length T.
    """
    T = len(prices)
    if variant is ProfitMaxVariant.VIRTUAL_LINK:
        if links is None:
            links = tuple(VirtualLink(esr.id, tc, td, bid=esr.charge_bid[tc - 1]
                                      + esr.round_trip * esr.discharge_bid[td - 1])
                          for tc in range(1, T + 1) for td in range(1, T + 1) if tc != td)
        prog = _vl_program(esr, prices, links)
    else:
        prog = _ops_program(esr, prices, robust_upper=variant is ProfitMaxVariant.ROBUST)

    sol = lpmod.solve(prog)
    if not sol.is_optimal:
        raise RuntimeError(f"profit maximization for {esr.id} failed: {sol.status.value}")

    if variant is ProfitMaxVariant.VIRTUAL_LINK:
        return AgentResult(
            variant=variant,
            profit=-sol.objective,
            link_flows={l.id: sol.primal[f"delta:{l.id}"] for l in links},
            net_charge=tuple(sol.primal[f"pnc:{t}"] for t in range(1, T + 1)),
            net_discharge=tuple(sol.primal[f"pnd:{t}"] for t in range(1, T + 1)),
            program=prog,
            solution=sol,
        )
    return AgentResult(
        variant=variant,
        profit=-sol.objective,
        charge=tuple(sol.primal[f"pc:{t}"] for t in range(1, T + 1)),
        discharge=tuple(sol.primal[f"pd:{t}"] for t in range(1, T + 1)),
        program=prog,
        solution=sol,
    )


def cleared_profit(result: ClearingResult, scenario: Scenario, esr: Esr) -> float:
    """Profit the cleared allocation earns for ``esr`` at the cleared prices."""
    prices = result.prices[esr.node]
    if result.kind is FormulationKind.VIRTUAL_LINK:
        eta = esr.round_trip
        total = 0.0
        for link in result.links:
            if link.esr != esr.id:
                continue
            flow = result.link_flows[link.id]
            total += (eta * prices[link.t_discharge - 1]
                      - prices[link.t_charge - 1] - link.bid) * flow
        for t in range(scenario.T):
            total += (prices[t] - esr.discharge_bid[t]) * result.net_discharge[esr.id][t]
            total -= (prices[t] + esr.charge_bid[t]) * result.net_charge[esr.id][t]
        return total
    total = 0.0
    for t in range(scenario.T):
        total += (prices[t] - esr.discharge_bid[t]) * result.discharge[esr.id][t]
        total -= (prices[t] + esr.charge_bid[t]) * result.charge[esr.id][t]
    return total


@dataclass
class ConsistencyEntry:
    esr_id: str
    cleared_profit: float
    max_profit: float
    gap: float
    passed: bool


def consistency_check(result: ClearingResult, scenario: Scenario,
                      tol: float = 1e-6) -> list[ConsistencyEntry]:
    """Verify each ESR's cleared operations are profit-maximal at the cleared
    prices (a consequence of LP strong duality). Base results have no storage
    and pass vacuously with an empty list."""
    if result.kind is FormulationKind.BASE:
        return []
    variant = _VARIANT_FOR_KIND[result.kind]
    entries = []
    for esr in scenario.esrs:
        links = None
        if variant is ProfitMaxVariant.VIRTUAL_LINK:
            links = tuple(l for l in result.links if l.esr == esr.id)
        best = profit_max(esr, result.prices[esr.node], variant, links=links)
        earned = cleared_profit(result, scenario, esr)
        gap = best.profit - earned
        entries.append(ConsistencyEntry(
            esr_id=esr.id,
            cleared_profit=earned,
            max_profit=best.profit,
            gap=gap,
            passed=abs(gap) <= tol * (1.0 + abs(best.profit)),
        ))
    return entries

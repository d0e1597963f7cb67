"""Economic accounting and guarantee audits over clearing results.

The audits make the market design's guarantees executable:

* charge/discharge exclusivity (violated only by the relaxed formulation,
  and only below a price floor derived from the service bids),
* duality consistency (cleared storage operations are profit-maximal at the
  cleared prices),
* remuneration identities for the virtual-link market,
* price-volatility summaries for capacity sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agents import ConsistencyEntry, consistency_check
from .formulations import ClearingResult, FormulationKind
from .model import Esr, Scenario, Series

__all__ = [
    "ParticipantProfits",
    "EsrRemuneration",
    "ComplementarityEntry",
    "AuditReport",
    "VolatilityProfile",
    "participant_profits",
    "esr_remuneration",
    "simultaneity_price_floor",
    "complementarity_report",
    "full_audit",
    "volatility",
    "welfare_breakdown",
    "balance_residual",
    "flow_residual",
]


@dataclass
class ParticipantProfits:
    suppliers: dict[str, Series]
    consumers: dict[str, Series]
    lines: dict[str, Series]


def participant_profits(result: ClearingResult, scenario: Scenario) -> ParticipantProfits:
    """Per-interval profits at the cleared prices.

    Suppliers earn (price - bid) * dispatch, consumers (bid - price) * load,
    each directed edge (receiving price - sending price - bid) * flow.
    """
    sup = {}
    for s in scenario.suppliers:
        pi = result.prices[s.node]
        sup[s.id] = tuple((pi[t] - s.bid[t]) * result.supply[s.id][t]
                          for t in range(scenario.T))
    con = {}
    for c in scenario.consumers:
        pi = result.prices[c.node]
        con[c.id] = tuple((c.bid[t] - pi[t]) * result.demand[c.id][t]
                          for t in range(scenario.T))
    lin = {}
    for edge_id, snd, rec, line in scenario.directed_edges():
        pi_s, pi_r = result.prices[snd], result.prices[rec]
        lin[edge_id] = tuple((pi_r[t] - pi_s[t] - line.flow_bid[t]) * result.flows[edge_id][t]
                             for t in range(scenario.T))
    return ParticipantProfits(suppliers=sup, consumers=con, lines=lin)


@dataclass
class EsrRemuneration:
    """Gross remuneration of one ESR in the virtual-link market and its split.

    ``total`` = link term + net term; it equals the gross market cashflow
    (discharge revenue minus charge payments). ``net_profit`` subtracts the
    bid costs of links and net operations.
    """

    esr_id: str
    link_term: float
    net_term: float
    total: float
    bid_cost: float
    net_profit: float
    cashflow: float


def esr_remuneration(result: ClearingResult, scenario: Scenario) -> dict[str, EsrRemuneration]:
    if result.kind is not FormulationKind.VIRTUAL_LINK:
        raise ValueError("remuneration accounting requires a virtual-link result")
    out = {}
    for esr in scenario.esrs:
        pi = result.prices[esr.node]
        eta = esr.round_trip
        link_term = 0.0
        bid_cost = 0.0
        for link in result.links:
            if link.esr != esr.id:
                continue
            flow = result.link_flows[link.id]
            link_term += (eta * pi[link.t_discharge - 1] - pi[link.t_charge - 1]) * flow
            bid_cost += link.bid * flow
        net_term = 0.0
        for t in range(scenario.T):
            net_term += pi[t] * (result.net_discharge[esr.id][t] - result.net_charge[esr.id][t])
            bid_cost += (esr.charge_bid[t] * result.net_charge[esr.id][t]
                         + esr.discharge_bid[t] * result.net_discharge[esr.id][t])
        cashflow = sum(pi[t] * (result.discharge[esr.id][t] - result.charge[esr.id][t])
                       for t in range(scenario.T))
        total = link_term + net_term
        out[esr.id] = EsrRemuneration(
            esr_id=esr.id,
            link_term=link_term,
            net_term=net_term,
            total=total,
            bid_cost=bid_cost,
            net_profit=total - bid_cost,
            cashflow=cashflow,
        )
    return out


def simultaneity_price_floor(esr: Esr, t: int) -> float:
    """Price below which simultaneous charge and discharge can pay off.

    At or above this floor an optimal dispatch never charges and discharges
    in the same interval; a perfectly efficient unit never benefits, so the
    floor is minus infinity.
    """
    eta = esr.round_trip
    if eta >= 1.0:
        return -math.inf
    return -(eta * esr.discharge_bid[t - 1] + esr.charge_bid[t - 1]) / (1.0 - eta)


@dataclass
class ComplementarityEntry:
    esr_id: str
    t: int
    charge: float
    discharge: float
    product: float
    violated: bool
    price: float
    price_floor: float
    floor_violated: bool


@dataclass
class AuditReport:
    kind: FormulationKind
    complementarity: list[ComplementarityEntry] = field(default_factory=list)
    duality: list[ConsistencyEntry] = field(default_factory=list)

    @property
    def complementarity_violations(self) -> list[ComplementarityEntry]:
        return [e for e in self.complementarity if e.violated]

    @property
    def passed(self) -> bool:
        return (not self.complementarity_violations
                and all(e.passed for e in self.duality))


def complementarity_report(result: ClearingResult, scenario: Scenario,
                           tol: float = 1e-9) -> AuditReport:
    """Flag every interval where an ESR both charges and discharges, and
    evaluate the price floor at every (esr, t).

    A violation is charge * discharge > tol * power_cap**2. Violations can
    only occur below the price floor (the converse does not hold; prices can
    break the floor while the dispatch stays exclusive).
    """
    report = AuditReport(kind=result.kind)
    for esr in scenario.esrs:
        pi = result.prices[esr.node]
        for t in range(1, scenario.T + 1):
            pc = result.charge[esr.id][t - 1]
            pd = result.discharge[esr.id][t - 1]
            product = pc * pd
            floor = simultaneity_price_floor(esr, t)
            report.complementarity.append(ComplementarityEntry(
                esr_id=esr.id,
                t=t,
                charge=pc,
                discharge=pd,
                product=product,
                violated=product > tol * esr.power_cap**2,
                price=pi[t - 1],
                price_floor=floor,
                floor_violated=pi[t - 1] < floor,
            ))
    return report


def full_audit(result: ClearingResult, scenario: Scenario,
               tol: float = 1e-9, duality_tol: float = 1e-6) -> AuditReport:
    """Complementarity report plus the per-ESR duality consistency check."""
    report = complementarity_report(result, scenario, tol=tol)
    report.duality = consistency_check(result, scenario, tol=duality_tol)
    return report


@dataclass
class VolatilityProfile:
    """Population standard deviations of nodal prices: over time per node,
    and over nodes per interval."""

    temporal: dict[str, float]
    spatial: Series

    @property
    def system_mean_temporal(self) -> float:
        return float(np.mean(list(self.temporal.values())))


def volatility(result: ClearingResult) -> VolatilityProfile:
    nodes = sorted(result.prices)
    matrix = np.array([result.prices[n] for n in nodes])  # nodes x T
    temporal = {n: float(np.std(matrix[i, :])) for i, n in enumerate(nodes)}
    spatial = tuple(float(v) for v in np.std(matrix, axis=0))
    return VolatilityProfile(temporal=temporal, spatial=spatial)


def welfare_breakdown(result: ClearingResult, scenario: Scenario) -> dict[str, float]:
    """Welfare = demand value - supply cost - transmission cost - storage bid cost."""
    demand_value = sum(c.bid[t] * result.demand[c.id][t]
                       for c in scenario.consumers for t in range(scenario.T))
    supply_cost = sum(s.bid[t] * result.supply[s.id][t]
                      for s in scenario.suppliers for t in range(scenario.T))
    transmission_cost = sum(line.flow_bid[t] * result.flows[edge_id][t]
                            for edge_id, _, _, line in scenario.directed_edges()
                            for t in range(scenario.T))
    if result.kind is FormulationKind.VIRTUAL_LINK:
        esr_bid_cost = sum(l.bid * result.link_flows[l.id] for l in result.links)
        esr_bid_cost += sum(b.charge_bid[t] * result.net_charge[b.id][t]
                            + b.discharge_bid[t] * result.net_discharge[b.id][t]
                            for b in scenario.esrs for t in range(scenario.T))
    else:
        esr_bid_cost = sum(b.charge_bid[t] * result.charge.get(b.id, (0.0,) * scenario.T)[t]
                           + b.discharge_bid[t] * result.discharge.get(b.id, (0.0,) * scenario.T)[t]
                           for b in scenario.esrs for t in range(scenario.T))
    return {
        "demand_value": demand_value,
        "supply_cost": supply_cost,
        "transmission_cost": transmission_cost,
        "esr_bid_cost": esr_bid_cost,
        "welfare": demand_value - supply_cost - transmission_cost - esr_bid_cost,
    }


def balance_residual(result: ClearingResult, scenario: Scenario) -> float:
    """Largest absolute nodal imbalance (injections minus withdrawals)."""
    worst = 0.0
    edges = scenario.directed_edges()
    for n in scenario.nodes:
        for t in range(scenario.T):
            acc = 0.0
            for edge_id, snd, rec, _ in edges:
                if rec == n.id:
                    acc += result.flows[edge_id][t]
                if snd == n.id:
                    acc -= result.flows[edge_id][t]
            for s in scenario.suppliers_at(n.id):
                acc += result.supply[s.id][t]
            for c in scenario.consumers_at(n.id):
                acc -= result.demand[c.id][t]
            for b in scenario.esrs_at(n.id):
                if result.charge:
                    acc += result.discharge[b.id][t] - result.charge[b.id][t]
            worst = max(worst, abs(acc))
    return worst


def flow_residual(result: ClearingResult, scenario: Scenario) -> float:
    """Largest absolute deviation from flow = susceptance * angle difference."""
    worst = 0.0
    for line in scenario.lines:
        for t in range(scenario.T):
            net = result.flows[line.id + "+"][t] - result.flows[line.id + "-"][t]
            dtheta = result.angles[line.snd][t] - result.angles[line.rec][t]
            worst = max(worst, abs(net - line.susceptance * dtheta))
    return worst

"""Virtual links: temporal energy transfer inside one storage unit.

A virtual link moves energy charged at one interval to a discharge at a
different interval of the same ESR, losing the round-trip efficiency factor
on the way out. This module enumerates and prices links, and converts
between the link representation (flows + net charge/discharge) and plain
charge/discharge series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Esr, Scenario, Series

__all__ = [
    "VirtualLink",
    "VirtualFlowPlan",
    "cost_recovery_bid",
    "enumerate_links",
    "compose",
    "decompose",
    "activation_threshold",
]

_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class VirtualLink:
    """Directed transfer for ESR ``esr``: charge at ``t_charge`` MWh-for-MWh,
    discharge ``round_trip * flow`` at ``t_discharge``. The bid is $/MWh
    charged. Transfers may run backward in time (discharge before charge)."""

    esr: str
    t_charge: int
    t_discharge: int
    bid: float = 0.0

    def __post_init__(self):
        if self.t_charge == self.t_discharge:
            raise ValueError(f"virtual link for {self.esr!r} needs distinct "
                             f"charge/discharge intervals, got {self.t_charge} twice")
        if self.t_charge < 1 or self.t_discharge < 1:
            raise ValueError("link intervals must be >= 1")

    @property
    def id(self) -> str:
        return f"{self.esr}@{self.t_charge}-{self.t_discharge}"


def cost_recovery_bid(esr: Esr, t_charge: int, t_discharge: int) -> float:
    """Link bid that exactly recovers the underlying service bids: the charge
    bid at the charge interval plus the round-trip-discounted discharge bid
    at the discharge interval."""
    return (esr.charge_bid[t_charge - 1]
            + esr.round_trip * esr.discharge_bid[t_discharge - 1])


def enumerate_links(scenario: Scenario, bid_fn=cost_recovery_bid) -> tuple[VirtualLink, ...]:
    """One link per (esr, t_charge, t_discharge) ordered pair with distinct
    intervals; |esrs| * T * (T-1) links in deterministic order."""
    T = scenario.T
    links = []
    for esr in scenario.esrs:
        for tc in range(1, T + 1):
            for td in range(1, T + 1):
                if tc != td:
                    links.append(VirtualLink(esr.id, tc, td, bid=bid_fn(esr, tc, td)))
    return tuple(links)


@dataclass(frozen=True)
class VirtualFlowPlan:
    """Cleared link flows plus per-ESR net charge/discharge series."""

    T: int
    links: tuple[VirtualLink, ...]
    flows: tuple[float, ...]
    net_charge: dict[str, Series] = field(default_factory=dict)
    net_discharge: dict[str, Series] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.links) != len(self.flows):
            raise ValueError("flows must align with links")

    def total_bid_cost(self) -> float:
        return sum(l.bid * f for l, f in zip(self.links, self.flows))


def compose(plan: VirtualFlowPlan, esrs: tuple[Esr, ...]) -> dict[str, tuple[Series, Series]]:
    """Map a flow plan back to (charge, discharge) series per ESR.

    charge_t    = sum of outgoing link flows at t  + net_charge_t
    discharge_t = sum of round-trip-scaled incoming flows at t + net_discharge_t
    """
    by_id = {b.id: b for b in esrs}
    out: dict[str, tuple[Series, Series]] = {}
    for esr_id in sorted({l.esr for l in plan.links}
                         | set(plan.net_charge) | set(plan.net_discharge)):
        esr = by_id[esr_id]
        pc = [0.0] * plan.T
        pd = [0.0] * plan.T
        for link, flow in zip(plan.links, plan.flows):
            if link.esr != esr_id:
                continue
            pc[link.t_charge - 1] += flow
            pd[link.t_discharge - 1] += esr.round_trip * flow
        for t, v in enumerate(plan.net_charge.get(esr_id, ())):
            pc[t] += v
        for t, v in enumerate(plan.net_discharge.get(esr_id, ())):
            pd[t] += v
        out[esr_id] = (tuple(pc), tuple(pd))
    return out


def decompose(charge, discharge, esr: Esr, tol: float = 1e-9) -> VirtualFlowPlan:
    """Split a feasible (charge, discharge) series into net operations and
    link transfers whose composition reproduces the input exactly.

    The net SOC change over the horizon decides the net operations: a
    positive change is assigned to net charging, a negative one to net
    discharging, never both, placed at the earliest intervals with spare
    capacity. The residual sources (charge minus net charge) and sinks
    (discharge minus net discharge) are then matched chronologically into
    link flows; the round-trip efficiency balances sources against sinks.
    """
    pc = [float(v) for v in charge]
    pd = [float(v) for v in discharge]
    T = len(pc)
    if len(pd) != T:
        raise ValueError("charge/discharge series lengths differ")
    scale = max([1.0] + pc + pd)
    if min(pc + pd) < -tol * scale:
        raise ValueError("charge/discharge series must be nonnegative")
    for t in range(T):
        if pc[t] + pd[t] > esr.power_cap + tol * scale:
            raise ValueError(f"power cap exceeded at interval {t + 1}: "
                             f"{pc[t] + pd[t]} > {esr.power_cap}")

    delta_soc = esr.eta_c * sum(pc) - sum(pd) / esr.eta_d
    pnc = [0.0] * T
    pnd = [0.0] * T
    if delta_soc > _ZERO_TOL * scale:
        need = delta_soc / esr.eta_c  # in charge-side MWh
        for t in range(T):
            take = min(need, pc[t])
            pnc[t] = take
            need -= take
            if need <= _ZERO_TOL * scale:
                break
    elif delta_soc < -_ZERO_TOL * scale:
        need = -delta_soc * esr.eta_d  # in discharge-side MWh
        for t in range(T):
            take = min(need, pd[t])
            pnd[t] = take
            need -= take
            if need <= _ZERO_TOL * scale:
                break

    sources = [pc[t] - pnc[t] for t in range(T)]
    sinks = [pd[t] - pnd[t] for t in range(T)]

    eta = esr.round_trip
    links: list[VirtualLink] = []
    flows: list[float] = []
    for tc in range(T):
        if sources[tc] <= tol * scale:
            continue
        for td in range(T):
            if td == tc or sinks[td] <= tol * scale:
                continue
            move = min(sources[tc], sinks[td] / eta)
            if move <= 0.0:
                continue
            links.append(VirtualLink(esr.id, tc + 1, td + 1,
                                     bid=cost_recovery_bid(esr, tc + 1, td + 1)))
            flows.append(move)
            sources[tc] -= move
            sinks[td] -= move * eta
            if sources[tc] <= tol * scale:
                break

    leftover = max(max(sources, default=0.0), max(sinks, default=0.0))
    if leftover > tol * max(scale, 1.0) * 10:
        raise ValueError("series cannot be decomposed into virtual links "
                         f"(stranded {leftover:.3e}; simultaneous charge/discharge?)")

    return VirtualFlowPlan(
        T=T,
        links=tuple(links),
        flows=tuple(flows),
        net_charge={esr.id: tuple(pnc)},
        net_discharge={esr.id: tuple(pnd)},
    )


def activation_threshold(link: VirtualLink, esr: Esr,
                         price_at_charge: float) -> tuple[float, float]:
    """Minimum price spread that makes the link profitable, and its
    sensitivity to the round-trip efficiency.

    The link earns ``eta * price_discharge - price_charge - bid`` per MWh
    charged, so it activates when the spread  price_discharge - price_charge
    reaches ``(1 - eta)/eta * price_charge + bid/eta``. The derivative of the
    threshold with respect to eta is ``-(price_charge + bid)/eta**2``: above
    the indifference point ``price_charge = -bid``, more efficient storage
    activates on smaller spreads.
    """
    eta = esr.round_trip
    threshold = (1.0 - eta) / eta * price_at_charge + link.bid / eta
    sensitivity = -(price_at_charge + link.bid) / eta**2
    return threshold, sensitivity

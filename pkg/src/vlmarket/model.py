"""Domain types for the space-time market and storage physics.

A :class:`Scenario` bundles everything a clearing formulation needs: the
hourly horizon, the transmission network, and the bid/capacity data of
suppliers, consumers, and energy storage resources (ESRs). All per-interval
quantities are stored as tuples of length ``T``; constructors accept a
scalar and broadcast it when the scenario is assembled.

Instances are immutable after construction and safe to share across
concurrent solver invocations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "Horizon",
    "Node",
    "TransmissionLine",
    "Supplier",
    "Consumer",
    "Esr",
    "Scenario",
    "Violation",
    "validate",
    "soc_bounds",
]

#: characters that would collide with the row/column naming scheme of the LP layer
_FORBIDDEN_ID_CHARS = set(": \t\n")

Series = tuple[float, ...]


def _as_series(value, T: int) -> Series:
    """Broadcast a scalar (or pass through a length-T sequence) to a tuple."""
    if isinstance(value, (int, float)):
        return (float(value),) * T
    out = tuple(float(v) for v in value)
    return out


@dataclass(frozen=True)
class Horizon:
    """Hourly intervals indexed 1..T; charge/discharge interval length is 1 h."""

    T: int

    def __post_init__(self):
        if not isinstance(self.T, int) or self.T < 1:
            raise ValueError(f"horizon length must be a positive integer, got {self.T!r}")

    @property
    def intervals(self) -> range:
        return range(1, self.T + 1)


@dataclass(frozen=True)
class Node:
    id: str


@dataclass(frozen=True)
class TransmissionLine:
    """Undirected line, cleared as two directed edges ``id+`` and ``id-``.

    ``susceptance`` is in MW/rad so that flow = susceptance * angle difference;
    the effective angle cap per interval is min(flow_cap/susceptance, angle_cap).
    """

    id: str
    snd: str
    rec: str
    susceptance: float
    flow_cap: Series | float
    flow_bid: Series | float = 0.0
    angle_cap: Series | float = math.inf

    def effective_angle_cap(self, t: int) -> float:
        return min(self.flow_cap[t - 1] / self.susceptance, self.angle_cap[t - 1])


@dataclass(frozen=True)
class Supplier:
    id: str
    node: str
    capacity: Series | float
    bid: Series | float
    ramp_limit: float | None = None


@dataclass(frozen=True)
class Consumer:
    id: str
    node: str
    max_demand: Series | float
    bid: Series | float


@dataclass(frozen=True)
class Esr:
    """Energy storage resource.

    State of charge evolves as s_t = s_{t-1} + eta_c*charge - discharge/eta_d,
    must stay in [soc_min, soc_max], and must end the horizon at or above
    soc_init (a market rule, not a physical one).
    """

    id: str
    node: str
    eta_c: float
    eta_d: float
    soc_min: float
    soc_max: float
    soc_init: float
    power_cap: float
    charge_bid: Series | float = 0.0
    discharge_bid: Series | float = 0.0

    @property
    def round_trip(self) -> float:
        """Round-trip efficiency of a paired charge/discharge action."""
        return self.eta_c * self.eta_d


def soc_bounds(esr: Esr, t: int, T: int) -> tuple[float, float]:
    """Bounds on the cumulative SOC change after interval ``t``.

    The lower bound is soc_min - soc_init before the final interval and 0 at
    t = T, which folds the end-of-horizon restoration requirement into the
    running-bound form. The upper bound is soc_max - soc_init throughout.
    """
    if not 1 <= t <= T:
        raise ValueError(f"interval {t} outside 1..{T}")
    lo = 0.0 if t == T else esr.soc_min - esr.soc_init
    return (lo, esr.soc_max - esr.soc_init)


@dataclass(frozen=True)
class Violation:
    """One invariant violation; validation returns data, never raises."""

    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class Scenario:
    horizon: Horizon
    nodes: tuple[Node, ...]
    lines: tuple[TransmissionLine, ...] = ()
    suppliers: tuple[Supplier, ...] = ()
    consumers: tuple[Consumer, ...] = ()
    esrs: tuple[Esr, ...] = ()

    def __post_init__(self):
        T = self.horizon.T
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(
            self, "lines",
            tuple(replace(l, flow_cap=_as_series(l.flow_cap, T),
                          flow_bid=_as_series(l.flow_bid, T),
                          angle_cap=_as_series(l.angle_cap, T))
                  for l in self.lines))
        object.__setattr__(
            self, "suppliers",
            tuple(replace(s, capacity=_as_series(s.capacity, T), bid=_as_series(s.bid, T))
                  for s in self.suppliers))
        object.__setattr__(
            self, "consumers",
            tuple(replace(c, max_demand=_as_series(c.max_demand, T), bid=_as_series(c.bid, T))
                  for c in self.consumers))
        object.__setattr__(
            self, "esrs",
            tuple(replace(b, charge_bid=_as_series(b.charge_bid, T),
                          discharge_bid=_as_series(b.discharge_bid, T))
                  for b in self.esrs))

    @property
    def T(self) -> int:
        return self.horizon.T

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def directed_edges(self) -> list[tuple[str, str, str, TransmissionLine]]:
        """(edge id, sending node, receiving node, line) for every directed edge.

        Each undirected line contributes a forward edge ``<id>+`` and a
        reverse edge ``<id>-``.
        """
        edges = []
        for line in self.lines:
            edges.append((line.id + "+", line.snd, line.rec, line))
            edges.append((line.id + "-", line.rec, line.snd, line))
        return edges

    def suppliers_at(self, node: str) -> list[Supplier]:
        return [s for s in self.suppliers if s.node == node]

    def consumers_at(self, node: str) -> list[Consumer]:
        return [c for c in self.consumers if c.node == node]

    def esrs_at(self, node: str) -> list[Esr]:
        return [b for b in self.esrs if b.node == node]


def _check_series(violations, code, subject, name, series, T, allow_inf=False):
    if len(series) != T:
        violations.append(Violation(code, subject, f"{name} has {len(series)} entries, expected {T}"))
        return
    for t, v in enumerate(series, start=1):
        if math.isnan(v) or v == -math.inf or (v == math.inf and not allow_inf):
            violations.append(Violation(code, subject, f"{name}[{t}] = {v} is not admissible"))
        elif v < 0.0:
            violations.append(Violation(code, subject, f"{name}[{t}] = {v} < 0"))


def _check_id(violations, kind, ident, seen):
    if not ident or _FORBIDDEN_ID_CHARS & set(ident):
        violations.append(Violation("bad-id", ident or "<empty>",
                                    f"{kind} id must be nonempty without ':' or whitespace"))
    if ident in seen:
        violations.append(Violation("duplicate-id", ident, f"{kind} id appears more than once"))
    seen.add(ident)


def validate(scenario: Scenario) -> list[Violation]:
    """Collect every invariant violation; an empty list means the scenario is valid."""
    v: list[Violation] = []
    T = scenario.T
    seen: set[str] = set()
    node_ids = set()
    for n in scenario.nodes:
        _check_id(v, "node", n.id, seen)
        node_ids.add(n.id)

    for line in scenario.lines:
        _check_id(v, "line", line.id, seen)
        if line.snd not in node_ids:
            v.append(Violation("dangling-node", line.id, f"sending node {line.snd!r} unknown"))
        if line.rec not in node_ids:
            v.append(Violation("dangling-node", line.id, f"receiving node {line.rec!r} unknown"))
        if line.snd == line.rec:
            v.append(Violation("self-loop", line.id, "line endpoints must differ"))
        if not (line.susceptance > 0 and math.isfinite(line.susceptance)):
            v.append(Violation("bad-susceptance", line.id, f"susceptance {line.susceptance} must be > 0"))
        _check_series(v, "bad-flow-cap", line.id, "flow_cap", line.flow_cap, T, allow_inf=True)
        _check_series(v, "bad-flow-bid", line.id, "flow_bid", line.flow_bid, T)
        _check_series(v, "bad-angle-cap", line.id, "angle_cap", line.angle_cap, T, allow_inf=True)

    for s in scenario.suppliers:
        _check_id(v, "supplier", s.id, seen)
        if s.node not in node_ids:
            v.append(Violation("dangling-node", s.id, f"node {s.node!r} unknown"))
        _check_series(v, "bad-capacity", s.id, "capacity", s.capacity, T)
        _check_series(v, "bad-bid", s.id, "bid", s.bid, T)
        if s.ramp_limit is not None and s.ramp_limit < 0:
            v.append(Violation("bad-ramp", s.id, f"ramp_limit {s.ramp_limit} must be >= 0"))

    consumer_nodes: set[str] = set()
    for c in scenario.consumers:
        _check_id(v, "consumer", c.id, seen)
        if c.node not in node_ids:
            v.append(Violation("dangling-node", c.id, f"node {c.node!r} unknown"))
        elif c.node in consumer_nodes:
            v.append(Violation("multiple-consumers", c.id, f"node {c.node!r} already has a consumer"))
        consumer_nodes.add(c.node)
        _check_series(v, "bad-demand", c.id, "max_demand", c.max_demand, T)
        _check_series(v, "bad-bid", c.id, "bid", c.bid, T)

    for b in scenario.esrs:
        _check_id(v, "esr", b.id, seen)
        if b.node not in node_ids:
            v.append(Violation("dangling-node", b.id, f"node {b.node!r} unknown"))
        if not (0.0 < b.eta_c <= 1.0) or not (0.0 < b.eta_d <= 1.0):
            v.append(Violation("bad-efficiency", b.id,
                               f"efficiencies ({b.eta_c}, {b.eta_d}) must lie in (0, 1]"))
        if not b.soc_min <= b.soc_init <= b.soc_max:
            v.append(Violation("soc-out-of-bounds", b.id,
                               f"need soc_min <= soc_init <= soc_max, got "
                               f"({b.soc_min}, {b.soc_init}, {b.soc_max})"))
        if b.power_cap < 0:
            v.append(Violation("bad-power-cap", b.id, f"power_cap {b.power_cap} must be >= 0"))
        _check_series(v, "bad-bid", b.id, "charge_bid", b.charge_bid, T)
        _check_series(v, "bad-bid", b.id, "discharge_bid", b.discharge_bid, T)

    return v

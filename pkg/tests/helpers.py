"""Shared test utilities: independent oracles and the randomized scenario corpus."""

from __future__ import annotations

import itertools

import numpy as np

from vlmarket.io import builtin_single_node
from vlmarket.model import Consumer, Esr, Horizon, Node, Scenario, Supplier, TransmissionLine

CORPUS_SIZE = 200
CORPUS_MASTER_SEED = 20240517


def single_node_no_esr(ramp: float = 25.0) -> Scenario:
    """The 3-hour single-node case with the storage unit removed."""
    base = builtin_single_node(1)
    return Scenario(
        horizon=base.horizon,
        nodes=base.nodes,
        suppliers=(Supplier("gen", "n1", capacity=50.0,
                            bid=(5.0, 20.0, 10.0), ramp_limit=ramp),),
        consumers=base.consumers,
        esrs=(),
    )


def ramp_dispatch_oracle(caps, values, costs, ramp) -> float:
    """Brute-force welfare for a single-node, no-storage market.

    With one node and no storage, served load equals generation interval by
    interval, so the problem reduces to max sum((value-cost)*x) over
    0 <= x_t <= cap_t with |x_{t+1} - x_t| <= ramp. Enumerate all vertices
    (every T-subset of active constraints), keep the feasible ones, and take
    the best objective. Independent of the LP code path.
    """
    T = len(caps)
    margins = np.array([v - c for v, c in zip(values, costs)])
    constraints = []  # rows (a, b) meaning a @ x = b when active, a @ x <= b otherwise
    for t in range(T):
        e = np.zeros(T)
        e[t] = -1.0
        constraints.append((e.copy(), 0.0))          # -x_t <= 0
        constraints.append((-e.copy(), float(caps[t])))  # x_t <= cap
    for t in range(T - 1):
        a = np.zeros(T)
        a[t + 1], a[t] = 1.0, -1.0
        constraints.append((a.copy(), float(ramp)))
        constraints.append((-a.copy(), float(ramp)))

    best = -np.inf
    for combo in itertools.combinations(range(len(constraints)), T):
        A = np.array([constraints[i][0] for i in combo])
        b = np.array([constraints[i][1] for i in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        feasible = all(a @ x <= bb + 1e-9 for a, bb in constraints)
        if feasible:
            best = max(best, float(margins @ x))
    return best


def random_scenario(seed: int) -> Scenario:
    """One randomized market: 1-5 nodes, T <= 12, ramp-limited suppliers able
    to force negative prices, storage sometimes initialized near full."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 13))
    n_nodes = int(rng.integers(1, 6))
    node_ids = [f"n{i}" for i in range(1, n_nodes + 1)]
    nodes = tuple(Node(i) for i in node_ids)

    lines = []
    for i in range(1, n_nodes):  # spanning tree keeps the network connected
        other = node_ids[int(rng.integers(0, i))]
        lines.append(TransmissionLine(
            id=f"L{i}",
            snd=node_ids[i],
            rec=other,
            susceptance=float(rng.uniform(5.0, 50.0)),
            flow_cap=float(rng.uniform(5.0, 60.0)),
            flow_bid=float(rng.uniform(0.0, 1.0)) if rng.random() < 0.3 else 0.0,
        ))
    if n_nodes >= 3 and rng.random() < 0.5:
        a, b = rng.choice(n_nodes, size=2, replace=False)
        lines.append(TransmissionLine(
            id="Lx",
            snd=node_ids[int(a)],
            rec=node_ids[int(b)],
            susceptance=float(rng.uniform(5.0, 50.0)),
            flow_cap=float(rng.uniform(5.0, 60.0)),
        ))

    def series(lo, hi, varying_p=0.5):
        if rng.random() < varying_p:
            return tuple(float(v) for v in rng.uniform(lo, hi, size=T))
        return float(rng.uniform(lo, hi))

    suppliers = []
    for i in range(int(rng.integers(1, 4))):
        cap = series(20.0, 60.0)
        mean_cap = np.mean(cap) if isinstance(cap, tuple) else cap
        ramp = float(rng.uniform(0.05, 0.4) * mean_cap) if rng.random() < 0.7 else None
        suppliers.append(Supplier(
            id=f"g{i + 1}",
            node=node_ids[int(rng.integers(0, n_nodes))],
            capacity=cap,
            bid=series(1.0, 50.0),
            ramp_limit=ramp,
        ))

    consumers = []
    for i, node in enumerate(node_ids):
        if rng.random() < 0.8 or (not consumers and i == n_nodes - 1):
            consumers.append(Consumer(
                id=f"load{i + 1}",
                node=node,
                max_demand=series(0.0, 50.0, varying_p=0.8),
                bid=series(10.0, 120.0),
            ))

    esrs = []
    for i in range(int(rng.integers(1, 3))):
        soc_max = float(rng.uniform(10.0, 60.0))
        soc_min = float(rng.uniform(0.0, soc_max / 4)) if rng.random() < 0.3 else 0.0
        if rng.random() < 0.3:  # start near full so the conservative bound can bind
            soc_init = soc_max - float(rng.uniform(0.0, 0.1 * (soc_max - soc_min)))
        else:
            soc_init = float(rng.uniform(soc_min, soc_max))
        esrs.append(Esr(
            id=f"b{i + 1}",
            node=node_ids[int(rng.integers(0, n_nodes))],
            eta_c=float(rng.uniform(0.6, 1.0)),
            eta_d=float(rng.uniform(0.6, 1.0)),
            soc_min=soc_min,
            soc_max=soc_max,
            soc_init=soc_init,
            power_cap=float(rng.uniform(2.0, 15.0)),
            charge_bid=float(rng.uniform(0.05, 0.5)),
            discharge_bid=float(rng.uniform(0.05, 0.5)),
        ))

    return Scenario(horizon=Horizon(T), nodes=nodes, lines=tuple(lines),
                    suppliers=tuple(suppliers), consumers=tuple(consumers),
                    esrs=tuple(esrs))


def corpus() -> list[Scenario]:
    """The 200-scenario acceptance corpus: the four single-node study
    scenarios plus seeded randomized markets. Deterministic."""
    scenarios = [builtin_single_node(i) for i in (1, 2, 3, 4)]
    rng = np.random.default_rng(CORPUS_MASTER_SEED)
    seeds = rng.integers(0, 2**31 - 1, size=CORPUS_SIZE - len(scenarios))
    scenarios.extend(random_scenario(int(s)) for s in seeds)
    return scenarios


def grid_profit_oracle(esr: Esr, prices, steps: int = 9) -> float:
    """Best profit over a coarse grid of two-interval charge/discharge plans
    under the conservative SOC bound; a cheap lower-bound oracle."""
    T = len(prices)
    best = 0.0
    levels = np.linspace(0.0, esr.power_cap, steps)
    lam = esr.eta_c / esr.eta_d
    for tc in range(T):
        for td in range(T):
            if tc == td:
                continue
            for c in levels:
                for d in levels:
                    pc = np.zeros(T)
                    pd = np.zeros(T)
                    pc[tc] = c
                    pd[td] = d
                    run = np.cumsum(esr.eta_c * pc - pd / esr.eta_d)
                    run_rob = np.cumsum(lam * (pc - pd))
                    ok = True
                    for t in range(T):
                        lo = 0.0 if t == T - 1 else esr.soc_min - esr.soc_init
                        if run[t] < lo - 1e-9 or run_rob[t] > esr.soc_max - esr.soc_init + 1e-9:
                            ok = False
                            break
                    if not ok:
                        continue
                    profit = sum((prices[t] - esr.discharge_bid[t]) * pd[t]
                                 - (prices[t] + esr.charge_bid[t]) * pc[t]
                                 for t in range(T))
                    best = max(best, profit)
    return best

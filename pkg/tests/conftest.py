import random

import networkx as nx
import pytest

from adhocsim.scenario import static_network
from adhocsim.traffic import CbrFlow

# acceptance verdicts, echoed once more at the end of the session
VERDICTS: list[tuple[int, str]] = []


def record_verdict(number: int, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    VERDICTS.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(VERDICTS, key=lambda v: v[0]):
            terminalreporter.write_line(line)


def connected_layout(seed, n=25, side=1000.0, radius=250.0):
    """Uniform placement in a square, redrawn until the unit-disk graph is connected."""
    rng = random.Random(seed)
    while True:
        pos = {i: (rng.uniform(0, side), rng.uniform(0, side)) for i in range(n)}
        g = nx.random_geometric_graph(n, radius, pos=pos)
        if nx.is_connected(g):
            return [pos[i] for i in range(n)], g, rng


def disjoint_pairs(rng, n, count):
    ends = rng.sample(range(n), 2 * count)
    return list(zip(ends[:count], ends[count:]))


def run_static(coords, protocol, flows, start, seed=1, config=None, packets=20, interval=1.0,
               settle=10.0):
    """Run low-rate CBR flows over a fixed layout on a perfect channel."""
    net = static_network(coords, protocol, config, seed=seed)
    stop = start + packets * interval - 1e-9
    for i, (s, d) in enumerate(flows):
        net.add_flow(CbrFlow(s, d, start=start + 0.1 * i, interval=interval, stop=stop + 0.1 * i))
    net.run(stop + settle)
    return net


def flow_hops(net):
    """flow id -> list of (send time, hop count) for delivered packets."""
    sent = {uid: t for uid, t, _ in net.ledger.latencies}
    out = {}
    for uid, h in net.ledger.hops.items():
        out.setdefault(net.ledger.flow_of[uid], []).append((sent[uid], h))
    return out


@pytest.fixture
def chain():
    """Four nodes 200 m apart on a line."""
    return [(0.0, 0.0), (200.0, 0.0), (400.0, 0.0), (600.0, 0.0)]

"""In-memory scenario description consumed by :func:`sdtp.sim.network.run`.

The harness builds these from YAML; tests usually build them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import networkx as nx

PROTOCOLS = ("sdtp", "tcp")


class ScenarioInvalid(ValueError):
    """Raised with the dotted location of the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    delay_ms: float
    loss: float = 0.0  # per direction


@dataclass(frozen=True)
class DropSpec:
    link: str  # "S2->S3"
    kind: str
    seq: int
    conn: Optional[int] = None


@dataclass(frozen=True)
class ConnectionSpec:
    conn_id: int
    src: str
    dst: str
    packets: int = 1000
    send_interval_ms: float = 15.0
    payload_bytes: int = 0
    start_ms: float = 0.0
    slice_id: int = 1


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    switches: tuple
    hosts: tuple
    links: tuple  # of LinkSpec
    connections: tuple  # of ConnectionSpec
    protocol: str = "sdtp"
    seed: int = 1
    loss_rate: Optional[float] = None  # end-to-end target, spread over core links
    control_delay_ms: float = 10.0
    k: int = 2
    loss_threshold: float = 0.0
    cn_period_ms: Optional[float] = None
    cache_capacity: int = 4096
    initial_rto_ms: Optional[float] = None
    t_fire_limit: int = 3
    processing_us: int = 0
    horizon_ms: Optional[float] = None
    drops: tuple = ()
    syn_timeout_ms: float = 1000.0
    max_retries: int = 3
    rto_min_ms: float = 200.0
    rto_initial_ms: float = 1000.0
    dupack_threshold: int = 3

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    # -- derived

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.switches)
        g.add_nodes_from(self.hosts)
        for ln in self.links:
            g.add_edge(ln.a, ln.b, weight=ln.delay_ms)
        return g

    def edge_of(self, host: str) -> str:
        nbrs = [ln.b if ln.a == host else ln.a for ln in self.links if host in (ln.a, ln.b)]
        return nbrs[0]

    def core_hops(self) -> int:
        """Switch-to-switch links on the first connection's route."""
        c = self.connections[0]
        path = nx.dijkstra_path(self.graph(), c.src, c.dst, weight="weight")
        return len(path) - 3

    def per_link_loss(self) -> Optional[float]:
        if self.loss_rate is None:
            return None
        return per_link_loss(self.loss_rate, self.core_hops())

    def effective_links(self) -> List[LinkSpec]:
        q = self.per_link_loss()
        if q is None:
            return list(self.links)
        hosts = set(self.hosts)
        return [ln if (ln.a in hosts or ln.b in hosts) else replace(ln, loss=q) for ln in self.links]

    def horizon_us(self) -> int:
        if self.horizon_ms is not None:
            return int(round(self.horizon_ms * 1000))
        span = max(c.start_ms + c.packets * c.send_interval_ms for c in self.connections)
        return int(round((span + 120_000) * 1000))

    def validate(self) -> "Scenario":
        if self.protocol not in PROTOCOLS:
            raise ScenarioInvalid("protocol", f"must be one of {PROTOCOLS}, got {self.protocol!r}")
        names = list(self.switches) + list(self.hosts)
        if len(set(names)) != len(names):
            raise ScenarioInvalid("topology.nodes", "duplicate node id")
        known = set(names)
        for i, ln in enumerate(self.links):
            for end in ("a", "b"):
                if getattr(ln, end) not in known:
                    raise ScenarioInvalid(f"topology.links[{i}].{end}", f"unknown node {getattr(ln, end)!r}")
            if ln.a == ln.b:
                raise ScenarioInvalid(f"topology.links[{i}]", "self loop")
            if ln.delay_ms < 0:
                raise ScenarioInvalid(f"topology.links[{i}].delay_ms", "must be >= 0")
            if not 0.0 <= ln.loss <= 1.0:
                raise ScenarioInvalid(f"topology.links[{i}].loss", "must lie in [0, 1]")
        hosts = set(self.hosts)
        for h in self.hosts:
            deg = sum(1 for ln in self.links if h in (ln.a, ln.b))
            if deg != 1:
                raise ScenarioInvalid(f"topology.hosts.{h}", f"a host needs exactly one access link, has {deg}")
            if self.edge_of(h) in hosts:
                raise ScenarioInvalid(f"topology.hosts.{h}", "hosts must attach to a switch")
        if not self.connections:
            raise ScenarioInvalid("connections", "need at least one connection")
        ids = set()
        g = self.graph()
        for i, c in enumerate(self.connections):
            loc = f"connections[{i}]"
            if c.conn_id in ids:
                raise ScenarioInvalid(f"{loc}.conn_id", "duplicate connection id")
            ids.add(c.conn_id)
            for end in ("src", "dst"):
                if getattr(c, end) not in hosts:
                    raise ScenarioInvalid(f"{loc}.{end}", f"unknown host {getattr(c, end)!r}")
            if c.src == c.dst:
                raise ScenarioInvalid(loc, "src and dst must differ")
            if c.packets < 1:
                raise ScenarioInvalid(f"{loc}.packets", "must be >= 1")
            if not c.send_interval_ms > 0:
                raise ScenarioInvalid(f"{loc}.send_interval_ms", "must be > 0")
            if c.payload_bytes < 0 or c.payload_bytes > 0xFFFF:
                raise ScenarioInvalid(f"{loc}.payload_bytes", "must fit in 16 bits")
            if c.start_ms < 0:
                raise ScenarioInvalid(f"{loc}.start_ms", "must be >= 0")
            if not nx.has_path(g, c.src, c.dst):
                raise ScenarioInvalid(loc, f"{c.src} and {c.dst} are not connected")
        if self.loss_rate is not None and not 0.0 <= self.loss_rate < 1.0:
            raise ScenarioInvalid("loss_rate", "must lie in [0, 1)")
        if self.loss_rate is not None and self.core_hops() < 1:
            raise ScenarioInvalid("loss_rate", "route has no switch-to-switch link to carry loss")
        if self.control_delay_ms < 0:
            raise ScenarioInvalid("control_delay_ms", "must be >= 0")
        if self.k < 1:
            raise ScenarioInvalid("placement.k", "must be >= 1")
        if not 0.0 <= self.loss_threshold <= 1.0:
            raise ScenarioInvalid("placement.loss_threshold", "must lie in [0, 1]")
        if self.cache_capacity < 1:
            raise ScenarioInvalid("cache_capacity", "must be >= 1")
        if self.cn_period_ms is not None and not self.cn_period_ms > 0:
            raise ScenarioInvalid("cn_period_ms", "must be > 0")
        if self.processing_us < 0:
            raise ScenarioInvalid("processing_us", "must be >= 0")
        if self.syn_timeout_ms <= 0 or self.max_retries < 0:
            raise ScenarioInvalid("handshake", "timeout must be > 0 and retries >= 0")
        links = {f"{ln.a}->{ln.b}" for ln in self.links} | {f"{ln.b}->{ln.a}" for ln in self.links}
        for i, d in enumerate(self.drops):
            if d.link not in links:
                raise ScenarioInvalid(f"drops[{i}].link", f"unknown link {d.link!r}")
        return self


def per_link_loss(e2e: float, hops: int) -> float:
    """Equal per-link loss q with 1 - (1 - q)^hops = e2e."""
    if e2e <= 0.0:
        return 0.0
    return 1.0 - math.pow(1.0 - e2e, 1.0 / hops)


def fig6(protocol: str = "sdtp", loss_rate: float = 0.0, control_delay_ms: float = 10.0,
         seed: int = 1, packets: int = 1000, **overrides) -> Scenario:
    """Two hosts, five switches in a row; 20 ms access links, 5 ms core links."""
    switches = tuple(f"S{i}" for i in range(1, 6))
    links = [LinkSpec("A", "S1", 20.0)]
    links += [LinkSpec(a, b, 5.0) for a, b in zip(switches, switches[1:])]
    links += [LinkSpec("S5", "B", 20.0)]
    sc = Scenario(
        scenario_id="fig6",
        switches=switches,
        hosts=("A", "B"),
        links=tuple(links),
        connections=(ConnectionSpec(1, "A", "B", packets=packets),),
        protocol=protocol,
        seed=seed,
        loss_rate=loss_rate,
        control_delay_ms=control_delay_ms,
    )
    return sc.with_(**overrides) if overrides else sc

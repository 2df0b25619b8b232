"""YAML scenario files.

Schema (every key optional unless marked)::

    scenario_id: str
    protocol: sdtp | tcp
    seed: int
    topology: fig6 | {switches: [..], hosts: [..], links: [{a, b, delay_ms, loss}]}   (required)
    connections: [{conn_id, src, dst, packets, send_interval_ms, payload_bytes, start_ms, slice_id}]
    loss_rate: float            # end-to-end, split evenly over core links
    control_delay_ms: float
    placement: {k: int, loss_threshold: float}
    cn_period_ms, cache_capacity, initial_rto_ms, t_fire_limit, processing_us, horizon_ms
    drops: [{link: "S2->S3", kind: DATA, seq: int, conn: int}]
    handshake: {syn_timeout_ms, max_retries}
    tcp: {rto_min_ms, rto_initial_ms, dupack_threshold}

Unknown keys are rejected with their location.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict

import yaml

from ..sim.scenario import ConnectionSpec, DropSpec, LinkSpec, Scenario, ScenarioInvalid, fig6

_TOP = {"scenario_id", "protocol", "seed", "topology", "connections", "loss_rate", "control_delay_ms",
        "placement", "cn_period_ms", "cache_capacity", "initial_rto_ms", "t_fire_limit",
        "processing_us", "horizon_ms", "drops", "handshake", "tcp"}
_SCALARS = {"cn_period_ms": float, "cache_capacity": int, "initial_rto_ms": float, "t_fire_limit": int,
            "processing_us": int, "horizon_ms": float}


def _mapping(value, where: str, allowed) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ScenarioInvalid(where, f"expected a mapping, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            raise ScenarioInvalid(f"{where}.{key}" if where else str(key), "unknown key")
    return value


def _num(value, where: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioInvalid(where, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ScenarioInvalid(where, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _str(value, where: str) -> str:
    if not isinstance(value, (str, int)) or isinstance(value, bool):
        raise ScenarioInvalid(where, f"expected a string, got {value!r}")
    return str(value)


def _list(value, where: str) -> list:
    if not isinstance(value, list):
        raise ScenarioInvalid(where, f"expected a list, got {type(value).__name__}")
    return value


def from_dict(doc: Dict[str, Any]) -> Scenario:
    doc = _mapping(doc, "", _TOP)
    if "topology" not in doc:
        raise ScenarioInvalid("topology", "required")
    topo = doc["topology"]
    if topo == "fig6":
        base = fig6()
        switches, hosts, links = base.switches, base.hosts, base.links
        default_conns = base.connections
    else:
        topo = _mapping(topo, "topology", {"switches", "hosts", "links"})
        switches = tuple(_str(s, f"topology.switches[{i}]") for i, s in enumerate(_list(topo.get("switches", []), "topology.switches")))
        hosts = tuple(_str(h, f"topology.hosts[{i}]") for i, h in enumerate(_list(topo.get("hosts", []), "topology.hosts")))
        links = []
        for i, ln in enumerate(_list(topo.get("links", []), "topology.links")):
            loc = f"topology.links[{i}]"
            ln = _mapping(ln, loc, {"a", "b", "delay_ms", "loss"})
            for req in ("a", "b", "delay_ms"):
                if req not in ln:
                    raise ScenarioInvalid(f"{loc}.{req}", "required")
            links.append(LinkSpec(_str(ln["a"], f"{loc}.a"), _str(ln["b"], f"{loc}.b"),
                                  _num(ln["delay_ms"], f"{loc}.delay_ms"), _num(ln.get("loss", 0.0), f"{loc}.loss")))
        links = tuple(links)
        default_conns = ()

    conns = default_conns
    if "connections" in doc:
        conns = []
        fields = {"conn_id", "src", "dst", "packets", "send_interval_ms", "payload_bytes", "start_ms", "slice_id"}
        for i, c in enumerate(_list(doc["connections"], "connections")):
            loc = f"connections[{i}]"
            c = _mapping(c, loc, fields)
            for req in ("src", "dst"):
                if req not in c:
                    raise ScenarioInvalid(f"{loc}.{req}", "required")
            conns.append(ConnectionSpec(
                conn_id=_num(c.get("conn_id", i + 1), f"{loc}.conn_id", int),
                src=_str(c["src"], f"{loc}.src"),
                dst=_str(c["dst"], f"{loc}.dst"),
                packets=_num(c.get("packets", 1000), f"{loc}.packets", int),
                send_interval_ms=_num(c.get("send_interval_ms", 15.0), f"{loc}.send_interval_ms"),
                payload_bytes=_num(c.get("payload_bytes", 0), f"{loc}.payload_bytes", int),
                start_ms=_num(c.get("start_ms", 0.0), f"{loc}.start_ms"),
                slice_id=_num(c.get("slice_id", 1), f"{loc}.slice_id", int),
            ))
        conns = tuple(conns)

    kw: Dict[str, Any] = {}
    if "protocol" in doc:
        kw["protocol"] = _str(doc["protocol"], "protocol").lower()
    if "seed" in doc:
        kw["seed"] = _num(doc["seed"], "seed", int)
    if doc.get("loss_rate") is not None:
        kw["loss_rate"] = _num(doc["loss_rate"], "loss_rate")
    if "control_delay_ms" in doc:
        kw["control_delay_ms"] = _num(doc["control_delay_ms"], "control_delay_ms")
    if "placement" in doc:
        pl = _mapping(doc["placement"], "placement", {"k", "loss_threshold"})
        if "k" in pl:
            kw["k"] = _num(pl["k"], "placement.k", int)
        if "loss_threshold" in pl:
            kw["loss_threshold"] = _num(pl["loss_threshold"], "placement.loss_threshold")
    for key, kind in _SCALARS.items():
        if doc.get(key) is not None:
            kw[key] = _num(doc[key], key, kind)
    if "handshake" in doc:
        hs = _mapping(doc["handshake"], "handshake", {"syn_timeout_ms", "max_retries"})
        if "syn_timeout_ms" in hs:
            kw["syn_timeout_ms"] = _num(hs["syn_timeout_ms"], "handshake.syn_timeout_ms")
        if "max_retries" in hs:
            kw["max_retries"] = _num(hs["max_retries"], "handshake.max_retries", int)
    if "tcp" in doc:
        tc = _mapping(doc["tcp"], "tcp", {"rto_min_ms", "rto_initial_ms", "dupack_threshold"})
        for key, kind in (("rto_min_ms", float), ("rto_initial_ms", float), ("dupack_threshold", int)):
            if key in tc:
                kw[key] = _num(tc[key], f"tcp.{key}", kind)
    if "drops" in doc:
        drops = []
        for i, d in enumerate(_list(doc["drops"], "drops")):
            loc = f"drops[{i}]"
            d = _mapping(d, loc, {"link", "kind", "seq", "conn"})
            for req in ("link", "kind", "seq"):
                if req not in d:
                    raise ScenarioInvalid(f"{loc}.{req}", "required")
            drops.append(DropSpec(_str(d["link"], f"{loc}.link"), _str(d["kind"], f"{loc}.kind").upper(),
                                  _num(d["seq"], f"{loc}.seq", int),
                                  _num(d["conn"], f"{loc}.conn", int) if d.get("conn") is not None else None))
        kw["drops"] = tuple(drops)

    sc = Scenario(scenario_id=_str(doc.get("scenario_id", "scenario"), "scenario_id"), switches=switches,
                  hosts=hosts, links=links, connections=conns, **kw)
    return sc.validate()


def loads(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioInvalid("<file>", f"not valid YAML: {exc}") from None
    if doc is None:
        raise ScenarioInvalid("<file>", "empty scenario")
    return from_dict(doc)


def load(path) -> Scenario:
    return loads(Path(path).read_text(encoding="utf-8"))


def to_dict(sc: Scenario) -> Dict[str, Any]:
    """Plain-data form; ``from_dict(to_dict(sc)) == sc``."""
    doc: Dict[str, Any] = {
        "scenario_id": sc.scenario_id,
        "protocol": sc.protocol,
        "seed": sc.seed,
        "topology": {
            "switches": list(sc.switches),
            "hosts": list(sc.hosts),
            "links": [asdict(ln) for ln in sc.links],
        },
        "connections": [asdict(c) for c in sc.connections],
        "loss_rate": sc.loss_rate,
        "control_delay_ms": sc.control_delay_ms,
        "placement": {"k": sc.k, "loss_threshold": sc.loss_threshold},
        "handshake": {"syn_timeout_ms": sc.syn_timeout_ms, "max_retries": sc.max_retries},
        "tcp": {"rto_min_ms": sc.rto_min_ms, "rto_initial_ms": sc.rto_initial_ms,
                "dupack_threshold": sc.dupack_threshold},
        "drops": [{k: v for k, v in asdict(d).items() if v is not None} for d in sc.drops],
    }
    for key in _SCALARS:
        if getattr(sc, key) is not None:
            doc[key] = getattr(sc, key)
    return doc


def dumps(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=False)


def scenario_hash(sc: Scenario) -> str:
    canon = json.dumps(to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()

"""Caching/retransmission placement along a single routing path.

Caching is switched on at the sending edge, the receiving edge and in front
of every risky link. Retransmission nodes are then picked among the caching
nodes so that the loss probability of every CR segment is as close to the
mean as possible (equalized loss probability).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Sequence, Tuple

_TIE_EPS = 1e-12


class InfeasiblePartition(ValueError):
    pass


@dataclass(frozen=True)
class PathSpec:
    nodes: Tuple[str, ...]
    link_loss: Tuple[float, ...]
    link_delay: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "link_loss", tuple(float(p) for p in self.link_loss))
        if not self.link_delay:
            object.__setattr__(self, "link_delay", (0.0,) * len(self.link_loss))
        else:
            object.__setattr__(self, "link_delay", tuple(float(d) for d in self.link_delay))
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(self.link_loss) != len(self.nodes) - 1 or len(self.link_delay) != len(self.link_loss):
            raise ValueError("need exactly one loss/delay value per link")
        if any(not 0.0 <= p <= 1.0 for p in self.link_loss):
            raise ValueError(f"link loss probabilities must lie in [0, 1]: {self.link_loss}")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("path visits a node twice")

    @property
    def sending_edge(self) -> str:
        return self.nodes[0]

    @property
    def receiving_edge(self) -> str:
        return self.nodes[-1]

    def link_id(self, i: int) -> str:
        return f"{self.nodes[i]}->{self.nodes[i + 1]}"


@dataclass(frozen=True)
class CrSegment:
    retransmission_node: str
    caching_nodes: Tuple[str, ...]  # upstream order
    member_links: Tuple[str, ...]
    loss: float = field(default=0.0, compare=False)


def segment_loss(losses: Iterable[float]) -> float:
    keep = 1.0
    for p in losses:
        keep *= 1.0 - p
    return 1.0 - keep


def select_caching_nodes(path: PathSpec, loss_threshold: float) -> FrozenSet[str]:
    chosen = {path.sending_edge, path.receiving_edge}
    for i, p in enumerate(path.link_loss):
        if p >= loss_threshold:
            chosen.add(path.nodes[i])
    return frozenset(chosen)


def max_deviation(seg_losses: Sequence[float]) -> float:
    mean = sum(seg_losses) / len(seg_losses)
    return max(abs(x - mean) for x in seg_losses)


def _score(path: PathSpec, cuts: Tuple[int, ...]):
    bounds = (0,) + cuts + (len(path.nodes) - 1,)
    losses = [segment_loss(path.link_loss[a:b]) for a, b in zip(bounds, bounds[1:])]
    hops = [b - a for a, b in zip(bounds, bounds[1:])]
    return max_deviation(losses), max_deviation(hops)


def best_cuts(path: PathSpec, caching_nodes: Iterable[str], k: int) -> Tuple[int, ...]:
    """Node indices of the k-1 interior retransmission nodes.

    Exhaustive over candidate subsets; ties in the loss objective go to the
    split with the most even hop counts, then to the upstream-most choice.
    """
    if k < 1:
        raise InfeasiblePartition("need at least one retransmission node")
    cache = set(caching_nodes)
    candidates = [i for i in range(1, len(path.nodes) - 1) if path.nodes[i] in cache]
    if len(candidates) < k - 1:
        raise InfeasiblePartition(
            f"{k} retransmission nodes need {k - 1} interior caching nodes, have {len(candidates)}"
        )
    best, best_key = (), None
    for cuts in itertools.combinations(candidates, k - 1):
        loss_dev, hop_dev = _score(path, cuts)
        if best_key is None or loss_dev < best_key[0] - _TIE_EPS or (
            abs(loss_dev - best_key[0]) <= _TIE_EPS and hop_dev < best_key[1]
        ):
            best, best_key = cuts, (loss_dev, hop_dev)
    return best


def partition_ep(path: PathSpec, caching_nodes: Iterable[str], k: int) -> List[CrSegment]:
    cache = frozenset(caching_nodes)
    missing = {path.sending_edge, path.receiving_edge} - cache
    if missing:
        raise InfeasiblePartition(f"edge switches must cache: {sorted(missing)}")
    cuts = best_cuts(path, cache, k)
    bounds = (0,) + cuts + (len(path.nodes) - 1,)
    segments = []
    for a, b in zip(bounds, bounds[1:]):
        members = tuple(path.link_id(i) for i in range(a, b))
        caching = tuple(n for n in path.nodes[a:b] if n in cache)
        segments.append(CrSegment(
            retransmission_node=path.nodes[b],
            caching_nodes=caching,
            member_links=members,
            loss=segment_loss(path.link_loss[a:b]),
        ))
    return segments


def objective(segments: Sequence[CrSegment]) -> float:
    return max_deviation([s.loss for s in segments])


def summary(path: PathSpec, caching_nodes: Iterable[str], segments: Sequence[CrSegment]) -> dict:
    return {
        "path": list(path.nodes),
        "caching_nodes": [n for n in path.nodes if n in set(caching_nodes)],
        "retransmission_nodes": [s.retransmission_node for s in segments],
        "segments": [
            {
                "retransmission_node": s.retransmission_node,
                "caching_nodes": list(s.caching_nodes),
                "links": list(s.member_links),
                "loss": s.loss,
            }
            for s in segments
        ],
        "max_deviation": objective(segments),
    }

"""Event queue, timers and the trace log."""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple


class EventKind(enum.IntEnum):
    LINK_DELIVER = 1
    TIMER_FIRE = 2
    HOST_SEND = 3
    CONTROL_DELIVER = 4


@dataclass(order=True)
class Event:
    time: int  # simulated microseconds
    seq_no: int
    kind: EventKind = field(compare=False)
    target: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class Simulator:
    """Deterministic discrete-event loop ordered by (time, insertion order)."""

    def __init__(self):
        self.now = 0
        self.queue: List[Event] = []
        self._counter = itertools.count()
        self._timers: Dict[Tuple[str, Any], int] = {}
        self.processed = 0

    def schedule(self, time: int, kind: EventKind, target: str, payload=None) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule into the past ({time} < {self.now})")
        ev = Event(int(time), next(self._counter), kind, target, payload)
        heapq.heappush(self.queue, ev)
        return ev

    def set_timer(self, target: str, key, at_us: int) -> Event:
        """Arm (or re-arm) a timer; an earlier pending instance is superseded."""
        ev = self.schedule(max(at_us, self.now), EventKind.TIMER_FIRE, target, key)
        self._timers[(target, key)] = ev.seq_no
        return ev

    def cancel_timer(self, target: str, key) -> bool:
        return self._timers.pop((target, key), None) is not None

    def timer_pending(self, target: str, key) -> bool:
        return (target, key) in self._timers

    def _live(self, ev: Event) -> bool:
        if ev.kind is not EventKind.TIMER_FIRE:
            return True
        token = self._timers.get((ev.target, ev.payload))
        if token != ev.seq_no:
            return False
        del self._timers[(ev.target, ev.payload)]
        return True

    def pending(self) -> Iterator[Event]:
        return (ev for ev in self.queue if ev.kind is not EventKind.TIMER_FIRE or self._timers.get((ev.target, ev.payload)) == ev.seq_no)

    def run(self, handler: Callable[[Event], None], until: Optional[int] = None,
            stop: Optional[Callable[[], bool]] = None) -> int:
        while self.queue:
            if until is not None and self.queue[0].time > until:
                self.now = until
                break
            ev = heapq.heappop(self.queue)
            if not self._live(ev):
                continue
            self.now = ev.time
            handler(ev)
            self.processed += 1
            if stop is not None and stop():
                break
        return self.now


@dataclass(frozen=True)
class TraceRecord:
    time_us: int
    seq_no: int  # event order within the run
    kind: str
    node: str
    conn: int = -1
    seq: int = -1
    detail: str = ""

    def line(self) -> str:
        text = f"{self.time_us} {self.seq_no} {self.kind} {self.node} conn={self.conn} seq={self.seq}"
        return f"{text} {self.detail}" if self.detail else text

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        parts = line.rstrip("\n").split(" ", 6)
        detail = parts[6] if len(parts) > 6 else ""
        return cls(int(parts[0]), int(parts[1]), parts[2], parts[3],
                   int(parts[4].split("=", 1)[1]), int(parts[5].split("=", 1)[1]), detail)


class TraceLog:
    def __init__(self):
        self.records: List[TraceRecord] = []
        self._n = itertools.count()

    def add(self, time_us: int, kind: str, node: str, conn: int = -1, seq: int = -1, detail: str = "") -> None:
        self.records.append(TraceRecord(time_us, next(self._n), kind, node, conn, seq, detail))

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def of_kind(self, *kinds: str) -> List[TraceRecord]:
        return [r for r in self.records if r.kind in kinds]

    def text(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.text())

    @classmethod
    def from_text(cls, text: str) -> "TraceLog":
        log = cls()
        log.records = [TraceRecord.parse(line) for line in text.splitlines() if line.strip()]
        log._n = itertools.count(len(log.records))
        return log

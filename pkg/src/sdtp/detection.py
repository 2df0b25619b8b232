"""Receiver-side loss detection at a retransmission node.

One :class:`DetectionState` per connection tracks which sequence numbers have
arrived (content windows), which are still awaited (expected entries), and
the estimators that decide when a gap is declared lost:

* interarrival timeout: the expected gap is the larger of the sending
  interval and a weighted sum of the last observed gap and the interval
* interarrival counter threshold (``InterCnt > CntThres``), with the
  threshold raised per packet by upstream RI packets (AddL) and per segment
  by an EWMA of observed disorder
* retransmission timeout, a Jacobson-style EWMA over retransmission RTTs

All times handed to this module are integer microseconds; estimator values
are kept in milliseconds.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import List, Optional

from .packet_codec import SEQ_INFINITY, OptionalBlock, Trigger

SAMPLE_WEIGHT = 0.875
INTERVAL_WEIGHT = 0.375
MEAN_GAIN = 0.125
DEV_GAIN = 0.25
DEV_FACTOR = 4

_CEIL_SLACK = 1e-9


def _ceil(value: float) -> int:
    # keep 2.0000000000000004 from becoming 3
    return math.ceil(value - _CEIL_SLACK)


def us_to_ms(us: int) -> float:
    return us / 1000.0


def ms_to_us_after(ms: float) -> int:
    """First integer microsecond strictly later than ``ms``."""
    return math.floor(ms * 1000.0) + 1


# -- estimators ---------------------------------------------------------------


@dataclass
class InterarrivalEstimator:
    interval_ms: float
    last_sample_ms: Optional[float] = None
    expected_ms: float = 0.0
    inter_time: float = 0.0
    sample_weight: float = SAMPLE_WEIGHT
    interval_weight: float = INTERVAL_WEIGHT

    def __post_init__(self):
        if self.interval_ms <= 0:
            raise ValueError("sending interval must be positive")
        if self.last_sample_ms is None:
            # no sample yet: behave as if packets arrive exactly on schedule
            self.last_sample_ms = self.interval_ms
        self.expected_ms = max(self.interval_ms, self.sample_weight * self.last_sample_ms + self.interval_weight * self.interval_ms)

    def update(self, sample_ms: float) -> "InterarrivalEstimator":
        self.last_sample_ms = sample_ms
        self.expected_ms = max(self.interval_ms, self.sample_weight * sample_ms + self.interval_weight * self.interval_ms)
        self.inter_time = 0.0
        return self

    def timeouts_due(self, inter_time_ms: Optional[float] = None) -> int:
        """Largest n with inter_time >= n times the expected gap."""
        if inter_time_ms is None:
            inter_time_ms = self.inter_time
        return math.floor(inter_time_ms / self.expected_ms)


def update_interarrival(est: InterarrivalEstimator, sample_ms: float) -> InterarrivalEstimator:
    return est.update(sample_ms)


def interarrival_timeout_due(est: InterarrivalEstimator, inter_time_ms: float) -> int:
    return est.timeouts_due(inter_time_ms)


@dataclass
class RtoEstimator:
    """Retransmission-RTT estimator; ``threshold`` falls back to
    ``initial_ms`` until the first sample arrives."""

    initial_ms: float = 100.0
    mean_ms: float = 0.0
    dev_ms: float = 0.0
    timeout_ms: float = 0.0
    mean_gain: float = MEAN_GAIN
    dev_gain: float = DEV_GAIN
    dev_factor: float = DEV_FACTOR
    initialized: bool = False
    samples: int = 0

    def update(self, sample_ms: float) -> "RtoEstimator":
        if not self.initialized:
            prev_v, prev_m = sample_ms, 0.0  # the first sample seeds the mean; deviation starts at 0
            self.initialized = True
        else:
            prev_v, prev_m = self.mean_ms, self.dev_ms
        self.mean_ms = (1 - self.mean_gain) * prev_v + self.mean_gain * sample_ms
        self.dev_ms = (1 - self.dev_gain) * prev_m + self.dev_gain * abs(sample_ms - prev_v)
        self.timeout_ms = self.mean_ms + self.dev_factor * self.dev_ms
        self.samples += 1
        return self

    @property
    def threshold(self) -> float:
        return self.timeout_ms if self.initialized else self.initial_ms

    @property
    def expected_rtt(self) -> float:
        return self.mean_ms if self.initialized else self.initial_ms


def update_rto(est: RtoEstimator, sample_ms: float) -> RtoEstimator:
    return est.update(sample_ms)


@dataclass
class SegmentDisorderEstimator:
    avg: float = 0.0
    dev: float = 0.0
    mean_gain: float = MEAN_GAIN
    dev_gain: float = DEV_GAIN
    multiplier: float = DEV_FACTOR
    initialized: bool = False

    def update(self, observed_intercnt: int) -> int:
        if observed_intercnt < 1:
            raise ValueError("disorder samples are at least 1")
        if not self.initialized:
            self.avg, self.dev = float(observed_intercnt), 0.0
            self.initialized = True
        else:
            self.dev = (1 - self.dev_gain) * self.dev + self.dev_gain * abs(observed_intercnt - self.avg)
            self.avg = (1 - self.mean_gain) * self.avg + self.mean_gain * observed_intercnt
        return self.cnt_thres

    @property
    def cnt_thres(self) -> int:
        if not self.initialized:
            return 1
        return max(1, _ceil(self.avg + self.multiplier * self.dev))


def update_segment_disorder(est: SegmentDisorderEstimator, observed_intercnt: int):
    thres = est.update(observed_intercnt)
    return est, thres


def addl_exact(rt_rtt_ms: float, expected_interarrival_ms: float, trigger: Trigger) -> float:
    if expected_interarrival_ms <= 0:
        raise ValueError("expected interarrival time must be positive")
    bonus = 1 if trigger is Trigger.C else 0
    return rt_rtt_ms / expected_interarrival_ms + bonus


def compute_addl(rt_rtt_ms: float, expected_interarrival_ms: float, trigger: Trigger) -> int:
    """Additional disorder length announced downstream in an RI packet."""
    if expected_interarrival_ms <= 0:
        raise ValueError("expected interarrival time must be positive")
    bonus = 1 if trigger is Trigger.C else 0
    return max(0, _ceil(rt_rtt_ms / expected_interarrival_ms)) + bonus


# -- lists --------------------------------------------------------------------


@dataclass
class ContentWindow:
    left: int
    right: int

    def __contains__(self, seq: int) -> bool:
        return self.left <= seq < self.right


@dataclass
class ExpectedEntry:
    num: int
    start_seq: int
    end_seq: int = SEQ_INFINITY
    start_num: int = 0
    inter_cnt: int = 0
    cnt_thres: int = 1
    rt_cnt: int = 0
    rt_type: Optional[Trigger] = None
    rt_sent_us: Optional[int] = None  # RTTimer origin; None while inactive

    @property
    def wait_len(self) -> int:
        return self.cnt_thres - self.inter_cnt

    @property
    def open_ended(self) -> bool:
        return self.end_seq == SEQ_INFINITY

    @property
    def rt_timer_active(self) -> bool:
        return self.rt_sent_us is not None

    def covers(self, seq: int) -> bool:
        return self.start_seq <= seq and (self.open_ended or seq < self.end_seq)

    def locator_seq(self) -> int:
        return self.start_seq + self.start_num

    def request_range(self):
        """[lo, hi) asked for by C/R re-requests."""
        if self.open_ended:
            return self.start_seq, self.start_seq + self.start_num + 1
        return self.start_seq, self.end_seq

    def rt_timer(self, now_us: int) -> Optional[float]:
        if self.rt_sent_us is None:
            return None
        return us_to_ms(now_us - self.rt_sent_us)


@dataclass
class RetxTrigger:
    trigger: Trigger
    entry: ExpectedEntry


@dataclass
class DetectionOutcome:
    accepted: bool
    duplicate: bool = False
    new_gaps: List[tuple] = field(default_factory=list)
    triggers: List[RetxTrigger] = field(default_factory=list)
    filled: Optional[ExpectedEntry] = None
    filled_was_requested: bool = False
    removed: List[ExpectedEntry] = field(default_factory=list)


class DetectionState:
    """Per-connection detection state owned by one retransmission node."""

    def __init__(self, send_interval_ms: float, initial_seq: int = 0,
                 initial_rto_ms: float = 100.0, t_fire_limit: int = 3):
        self.windows: List[ContentWindow] = []
        self.entries: List[ExpectedEntry] = []
        self.initial_seq = initial_seq
        self.right_edge = initial_seq
        self.interarrival = InterarrivalEstimator(send_interval_ms)
        self.rto = RtoEstimator(initial_ms=initial_rto_ms)
        self.disorder = SegmentDisorderEstimator()
        self.pending_addl: List[list] = []  # [lo, hi, addl] for gaps not yet observed
        self.last_rx_us: Optional[int] = None
        self.t_fired = 0
        self.t_fire_limit = t_fire_limit
        self.duplicates = 0
        self._next_num = 1

    # -- queries

    def received(self, seq: int) -> bool:
        i = bisect.bisect_right(self._lefts(), seq) - 1
        return i >= 0 and seq in self.windows[i]

    def entry_for(self, seq: int) -> Optional[ExpectedEntry]:
        for e in self.entries:
            if e.covers(seq):
                return e
        return None

    def awaiting(self, seq: int) -> bool:
        """True if ``seq`` has not arrived yet."""
        return seq >= self.right_edge or self.entry_for(seq) is not None

    def select_timeout_victim(self) -> Optional[ExpectedEntry]:
        best = None
        for e in self.entries:
            if e.rt_cnt:
                continue
            if best is None or (e.wait_len, e.start_seq) < (best.wait_len, best.start_seq):
                best = e
        return best

    def next_rt_deadline(self) -> Optional[int]:
        sent = [e.rt_sent_us for e in self.entries if e.rt_sent_us is not None]
        if not sent:
            return None
        return min(sent) + ms_to_us_after(self.rto.threshold)

    def next_interarrival_deadline(self) -> Optional[int]:
        if self.last_rx_us is None or self.t_fired >= self.t_fire_limit:
            return None
        return self.last_rx_us + ms_to_us_after((self.t_fired + 1) * self.interarrival.expected_ms)

    # -- updates

    def on_packet(self, seq: int, now_us: int) -> DetectionOutcome:
        if seq < self.initial_seq or self.received(seq):
            self.duplicates += 1
            return DetectionOutcome(accepted=False, duplicate=True)

        if self.last_rx_us is not None:
            self.interarrival.update(us_to_ms(now_us - self.last_rx_us))
        else:
            self.interarrival.inter_time = 0.0
        self.last_rx_us = now_us
        self.t_fired = 0

        out = DetectionOutcome(accepted=True)
        if seq >= self.right_edge:
            self._arrive_at_tail(seq, out)
        else:
            self._fill_gap(seq, out)
        self._insert_window(seq)
        self.right_edge = self.windows[-1].right

        for e in self.entries:
            if e.start_seq < seq:
                e.inter_cnt += 1
        for e in self.entries:
            if e.rt_cnt == 0 and not e.open_ended and e.inter_cnt > e.cnt_thres:
                out.triggers.append(RetxTrigger(Trigger.C, e))
        self.pending_addl = [p for p in self.pending_addl if p[1] > self.right_edge]
        return out

    def _arrive_at_tail(self, seq: int, out: DetectionOutcome) -> None:
        last = self.entries[-1] if self.entries else None
        if last is not None and last.open_ended:
            # an open entry always starts at the current right edge
            if seq == last.start_seq:
                out.filled, out.filled_was_requested = last, last.rt_cnt > 0
                if last.start_num == 0:
                    self.entries.pop()
                    out.removed.append(last)
                else:
                    last.start_seq += 1
                    last.start_num -= 1
            else:
                last.end_seq = seq
                last.start_num = min(last.start_num, seq - last.start_seq - 1)
            return
        if seq > self.right_edge:
            entry = ExpectedEntry(num=self._take_num(), start_seq=self.right_edge, end_seq=seq,
                                  cnt_thres=self.disorder.cnt_thres)
            self._apply_pending(entry)
            self.entries.append(entry)
            out.new_gaps.append((entry.start_seq, entry.end_seq))

    def _fill_gap(self, seq: int, out: DetectionOutcome) -> None:
        idx = next(i for i, e in enumerate(self.entries) if e.covers(seq))
        e = self.entries[idx]
        out.filled, out.filled_was_requested = e, e.rt_cnt > 0
        if e.rt_cnt == 0 and e.inter_cnt >= 1:
            self.disorder.update(e.inter_cnt)
        lo, hi = e.start_seq, e.end_seq
        if lo == seq and seq == hi - 1:
            del self.entries[idx]
            out.removed.append(e)
        elif seq == lo:
            e.start_seq += 1
            e.start_num = max(0, e.start_num - 1)
        elif seq == hi - 1:
            e.end_seq -= 1
        else:
            tail = ExpectedEntry(num=self._take_num(), start_seq=seq + 1, end_seq=hi,
                                 inter_cnt=e.inter_cnt, cnt_thres=e.cnt_thres,
                                 rt_cnt=e.rt_cnt, rt_type=e.rt_type, rt_sent_us=e.rt_sent_us)
            e.end_seq = seq
            self.entries.insert(idx + 1, tail)

    def on_interarrival_timeout(self, now_us: int) -> List[RetxTrigger]:
        """Type-T triggers for every newly reached multiple of the expected gap."""
        if self.last_rx_us is None:
            return []
        self.interarrival.inter_time = us_to_ms(now_us - self.last_rx_us)
        due = min(self.interarrival.timeouts_due(), self.t_fire_limit)
        fired = []
        while self.t_fired < due:
            self.t_fired += 1
            victim = self.select_timeout_victim()
            if victim is None:
                last = self.entries[-1] if self.entries else None
                if last is not None and last.open_ended:
                    last.start_num += 1
                    victim = last
                else:
                    victim = ExpectedEntry(num=self._take_num(), start_seq=self.right_edge,
                                           cnt_thres=self.disorder.cnt_thres)
                    self._apply_pending(victim)
                    self.entries.append(victim)
            fired.append(RetxTrigger(Trigger.T, victim))
        return fired

    def due_rto(self, now_us: int) -> List[RetxTrigger]:
        """Type-R triggers for entries whose RTTimer exceeds the threshold."""
        r_th_us = self.rto.threshold * 1000.0
        return [RetxTrigger(Trigger.R, e) for e in self.entries
                if e.rt_sent_us is not None and now_us - e.rt_sent_us > r_th_us]

    def mark_requested(self, entry: ExpectedEntry, trigger: Trigger, now_us: int) -> None:
        entry.rt_cnt += 1
        entry.rt_type = trigger
        entry.rt_sent_us = now_us

    def apply_ri(self, ri: OptionalBlock) -> bool:
        """Raise CntThres of the entries an upstream retransmission covers.

        Returns False when every named packet has already been received.
        """
        if ri.open_ended:
            lo = ri.start_seq + ri.start_num
            hi = lo + 1
        else:
            lo, hi = ri.start_seq, ri.end_seq
        if hi <= lo:
            return False
        applied = False
        cover_hi = self.right_edge
        for e in self.entries:
            if e.open_ended:
                if e.start_seq < hi:
                    e.cnt_thres += ri.aux
                    applied = True
                cover_hi = SEQ_INFINITY
            elif e.start_seq < hi and lo < e.end_seq:
                e.cnt_thres += ri.aux
                applied = True
        future_lo = max(lo, cover_hi)
        if future_lo < hi:
            self.pending_addl.append([future_lo, hi, ri.aux])
            applied = True
        return applied

    def _apply_pending(self, entry: ExpectedEntry) -> None:
        hi = SEQ_INFINITY if entry.open_ended else entry.end_seq
        for p_lo, p_hi, addl in self.pending_addl:
            if p_lo < hi and entry.start_seq < p_hi:
                entry.cnt_thres += addl

    def _take_num(self) -> int:
        num = self._next_num
        self._next_num += 1
        return num

    def _lefts(self) -> List[int]:
        return [w.left for w in self.windows]

    def _insert_window(self, seq: int) -> None:
        ws = self.windows
        i = bisect.bisect_right(self._lefts(), seq)
        prev = ws[i - 1] if i > 0 else None
        nxt = ws[i] if i < len(ws) else None
        if prev is not None and prev.right == seq:
            prev.right += 1
            if nxt is not None and nxt.left == prev.right:
                prev.right = nxt.right
                del ws[i]
        elif nxt is not None and nxt.left == seq + 1:
            nxt.left = seq
        else:
            ws.insert(i, ContentWindow(seq, seq + 1))

    # -- diagnostics

    def check_invariants(self) -> None:
        ws = self.windows
        for w in ws:
            assert w.left < w.right, w
        for a, b in zip(ws, ws[1:]):
            assert a.right < b.left, (a, b)  # disjoint and non-adjacent
        for a, b in zip(self.entries, self.entries[1:]):
            assert a.start_seq < b.start_seq and not a.open_ended, (a, b)
        pieces = [(w.left, w.right) for w in ws]
        pieces += [(e.start_seq, e.end_seq) for e in self.entries if not e.open_ended]
        pieces.sort()
        pos = self.initial_seq
        for lo, hi in pieces:
            assert lo == pos, f"coverage hole or overlap at {pos}: {pieces}"
            pos = hi
        expected_end = self.windows[-1].right if ws else self.initial_seq
        assert pos == expected_end == self.right_edge, (pos, expected_end, self.right_edge)
        for e in self.entries:
            assert (e.rt_cnt >= 1) == e.rt_timer_active, e
            if e.open_ended:
                assert e.start_seq == self.right_edge, e

    def dump(self) -> str:
        lines = ["windows " + " ".join(f"[{w.left},{w.right})" for w in self.windows)]
        for e in self.entries:
            end = "inf" if e.open_ended else str(e.end_seq)
            rt = e.rt_type.name if e.rt_type else "-"
            lines.append(
                f"entry num={e.num} seq=[{e.start_seq},{end}) start_num={e.start_num} "
                f"inter_cnt={e.inter_cnt} cnt_thres={e.cnt_thres} wait_len={e.wait_len} "
                f"rt_cnt={e.rt_cnt} rt_type={rt}"
            )
        lines.append(
            f"interarrival expected_ms={self.interarrival.expected_ms!r} "
            f"rto mean_ms={self.rto.mean_ms!r} dev_ms={self.rto.dev_ms!r} timeout_ms={self.rto.threshold!r} "
            f"seg_thres={self.disorder.cnt_thres} duplicates={self.duplicates}"
        )
        return "\n".join(lines) + "\n"

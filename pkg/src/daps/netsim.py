"""In-process message-passing fabric with all-reduce and byte accounting.

Each logical node runs in its own worker thread; collectives are rendezvous
barriers, so every node reaches each collective exactly once per call site
and deadlock is impossible by construction. The reduction itself is always
performed in canonical node-index order at a designated reducer stage, which
makes results bit-identical across nodes, across runs, and across schedules;
the configured schedule only determines the simulated routing, round counts,
and byte accounting.

Two schedules are modeled:

* ``butterfly``: ceil(log2(d)) rounds; in round t node i exchanges with
  node i XOR 2^t. Every node sends one payload per round, so a node's cost
  per all-reduce is payload_bytes * rounds. Node counts that are not powers
  of two are padded to the next power of two for round counting; sends to
  phantom slots are neither logged nor counted.
* ``linear``: a chain reduce followed by a chain broadcast, 2(d-1) rounds
  with a single payload-sized message per round, so total bytes grow
  linearly in d.

Bytes are counted as 8 per float64 scalar; headers are ignored. When
``record_payloads`` is enabled, each logged message carries the partial sum
the sending node would hold under the schedule, which is what an
eavesdropper on that link would observe; the privacy auditor scans these.
"""

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

BYTES_PER_SCALAR = 8


@dataclass
class TraceMessage:
    """One directed message of a collective."""

    collective: int
    round: int
    src: int
    dst: int
    bytes: int
    tag: str
    payload: np.ndarray | None = None


@dataclass
class TagStats:
    count: int = 0
    bytes: int = 0


@dataclass
class CommStats:
    """Aggregated communication accounting of one fabric."""

    d: int
    schedule: str
    collectives: int
    rounds_per_all_reduce: int
    rounds: int
    total_bytes: int
    bytes_per_node: list
    per_tag: dict = field(default_factory=dict)


def butterfly_rounds(d):
    return 0 if d <= 1 else math.ceil(math.log2(d))


def linear_rounds(d):
    return 0 if d <= 1 else 2 * (d - 1)


class Fabric:
    """Shared collective/barrier fabric for ``d`` worker threads."""

    def __init__(self, d, schedule="butterfly", record_payloads=False):
        if d < 1:
            raise ValueError(f"need at least one node, got d={d}")
        if schedule not in ("butterfly", "linear"):
            raise ValueError(f"unknown schedule {schedule!r}")
        self.d = d
        self.schedule = schedule
        self.record_payloads = record_payloads
        self.trace = []
        self._barrier = threading.Barrier(d)
        self._slots = [None] * d
        self._result = None
        self._error = None
        self._collectives = 0
        self._bytes_per_node = [0] * d
        self._rounds_total = 0
        self._per_tag = {}

    @property
    def rounds_per_all_reduce(self):
        if self.schedule == "butterfly":
            return butterfly_rounds(self.d)
        return linear_rounds(self.d)

    def barrier(self):
        """Pure synchronization point, no communication accounted."""
        self._barrier.wait()

    def abort(self):
        """Break all pending rendezvous, used when a node fails."""
        self._barrier.abort()

    def all_reduce_sum(self, node_id, value, tag=""):
        """Sum same-shaped contributions; every node receives the total.

        The result is the canonical node-index-order sum regardless of the
        configured schedule. A shape disagreement aborts the collective at
        every node with :class:`ShapeMismatch`.
        """
        self._slots[node_id] = np.asarray(value, dtype=np.float64)
        turn = self._barrier.wait()
        if turn == 0:
            self._reduce(tag)
        self._barrier.wait()
        if self._error is not None:
            raise ShapeMismatch(self._error)
        return self._result.copy()

    def _reduce(self, tag):
        shapes = {s.shape for s in self._slots}
        if len(shapes) != 1:
            self._error = f"collective {tag!r} received mismatched shapes {sorted(shapes)}"
            self._result = None
            return
        total = np.zeros(self._slots[0].shape)
        for s in self._slots:  # canonical order: node 0, 1, ..., d-1
            total = total + s
        self._result = total
        self._account(tag)

    def _account(self, tag):
        payload_bytes = BYTES_PER_SCALAR * self._slots[0].size
        cid = self._collectives
        self._collectives += 1
        stats = self._per_tag.setdefault(tag, TagStats())
        stats.count += 1
        if self.schedule == "butterfly":
            rounds = butterfly_rounds(self.d)
            for t in range(rounds):
                bit = 1 << t
                for i in range(self.d):
                    peer = i ^ bit
                    if peer >= self.d:
                        continue  # padded slot, nothing sent
                    payload = self._butterfly_partial(i, t) if self.record_payloads else None
                    self.trace.append(
                        TraceMessage(cid, t, i, peer, payload_bytes, tag, payload)
                    )
                    self._bytes_per_node[i] += payload_bytes
                    stats.bytes += payload_bytes
        else:
            rounds = linear_rounds(self.d)
            for t in range(rounds):
                if t < self.d - 1:
                    # reduce phase: node t forwards the prefix sum 0..t
                    src, dst = t, t + 1
                    payload = self._prefix_sum(t + 1) if self.record_payloads else None
                else:
                    # broadcast phase: the full sum travels back down the chain
                    j = t - (self.d - 1)
                    src, dst = self.d - 1 - j, self.d - 2 - j
                    payload = self._result.copy() if self.record_payloads else None
                self.trace.append(TraceMessage(cid, t, src, dst, payload_bytes, tag, payload))
                self._bytes_per_node[src] += payload_bytes
                stats.bytes += payload_bytes
        self._rounds_total += rounds

    def _prefix_sum(self, count):
        total = np.zeros(self._slots[0].shape)
        for j in range(count):
            total = total + self._slots[j]
        return total

    def _butterfly_partial(self, node, round_idx):
        """Partial the sender holds before round ``round_idx``: the canonical
        sum over the 2^round_idx-aligned block of node indices it has merged."""
        width = 1 << round_idx
        lo = (node // width) * width
        members = [j for j in range(lo, lo + width) if j < self.d]
        total = np.zeros(self._slots[0].shape)
        for j in members:
            total = total + self._slots[j]
        return total


def comm_stats(fabric):
    """Snapshot of the fabric's accumulated communication accounting."""
    return CommStats(
        d=fabric.d,
        schedule=fabric.schedule,
        collectives=fabric._collectives,
        rounds_per_all_reduce=fabric.rounds_per_all_reduce,
        rounds=fabric._rounds_total,
        total_bytes=sum(fabric._bytes_per_node),
        bytes_per_node=list(fabric._bytes_per_node),
        per_tag={k: TagStats(v.count, v.bytes) for k, v in fabric._per_tag.items()},
    )


def dump_trace(fabric, path):
    """Write the message metadata as JSON lines (payloads are not dumped)."""
    with open(path, "w", encoding="ascii") as fh:
        for msg in fabric.trace:
            fh.write(
                json.dumps(
                    {
                        "collective": msg.collective,
                        "round": msg.round,
                        "src": msg.src,
                        "dst": msg.dst,
                        "bytes": msg.bytes,
                        "tag": msg.tag,
                    }
                )
                + "\n"
            )


def run_nodes(fabric, worker, per_node_args):
    """Run one worker thread per node and collect their return values.

    ``worker`` is called as ``worker(node_id, *args)`` with that node's
    entry from ``per_node_args``. If any worker raises, all pending
    collectives are aborted and the first error is re-raised.
    """
    if len(per_node_args) != fabric.d:
        raise ValueError("need exactly one argument tuple per node")
    results = [None] * fabric.d
    errors = [None] * fabric.d

    def _run(i):
        try:
            results[i] = worker(i, *per_node_args[i])
        except BaseException as exc:  # noqa: BLE001 - propagated to the caller
            errors[i] = exc
            fabric.abort()

    threads = [threading.Thread(target=_run, args=(i,), name=f"node-{i}") for i in range(fabric.d)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    primary = next((e for e in errors if e is not None and not isinstance(e, threading.BrokenBarrierError)), None)
    if primary is not None:
        raise primary
    return results

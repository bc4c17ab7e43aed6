"""Communication substrate: two-packet messages, notification channels,
task queues with a promoted front buffer, and whole-bank memory locks."""

from __future__ import annotations

from collections import deque
from enum import IntEnum
from itertools import combinations
from typing import Iterable, NamedTuple, Optional, Sequence

from .model import Criticality, Job, TaskDef, Tile

WORD_MASK = 0xFFFF_FFFF
ROUTE_BITS = 5
TYPE_SHIFT = 12
PARITY_BIT = 31
HOP_LATENCY_CYCLES = 8


class ChannelFull(Exception):
    pass


class QueueFull(Exception):
    pass


class PlacementInfeasible(Exception):
    pass


class MsgType(IntEnum):
    TASK_ARRIVAL = 0
    TASK_COMPLETE = 1
    TASK_START = 2
    MODE_NOTICE = 3


class ChannelClass(IntEnum):
    HIGH_PRIORITY = 0
    LOW_PRIORITY = 1
    CONTROL = 2

    @classmethod
    def for_level(cls, level: Criticality) -> "ChannelClass":
        return cls.HIGH_PRIORITY if level is Criticality.HIGH else cls.LOW_PRIORITY


def _odd_parity(word: int) -> int:
    return (bin(word).count("1") + 1) & 1


class Message:
    """Header word (route id, 3-bit type, odd parity) followed by the task id.

    ``job`` rides along for the simulator's bookkeeping and is not encoded.
    """

    __slots__ = ("route", "msg_type", "task_id", "job")

    def __init__(self, route: int, msg_type: MsgType, task_id: int, job: Optional[Job] = None):
        if not 0 <= route < (1 << ROUTE_BITS):
            raise ValueError(f"route {route} does not fit in {ROUTE_BITS} bits")
        if not 0 <= msg_type < 8:
            raise ValueError("message type must fit in 3 bits")
        if not 0 <= task_id <= WORD_MASK:
            raise ValueError("task id must fit in 32 bits")
        self.route = route
        self.msg_type = msg_type
        self.task_id = task_id
        self.job = job

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        return (self.route, self.msg_type, self.task_id) == (other.route, other.msg_type, other.task_id)

    def __hash__(self):
        return hash((self.route, int(self.msg_type), self.task_id))

    def __repr__(self):
        return f"Message(route={self.route}, msg_type={self.msg_type!r}, task_id={self.task_id})"

    @property
    def tlast_on_payload(self) -> bool:
        return True

    def header_word(self) -> int:
        word = self.route | (int(self.msg_type) << TYPE_SHIFT)
        return word | (_odd_parity(word) << PARITY_BIT)

    def packets(self) -> list[tuple[int, bool]]:
        """The two 32-bit stream transfers as (data, tlast)."""
        return [(self.header_word(), False), (self.task_id & WORD_MASK, True)]

    @classmethod
    def decode(cls, packets: Sequence[tuple[int, bool]]) -> "Message":
        if len(packets) != 2:
            raise ValueError(f"a message is exactly two packets, got {len(packets)}")
        (header, last0), (payload, last1) = packets
        if last0 or not last1:
            raise ValueError("tlast must be asserted on the second packet only")
        if (bin(header).count("1") & 1) != 1:
            raise ValueError("header parity error")
        route = header & ((1 << ROUTE_BITS) - 1)
        mtype = (header >> TYPE_SHIFT) & 0b111
        return cls(route, MsgType(mtype), payload)


class StreamMerger:
    """Round-robin arbitration among sources sending in the same cycle."""

    def __init__(self):
        self.last_granted: Optional[int] = None

    def order(self, sources: Iterable[int]) -> list[int]:
        ranked = sorted(set(sources))
        if self.last_granted is not None and ranked:
            after = [s for s in ranked if s > self.last_granted]
            before = [s for s in ranked if s <= self.last_granted]
            ranked = after + before
        if ranked:
            # the pointer moves past this round's winner
            self.last_granted = ranked[0]
        return ranked


class NotificationChannel:
    """FIFO packet-stream path; a message costs hop latency plus one cycle."""

    def __init__(self, channel_class: ChannelClass, hop_latency: int = HOP_LATENCY_CYCLES,
                 capacity: int = 16):
        self.channel_class = channel_class
        self.hop_latency = hop_latency
        self.capacity = capacity
        self.fifo: deque = deque()
        self.last_delivery = -1
        self.sent = 0
        self.rejected = 0

    def __len__(self):
        return len(self.fifo)

    def latency(self, hop_latency: Optional[int] = None) -> int:
        return (self.hop_latency if hop_latency is None else hop_latency) + 1

    def send(self, msg: Message, now: int, hop_latency: Optional[int] = None) -> int:
        if len(self.fifo) >= self.capacity:
            self.rejected += 1
            raise ChannelFull(f"{self.channel_class.name} channel full ({self.capacity} messages)")
        delivery = max(now + self.latency(hop_latency), self.last_delivery + 1)
        self.last_delivery = delivery
        self.fifo.append((msg, delivery))
        self.sent += 1
        return delivery

    def next_delivery(self) -> Optional[int]:
        return self.fifo[0][1] if self.fifo else None

    def pop_ready(self, now: int) -> Optional[Message]:
        if self.fifo and self.fifo[0][1] <= now:
            return self.fifo.popleft()[0]
        return None


def send_notification(channel: NotificationChannel, msg: Message, now: int) -> int:
    return channel.send(msg, now)


class TaskQueue:
    """Per-priority job queue whose head is promoted into a readable front buffer.

    Promotion of the next element costs ``promote_cycles`` (one metadata copy).
    ``capacity`` bounds front buffer plus backlog.
    """

    def __init__(self, priority: Criticality, capacity: int = 16, promote_cycles: int = 0):
        self.priority = priority
        self.capacity = capacity
        self.promote_cycles = promote_cycles
        self.front_buffer: Optional[Job] = None
        self.front_ready_at: Optional[int] = None
        self.fifo: deque = deque()
        self.offered = 0
        self.popped = 0
        self.dropped = 0

    def __len__(self):
        return len(self.fifo) + (self.front_buffer is not None)

    def _promote(self, now: int) -> Optional[int]:
        if self.front_buffer is None and self.fifo:
            self.front_buffer = self.fifo.popleft()
            self.front_ready_at = now + self.promote_cycles
            return self.front_ready_at
        return None

    def enqueue(self, job: Job, now: int) -> Optional[int]:
        """Append ``job``; returns the promotion completion time if one started."""
        self.offered += 1
        if len(self) >= self.capacity:
            self.dropped += 1
            raise QueueFull(f"{self.priority.label()} queue full ({self.capacity})")
        self.fifo.append(job)
        return self._promote(now)

    def front_ready(self, now: int) -> bool:
        return self.front_buffer is not None and self.front_ready_at <= now

    def pop_front(self, now: int) -> Optional[Job]:
        if not self.front_ready(now):
            return None
        job = self.front_buffer
        self.front_buffer = None
        self.front_ready_at = None
        self.popped += 1
        self._promote(now)
        return job

    @property
    def still_queued(self) -> int:
        return len(self)


def enqueue_task(queue: TaskQueue, job: Job, now: int) -> Optional[int]:
    return queue.enqueue(job, now)


def pop_front(queue: TaskQueue, now: int) -> Optional[Job]:
    return queue.pop_front(now)


class BankGrant(NamedTuple):
    granted: bool
    until: int


class MemoryBank:
    """Whole-bank lock: one holder (processor or copy engine) at a time."""

    def __init__(self, bank_id):
        self.bank_id = bank_id
        self.holder: Optional[int] = None
        self.held_from: Optional[int] = None
        self.held_until: Optional[int] = None
        self.history: list[tuple[int, int, int]] = []

    def free_at(self, now: int) -> bool:
        return self.held_until is None or self.held_until <= now

    def acquire(self, entity: int, duration: int, now: int) -> BankGrant:
        if duration < 0:
            raise ValueError("duration must be >= 0")
        if not self.free_at(now):
            return BankGrant(False, self.held_until)
        self.holder = entity
        self.held_from = now
        self.held_until = now + duration
        self.history.append((entity, now, now + duration))
        return BankGrant(True, self.held_until)

    def arbitrate(self, requests: Iterable[tuple[int, int]], now: int) -> dict[int, BankGrant]:
        """Resolve same-cycle requests ``(entity, duration)``; lowest entity id first."""
        return {entity: self.acquire(entity, duration, now)
                for entity, duration in sorted(requests)}


def acquire_bank(bank: MemoryBank, entity: int, duration: int, now: int) -> BankGrant:
    return bank.acquire(entity, duration, now)


def _parallel(a: TaskDef, b: TaskDef, tiles: Sequence[Tile]) -> bool:
    hosts_a = [t.id for t in tiles if t.ever_capable(a.criticality)]
    hosts_b = [t.id for t in tiles if t.ever_capable(b.criticality)]
    return any(x != y for x in hosts_a for y in hosts_b)


def check_bank_placement(tasks: Sequence[TaskDef], tiles: Sequence[Tile], banks: int = 8) -> dict[int, int]:
    """Assign one bank index per task so that tasks able to run in parallel
    never share a bank. Exact search (graph colouring with backtracking).
    """
    tasks = sorted(tasks, key=lambda t: t.id)
    if banks < 1:
        raise PlacementInfeasible("no memory banks available")
    conflicts = {t.id: set() for t in tasks}
    for a, b in combinations(tasks, 2):
        if _parallel(a, b, tiles):
            conflicts[a.id].add(b.id)
            conflicts[b.id].add(a.id)
    order = sorted(conflicts, key=lambda tid: (-len(conflicts[tid]), tid))
    assignment: dict[int, int] = {}

    def place(i: int) -> bool:
        if i == len(order):
            return True
        tid = order[i]
        taken = {assignment[o] for o in conflicts[tid] if o in assignment}
        for bank in range(banks):
            if bank not in taken:
                assignment[tid] = bank
                if place(i + 1):
                    return True
                del assignment[tid]
        return False

    if not place(0):
        raise PlacementInfeasible(
            f"cannot place buffers of {len(tasks)} tasks on {banks} banks without "
            "sharing a bank between tasks that may run in parallel")
    return {tid: assignment[tid] for tid in sorted(assignment)}

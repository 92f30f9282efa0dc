"""Event kinds and the priority scheduling queue feeding the dialog machine.

Lower priority value means more urgent; the MIN sentinel outranks every
integer. Ties break FIFO by enqueue order, so equal-priority events are
processed in arrival order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .ledger import MIN, Content, Priority, Role


class FsmState(Enum):
    IDLE = "idle"
    LISTENING = "listening"
    GENERATING = "generating"
    EMITTING = "emitting"


class EventKind(Enum):
    GENERATE_DONE = "generate_done"
    EMIT = "emit"
    EMIT_DONE = "emit_done"
    INTERRUPT = "interrupt"
    TOOL_RESPONSE_RECEIVED = "tool_response_received"
    USER_CHAT = "user_chat"
    TOOL_REQUEST_SENT = "tool_request_sent"
    TIME_PASSAGE = "time_passage"


class _Presence(Enum):
    NONE = "none"
    REQUIRED = "required"
    OPTIONAL = "optional"


# kind -> (default priority, target state, message presence). The interrupt
# message is optional: nothing is attached when there was nothing to interrupt.
BINDINGS: dict[EventKind, tuple[Priority, FsmState, _Presence]] = {
    EventKind.GENERATE_DONE: (MIN, FsmState.IDLE, _Presence.NONE),
    EventKind.EMIT: (MIN, FsmState.EMITTING, _Presence.NONE),
    EventKind.EMIT_DONE: (MIN, FsmState.IDLE, _Presence.NONE),
    EventKind.INTERRUPT: (MIN, FsmState.LISTENING, _Presence.OPTIONAL),
    EventKind.TOOL_RESPONSE_RECEIVED: (1, FsmState.GENERATING, _Presence.REQUIRED),
    EventKind.USER_CHAT: (-1, FsmState.GENERATING, _Presence.REQUIRED),
    EventKind.TOOL_REQUEST_SENT: (MIN, FsmState.IDLE, _Presence.REQUIRED),
    EventKind.TIME_PASSAGE: (1, FsmState.GENERATING, _Presence.REQUIRED),
}


class EventError(ValueError):
    """Invalid event construction or queue misuse."""


@dataclass
class Event:
    kind: EventKind
    priority: Priority = None  # type: ignore[assignment]
    target_state: FsmState = None  # type: ignore[assignment]
    message: Optional[tuple[Role, Content]] = None
    enqueue_seq: int = field(default=-1, compare=False)
    enqueue_time: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        default_priority, default_target, presence = BINDINGS[self.kind]
        if self.priority is None:
            self.priority = default_priority
        if self.target_state is None:
            self.target_state = default_target
        if not (self.priority is MIN or isinstance(self.priority, int)):
            raise EventError(f"priority must be an integer or MIN, got {self.priority!r}")
        if presence is _Presence.NONE and self.message is not None:
            raise EventError(f"{self.kind.value} events carry no message")
        if presence is _Presence.REQUIRED and self.message is None:
            raise EventError(f"{self.kind.value} events must carry a message")


def _priority_key(p: Priority) -> tuple[int, int]:
    return (0, 0) if p is MIN else (1, p)


class SchedulingQueue:
    """Priority queue ordered by (priority, enqueue_seq)."""

    def __init__(self, coalesce_time_passage: bool = False) -> None:
        self._heap: list[tuple[tuple[int, int], int, Event]] = []
        self._next_seq = 0
        self._coalesce = coalesce_time_passage

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, event: Event, now: int = 0) -> None:
        event.enqueue_seq = self._next_seq
        event.enqueue_time = now
        self._next_seq += 1
        heapq.heappush(self._heap, (_priority_key(event.priority), event.enqueue_seq, event))
        if self._coalesce and event.kind is EventKind.TIME_PASSAGE:
            self.coalesce_time_passage()

    def top(self) -> Event:
        if not self._heap:
            raise EventError("top() on an empty queue")
        return self._heap[0][2]

    def pop(self) -> Event:
        if not self._heap:
            raise EventError("pop() on an empty queue")
        return heapq.heappop(self._heap)[2]

    def coalesce_time_passage(self) -> int:
        """Keep only the newest queued tick; returns how many were dropped."""
        ticks = [e for _, _, e in self._heap if e.kind is EventKind.TIME_PASSAGE]
        if len(ticks) <= 1:
            return 0
        newest = max(ticks, key=lambda e: e.enqueue_seq)
        kept = [entry for entry in self._heap
                if entry[2].kind is not EventKind.TIME_PASSAGE or entry[2] is newest]
        dropped = len(self._heap) - len(kept)
        self._heap = kept
        heapq.heapify(self._heap)
        return dropped

    def snapshot(self) -> list[Event]:
        """Events in pop order, without disturbing the queue."""
        return [entry[2] for entry in sorted(self._heap)]

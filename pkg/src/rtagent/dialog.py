"""Four-state dialog machine driven by the scheduling queue.

One step pops the most urgent event when the gate allows it, appends the
event's message to the ledger, and transitions to the event's target state.
The gate: idle runs anything; generating runs priority <= 1; emitting runs
priority < 1; listening blocks everything (optionally barging in on the user
for hyper-urgent events when that hook is enabled).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .events import Event, EventKind, FsmState, SchedulingQueue
from .ledger import Ledger, NotificationContent, Priority, priority_to_json


def gate_allows(state: FsmState, priority: Priority) -> bool:
    """Whether an event of this priority may be popped in this state."""
    if state is FsmState.IDLE:
        return True
    if state is FsmState.GENERATING:
        return priority <= 1
    if state is FsmState.EMITTING:
        return priority < 1
    return False


@dataclass
class StepOutcome:
    ran: bool
    event: Optional[Event] = None


class DialogSystem:
    """State machine + queue + ledger for one thought process."""

    def __init__(
        self,
        queue: SchedulingQueue,
        ledger: Ledger,
        pid: int = 0,
        now_fn: Callable[[], int] = lambda: 0,
        trace=None,
        interrupt_user_below: Optional[int] = None,
    ) -> None:
        self.state = FsmState.IDLE
        self.queue = queue
        self.ledger = ledger
        self.pid = pid
        self.now_fn = now_fn
        self.trace = trace
        self.generation_in_progress = False
        self.interrupt_user_below = interrupt_user_below
        # Invoked after each processed event; the environment starts
        # generations and reacts to state changes from here.
        self.post_step: Optional[Callable[[Event], None]] = None
        self.on_state_change: Optional[Callable[[FsmState, FsmState], None]] = None
        self.on_user_interrupt: Optional[Callable[[], None]] = None

    def step(self) -> StepOutcome:
        if len(self.queue) == 0:
            return StepOutcome(ran=False)
        top = self.queue.top()
        if not gate_allows(self.state, top.priority):
            if (
                self.state is FsmState.LISTENING
                and self.interrupt_user_below is not None
                and top.priority < self.interrupt_user_below
                and self.on_user_interrupt is not None
            ):
                # Barge in on the user: the hook halts the input peripheral
                # and forces idle, so the event runs on the next step.
                self.on_user_interrupt()
            return StepOutcome(ran=False)
        event = self.queue.pop()
        message_seq = None
        if event.message is not None:
            role, content = event.message
            if isinstance(content, NotificationContent):
                # Stamp at append time so ledger timestamps stay monotone
                # even when the event waited behind the gate.
                content.timestamp = self.now_fn()
            message_seq = self.ledger.append(role, content, priority=event.priority)
        state_before = self.state
        state_after = event.target_state
        if event.kind is EventKind.EMIT_DONE and self.generation_in_progress:
            # Emission can drain before the stream closes; fall back to
            # generating instead of going idle under an open stream.
            state_after = FsmState.GENERATING
        self._set_state(state_after)
        if self.trace is not None:
            self.trace.add(
                self.now_fn(),
                "event_processed",
                self.pid,
                {
                    "event": event.kind.value,
                    "priority": priority_to_json(event.priority),
                    "state_before": state_before.value,
                    "state_after": state_after.value,
                    "message_seq": message_seq,
                },
            )
        if self.post_step is not None:
            self.post_step(event)
        return StepOutcome(ran=True, event=event)

    def drain(self) -> int:
        """Step until the gate blocks or the queue empties."""
        steps = 0
        while self.step().ran:
            steps += 1
        return steps

    def force_transition(self, new_state: FsmState, reason: str) -> None:
        """Direct transition outside the event path (e.g. speech end)."""
        state_before = self.state
        self._set_state(new_state)
        if self.trace is not None:
            self.trace.add(
                self.now_fn(),
                "force_transition",
                self.pid,
                {"from": state_before.value, "to": new_state.value, "reason": reason},
            )

    def _set_state(self, new_state: FsmState) -> None:
        old = self.state
        self.state = new_state
        if old is not new_state and self.on_state_change is not None:
            self.on_state_change(old, new_state)

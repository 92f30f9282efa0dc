"""Virtual-time action schedule: the discrete-event backbone of the runtime.

Everything that takes time (token arrival, word emission, tool latency,
utterance boundaries, clock ticks) is an action on this timeline. The
harness pops actions in (due, insertion) order; the gateway paces the same
pops against the wall clock.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional

Action = Callable[[int], None]


class Timeline:
    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int]] = []  # (due, action_id, owner_pid)
        self._actions: dict[int, Action] = {}
        self._next_id = 0

    def schedule(self, due: int, action: Action, pid: int = 0) -> int:
        """Register an action at virtual time `due`; returns a cancellation id."""
        if due < 0:
            raise ValueError(f"cannot schedule in negative time: {due}")
        action_id = self._next_id
        self._next_id += 1
        self._actions[action_id] = action
        heapq.heappush(self._heap, (due, action_id, pid))
        return action_id

    def cancel(self, action_id: Optional[int]) -> None:
        if action_id is not None:
            self._actions.pop(action_id, None)

    def cancel_owned(self, pids: set[int]) -> int:
        """Drop every pending action owned by the given processes."""
        dropped = 0
        for due, action_id, pid in self._heap:
            if pid in pids and action_id in self._actions:
                del self._actions[action_id]
                dropped += 1
        return dropped

    def next_due(self) -> Optional[int]:
        self._skim()
        return self._heap[0][0] if self._heap else None

    def pop_due(self) -> Optional[tuple[int, Action]]:
        """Earliest live action, skipping cancelled entries."""
        self._skim()
        if not self._heap:
            return None
        due, action_id, _ = heapq.heappop(self._heap)
        return due, self._actions.pop(action_id)

    def _skim(self) -> None:
        while self._heap and self._heap[0][1] not in self._actions:
            heapq.heappop(self._heap)

    def __len__(self) -> int:
        self._skim()
        return sum(1 for _, action_id, _ in self._heap if action_id in self._actions)

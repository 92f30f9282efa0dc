"""Input/output peripherals: sentence-paced emitter and the session clock.

The emitter turns streamed chat text into sentence segments and plays them
out at a fixed character rate, one whole word at a time, so a halt always
lands on a word boundary. The tick scheduler pushes periodic time-passage
notifications so an idle agent can wake itself up.
"""

from __future__ import annotations

import re
from collections import deque
from typing import Optional

from .events import Event, EventKind
from .ledger import SYSTEM_SOURCE, NotificationContent, Role

_SENTENCE_END = re.compile(r"[.!?]+(?=\s)")
_WORD_END = re.compile(r"\S+")


class SentenceAggregator:
    """Buffers streamed chat and yields one sentence at a time.

    A sentence ends at '.', '!' or '?' followed by whitespace; the trailing
    fragment only flushes when the chat segment closes. Each yielded item is
    (raw, display): raw preserves the exact stream span (leading whitespace
    included) so emitted text stays a true prefix of the generated chat.
    """

    def __init__(self) -> None:
        self._buf = ""

    def feed(self, delta: str) -> list[tuple[str, str]]:
        self._buf += delta
        out = []
        while True:
            match = _SENTENCE_END.search(self._buf)
            if match is None:
                break
            raw, self._buf = self._buf[: match.end()], self._buf[match.end():]
            if raw.strip():
                out.append((raw, raw.strip()))
        return out

    def flush(self) -> list[tuple[str, str]]:
        out = []
        if self._buf.strip():
            out.append((self._buf, self._buf.strip()))
        self._buf = ""
        return out

    def reset(self) -> None:
        self._buf = ""


class Emitter:
    """Plays queued sentence segments at chars_per_second, word by word."""

    def __init__(self, env, chars_per_second: int) -> None:
        if chars_per_second <= 0:
            raise ValueError("chars_per_second must be positive")
        self.env = env
        self.cps = chars_per_second
        self.active = False
        self.emitted = ""  # raw emitted text for the generation being played
        self.emitting_handle: Optional[int] = None
        self._agg = SentenceAggregator()
        self._feeding_handle: Optional[int] = None
        self._open_chat = False
        self._pending: deque[tuple[str, str, int]] = deque()  # (raw, display, handle)
        self._pieces: list[tuple[str, int]] = []  # (text, end offset in raw)
        self._display = ""
        self._raw_len = 0
        self._anchor = 0
        self._base = 0
        self._action: Optional[int] = None

    def new_generation(self, handle: int) -> None:
        self._feeding_handle = handle
        self._agg.reset()
        self._open_chat = False

    def mark_chat_open(self) -> None:
        self._open_chat = True

    def feed_chat(self, delta: str, now: int) -> None:
        for raw, display in self._agg.feed(delta):
            self._enqueue(raw, display)
        self._ensure_running(now)

    def chat_segment_closed(self, now: int) -> None:
        """Flush the unterminated tail and allow emit_done once drained."""
        flushed = self._agg.flush()
        for raw, display in flushed:
            self._enqueue(raw, display)
        self._open_chat = False
        if flushed:
            self._ensure_running(now)
        elif self.active and self._action is None and not self._pending and not self._pieces:
            self._finish_cycle(now)

    def halt(self, now: int) -> str:
        """Stop speech at the last whole word; returns the emitted prefix."""
        halted_something = self.active
        self.env.world.timeline.cancel(self._action)
        self._action = None
        self._pending.clear()
        self._pieces = []
        self._agg.reset()
        self._open_chat = False
        self.active = False
        if halted_something:
            self.env.trace.add(now, "emission", self.env.pid,
                               {"action": "halted", "emitted": self.emitted})
            self.env.world.emit_frame("emission_halted", {"emitted": self.emitted})
        return self.emitted

    def _enqueue(self, raw: str, display: str) -> None:
        self._pending.append((raw, display, self._feeding_handle))

    def _ensure_running(self, now: int) -> None:
        if self._action is not None:
            return
        if not self._pieces and not self._load_next_segment():
            return
        if not self.active:
            self.active = True
            self.env.queue.push(Event(EventKind.EMIT), now)
        self._anchor = now
        self._base = 0
        self._schedule_next()

    def _load_next_segment(self) -> bool:
        if not self._pending:
            return False
        raw, display, handle = self._pending.popleft()
        if handle != self.emitting_handle:
            self.emitting_handle = handle
            self.emitted = ""
        prev = 0
        pieces = []
        for match in _WORD_END.finditer(raw):
            pieces.append((raw[prev:match.end()], match.end()))
            prev = match.end()
        self._pieces = pieces
        self._display = display
        self._raw_len = len(raw)
        return True

    def _schedule_next(self) -> None:
        piece_text, end = self._pieces[0]
        due = self._anchor + int(round((self._base + end) * 1000 / self.cps))
        self._action = self.env.world.timeline.schedule(due, self._on_piece, self.env.pid)

    def _on_piece(self, now: int) -> None:
        self._action = None
        piece_text, _ = self._pieces.pop(0)
        self.emitted += piece_text
        if self._pieces:
            self._schedule_next()
            return
        # whole segment spoken
        self.env.trace.add(now, "emission", self.env.pid,
                           {"action": "segment", "text": self._display})
        self.env.world.emit_frame("emit_segment", {"text": self._display})
        self._base += self._raw_len
        if self._load_next_segment():
            self._schedule_next()
        elif not self._open_chat:
            self._finish_cycle(now)
        # otherwise: drained but the chat segment is still open; wait for text

    def _finish_cycle(self, now: int) -> None:
        self.active = False
        self._action = None
        self.env.queue.push(Event(EventKind.EMIT_DONE), now)


class TickScheduler:
    """Periodic time-passage wakeups on the root process."""

    def __init__(self, env, interval_ms: int) -> None:
        if interval_ms <= 0:
            raise ValueError("tick interval must be positive")
        self.env = env
        self.interval = interval_ms

    def start(self) -> None:
        self.env.world.timeline.schedule(self.interval, self._fire, self.env.pid)

    def _fire(self, now: int) -> None:
        content = NotificationContent(
            source=SYSTEM_SOURCE, timestamp=now, data=f"Time passed. t={now} ms")
        self.env.queue.push(
            Event(EventKind.TIME_PASSAGE, message=(Role.NOTIFICATION, content)), now)
        self.env.world.emit_frame("clock", {"now_ms": now})
        self.env.world.timeline.schedule(now + self.interval, self._fire, self.env.pid)

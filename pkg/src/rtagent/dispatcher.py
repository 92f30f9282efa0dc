"""Dispatch-model streaming: segment grammar, models, and reconciliation.

A generation streams marker-delimited segments (thought, function, chat).
Chat text feeds the emitter sentence by sentence, function payloads are
dispatched the moment their segment closes, and exactly one assistant
message plus one generate_done event comes out of every generation, no
matter how it ends (clean close, cancellation, or model failure).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .events import Event, EventKind
from .ledger import (
    CHAT_MARKER,
    FUNCTION_MARKER,
    INTERRUPT_TOKEN,
    THOUGHT_MARKER,
    AssistantContent,
    FunctionCall,
    Role,
)

_MARKER_KIND = {THOUGHT_MARKER: "thought", FUNCTION_MARKER: "function", CHAT_MARKER: "chat"}
_MARKER_RE = re.compile("(" + "|".join(re.escape(m) for m in _MARKER_KIND) + ")")
_TOKEN_RE = re.compile(r"\s*\S+|\s+$")

_FIELD_FOR_KIND = {"thought": "thought", "function": "functions", "chat": "chat"}


class StreamGrammarError(ValueError):
    """Token stream violates the segment grammar."""


def tokenize_script(text: str) -> list[str]:
    """Split scripted output into stream tokens; markers stand alone and the
    concatenation of all tokens reproduces the input exactly."""
    tokens: list[str] = []
    for piece in _MARKER_RE.split(text):
        if not piece:
            continue
        if piece in _MARKER_KIND:
            tokens.append(piece)
        else:
            tokens.extend(_TOKEN_RE.findall(piece))
    return tokens


@dataclass
class ParsedSegment:
    kind: str
    text: str = ""
    payload: Optional[dict] = None


class StreamParser:
    """Incremental parser for the marker-delimited segment grammar."""

    def __init__(self) -> None:
        self.segment: Optional[str] = None
        self.thought = ""
        self.chat = ""
        self.chat_opened = False
        self.completed: list[ParsedSegment] = []
        self._seg_buf = ""
        self._order: list[str] = []

    def feed(self, token: str) -> list[tuple]:
        if token in _MARKER_KIND:
            effects = self._close_segment()
            kind = _MARKER_KIND[token]
            self.segment = kind
            self._seg_buf = ""
            fkey = _FIELD_FOR_KIND[kind]
            if fkey not in self._order:
                self._order.append(fkey)
            if kind == "chat":
                self.chat_opened = True
                effects.append(("chat_open",))
            return effects
        if self.segment is None:
            raise StreamGrammarError(f"text before any segment marker: {token!r}")
        self._seg_buf += token
        if self.segment == "thought":
            self.thought += token
            return []
        if self.segment == "chat":
            self.chat += token
            return [("chat_delta", token)]
        return []  # function body buffers until the segment closes

    def close(self) -> list[tuple]:
        """End of stream: close whatever segment is open."""
        return self._close_segment()

    def abandon(self) -> None:
        """Cancellation: drop any in-flight function body, keep parsed text."""
        self.segment = None
        self._seg_buf = ""

    def field_order(self) -> tuple[str, ...]:
        order = list(self._order)
        for key in ("thought", "functions", "chat"):
            if key not in order:
                order.append(key)
        return tuple(order)

    def _close_segment(self) -> list[tuple]:
        effects: list[tuple] = []
        if self.segment == "function":
            try:
                payload = json.loads(self._seg_buf)
            except json.JSONDecodeError as exc:
                raise StreamGrammarError(f"function body is not valid JSON: {exc}") from None
            if not isinstance(payload, dict):
                raise StreamGrammarError("function body must be a JSON object")
            self.completed.append(ParsedSegment(kind="function", payload=payload))
            effects.append(("function", payload))
        elif self.segment == "chat":
            self.completed.append(ParsedSegment(kind="chat", text=self._seg_buf))
            effects.append(("chat_closed",))
        elif self.segment == "thought":
            self.completed.append(ParsedSegment(kind="thought", text=self._seg_buf))
        self.segment = None
        self._seg_buf = ""
        return effects


def parse_stream(tokens) -> list[ParsedSegment]:
    """Parse a complete token stream into its ordered segments."""
    parser = StreamParser()
    for token in tokens:
        parser.feed(token)
    parser.close()
    return parser.completed


def join_interrupt(emitted: str) -> str:
    """Reconciled chat: emitted prefix plus the interrupt token."""
    if not emitted:
        return INTERRUPT_TOKEN
    if emitted[-1].isspace():
        return emitted + INTERRUPT_TOKEN
    return emitted + " " + INTERRUPT_TOKEN


@dataclass
class ModelRule:
    trigger: str
    output: str
    token_delay_ms: int = 20


class ScriptedModel:
    """Deterministic model: the longest trigger that is a suffix of the
    rendered prompt (trailing whitespace ignored) wins; no match means an
    empty reply. Suffix matching makes rules respond to the newest message
    only, so a trigger cannot re-fire on stale context."""

    def __init__(self, rules: list[ModelRule]) -> None:
        self.rules = rules

    def reply(self, prompt: str) -> tuple[list[str], int]:
        tail = prompt.rstrip()
        best: Optional[ModelRule] = None
        for rule in self.rules:
            if rule.trigger and tail.endswith(rule.trigger):
                if best is None or len(rule.trigger) > len(best.trigger):
                    best = rule
        if best is None:
            return [], 0
        return tokenize_script(best.output), best.token_delay_ms


class RemoteModel:
    """Chat-completions HTTP adapter for live sessions only.

    Streams SSE chunks and re-tokenizes them for the parser. Deterministic
    runs never touch this class.
    """

    def __init__(self, endpoint: str, model: str, headers: Optional[dict] = None,
                 params: Optional[dict] = None) -> None:
        self.endpoint = endpoint
        self.model = model
        self.headers = headers or {}
        self.params = params or {}

    def stream(self, prompt: str):
        import httpx

        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "stream": True,
            **self.params,
        }
        with httpx.stream("POST", self.endpoint, json=body, headers=self.headers,
                          timeout=60.0) as response:
            response.raise_for_status()
            for line in response.iter_lines():
                if not line.startswith("data:"):
                    continue
                data = line[len("data:"):].strip()
                if data == "[DONE]":
                    break
                chunk = json.loads(data)
                delta = chunk.get("choices", [{}])[0].get("delta", {}).get("content")
                if delta:
                    for token in tokenize_script(delta):
                        yield token


@dataclass
class ActiveGeneration:
    handle: int
    parser: StreamParser
    tokens: Optional[list[str]]  # None for a live (externally fed) stream
    delay: int
    index: int = 0
    action_id: Optional[int] = None
    done: bool = False
    appended_seq: Optional[int] = None
    functions: list[FunctionCall] = field(default_factory=list)


class Dispatcher:
    """Owns the (single) in-flight generation of one environment."""

    def __init__(self, env) -> None:
        self.env = env
        self.current: Optional[ActiveGeneration] = None
        self._next_handle = 0

    @property
    def streaming(self) -> bool:
        return self.current is not None and not self.current.done

    def begin_generation(self, now: int) -> int:
        if self.streaming:
            raise RuntimeError("a generation is already in progress")
        env = self.env
        prompt = env.ledger.render_prompt(env.world.config.prompt_template)
        handle = self._next_handle
        self._next_handle += 1
        gen = ActiveGeneration(handle=handle, parser=StreamParser(), tokens=None, delay=0)
        try:
            tokens, delay = env.model.reply(prompt)
            gen.tokens, gen.delay = tokens, delay
        except Exception as exc:  # model failure still yields a closed turn
            self.current = gen
            env.ds.generation_in_progress = True
            if env.emitter is not None:
                env.emitter.new_generation(handle)
            env.trace.add(now, "generation", env.pid,
                          {"action": "started", "handle": handle, "tokens": 0})
            self._fail(now, f"model failure: {exc}")
            return handle
        self.current = gen
        env.ds.generation_in_progress = True
        if env.emitter is not None:
            env.emitter.new_generation(handle)
        env.trace.add(now, "generation", env.pid,
                      {"action": "started", "handle": handle, "tokens": len(tokens)})
        if tokens:
            gen.action_id = env.world.timeline.schedule(now + delay, self._on_token, env.pid)
        else:
            gen.action_id = env.world.timeline.schedule(now, self._on_finish, env.pid)
        return handle

    def _apply(self, effects, now: int, defer_chat_close: bool = False) -> bool:
        """Route parser effects; returns True if a chat close was deferred."""
        env = self.env
        deferred = False
        for effect in effects:
            kind = effect[0]
            if kind == "chat_open" and env.emitter is not None:
                env.emitter.mark_chat_open()
            elif kind == "chat_delta" and env.emitter is not None:
                env.emitter.feed_chat(effect[1], now)
            elif kind == "chat_closed":
                if defer_chat_close:
                    deferred = True
                elif env.emitter is not None:
                    env.emitter.chat_segment_closed(now)
            elif kind == "function":
                call = FunctionCall(payload=effect[1])
                self.current.functions.append(call)
                env.toolkit.invoke(call, now)
        return deferred

    def _on_token(self, now: int) -> None:
        gen = self.current
        token = gen.tokens[gen.index]
        gen.index += 1
        try:
            effects = gen.parser.feed(token)
        except StreamGrammarError as exc:
            self._fail(now, str(exc))
            return
        self._apply(effects, now)
        callback = self._on_token if gen.index < len(gen.tokens) else self._on_finish
        gen.action_id = self.env.world.timeline.schedule(now + gen.delay, callback, self.env.pid)

    def _on_finish(self, now: int) -> None:
        gen = self.current
        try:
            effects = gen.parser.close()
        except StreamGrammarError as exc:
            self._fail(now, str(exc))
            return
        # Dispatch closing function calls before the message is finalized,
        # but hold the chat flush until generate_done is queued so the state
        # settles as idle-then-emitting.
        chat_closed = self._apply(effects, now, defer_chat_close=True)
        self._finalize(now, "finished")
        if chat_closed and self.env.emitter is not None:
            self.env.emitter.chat_segment_closed(now)

    def _fail(self, now: int, error: str) -> None:
        gen = self.current
        env = self.env
        gen.parser.abandon()
        env.trace.add(now, "generation", env.pid,
                      {"action": "failed", "handle": gen.handle, "error": error})
        self._finalize(now, None)
        if env.emitter is not None:
            env.emitter.chat_segment_closed(now)

    def _finalize(self, now: int, trace_action: Optional[str]) -> None:
        gen = self.current
        env = self.env
        content = AssistantContent(
            thought=gen.parser.thought,
            functions=gen.functions,
            chat=gen.parser.chat,
            interrupted=False,
            order=gen.parser.field_order(),
        )
        gen.appended_seq = env.ledger.append(
            Role.ASSISTANT, content, priority=env.world.config.assistant_priority)
        gen.done = True
        env.ds.generation_in_progress = False
        if trace_action is not None:
            env.trace.add(now, "generation", env.pid,
                          {"action": trace_action, "handle": gen.handle})
        env.queue.push(Event(EventKind.GENERATE_DONE), now)

    def cancel_stream(self, now: int, silent: bool = False) -> bool:
        """Stop an open stream within a token; no message is appended here.

        silent cancellation (process kill) drops the turn entirely; otherwise
        the caller follows up with reconcile_after_interrupt.
        """
        if not self.streaming:
            return False
        gen = self.current
        env = self.env
        env.world.timeline.cancel(gen.action_id)
        gen.action_id = None
        gen.parser.abandon()
        gen.done = True
        env.ds.generation_in_progress = False
        env.trace.add(now, "generation", env.pid,
                      {"action": "cancelled", "handle": gen.handle})
        return True

    def reconcile_after_interrupt(self, now: int, emitted: str) -> int:
        """Fold an interruption into the in-flight assistant message.

        If the message was already finalized (generation ended, emission was
        still playing) this is the one in-place ledger rewrite; otherwise the
        reconciled message is appended fresh and generate_done follows it.
        """
        gen = self.current
        env = self.env
        if gen.appended_seq is not None:
            new_chat = join_interrupt(emitted)
            env.ledger.reconcile_rewrite(gen.appended_seq, new_chat)
            return gen.appended_seq
        if gen.parser.chat_opened:
            chat = join_interrupt(emitted)
            interrupted = True
        else:
            chat = ""
            interrupted = False
        content = AssistantContent(
            thought=gen.parser.thought,
            functions=gen.functions,
            chat=chat,
            interrupted=interrupted,
            order=gen.parser.field_order(),
        )
        gen.appended_seq = env.ledger.append(
            Role.ASSISTANT, content, priority=env.world.config.assistant_priority)
        env.queue.push(Event(EventKind.GENERATE_DONE), now)
        return gen.appended_seq

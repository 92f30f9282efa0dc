"""Append-only message ledger shared by every component of the runtime.

The ledger is the single source of truth for a session: system prompt, user
utterances, assistant turns, and notifications all land here in seq order.
Existing entries are immutable except for one carve-out, the reconciliation
rewrite of an interrupted assistant message, which may only shorten text and
flip the interrupted flag.
"""

from __future__ import annotations

import copy as _copy
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional, Union

THOUGHT_MARKER = "<|thought|>"
FUNCTION_MARKER = "<|function|>"
CHAT_MARKER = "<|chat|>"
INTERRUPT_TOKEN = "<|interrupt|>"

_SEGMENT_KEYS = ("thought", "functions", "chat")


class _MinPriority:
    """Sentinel priority that sorts strictly below every integer."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "MIN"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _MinPriority)

    def __hash__(self) -> int:
        return hash(_MinPriority)

    def __lt__(self, other: object) -> bool:
        return not isinstance(other, _MinPriority)

    def __le__(self, other: object) -> bool:
        return True

    def __gt__(self, other: object) -> bool:
        return False

    def __ge__(self, other: object) -> bool:
        return isinstance(other, _MinPriority)

    # Copies and pickles must yield the module singleton so identity checks
    # (`p is MIN`) stay valid on ledgers duplicated for child processes.
    def __copy__(self) -> "_MinPriority":
        return self

    def __deepcopy__(self, memo: dict) -> "_MinPriority":
        return self

    def __reduce__(self):
        return (_min_priority, ())


def _min_priority() -> "_MinPriority":
    return MIN


MIN = _MinPriority()

Priority = Union[int, _MinPriority]


def priority_to_json(p: Priority):
    return "MIN" if p is MIN else p


def priority_from_json(value, where: str) -> Priority:
    if value == "MIN":
        return MIN
    if isinstance(value, bool) or not isinstance(value, int):
        raise LedgerFormatError(f"{where}: priority must be an integer or \"MIN\"")
    return value


class Role(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    NOTIFICATION = "notification"


class LedgerError(ValueError):
    """Violation of a ledger contract (bad append, illegal rewrite)."""


class LedgerFormatError(LedgerError):
    """Malformed canonical ledger document."""


@dataclass
class SystemContent:
    text: str


@dataclass
class UserContent:
    timestamp: int
    chat: str


@dataclass
class FunctionCall:
    """One dispatched function call: parsed payload plus its request id.

    request_id stays None until the call is actually handed to the toolkit.
    """

    payload: dict
    request_id: Optional[str] = None


@dataclass
class AssistantContent:
    thought: str = ""
    functions: list[FunctionCall] = field(default_factory=list)
    chat: str = ""
    interrupted: bool = False
    # Order in which the segments were produced by the stream; serialization
    # preserves it through JSON key order.
    order: tuple[str, ...] = _SEGMENT_KEYS


@dataclass
class ToolRef:
    """Notification source naming the tool call that produced it."""

    tool: str
    request_id: str


SYSTEM_SOURCE = "system"

NotificationSource = Union[str, ToolRef]


@dataclass
class NotificationContent:
    source: NotificationSource
    timestamp: int
    data: str


Content = Union[SystemContent, UserContent, AssistantContent, NotificationContent]

_CONTENT_FOR_ROLE = {
    Role.SYSTEM: SystemContent,
    Role.USER: UserContent,
    Role.ASSISTANT: AssistantContent,
    Role.NOTIFICATION: NotificationContent,
}


@dataclass
class Message:
    seq: int
    role: Role
    priority: Priority
    content: Content


class Ledger:
    """Ordered message log with strictly increasing, contiguous seq numbers."""

    def __init__(self) -> None:
        self._messages: list[Message] = []
        # Called with (message, rewrite) after every append or reconciliation
        # rewrite; the environment uses it for tracing and gateway frames.
        self.observer: Optional[Callable[[Message, bool], None]] = None

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self._messages)

    def __getitem__(self, seq: int) -> Message:
        return self._messages[seq]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Ledger):
            return NotImplemented
        return self._messages == other._messages

    def append(self, role: Role, content: Content, priority: Priority) -> int:
        if not isinstance(content, _CONTENT_FOR_ROLE[role]):
            raise LedgerError(
                f"content type {type(content).__name__} does not match role {role.value}"
            )
        if isinstance(content, AssistantContent):
            if sorted(content.order) != sorted(_SEGMENT_KEYS):
                raise LedgerError(f"assistant segment order {content.order!r} is not a permutation")
            if content.interrupted and not content.chat.endswith(INTERRUPT_TOKEN):
                raise LedgerError("interrupted assistant chat must end with the interrupt token")
        seq = len(self._messages)
        msg = Message(seq=seq, role=role, priority=priority, content=content)
        self._messages.append(msg)
        if self.observer is not None:
            self.observer(msg, False)
        return seq

    def reconcile_rewrite(self, seq: int, chat: str, thought: Optional[str] = None) -> Message:
        """Rewrite an interrupted assistant message in place.

        Only the reconciliation path may mutate history: chat is replaced by an
        emitted prefix plus the interrupt token, thought may only be shortened,
        and interrupted flips to True.
        """
        msg = self._messages[seq]
        if msg.role is not Role.ASSISTANT:
            raise LedgerError(f"seq {seq} is not an assistant message")
        content = msg.content
        assert isinstance(content, AssistantContent)
        if content.interrupted:
            raise LedgerError(f"seq {seq} was already reconciled")
        if not chat.endswith(INTERRUPT_TOKEN):
            raise LedgerError("reconciled chat must end with the interrupt token")
        prefix = chat[: -len(INTERRUPT_TOKEN)].rstrip()
        if not content.chat.startswith(prefix):
            raise LedgerError("reconciled chat is not a prefix of the generated chat")
        content.chat = chat
        if thought is not None:
            if not content.thought.startswith(thought):
                raise LedgerError("reconciled thought is not a prefix of the generated thought")
            content.thought = thought
        content.interrupted = True
        if self.observer is not None:
            self.observer(msg, True)
        return msg

    def copy(self) -> "Ledger":
        """Deep, observer-free snapshot; safe to hand to a child process."""
        dup = Ledger()
        dup._messages = _copy.deepcopy(self._messages)
        return dup

    def render_prompt(self, template: str = "default") -> str:
        return get_template(template).render(self)


def _function_call_to_json(call: FunctionCall) -> dict:
    return {"payload": call.payload, "request_id": call.request_id}


def _source_to_json(source: NotificationSource):
    if source == SYSTEM_SOURCE:
        return SYSTEM_SOURCE
    assert isinstance(source, ToolRef)
    return {"tool": source.tool, "request_id": source.request_id}


def _content_to_json(content: Content) -> dict:
    if isinstance(content, SystemContent):
        return {"text": content.text}
    if isinstance(content, UserContent):
        return {"timestamp": content.timestamp, "chat": content.chat}
    if isinstance(content, NotificationContent):
        return {
            "source": _source_to_json(content.source),
            "timestamp": content.timestamp,
            "data": content.data,
        }
    assert isinstance(content, AssistantContent)
    obj: dict = {}
    for key in content.order:
        if key == "thought":
            obj["thought"] = content.thought
        elif key == "functions":
            obj["functions"] = [_function_call_to_json(c) for c in content.functions]
        else:
            obj["chat"] = content.chat
    obj["interrupted"] = content.interrupted
    return obj


def message_to_json(msg: Message) -> dict:
    return {
        "seq": msg.seq,
        "role": msg.role.value,
        "priority": priority_to_json(msg.priority),
        "content": _content_to_json(msg.content),
    }


def serialize(ledger: Ledger) -> str:
    """Canonical JSON document for a ledger; byte-deterministic."""
    doc = {"messages": [message_to_json(m) for m in ledger]}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def _require(cond: bool, where: str, what: str) -> None:
    if not cond:
        raise LedgerFormatError(f"{where}: {what}")


def _str_field(obj: dict, key: str, where: str) -> str:
    _require(key in obj, where, f"missing field '{key}'")
    _require(isinstance(obj[key], str), where, f"field '{key}' must be a string")
    return obj[key]


def _int_field(obj: dict, key: str, where: str) -> int:
    _require(key in obj, where, f"missing field '{key}'")
    value = obj[key]
    _require(not isinstance(value, bool) and isinstance(value, int), where,
             f"field '{key}' must be an integer")
    return value


def _content_from_json(role: Role, obj, where: str) -> Content:
    _require(isinstance(obj, dict), where, "content must be an object")
    if role is Role.SYSTEM:
        return SystemContent(text=_str_field(obj, "text", where))
    if role is Role.USER:
        return UserContent(
            timestamp=_int_field(obj, "timestamp", where),
            chat=_str_field(obj, "chat", where),
        )
    if role is Role.NOTIFICATION:
        source = obj.get("source")
        if source == SYSTEM_SOURCE:
            parsed: NotificationSource = SYSTEM_SOURCE
        elif isinstance(source, dict):
            parsed = ToolRef(
                tool=_str_field(source, "tool", where),
                request_id=_str_field(source, "request_id", where),
            )
        else:
            raise LedgerFormatError(f"{where}: source must be \"system\" or a tool reference")
        return NotificationContent(
            source=parsed,
            timestamp=_int_field(obj, "timestamp", where),
            data=_str_field(obj, "data", where),
        )
    order = tuple(k for k in obj.keys() if k in _SEGMENT_KEYS)
    _require(sorted(order) == sorted(_SEGMENT_KEYS), where,
             "assistant content must carry thought, functions and chat exactly once")
    extra = set(obj.keys()) - set(_SEGMENT_KEYS) - {"interrupted"}
    _require(not extra, where, f"unknown assistant fields {sorted(extra)}")
    _require(isinstance(obj.get("interrupted"), bool), where,
             "field 'interrupted' must be a boolean")
    _require(isinstance(obj["functions"], list), where, "field 'functions' must be a list")
    calls = []
    for j, raw in enumerate(obj["functions"]):
        cwhere = f"{where}: functions[{j}]"
        _require(isinstance(raw, dict), cwhere, "must be an object")
        _require(isinstance(raw.get("payload"), dict), cwhere, "payload must be an object")
        rid = raw.get("request_id")
        _require(rid is None or isinstance(rid, str), cwhere, "request_id must be a string or null")
        calls.append(FunctionCall(payload=raw["payload"], request_id=rid))
    return AssistantContent(
        thought=_str_field(obj, "thought", where),
        functions=calls,
        chat=_str_field(obj, "chat", where),
        interrupted=obj["interrupted"],
        order=order,
    )


def deserialize(doc: str) -> Ledger:
    """Parse a canonical ledger document, naming the first bad message."""
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise LedgerFormatError(f"not valid JSON: {exc}") from None
    _require(isinstance(data, dict) and isinstance(data.get("messages"), list),
             "document", "must be an object with a 'messages' list")
    ledger = Ledger()
    for i, raw in enumerate(data["messages"]):
        where = f"message {i}"
        _require(isinstance(raw, dict), where, "must be an object")
        try:
            role = Role(_str_field(raw, "role", where))
        except ValueError:
            raise LedgerFormatError(f"{where}: unknown role {raw.get('role')!r}") from None
        seq = _int_field(raw, "seq", where)
        _require(seq == i, where, f"seq {seq} breaks contiguity (expected {i})")
        priority = priority_from_json(raw.get("priority"), where)
        content = _content_from_json(role, raw.get("content"), where)
        msg = Message(seq=seq, role=role, priority=priority, content=content)
        if isinstance(content, AssistantContent) and content.interrupted \
                and not content.chat.endswith(INTERRUPT_TOKEN):
            raise LedgerFormatError(f"{where}: interrupted chat lacks the interrupt token")
        ledger._messages.append(msg)
    return ledger


class DefaultPromptTemplate:
    """Role-tagged plain-text rendering used as the model prompt."""

    def render(self, ledger: Ledger) -> str:
        parts = []
        for msg in ledger:
            content = msg.content
            if isinstance(content, SystemContent):
                parts.append(f"<|system|>\n{content.text}")
            elif isinstance(content, UserContent):
                parts.append(f"<|user|> t={content.timestamp}\n{content.chat}")
            elif isinstance(content, NotificationContent):
                src = content.source if content.source == SYSTEM_SOURCE else (
                    f"{content.source.tool}:{content.source.request_id}")
                parts.append(f"<|notification|> t={content.timestamp} src={src}\n{content.data}")
            else:
                segs = []
                for key in content.order:
                    if key == "thought" and content.thought:
                        segs.append(THOUGHT_MARKER + content.thought)
                    elif key == "functions":
                        for call in content.functions:
                            segs.append(FUNCTION_MARKER + json.dumps(
                                call.payload, separators=(",", ":"), ensure_ascii=False))
                    elif key == "chat" and content.chat:
                        segs.append(CHAT_MARKER + content.chat)
                parts.append("<|assistant|>\n" + "".join(segs))
        return "\n".join(parts) + ("\n" if parts else "")


_TEMPLATES: dict[str, DefaultPromptTemplate] = {"default": DefaultPromptTemplate()}


def register_template(name: str, template) -> None:
    _TEMPLATES[name] = template


def get_template(name: str):
    if name not in _TEMPLATES:
        raise KeyError(f"unknown prompt template {name!r}")
    return _TEMPLATES[name]

"""Ledger contracts: canonical serialization round-trips, append/rewrite laws."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtagent.ledger import (
    INTERRUPT_TOKEN,
    MIN,
    AssistantContent,
    FunctionCall,
    Ledger,
    LedgerError,
    LedgerFormatError,
    NotificationContent,
    Role,
    SystemContent,
    ToolRef,
    UserContent,
    deserialize,
    serialize,
)

TEXT = st.text(max_size=40)
PRIORITY = st.one_of(st.just(MIN), st.integers(min_value=-5, max_value=5))

PAYLOAD = st.dictionaries(
    keys=st.text(alphabet="abcdefghij_", min_size=1, max_size=8),
    values=st.one_of(st.integers(-100, 100), st.text(max_size=10), st.booleans(), st.none()),
    max_size=3,
)


@st.composite
def assistant_contents(draw):
    thought = draw(TEXT)
    chat = draw(TEXT)
    interrupted = draw(st.booleans())
    if interrupted:
        chat = (chat + " " + INTERRUPT_TOKEN) if chat else INTERRUPT_TOKEN
    calls = [
        FunctionCall(payload=p, request_id=rid)
        for p, rid in draw(st.lists(
            st.tuples(PAYLOAD, st.one_of(st.none(), st.just("0abd754d495"))), max_size=3))
    ]
    order = tuple(draw(st.permutations(["thought", "functions", "chat"])))
    return AssistantContent(
        thought=thought, functions=calls, chat=chat, interrupted=interrupted, order=order)


SOURCES = st.one_of(
    st.just("system"),
    st.builds(ToolRef, tool=st.text(alphabet="abcxyz", min_size=1, max_size=6),
              request_id=st.just("00000000abc")),
)

ENTRY = st.one_of(
    st.tuples(st.just(Role.SYSTEM), st.builds(SystemContent, text=TEXT)),
    st.tuples(st.just(Role.USER),
              st.builds(UserContent, timestamp=st.integers(0, 10**6), chat=TEXT)),
    st.tuples(st.just(Role.ASSISTANT), assistant_contents()),
    st.tuples(st.just(Role.NOTIFICATION),
              st.builds(NotificationContent, source=SOURCES,
                        timestamp=st.integers(0, 10**6), data=TEXT)),
)


def build_ledger(entries):
    ledger = Ledger()
    for (role, content), priority in entries:
        ledger.append(role, content, priority)
    return ledger


@given(st.lists(st.tuples(ENTRY, PRIORITY), max_size=12))
@settings(max_examples=200)
def test_serialize_round_trip(entries):
    ledger = build_ledger(entries)
    doc = serialize(ledger)
    back = deserialize(doc)
    assert back == ledger
    assert serialize(back) == doc


def test_empty_ledger_serializes_to_fixed_bytes():
    assert serialize(Ledger()) == '{"messages":[]}'
    assert deserialize('{"messages":[]}') == Ledger()


def test_seqs_are_contiguous_and_returned():
    ledger = Ledger()
    assert ledger.append(Role.SYSTEM, SystemContent("s"), 0) == 0
    assert ledger.append(Role.USER, UserContent(5, "hi"), -1) == 1
    assert [m.seq for m in ledger] == [0, 1]


def test_append_rejects_mismatched_content():
    ledger = Ledger()
    with pytest.raises(LedgerError):
        ledger.append(Role.USER, SystemContent("nope"), -1)


def test_append_rejects_interrupted_chat_without_token():
    ledger = Ledger()
    bad = AssistantContent(chat="cut off", interrupted=True)
    with pytest.raises(LedgerError):
        ledger.append(Role.ASSISTANT, bad, 1)


def test_priority_round_trips_min_sentinel():
    ledger = Ledger()
    ledger.append(Role.NOTIFICATION, NotificationContent("system", 3, "x"), MIN)
    doc = json.loads(serialize(ledger))
    assert doc["messages"][0]["priority"] == "MIN"
    assert deserialize(serialize(ledger))[0].priority is MIN


def test_segment_order_survives_round_trip():
    ledger = Ledger()
    content = AssistantContent(
        thought="t", chat="Hello.", order=("chat", "thought", "functions"))
    ledger.append(Role.ASSISTANT, content, 1)
    doc = serialize(ledger)
    keys = list(json.loads(doc)["messages"][0]["content"].keys())
    assert keys == ["chat", "thought", "functions", "interrupted"]
    assert deserialize(doc)[0].content.order == ("chat", "thought", "functions")


class TestReconcileRewrite:
    def _ledger_with_assistant(self, chat="Blah blah blah blah"):
        ledger = Ledger()
        ledger.append(Role.ASSISTANT, AssistantContent(chat=chat), 1)
        return ledger

    def test_rewrite_shortens_and_flags(self):
        ledger = self._ledger_with_assistant()
        ledger.reconcile_rewrite(0, "Blah blah blah " + INTERRUPT_TOKEN)
        msg = ledger[0]
        assert msg.content.chat == "Blah blah blah <|interrupt|>"
        assert msg.content.interrupted is True

    def test_rewrite_requires_prefix(self):
        ledger = self._ledger_with_assistant()
        with pytest.raises(LedgerError):
            ledger.reconcile_rewrite(0, "Something else " + INTERRUPT_TOKEN)

    def test_rewrite_only_once(self):
        ledger = self._ledger_with_assistant()
        ledger.reconcile_rewrite(0, "Blah " + INTERRUPT_TOKEN)
        with pytest.raises(LedgerError):
            ledger.reconcile_rewrite(0, "Blah " + INTERRUPT_TOKEN)

    def test_rewrite_rejects_non_assistant(self):
        ledger = Ledger()
        ledger.append(Role.USER, UserContent(0, "hi"), -1)
        with pytest.raises(LedgerError):
            ledger.reconcile_rewrite(0, INTERRUPT_TOKEN)

    def test_rewrite_may_shorten_thought(self):
        ledger = Ledger()
        ledger.append(Role.ASSISTANT, AssistantContent(thought="abc def", chat="Hi"), 1)
        ledger.reconcile_rewrite(0, "Hi " + INTERRUPT_TOKEN, thought="abc")
        assert ledger[0].content.thought == "abc"

    def test_rewrite_notifies_observer(self):
        ledger = self._ledger_with_assistant()
        seen = []
        ledger.observer = lambda msg, rewrite: seen.append((msg.seq, rewrite))
        ledger.reconcile_rewrite(0, "Blah " + INTERRUPT_TOKEN)
        assert seen == [(0, True)]


class TestDeserializeErrors:
    def test_not_json(self):
        with pytest.raises(LedgerFormatError, match="not valid JSON"):
            deserialize("{nope")

    def test_missing_messages(self):
        with pytest.raises(LedgerFormatError, match="messages"):
            deserialize("{}")

    def test_names_offending_message_index(self):
        doc = {"messages": [
            {"seq": 0, "role": "user", "priority": -1,
             "content": {"timestamp": 1, "chat": "ok"}},
            {"seq": 1, "role": "user", "priority": -1, "content": {"timestamp": "bad"}},
        ]}
        with pytest.raises(LedgerFormatError, match="message 1"):
            deserialize(json.dumps(doc))

    def test_rejects_seq_gap(self):
        doc = {"messages": [
            {"seq": 1, "role": "system", "priority": 0, "content": {"text": "x"}}]}
        with pytest.raises(LedgerFormatError, match="contiguity"):
            deserialize(json.dumps(doc))

    def test_rejects_unknown_role(self):
        doc = {"messages": [
            {"seq": 0, "role": "wizard", "priority": 0, "content": {"text": "x"}}]}
        with pytest.raises(LedgerFormatError, match="unknown role"):
            deserialize(json.dumps(doc))

    def test_rejects_boolean_priority(self):
        doc = {"messages": [
            {"seq": 0, "role": "system", "priority": True, "content": {"text": "x"}}]}
        with pytest.raises(LedgerFormatError, match="priority"):
            deserialize(json.dumps(doc))


def test_copy_is_deep_and_observerless():
    ledger = Ledger()
    ledger.append(Role.ASSISTANT, AssistantContent(chat="original"), 1)
    ledger.observer = lambda m, r: None
    dup = ledger.copy()
    assert dup == ledger
    assert dup.observer is None
    dup[0].content.chat = "changed"
    assert ledger[0].content.chat == "original"


def test_render_prompt_default_template():
    ledger = Ledger()
    ledger.append(Role.SYSTEM, SystemContent("You are a concierge."), 0)
    ledger.append(Role.USER, UserContent(4200, "Hi"), -1)
    ledger.append(Role.ASSISTANT, AssistantContent(
        thought="plan", functions=[FunctionCall({"name": "search", "args": {}}, "0abd754d495")],
        chat="Hello."), 1)
    ledger.append(Role.NOTIFICATION, NotificationContent(
        ToolRef("search", "0abd754d495"), 5000, "Here are your results..."), 1)
    expected = (
        "<|system|>\nYou are a concierge.\n"
        "<|user|> t=4200\nHi\n"
        "<|assistant|>\n"
        '<|thought|>plan<|function|>{"name":"search","args":{}}<|chat|>Hello.\n'
        "<|notification|> t=5000 src=search:0abd754d495\nHere are your results...\n"
    )
    assert ledger.render_prompt() == expected


def test_render_prompt_empty_ledger_is_empty():
    assert Ledger().render_prompt() == ""


def test_unknown_template_raises():
    with pytest.raises(KeyError):
        Ledger().render_prompt("fancy")

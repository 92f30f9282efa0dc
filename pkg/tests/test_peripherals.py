"""Sentence segmentation, word-paced emission timing, and clock ticks."""

import re

import pytest

from rtagent.dispatcher import ScriptedModel
from rtagent.environment import RuntimeConfig, World
from rtagent.events import EventKind
from rtagent.peripherals import Emitter, SentenceAggregator, TickScheduler
from rtagent.toolkit import ToolRegistry


class TestSentenceAggregator:
    def test_splits_on_terminator_followed_by_space(self):
        agg = SentenceAggregator()
        assert agg.feed("Hello. World.") == [("Hello.", "Hello.")]
        assert agg.flush() == [(" World.", "World.")]

    def test_final_fragment_waits_for_flush(self):
        agg = SentenceAggregator()
        assert agg.feed("No terminator here") == []
        assert agg.flush() == [("No terminator here", "No terminator here")]

    def test_sentence_may_complete_across_chunks(self):
        agg = SentenceAggregator()
        assert agg.feed("Hi") == []
        assert agg.feed(". There") == [("Hi.", "Hi.")]
        assert agg.flush() == [(" There", "There")]

    def test_multi_punctuation_groups(self):
        agg = SentenceAggregator()
        out = agg.feed("What?! Really?? Hmm")
        assert out == [("What?!", "What?!"), (" Really??", "Really??")]

    def test_blank_content_never_yields(self):
        agg = SentenceAggregator()
        assert agg.feed("   ") == []
        assert agg.flush() == []

    def test_raw_concatenation_reproduces_stream(self):
        agg = SentenceAggregator()
        text = "One two. Three! Four? And the rest"
        items = agg.feed(text) + agg.flush()
        assert "".join(raw for raw, _ in items) == text

    def test_reset_discards_buffer(self):
        agg = SentenceAggregator()
        agg.feed("half a sent")
        agg.reset()
        assert agg.flush() == []


def make_world(frames=None, **config) -> World:
    return World(RuntimeConfig(**config), ToolRegistry(),
                 {"default": ScriptedModel([])}, frames=frames)


def play(world: World):
    """Run every timeline action, recording (time, emitted-after) pairs."""
    log = []
    while True:
        item = world.timeline.pop_due()
        if item is None:
            return log
        due, action = item
        world.now = max(world.now, due)
        action(world.now)
        log.append((due, world.root.emitter.emitted))


def queued_kinds(world: World):
    return [e.kind for e in world.root.queue.snapshot()]


# Oracle for word completion times: the k-th word of a segment finishes when
# its last character has been spoken, at anchor + round(chars_so_far / cps).
def word_times(text: str, cps: int, anchor: int = 0, base: int = 0):
    return [anchor + round((base + m.end()) * 1000 / cps) for m in re.finditer(r"\S+", text)]


def test_word_times_oracle_canonical_example():
    assert word_times("Blah blah blah blah", 50) == [80, 180, 280, 380]


class TestEmitter:
    def test_single_segment_word_pacing(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("Blah blah blah blah", 0)
        emitter.chat_segment_closed(0)
        assert queued_kinds(world) == [EventKind.EMIT]
        log = play(world)
        assert [t for t, _ in log] == [80, 180, 280, 380]
        assert [e for _, e in log] == [
            "Blah", "Blah blah", "Blah blah blah", "Blah blah blah blah"]
        assert world.root.queue.snapshot()[-1].kind is EventKind.EMIT_DONE
        assert not emitter.active

    def test_pacing_continues_across_sentences(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("One two. Three.", 0)
        emitter.chat_segment_closed(0)
        log = play(world)
        assert [t for t, _ in log] == [60, 160, 300]
        assert emitter.emitted == "One two. Three."
        segments = [r.details["text"] for r in world.trace.records
                    if r.kind == "emission" and r.details.get("action") == "segment"]
        assert segments == ["One two.", "Three."]

    def test_emit_event_pushed_once_per_burst(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("A b. C d. ", 0)
        emitter.chat_segment_closed(0)
        play(world)
        kinds = queued_kinds(world)
        assert kinds.count(EventKind.EMIT) == 1
        assert kinds.count(EventKind.EMIT_DONE) == 1

    def test_halt_keeps_whole_word_prefix(self):
        frames = []
        world = make_world(frames=lambda kind, body: frames.append((kind, body)))
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("Blah blah blah blah", 0)
        emitter.chat_segment_closed(0)
        for _ in range(2):  # speak through t=180: two whole words
            due, action = world.timeline.pop_due()
            world.now = due
            action(due)
        emitted = emitter.halt(200)
        assert emitted == "Blah blah"
        assert not emitter.active
        assert world.timeline.pop_due() is None  # pending words cancelled
        assert ("emission_halted", {"emitted": "Blah blah"}) in frames
        halts = [r for r in world.trace.records
                 if r.kind == "emission" and r.details.get("action") == "halted"]
        assert len(halts) == 1 and halts[0].details["emitted"] == "Blah blah"

    def test_halt_when_inactive_is_silent(self):
        world = make_world()
        emitter = world.root.emitter
        assert emitter.halt(5) == ""
        assert [r for r in world.trace.records if r.kind == "emission"] == []

    def test_emitted_resets_on_new_generation_segment(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("Hello.", 0)
        emitter.chat_segment_closed(0)
        play(world)
        assert emitter.emitted == "Hello."
        emitter.new_generation(1)
        emitter.mark_chat_open()
        emitter.feed_chat("World.", world.now)
        emitter.chat_segment_closed(world.now)
        play(world)
        assert emitter.emitted == "World."
        assert emitter.emitting_handle == 1

    def test_close_after_everything_spoken_finishes_cycle(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("Hi. ", 0)
        play(world)  # sentence spoken; chat still open, so no emit_done yet
        assert EventKind.EMIT_DONE not in queued_kinds(world)
        assert emitter.active
        emitter.chat_segment_closed(100)
        assert queued_kinds(world)[-1] is EventKind.EMIT_DONE
        assert not emitter.active

    def test_anchor_restarts_when_text_arrives_late(self):
        world = make_world()
        emitter = world.root.emitter
        emitter.new_generation(0)
        emitter.mark_chat_open()
        emitter.feed_chat("Hi. ", 0)
        play(world)  # drained at t=60, chat open
        emitter.feed_chat("More words here. ", 500)
        log = play(world)
        # New burst anchors at arrival time, not at the old anchor. The raw
        # segment keeps the space left over after "Hi." so emitted text stays
        # a true prefix of the chat stream, and pacing counts that character.
        assert [t for t, _ in log] == word_times(" More words here.", 50, anchor=500)
        assert emitter.emitted == "Hi. More words here."

    def test_rejects_nonpositive_rate(self):
        world = make_world()
        with pytest.raises(ValueError):
            Emitter(world.root, 0)


class TestTickScheduler:
    def test_ticks_fire_with_exact_data_strings(self):
        world = make_world()
        ticker = TickScheduler(world.root, 5000)
        ticker.start()
        fired = []
        for _ in range(3):
            due, action = world.timeline.pop_due()
            world.now = due
            action(due)
            fired.append(due)
        assert fired == [5000, 10000, 15000]
        # Default config coalesces: only the newest tick stays queued.
        ticks = [e for e in world.root.queue.snapshot()
                 if e.kind is EventKind.TIME_PASSAGE]
        assert len(ticks) == 1
        assert ticks[0].message[1].data == "Time passed. t=15000 ms"
        assert world.timeline.next_due() == 20000

    def test_coalescing_disabled_keeps_all_ticks(self):
        world = make_world(coalesce_time_passage=False)
        ticker = TickScheduler(world.root, 1000)
        ticker.start()
        for _ in range(3):
            due, action = world.timeline.pop_due()
            world.now = due
            action(due)
        ticks = [e for e in world.root.queue.snapshot()
                 if e.kind is EventKind.TIME_PASSAGE]
        assert [t.message[1].data for t in ticks] == [
            "Time passed. t=1000 ms", "Time passed. t=2000 ms", "Time passed. t=3000 ms"]

    def test_clock_frames_emitted(self):
        frames = []
        world = make_world(frames=lambda kind, body: frames.append((kind, body)))
        TickScheduler(world.root, 250).start()
        due, action = world.timeline.pop_due()
        action(due)
        assert ("clock", {"now_ms": 250}) in frames

    def test_rejects_nonpositive_interval(self):
        world = make_world()
        with pytest.raises(ValueError):
            TickScheduler(world.root, 0)

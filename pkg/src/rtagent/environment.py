"""Session assembly: configuration, per-process environments, and the world.

The world owns the virtual clock, the action timeline, the trace, the
request-id stream, and the process tree. Each thought process gets an
Environment bundling its machine, queue, ledger, dispatcher, and toolkit;
only the root process carries the speech peripherals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .dialog import DialogSystem
from .dispatcher import Dispatcher
from .events import Event, EventKind, FsmState, SchedulingQueue
from .ledger import (
    SYSTEM_SOURCE,
    AssistantContent,
    Ledger,
    NotificationContent,
    Role,
    SystemContent,
    UserContent,
    message_to_json,
)
from .peripherals import Emitter, TickScheduler
from .processes import ProcessStatus, ProcessTree
from .timeline import Timeline
from .toolkit import RequestIdGenerator, Toolkit, ToolRegistry
from .trace import Trace

INTERRUPTED_NOTICE = "Assistant interrupted due to user speaking"

DEFAULT_CHILD_SYSTEM_PROMPT = (
    "You are a parallel thought process. Carry out your instructions and "
    "report back concisely."
)


@dataclass
class RuntimeConfig:
    user_priority: int = -1
    assistant_priority: int = 1
    default_tool_priority: int = 1
    chars_per_second: int = 50
    tick_interval_ms: Optional[int] = None
    coalesce_time_passage: bool = True
    depth_limit: int = 3
    seed: int = 1
    prompt_template: str = "default"
    child_system_prompt: str = DEFAULT_CHILD_SYSTEM_PROMPT
    interrupt_user_below: Optional[int] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RuntimeConfig":
        cfg = cls(**{k: v for k, v in raw.items()})
        if cfg.tick_interval_ms is not None and cfg.tick_interval_ms <= 0:
            raise ValueError("tick_interval_ms must be positive (or null to disable)")
        if cfg.chars_per_second <= 0:
            raise ValueError("chars_per_second must be positive")
        if cfg.depth_limit < 0:
            raise ValueError("depth_limit must be >= 0")
        if cfg.seed < 0:
            raise ValueError("seed must be >= 0")
        return cfg


class Environment:
    """Everything one thought process needs to run."""

    def __init__(self, world: "World", pid: int, model,
                 system_text: Optional[str] = None,
                 base_ledger: Optional[Ledger] = None) -> None:
        self.world = world
        self.pid = pid
        self.model = model
        self.trace = world.trace
        self.ledger = base_ledger if base_ledger is not None else Ledger()
        self.ledger.observer = self._on_ledger
        self.queue = SchedulingQueue(coalesce_time_passage=world.config.coalesce_time_passage)
        self.ds = DialogSystem(
            self.queue,
            self.ledger,
            pid=pid,
            now_fn=lambda: world.now,
            trace=world.trace,
            interrupt_user_below=world.config.interrupt_user_below,
        )
        self.ds.post_step = self._post_step
        self.ds.on_state_change = self._on_state_change
        self.ds.on_user_interrupt = self._abort_listening
        self.dispatcher = Dispatcher(self)
        self.toolkit = Toolkit(self, world.registry)
        self.emitter: Optional[Emitter] = (
            Emitter(self, world.config.chars_per_second) if pid == 0 else None)
        self.input_listening = False
        self.assistant_chats: list[str] = []
        if system_text is not None:
            self.ledger.append(Role.SYSTEM, SystemContent(text=system_text), priority=0)

    # --- input peripheral -------------------------------------------------

    def speech_start(self, now: int) -> None:
        """User began speaking: halt output, reconcile, go listening."""
        if self.input_listening:
            return
        self.input_listening = True
        gen = self.dispatcher.current
        emitting = self.emitter is not None and self.emitter.active
        if emitting or self.dispatcher.streaming:
            emitted = self.emitter.halt(now)
            if gen is None or self.emitter.emitting_handle != gen.handle:
                emitted = ""
            self.dispatcher.cancel_stream(now)
            self.dispatcher.reconcile_after_interrupt(now, emitted)
            content = NotificationContent(
                source=SYSTEM_SOURCE, timestamp=now, data=INTERRUPTED_NOTICE)
            self.queue.push(
                Event(EventKind.INTERRUPT, message=(Role.NOTIFICATION, content)), now)
        else:
            self.queue.push(Event(EventKind.INTERRUPT), now)

    def speech_end(self, now: int, transcript: str) -> bool:
        """User finished speaking: back to idle, then queue their words."""
        if not self.input_listening:
            return False
        self.input_listening = False
        self.ds.force_transition(FsmState.IDLE, "speech_end")
        content = UserContent(timestamp=now, chat=transcript)
        self.queue.push(
            Event(EventKind.USER_CHAT, priority=self.world.config.user_priority,
                  message=(Role.USER, content)), now)
        return True

    def _abort_listening(self) -> None:
        # Hyper-urgent event barged in on the user (optional hook).
        self.input_listening = False
        self.ds.force_transition(FsmState.IDLE, "user_interrupted")

    # --- machine hooks ----------------------------------------------------

    def _post_step(self, event: Event) -> None:
        if self.ds.state is FsmState.GENERATING and not self.dispatcher.streaming:
            self.dispatcher.begin_generation(self.world.now)

    def _on_state_change(self, old: FsmState, new: FsmState) -> None:
        if self.pid == 0:
            self.world.emit_frame("state_change", {"state": new.value})

    def _on_ledger(self, msg, rewrite: bool) -> None:
        self.trace.add(self.world.now, "ledger_append", self.pid,
                       {"seq": msg.seq, "role": msg.role.value, "rewrite": rewrite})
        if isinstance(msg.content, AssistantContent) and not rewrite and msg.content.chat:
            self.assistant_chats.append(msg.content.chat)
        if self.pid == 0:
            kind = "ledger_rewrite" if rewrite else "ledger_append"
            body = {"seq": msg.seq, "message": message_to_json(msg)} if rewrite else {
                "message": message_to_json(msg)}
            self.world.emit_frame(kind, body)

    # --- lifecycle --------------------------------------------------------

    def quiescent(self) -> bool:
        return (
            self.ds.state is FsmState.IDLE
            and len(self.queue) == 0
            and not self.dispatcher.streaming
            and self.toolkit.pending == 0
            and not self.input_listening
            and (self.emitter is None or (not self.emitter.active))
            and self.world.procs.running_children(self.pid) == 0
        )

    def collect_result(self) -> str:
        return " ".join(chat for chat in self.assistant_chats if chat)


class World:
    """Shared clock, timeline, trace, ids, and the process tree."""

    def __init__(self, config: RuntimeConfig, registry: ToolRegistry,
                 models: dict, system_prompt: str = "",
                 trace: Optional[Trace] = None,
                 frames: Optional[Callable[[str, dict], None]] = None) -> None:
        if "default" not in models:
            raise ValueError("models must include a 'default' entry")
        self.config = config
        self.registry = registry
        self.models = models
        self.now = 0
        self.timeline = Timeline()
        self.trace = trace if trace is not None else Trace()
        self.frames = frames
        self.ids = RequestIdGenerator(config.seed)
        self.procs = ProcessTree(self)
        # Gateway hook for tools that must do real I/O off the timeline.
        self.async_tool_runner = None
        # An empty system prompt means no system message at all, so an empty
        # scenario produces an empty ledger and an empty trace.
        self.root = Environment(self, 0, models["default"],
                                system_text=system_prompt if system_prompt else None)
        self.procs.add_root(self.root)
        if config.tick_interval_ms is not None:
            TickScheduler(self.root, config.tick_interval_ms).start()

    def model_for(self, name: Optional[str]):
        if name is None:
            return self.models["default"]
        if name not in self.models:
            raise KeyError(name)
        return self.models[name]

    def emit_frame(self, kind: str, body: dict) -> None:
        if self.frames is not None:
            self.frames(kind, body)

    def drain_all(self) -> None:
        """Step every runnable process to a fixpoint, delivering results."""
        progress = True
        while progress:
            progress = False
            for pid in sorted(self.procs.procs):
                proc = self.procs.procs[pid]
                if proc.status is ProcessStatus.RUNNING and proc.env.ds.drain():
                    progress = True
            if self.procs.deliver_finished(self.now):
                progress = True

    def run_step(self) -> bool:
        item = self.timeline.pop_due()
        if item is None:
            return False
        due, action = item
        if due > self.now:
            self.now = due
        action(self.now)
        self.drain_all()
        return True

    def run(self, max_virtual_time_ms: int) -> str:
        """Drive the timeline; returns 'quiescent', 'time_limit' or 'stalled'."""
        self.drain_all()
        while True:
            due = self.timeline.next_due()
            if due is None:
                return "quiescent" if self.root.quiescent() else "stalled"
            if due > max_virtual_time_ms:
                return "time_limit"
            self.run_step()

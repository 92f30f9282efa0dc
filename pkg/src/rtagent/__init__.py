"""Event-driven runtime for real-time, asynchronous, tool-using agents."""

from .dialog import DialogSystem, gate_allows
from .dispatcher import (
    Dispatcher,
    ModelRule,
    ScriptedModel,
    StreamGrammarError,
    join_interrupt,
    parse_stream,
    tokenize_script,
)
from .environment import Environment, RuntimeConfig, World
from .events import Event, EventKind, FsmState, SchedulingQueue
from .harness import (
    RunResult,
    Scenario,
    ScenarioError,
    build_world,
    check_golden,
    load_scenario,
    run_scenario,
    scenario_from_dict,
)
from .ledger import (
    CHAT_MARKER,
    FUNCTION_MARKER,
    INTERRUPT_TOKEN,
    MIN,
    THOUGHT_MARKER,
    AssistantContent,
    FunctionCall,
    Ledger,
    LedgerError,
    LedgerFormatError,
    Message,
    NotificationContent,
    Role,
    SystemContent,
    ToolRef,
    UserContent,
    deserialize,
    serialize,
)
from .processes import ProcessStatus, ProcessTree, ThoughtProcess
from .toolkit import RequestIdGenerator, ToolDef, ToolRegistry
from .trace import Trace, TraceDivergence, diff_traces, parse_jsonl

__version__ = "0.1.0"

__all__ = [
    "AssistantContent", "CHAT_MARKER", "DialogSystem", "Dispatcher", "Environment",
    "Event", "EventKind", "FsmState", "FUNCTION_MARKER", "FunctionCall",
    "INTERRUPT_TOKEN", "Ledger", "LedgerError", "LedgerFormatError", "MIN",
    "Message", "ModelRule", "NotificationContent", "ProcessStatus", "ProcessTree",
    "RequestIdGenerator", "Role", "RunResult", "RuntimeConfig", "Scenario",
    "ScenarioError", "SchedulingQueue", "ScriptedModel", "StreamGrammarError",
    "SystemContent", "THOUGHT_MARKER", "ThoughtProcess", "ToolDef", "ToolRef",
    "ToolRegistry", "Trace", "TraceDivergence", "UserContent", "World",
    "build_world", "check_golden", "deserialize", "diff_traces", "gate_allows",
    "join_interrupt", "load_scenario", "parse_jsonl", "parse_stream",
    "run_scenario", "scenario_from_dict", "serialize", "tokenize_script",
]

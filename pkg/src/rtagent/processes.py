"""Concurrent thought processes: fork, spawn, kill, and result delivery.

A child is a complete environment (machine, queue, ledger, dispatcher,
toolkit) without peripherals. fork copies the parent's ledger, spawn starts
from a fresh one; either way the instructions arrive as a normal user_chat
event so the child starts generating through the standard path. Each
fork/spawn request ends in exactly one terminal notification to the
requester: the child's result, or a killed-before-completion notice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .events import Event, EventKind
from .ledger import NotificationContent, Role, ToolRef, UserContent


class ProcessStatus(Enum):
    RUNNING = "running"
    FINISHED = "finished"
    KILLED = "killed"


@dataclass
class ThoughtProcess:
    pid: int
    parent: Optional[int]
    mode: Optional[str]  # "fork" | "spawn" | None for the root
    origin_request: Optional[str]
    depth: int
    status: ProcessStatus = ProcessStatus.RUNNING
    env: object = field(default=None, repr=False)


class ProcessTree:
    def __init__(self, world) -> None:
        self.world = world
        self.procs: dict[int, ThoughtProcess] = {}
        self._next_pid = 0

    def add_root(self, env) -> ThoughtProcess:
        proc = ThoughtProcess(pid=0, parent=None, mode=None, origin_request=None, depth=0, env=env)
        self.procs[0] = proc
        self._next_pid = 1
        return proc

    def create_child(self, parent_env, mode: str, instructions: str,
                     model_name: Optional[str], rid: str, now: int) -> Optional[str]:
        """Start a child process; returns an error description on failure."""
        from .environment import Environment  # cycle: environment builds processes

        parent = self.procs[parent_env.pid]
        depth = parent.depth + 1
        if depth > self.world.config.depth_limit:
            return f"process depth limit {self.world.config.depth_limit} exceeded."
        try:
            model = self.world.model_for(model_name)
        except KeyError:
            return f"unknown model '{model_name}'."
        pid = self._next_pid
        self._next_pid += 1
        if mode == "fork":
            env = Environment(self.world, pid, model, base_ledger=parent_env.ledger.copy())
        else:
            env = Environment(self.world, pid, model,
                              system_text=self.world.config.child_system_prompt)
        proc = ThoughtProcess(pid=pid, parent=parent.pid, mode=mode,
                              origin_request=rid, depth=depth, env=env)
        self.procs[pid] = proc
        self.world.trace.add(now, "process", pid,
                             {"action": mode + "ed", "parent": parent.pid, "origin_request": rid})
        content = UserContent(timestamp=now, chat=instructions)
        env.queue.push(
            Event(EventKind.USER_CHAT, priority=self.world.config.user_priority,
                  message=(Role.USER, content)), now)
        self.world.emit_frame("process_tree", {"processes": self.snapshot()})
        return None

    def kill(self, caller_pid: int, target_pid: int, now: int) -> Optional[str]:
        """Kill a descendant and its whole subtree; error text on failure."""
        proc = self.procs.get(target_pid)
        if proc is None:
            return f"no such process: {target_pid}."
        if proc.status is not ProcessStatus.RUNNING:
            return f"process {target_pid} is not running."
        if not self._is_ancestor(caller_pid, target_pid):
            return f"process {target_pid} is not a descendant of process {caller_pid}."
        for victim in self._subtree_postorder(target_pid):
            if victim.status is ProcessStatus.RUNNING:
                self._terminate(victim, now)
        self.world.emit_frame("process_tree", {"processes": self.snapshot()})
        return None

    def deliver_finished(self, now: int) -> bool:
        """Hand quiescent children's results to their parents."""
        delivered = False
        for pid in sorted(self.procs):
            proc = self.procs[pid]
            if proc.status is not ProcessStatus.RUNNING or proc.parent is None:
                continue
            if not proc.env.quiescent():
                continue
            proc.status = ProcessStatus.FINISHED
            result = proc.env.collect_result()
            self.world.trace.add(now, "process", pid, {"action": "finished"})
            parent_env = self.procs[proc.parent].env
            parent_env.toolkit.push_response(
                ToolRef(proc.mode, proc.origin_request),
                self.world.config.default_tool_priority, result, now)
            self.world.emit_frame("process_tree", {"processes": self.snapshot()})
            delivered = True
        return delivered

    def running_children(self, pid: int) -> int:
        return sum(1 for p in self.procs.values()
                   if p.parent == pid and p.status is ProcessStatus.RUNNING)

    def snapshot(self) -> list[dict]:
        return [
            {"pid": p.pid, "parent": p.parent, "status": p.status.value,
             "origin_request": p.origin_request}
            for _, p in sorted(self.procs.items())
        ]

    def _terminate(self, proc: ThoughtProcess, now: int) -> None:
        proc.env.dispatcher.cancel_stream(now)
        self.world.timeline.cancel_owned({proc.pid})
        proc.status = ProcessStatus.KILLED
        self.world.trace.add(now, "process", proc.pid, {"action": "killed"})
        if proc.origin_request is not None and proc.parent is not None:
            # The original request still gets exactly one terminal
            # notification, even if the requester itself is dead.
            parent_env = self.procs[proc.parent].env
            content = NotificationContent(
                source=ToolRef(proc.mode, proc.origin_request), timestamp=now,
                data=f"Process {proc.pid} terminated before completion.")
            parent_env.queue.push(
                Event(EventKind.TOOL_RESPONSE_RECEIVED,
                      priority=self.world.config.default_tool_priority,
                      message=(Role.NOTIFICATION, content)), now)

    def _is_ancestor(self, ancestor_pid: int, pid: int) -> bool:
        cursor = self.procs[pid].parent
        while cursor is not None:
            if cursor == ancestor_pid:
                return True
            cursor = self.procs[cursor].parent
        return False

    def _subtree_postorder(self, pid: int) -> list[ThoughtProcess]:
        out = []
        for child in sorted(self.procs):
            if self.procs[child].parent == pid:
                out.extend(self._subtree_postorder(child))
        out.append(self.procs[pid])
        return out

"""Deterministic scheduler for protocol programs.

Programs execute as a flat soup of sequential tasks over synchronous
rendezvous channels: a send fires only together with its matching receive,
branch selection together with the offering side, delegation together with
the catch that takes the endpoint, and closes in matching pairs. Every
round collects the enabled steps (local statements plus one redex per
channel), runs the misuse detector, and picks one step with a seeded
generator, so a run is a pure function of (program, seed, script).

The misuse detector classifies stuck channel configurations: three or more
tasks engaging one channel, or exactly two whose pending actions match no
reduction rule. Well-typed programs never trigger it; it exists to catch
what running unchecked programs can do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .infer import Inference, TypeCheckError
from .surface import (
    BinOp,
    BoolLit,
    CatchStmt,
    CloseStmt,
    ConnectStmt,
    CtorApp,
    Expr,
    ForkStmt,
    IfExpr,
    IntLit,
    IoStmt,
    ListLit,
    NewStmt,
    OfferNStmt,
    OfferStmt,
    Program,
    Proj,
    RecvStmt,
    RecurStmt,
    ReturnStmt,
    SelectNStmt,
    SelectStmt,
    SendStmt,
    Stmt,
    StrLit,
    ThrowStmt,
    UnitLit,
    UnwindStmt,
    VarRef,
)


class RuntimeFault(Exception):
    pass


class ScriptExhausted(RuntimeFault):
    pass


class UnknownService(RuntimeFault):
    pass


@dataclass(frozen=True)
class Tagged:
    tag: str
    fields: tuple


class Channel:
    __slots__ = ("uid", "label")
    _next = 0

    def __init__(self, label: str):
        self.uid = Channel._next
        Channel._next = self.uid + 1
        self.label = label

    def __repr__(self):
        return f"<{self.label}#{self.uid}>"


def render_value(v) -> str:
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v
    if v is None:
        return "()"
    if isinstance(v, list):
        return "[" + ", ".join(render_value(i) for i in v) + "]"
    if isinstance(v, Tagged):
        if not v.fields:
            return v.tag
        return v.tag + "(" + ", ".join(render_value(f) for f in v.fields) + ")"
    if isinstance(v, Channel):
        return repr(v)
    return str(v)


@dataclass
class ErrorReport:
    channel: str
    engaged: tuple[str, ...]
    classification: str  # NonRedexPair | ThreeOrMore
    step: int


@dataclass
class RunResult:
    status: str  # done | error | deadlock | budget
    effects: list[str]
    steps: int
    error: ErrorReport | None = None
    trace: list[str] = field(default_factory=list)


class _Frame:
    __slots__ = ("stmts", "idx")

    def __init__(self, stmts: tuple[Stmt, ...]):
        self.stmts = stmts
        self.idx = 0


class _Task:
    __slots__ = ("tid", "root", "frames", "env", "chans")

    def __init__(self, tid: int, root: str, body: tuple[Stmt, ...], env, chans):
        self.tid = tid
        self.root = root
        self.frames: list[_Frame] = [_Frame(body)] if body else []
        self.env: dict = env
        self.chans: dict[str, Channel] = chans

    def current(self) -> Stmt | None:
        while self.frames:
            fr = self.frames[-1]
            if fr.idx < len(fr.stmts):
                return fr.stmts[fr.idx]
            self.frames.pop()
        return None


_LOCAL = (NewStmt, IoStmt, ForkStmt, ConnectStmt, RecurStmt, ReturnStmt,
          UnwindStmt, SelectNStmt)


def prepare(program: Program) -> Inference:
    """Type-check a program for execution: every session infers, the entry
    session is runnable, and every declared service has a compatible
    <name>_server session."""
    inference = Inference(program)
    inference.infer_all()
    if "main" not in program.sessions:
        raise TypeCheckError("no entry session main")
    inference.require_runnable("main")
    for svc, decl in program.services.items():
        server = svc + "_server"
        if server not in program.sessions:
            raise TypeCheckError(f"service {svc} has no session {server}", decl.pos)
        inference.require_server(server, decl.session_type)
    return inference


class Runner:
    def __init__(
        self,
        program: Program,
        seed: int = 0,
        script: list[str] | None = None,
        budget: int = 10000,
        inference: Inference | None = None,
        trace: bool = False,
    ):
        self.program = program
        self.rng = Random(seed)
        self.script = list(script or [])
        self.budget = budget
        self.inference = inference
        self.tracing = trace
        self.trace: list[str] = []
        self.effects: list[str] = []
        self.tasks: dict[int, _Task] = {}
        self._next_tid = 0
        self._steps = 0
        self._tag_cache: dict[tuple[int, str], tuple[str | None, str | None]] = {}

    # -- task management

    def _spawn(self, root: str, body: tuple[Stmt, ...], env, chans) -> _Task:
        t = _Task(self._next_tid, root, body, env, chans)
        self._next_tid += 1
        if t.current() is not None:
            self.tasks[t.tid] = t
        return t

    def _advance(self, task: _Task):
        task.frames[-1].idx += 1
        if task.current() is None:
            self.tasks.pop(task.tid, None)

    def _enter_block(self, task: _Task, block: tuple[Stmt, ...]):
        task.frames[-1].idx += 1
        task.frames.append(_Frame(block))
        if task.current() is None:
            self.tasks.pop(task.tid, None)

    # -- expression evaluation

    def _eval(self, e: Expr, task: _Task):
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, StrLit):
            return e.value
        if isinstance(e, UnitLit):
            return None
        if isinstance(e, VarRef):
            if e.name in task.env:
                return task.env[e.name]
            if e.name in task.chans:
                return task.chans[e.name]
            raise RuntimeFault(f"unbound name {e.name}")
        if isinstance(e, BinOp):
            a = self._eval(e.left, task)
            b = self._eval(e.right, task)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "<":
                return a < b
            if e.op == "==":
                return a == b
            raise RuntimeFault(f"unknown operator {e.op}")
        if isinstance(e, IfExpr):
            return self._eval(e.then if self._eval(e.cond, task) else e.els, task)
        if isinstance(e, ListLit):
            return [self._eval(i, task) for i in e.items]
        if isinstance(e, CtorApp):
            return Tagged(e.tag, tuple(self._eval(a, task) for a in e.args))
        if isinstance(e, Proj):
            v = self._eval(e.arg, task)
            if not isinstance(v, Tagged) or v.tag != e.tag:
                raise RuntimeFault(f"projection {e.tag}.{e.index} on {render_value(v)}")
            return v.fields[e.index]
        raise RuntimeFault(f"unhandled expression {e!r}")

    def _chan(self, task: _Task, name: str) -> Channel:
        ch = task.chans.get(name)
        if ch is None:
            v = task.env.get(name)
            if isinstance(v, Channel):
                return v
            raise RuntimeFault(f"unknown channel {name}")
        return ch

    # -- engagement: the pending action of a blocked task

    def _engage(self, task: _Task, st: Stmt):
        if isinstance(st, SendStmt):
            return self._chan(task, st.chan), ("send", self._eval(st.value, task))
        if isinstance(st, RecvStmt):
            return self._chan(task, st.chan), ("recv",)
        if isinstance(st, SelectStmt):
            return self._chan(task, st.chan), ("sel", st.which)
        if isinstance(st, OfferStmt):
            return self._chan(task, st.chan), ("offer",)
        if isinstance(st, OfferNStmt):
            return self._chan(task, st.chan), ("offern", self._offern_tags(st, task))
        if isinstance(st, ThrowStmt):
            return self._chan(task, st.chan), ("throw", self._chan(task, st.arg))
        if isinstance(st, CatchStmt):
            return self._chan(task, st.chan), ("catch",)
        if isinstance(st, CloseStmt):
            return self._chan(task, st.chan), ("close",)
        raise RuntimeFault(f"unhandled statement {st!r}")

    def _offern_tags(self, st: OfferNStmt, task: _Task):
        key = (id(st), task.root)
        tags = self._tag_cache.get(key)
        if tags is None:
            if self.inference is None:
                raise RuntimeFault(
                    "cannot resolve branch tags without type information"
                )
            tags = self.inference.offern_tag(st, task.root)
            if tags[0] is None or tags[1] is None:
                raise RuntimeFault("branch tags are not determined by the types")
            self._tag_cache[key] = tags
        return tags

    # -- redex table

    @staticmethod
    def _matches(a, b) -> bool:
        kinds = (a[0], b[0])
        if kinds == ("send", "recv") or kinds == ("recv", "send"):
            return True
        if kinds == ("sel", "offer") or kinds == ("offer", "sel"):
            return True
        if kinds == ("throw", "catch") or kinds == ("catch", "throw"):
            return True
        if kinds == ("close", "close"):
            return True
        if kinds == ("send", "offern") or kinds == ("offern", "send"):
            send = a if a[0] == "send" else b
            offern = b if a[0] == "send" else a
            v = send[1]
            return isinstance(v, Tagged) and v.tag in offern[1]
        return False

    # -- firing

    def _fire_pair(self, chan: Channel, t1: _Task, a1, t2: _Task, a2):
        if a1[0] == "send" and a2[0] == "recv":
            sender, sact, recver = t1, a1, t2
        elif a2[0] == "send" and a1[0] == "recv":
            sender, sact, recver = t2, a2, t1
        else:
            sender = None
        if sender is not None:
            st = recver.current()
            assert isinstance(st, RecvStmt)
            recver.env[st.bind] = sact[1]
            self._advance(sender)
            self._advance(recver)
            return
        if {a1[0], a2[0]} == {"sel", "offer"}:
            selector, which = (t1, a1[1]) if a1[0] == "sel" else (t2, a2[1])
            offerer = t2 if a1[0] == "sel" else t1
            st = offerer.current()
            assert isinstance(st, OfferStmt)
            self._advance(selector)
            self._enter_block(offerer, st.left if which == 1 else st.right)
            return
        if {a1[0], a2[0]} == {"send", "offern"}:
            send_act = a1 if a1[0] == "send" else a2
            offerer = t2 if a1[0] == "send" else t1
            st = offerer.current()
            assert isinstance(st, OfferNStmt)
            tags = a2[1] if a2[0] == "offern" else a1[1]
            which = 1 if send_act[1].tag == tags[0] else 2
            self._enter_block(offerer, st.left if which == 1 else st.right)
            return
        if {a1[0], a2[0]} == {"throw", "catch"}:
            thrower, tact = (t1, a1) if a1[0] == "throw" else (t2, a2)
            catcher = t2 if a1[0] == "throw" else t1
            st = catcher.current()
            assert isinstance(st, CatchStmt)
            catcher.chans[st.bind] = tact[1]
            self._advance(thrower)
            self._advance(catcher)
            return
        if a1[0] == "close" and a2[0] == "close":
            self._advance(t1)
            self._advance(t2)
            return
        raise RuntimeFault(f"cannot fire {a1[0]}/{a2[0]}")

    def _fire_local(self, task: _Task, st: Stmt):
        if isinstance(st, NewStmt):
            task.chans[st.bind] = Channel(st.bind)
            self._advance(task)
            return
        if isinstance(st, IoStmt):
            if st.action == "print":
                self.effects.append("PRINT " + render_value(self._eval(st.arg, task)))
            else:
                if not self.script:
                    raise ScriptExhausted("readline with no input left")
                line = self.script.pop(0)
                self.effects.append("READ " + line)
            self._advance(task)
            return
        if isinstance(st, ForkStmt):
            if st.call is not None:
                callee = self.program.sessions.get(st.call.name)
                if callee is None:
                    raise RuntimeFault(f"no session named {st.call.name}")
                env: dict = {}
                chans: dict[str, Channel] = {}
                for p, a in zip(callee.params, st.call.args):
                    if p.is_channel:
                        assert isinstance(a, VarRef)
                        chans[p.name] = self._chan(task, a.name)
                    else:
                        env[p.name] = self._eval(a, task)
                self._spawn(task.root, callee.body, env, chans)
            else:
                self._spawn(task.root, st.body or (), dict(task.env), dict(task.chans))
            self._advance(task)
            return
        if isinstance(st, ConnectStmt):
            decl = self.program.services.get(st.service)
            server = st.service + "_server"
            callee = self.program.sessions.get(server)
            if decl is None or callee is None:
                raise UnknownService(st.service)
            ch = Channel(st.bind)
            task.chans[st.bind] = ch
            self._spawn(server, callee.body, {}, {callee.params[0].name: ch})
            self.effects.append("CONNECT " + st.service)
            self._advance(task)
            return
        if isinstance(st, RecurStmt):
            callee = self.program.sessions.get(st.session)
            if callee is None:
                raise RuntimeFault(f"no session named {st.session}")
            if not callee.channel_params:
                raise RuntimeFault(f"{st.session} takes no channel")
            ch = self._chan(task, st.chan)
            task.frames = [_Frame(callee.body)]
            task.env = {}
            task.chans = {callee.channel_params[0].name: ch}
            if task.current() is None:
                self.tasks.pop(task.tid, None)
            return
        if isinstance(st, ReturnStmt):
            self._eval(st.value, task)
            self._advance(task)
            return
        if isinstance(st, (UnwindStmt, SelectNStmt)):
            self._advance(task)
            return
        raise RuntimeFault(f"unhandled statement {st!r}")

    # -- misuse detection

    def _detect(self, pending: dict[int, tuple[Channel, list]]) -> ErrorReport | None:
        for uid in sorted(pending):
            chan, engaged = pending[uid]
            if len(engaged) >= 3:
                return ErrorReport(
                    chan.label,
                    tuple(a[0] for _, a in engaged),
                    "ThreeOrMore",
                    self._steps,
                )
            if len(engaged) == 2 and not self._matches(engaged[0][1], engaged[1][1]):
                return ErrorReport(
                    chan.label,
                    tuple(a[0] for _, a in engaged),
                    "NonRedexPair",
                    self._steps,
                )
        return None

    # -- the scheduler

    def run(self) -> RunResult:
        if "main" not in self.program.sessions:
            raise RuntimeFault("no entry session main")
        self._spawn("main", self.program.sessions["main"].body, {}, {})
        while True:
            if not self.tasks:
                return RunResult("done", self.effects, self._steps, trace=self.trace)
            if self._steps >= self.budget:
                self.effects.append("BUDGET")
                return RunResult("budget", self.effects, self._steps, trace=self.trace)
            local: list[int] = []
            pending: dict[int, tuple[Channel, list]] = {}
            for tid in sorted(self.tasks):
                task = self.tasks[tid]
                st = task.current()
                if isinstance(st, _LOCAL):
                    local.append(tid)
                else:
                    chan, act = self._engage(task, st)
                    pending.setdefault(chan.uid, (chan, []))[1].append((tid, act))
            err = self._detect(pending)
            if err is not None:
                self.effects.append(f"ERROR {err.classification} {err.channel}")
                return RunResult(
                    "error", self.effects, self._steps, error=err, trace=self.trace
                )
            steps: list[tuple] = [("local", tid) for tid in local]
            for uid in sorted(pending):
                chan, engaged = pending[uid]
                if len(engaged) == 2 and self._matches(engaged[0][1], engaged[1][1]):
                    steps.append(("pair", uid))
            if not steps:
                self.effects.append("DEADLOCK")
                return RunResult("deadlock", self.effects, self._steps, trace=self.trace)
            choice = steps[self.rng.randrange(len(steps))]
            if self.tracing:
                self.trace.append(f"step {self._steps}: {choice}")
            if choice[0] == "local":
                task = self.tasks[choice[1]]
                self._fire_local(task, task.current())
            else:
                chan, engaged = pending[choice[1]]
                (t1, a1), (t2, a2) = engaged
                self._fire_pair(chan, self.tasks[t1], a1, self.tasks[t2], a2)
            self._steps += 1


def run(
    program: Program,
    seed: int = 0,
    script: list[str] | None = None,
    budget: int = 10000,
    unchecked: bool = False,
    trace: bool = False,
) -> RunResult:
    inference: Inference | None = None
    if unchecked:
        try:
            inference = prepare(program)
        except Exception:
            inference = None
    else:
        inference = prepare(program)
    return Runner(
        program, seed=seed, script=script, budget=budget,
        inference=inference, trace=trace,
    ).run()

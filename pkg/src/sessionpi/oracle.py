"""Declarative session-typing checker over pi-calculus process terms.

This is the second, independent route to the same judgment the inference
engine computes: DSL bodies are elaborated into process terms by a
continuation-passing fold, and a syntax-directed checker validates them
against a given channel environment using the declarative typing rules
(send/receive, branching, delegation, parallel composition with an
environment split, restriction, and inaction).

The checker covers the non-recursive core calculus only; recursion,
network forms, close, and the tag-annotated branch variants have no
declarative rules here and raise OutsideFragment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    BOOL,
    BOT,
    END,
    INT,
    STR,
    UNIT,
    Bot,
    Catch,
    End,
    IntT,
    ListT,
    Offer,
    Recv,
    Select,
    Send,
    SessionType,
    TaggedT,
    Throw,
    ValueType,
    dual,
    DualUndefined,
    format_type,
    format_value_type,
    _Namer,
)
from .surface import (
    BinOp,
    BoolLit,
    CatchStmt,
    CloseStmt,
    ConnectStmt,
    CtorApp,
    DataDecl,
    Expr,
    ForkStmt,
    IfExpr,
    IntLit,
    IoStmt,
    ListLit,
    NewStmt,
    OfferNStmt,
    OfferStmt,
    Proj,
    Program,
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


class OracleError(Exception):
    pass


class OutsideFragment(OracleError):
    pass


class ExprTypeError(OracleError):
    pass


@dataclass(frozen=True)
class HoleT(ValueType):
    """A value type the split synthesizer could not determine locally.

    Holes appear only inside synthesized Bot-split candidates, at receive
    positions whose payload type is fixed by the opposite component. The
    checker treats a hole as a wildcard in value positions; session
    structure is never holed, so the derivation stays exact where the
    typing rules constrain it.
    """


HOLE = HoleT()


def _vmatch(got: ValueType, want: ValueType) -> bool:
    if isinstance(got, HoleT) or isinstance(want, HoleT):
        return True
    if type(got) is not type(want):
        return False
    if isinstance(got, ListT):
        return _vmatch(got.elem, want.elem)
    if isinstance(got, TaggedT):
        return got.name == want.name
    return True


def _smatch(got: SessionType, want: SessionType) -> bool:
    if type(got) is not type(want):
        return False
    if isinstance(got, (End, Bot)):
        return True
    if isinstance(got, (Send, Recv)):
        return _vmatch(got.value, want.value) and _smatch(got.cont, want.cont)
    if isinstance(got, (Select, Offer)):
        return _smatch(got.left, want.left) and _smatch(got.right, want.right)
    if isinstance(got, (Throw, Catch)):
        return _smatch(got.carried, want.carried) and _smatch(got.cont, want.cont)
    return got == want


# --------------------------------------------------------------------------
# process terms


@dataclass(frozen=True)
class Process:
    pass


@dataclass(frozen=True)
class SendP(Process):
    chan: str
    value: Expr
    cont: Process


@dataclass(frozen=True)
class RecvP(Process):
    chan: str
    bind: str
    cont: Process


@dataclass(frozen=True)
class Sel1P(Process):
    chan: str
    cont: Process


@dataclass(frozen=True)
class Sel2P(Process):
    chan: str
    cont: Process


@dataclass(frozen=True)
class OfferP(Process):
    chan: str
    left: Process
    right: Process


@dataclass(frozen=True)
class SendSP(Process):
    chan: str
    arg: str
    cont: Process


@dataclass(frozen=True)
class RecvSP(Process):
    chan: str
    bind: str
    cont: Process


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Inact(Process):
    pass


@dataclass(frozen=True)
class NewP(Process):
    bind: str
    cont: Process


@dataclass(frozen=True)
class IoP(Process):
    action: str
    arg: Expr | None
    bind: str | None
    cont: Process


INACT = Inact()


def free_channels(p: Process) -> frozenset[str]:
    if isinstance(p, Inact):
        return frozenset()
    if isinstance(p, (SendP, RecvP, Sel1P, Sel2P)):
        return free_channels(p.cont) | {p.chan}
    if isinstance(p, OfferP):
        return free_channels(p.left) | free_channels(p.right) | {p.chan}
    if isinstance(p, SendSP):
        return free_channels(p.cont) | {p.chan, p.arg}
    if isinstance(p, RecvSP):
        return (free_channels(p.cont) - {p.bind}) | {p.chan}
    if isinstance(p, Par):
        return free_channels(p.left) | free_channels(p.right)
    if isinstance(p, NewP):
        return free_channels(p.cont) - {p.bind}
    if isinstance(p, IoP):
        return free_channels(p.cont)
    raise OracleError(f"unknown process {p!r}")


def rename_channel(p: Process, old: str, new: str) -> Process:
    """Capture-avoiding channel renaming (used to keep binders fresh)."""
    if isinstance(p, Inact):
        return p
    if isinstance(p, SendP):
        return SendP(new if p.chan == old else p.chan, p.value, rename_channel(p.cont, old, new))
    if isinstance(p, RecvP):
        return RecvP(new if p.chan == old else p.chan, p.bind, rename_channel(p.cont, old, new))
    if isinstance(p, Sel1P):
        return Sel1P(new if p.chan == old else p.chan, rename_channel(p.cont, old, new))
    if isinstance(p, Sel2P):
        return Sel2P(new if p.chan == old else p.chan, rename_channel(p.cont, old, new))
    if isinstance(p, OfferP):
        return OfferP(
            new if p.chan == old else p.chan,
            rename_channel(p.left, old, new),
            rename_channel(p.right, old, new),
        )
    if isinstance(p, SendSP):
        return SendSP(
            new if p.chan == old else p.chan,
            new if p.arg == old else p.arg,
            rename_channel(p.cont, old, new),
        )
    if isinstance(p, RecvSP):
        if p.bind == old:
            return RecvSP(new if p.chan == old else p.chan, p.bind, p.cont)
        return RecvSP(new if p.chan == old else p.chan, p.bind, rename_channel(p.cont, old, new))
    if isinstance(p, Par):
        return Par(rename_channel(p.left, old, new), rename_channel(p.right, old, new))
    if isinstance(p, NewP):
        if p.bind == old:
            return p
        return NewP(p.bind, rename_channel(p.cont, old, new))
    if isinstance(p, IoP):
        return IoP(p.action, p.arg, p.bind, rename_channel(p.cont, old, new))
    raise OracleError(f"unknown process {p!r}")


# --------------------------------------------------------------------------
# elaboration: DSL session bodies -> process terms


def elaborate(program: Program, name: str) -> Process:
    decl = program.sessions.get(name)
    if decl is None:
        raise OracleError(f"no session named {name}")
    return _elab(decl.body, INACT, program, ())


def elaborate_body(body: tuple[Stmt, ...], program: Program) -> Process:
    return _elab(body, INACT, program, ())


def _elab(
    body: tuple[Stmt, ...], k: Process, program: Program, stack: tuple[str, ...]
) -> Process:
    proc = k
    for st in reversed(body):
        proc = _elab_stmt(st, proc, program, stack)
    return proc


def _elab_stmt(st: Stmt, k: Process, program: Program, stack: tuple[str, ...]) -> Process:
    if isinstance(st, NewStmt):
        return NewP(st.bind, k)
    if isinstance(st, SendStmt):
        return SendP(st.chan, st.value, k)
    if isinstance(st, RecvStmt):
        return RecvP(st.chan, st.bind, k)
    if isinstance(st, SelectStmt):
        return (Sel1P if st.which == 1 else Sel2P)(st.chan, k)
    if isinstance(st, OfferStmt):
        return OfferP(
            st.chan,
            _elab(st.left, k, program, stack),
            _elab(st.right, k, program, stack),
        )
    if isinstance(st, ThrowStmt):
        return SendSP(st.chan, st.arg, k)
    if isinstance(st, CatchStmt):
        return RecvSP(st.chan, st.bind, k)
    if isinstance(st, ForkStmt):
        if st.call is not None:
            return Par(k, _elab_call(st, program, stack))
        return Par(k, _elab(st.body or (), INACT, program, stack))
    if isinstance(st, IoStmt):
        return IoP(st.action, st.arg, None, k)
    if isinstance(st, ReturnStmt):
        return k
    if isinstance(st, (SelectNStmt, OfferNStmt)):
        raise OutsideFragment(
            f"{st.pos.line}:{st.pos.col}: tag-annotated branching has no declarative rule"
        )
    if isinstance(st, CloseStmt):
        raise OutsideFragment(
            f"{st.pos.line}:{st.pos.col}: close has no declarative rule"
        )
    if isinstance(st, ConnectStmt):
        raise OutsideFragment(
            f"{st.pos.line}:{st.pos.col}: network connect has no declarative rule"
        )
    if isinstance(st, UnwindStmt):
        raise OutsideFragment(
            f"{st.pos.line}:{st.pos.col}: recursion has no declarative rule"
        )
    if isinstance(st, RecurStmt):
        raise OutsideFragment(
            f"{st.pos.line}:{st.pos.col}: recursion has no declarative rule"
        )
    raise OracleError(f"unhandled statement {st!r}")


def _elab_call(st: ForkStmt, program: Program, stack: tuple[str, ...]) -> Process:
    assert st.call is not None
    callee = program.sessions.get(st.call.name)
    if callee is None:
        raise OracleError(f"no session named {st.call.name}")
    if st.call.name in stack:
        raise OutsideFragment(f"recursive fork of {st.call.name} has no declarative rule")
    if len(st.call.args) != len(callee.params):
        raise OracleError(f"{st.call.name} takes {len(callee.params)} arguments")
    body = callee.body
    # substitute channel arguments for channel parameters, value exprs for
    # value parameters, freshening local binders that would capture
    chan_map: dict[str, str] = {}
    expr_map: dict[str, Expr] = {}
    for p, a in zip(callee.params, st.call.args):
        if p.is_channel:
            if not isinstance(a, VarRef):
                raise OracleError(f"channel argument for {p.name} must be a name")
            chan_map[p.name] = a.name
        else:
            expr_map[p.name] = a
    proc = _elab(body, INACT, program, stack + (st.call.name,))
    taken = set(chan_map.values())
    bound_all = set(_bound_channels(proc))
    for bound in sorted(bound_all):
        if bound in taken:
            fresh = bound
            while fresh in taken or fresh in chan_map or fresh in bound_all:
                fresh += "'"
            proc = _alpha_convert(proc, bound, fresh)
            taken.add(fresh)
            bound_all.add(fresh)
    # simultaneous renaming: go through placeholders so that swapped
    # argument/parameter names (fork pipe(y, x) into pipe(x, y)) cannot
    # clobber each other
    placeholders = {}
    for i, (old, new) in enumerate(chan_map.items()):
        tmp = f"#{i}"
        proc = rename_channel(proc, old, tmp)
        placeholders[tmp] = new
    for tmp, new in placeholders.items():
        proc = rename_channel(proc, tmp, new)
    if expr_map:
        proc = _subst_exprs(proc, expr_map)
    return proc


def _alpha_convert(p: Process, old: str, new: str) -> Process:
    """Rename every binder called ``old`` to ``new`` together with the
    occurrences it binds. Inner binders are converted first, so each pass of
    ``rename_channel`` only sees occurrences belonging to the binder at hand."""
    if isinstance(p, NewP):
        cont = _alpha_convert(p.cont, old, new)
        if p.bind == old:
            return NewP(new, rename_channel(cont, old, new))
        return NewP(p.bind, cont)
    if isinstance(p, RecvSP):
        cont = _alpha_convert(p.cont, old, new)
        if p.bind == old:
            return RecvSP(p.chan, new, rename_channel(cont, old, new))
        return RecvSP(p.chan, p.bind, cont)
    if isinstance(p, (SendP, RecvP, Sel1P, Sel2P, SendSP, IoP)):
        return replace(p, cont=_alpha_convert(p.cont, old, new))
    if isinstance(p, (OfferP, Par)):
        return replace(
            p,
            left=_alpha_convert(p.left, old, new),
            right=_alpha_convert(p.right, old, new),
        )
    return p


def _bound_channels(p: Process) -> set[str]:
    if isinstance(p, NewP):
        return {p.bind} | _bound_channels(p.cont)
    if isinstance(p, RecvSP):
        return {p.bind} | _bound_channels(p.cont)
    if isinstance(p, (SendP, RecvP, Sel1P, Sel2P, SendSP, IoP)):
        return _bound_channels(p.cont)
    if isinstance(p, OfferP):
        return _bound_channels(p.left) | _bound_channels(p.right)
    if isinstance(p, Par):
        return _bound_channels(p.left) | _bound_channels(p.right)
    return set()


def _subst_exprs(p: Process, env: dict[str, Expr]) -> Process:
    def sub_e(e: Expr) -> Expr:
        if isinstance(e, VarRef):
            return env.get(e.name, e)
        if isinstance(e, BinOp):
            return BinOp(e.op, sub_e(e.left), sub_e(e.right), e.pos)
        if isinstance(e, IfExpr):
            return IfExpr(sub_e(e.cond), sub_e(e.then), sub_e(e.els), e.pos)
        if isinstance(e, ListLit):
            return ListLit(tuple(sub_e(i) for i in e.items), e.pos)
        if isinstance(e, CtorApp):
            return CtorApp(e.tag, tuple(sub_e(a) for a in e.args), e.pos)
        if isinstance(e, Proj):
            return Proj(e.tag, e.index, sub_e(e.arg), e.pos)
        return e

    if isinstance(p, Inact):
        return p
    if isinstance(p, SendP):
        return SendP(p.chan, sub_e(p.value), _subst_exprs(p.cont, env))
    if isinstance(p, RecvP):
        inner = {k: v for k, v in env.items() if k != p.bind}
        return RecvP(p.chan, p.bind, _subst_exprs(p.cont, inner) if inner else p.cont)
    if isinstance(p, (Sel1P, Sel2P)):
        return type(p)(p.chan, _subst_exprs(p.cont, env))
    if isinstance(p, OfferP):
        return OfferP(p.chan, _subst_exprs(p.left, env), _subst_exprs(p.right, env))
    if isinstance(p, SendSP):
        return SendSP(p.chan, p.arg, _subst_exprs(p.cont, env))
    if isinstance(p, RecvSP):
        return RecvSP(p.chan, p.bind, _subst_exprs(p.cont, env))
    if isinstance(p, Par):
        return Par(_subst_exprs(p.left, env), _subst_exprs(p.right, env))
    if isinstance(p, NewP):
        return NewP(p.bind, _subst_exprs(p.cont, env))
    if isinstance(p, IoP):
        return IoP(p.action, sub_e(p.arg) if p.arg is not None else None, p.bind,
                   _subst_exprs(p.cont, env))
    raise OracleError(f"unknown process {p!r}")


# --------------------------------------------------------------------------
# expression typing


def check_expr(
    gamma: dict[str, ValueType], e: Expr, data_decls: dict[str, DataDecl] | None = None
) -> ValueType:
    data_decls = data_decls or {}
    if isinstance(e, IntLit):
        return INT
    if isinstance(e, BoolLit):
        return BOOL
    if isinstance(e, StrLit):
        return STR
    if isinstance(e, UnitLit):
        return UNIT
    if isinstance(e, VarRef):
        if e.name not in gamma:
            raise ExprTypeError(f"unbound variable {e.name}")
        return gamma[e.name]
    if isinstance(e, BinOp):
        lt = check_expr(gamma, e.left, data_decls)
        rt = check_expr(gamma, e.right, data_decls)
        if not (_vmatch(lt, INT) and _vmatch(rt, INT)):
            raise ExprTypeError(f"operator {e.op} expects Int operands")
        return INT if e.op in ("+", "-") else BOOL
    if isinstance(e, IfExpr):
        ct = check_expr(gamma, e.cond, data_decls)
        if not _vmatch(ct, BOOL):
            raise ExprTypeError("if condition must be Bool")
        tt = check_expr(gamma, e.then, data_decls)
        et = check_expr(gamma, e.els, data_decls)
        if not _vmatch(tt, et):
            raise ExprTypeError("if branches must have one type")
        return et if isinstance(tt, HoleT) else tt
    if isinstance(e, ListLit):
        if not e.items:
            raise ExprTypeError("cannot type an empty list literal")
        ts = [check_expr(gamma, i, data_decls) for i in e.items]
        elem = ts[0]
        for t in ts[1:]:
            if not _vmatch(t, elem):
                raise ExprTypeError("list elements must have one type")
            if isinstance(elem, HoleT):
                elem = t
        return ListT(elem)
    if isinstance(e, CtorApp):
        decl = data_decls.get(e.tag)
        if decl is None:
            raise ExprTypeError(f"unknown tag {e.tag}")
        if len(e.args) != len(decl.payload):
            raise ExprTypeError(f"{e.tag} carries {len(decl.payload)} fields")
        for a, want in zip(e.args, decl.payload):
            got = check_expr(gamma, a, data_decls)
            if not _vmatch(got, want):
                raise ExprTypeError(
                    f"{e.tag} field expects {format_value_type(want)},"
                    f" got {format_value_type(got)}"
                )
        return TaggedT(e.tag)
    if isinstance(e, Proj):
        decl = data_decls.get(e.tag)
        if decl is None:
            raise ExprTypeError(f"unknown tag {e.tag}")
        if e.index >= len(decl.payload):
            raise ExprTypeError(f"{e.tag} has no field {e.index}")
        got = check_expr(gamma, e.arg, data_decls)
        if not _vmatch(got, TaggedT(e.tag)):
            raise ExprTypeError(f"projection expects a {e.tag} value")
        return decl.payload[e.index]
    raise ExprTypeError(f"unhandled expression {e!r}")


# --------------------------------------------------------------------------
# the declarative checker


@dataclass
class Derivation:
    rule: str
    conclusion: str
    children: tuple["Derivation", ...] = ()

    def render(self, indent: int = 0) -> str:
        lines = [("  " * indent) + f"[{self.rule}] {self.conclusion}"]
        for ch in self.children:
            lines.append(ch.render(indent + 1))
        return "\n".join(lines)


@dataclass
class CheckResult:
    ok: bool
    derivation: Derivation | None = None
    reason: str | None = None


def _show_value(v: ValueType) -> str:
    if isinstance(v, HoleT):
        return "?"
    if isinstance(v, ListT):
        return f"[{_show_value(v.elem)}]"
    return format_value_type(v)


def _paren(s: str) -> str:
    return f"({s})" if " " in s else s


def _show_type(u: SessionType) -> str:
    if isinstance(u, Send):
        return f"Send {_paren(_show_value(u.value))} {_paren(_show_type(u.cont))}"
    if isinstance(u, Recv):
        return f"Recv {_paren(_show_value(u.value))} {_paren(_show_type(u.cont))}"
    if isinstance(u, Select):
        return f"Select {_paren(_show_type(u.left))} {_paren(_show_type(u.right))}"
    if isinstance(u, Offer):
        return f"Offer {_paren(_show_type(u.left))} {_paren(_show_type(u.right))}"
    if isinstance(u, Throw):
        return f"Throw {_paren(_show_type(u.carried))} {_paren(_show_type(u.cont))}"
    if isinstance(u, Catch):
        return f"Catch {_paren(_show_type(u.carried))} {_paren(_show_type(u.cont))}"
    return format_type(u, _Namer())


def _show_delta(delta: dict[str, SessionType]) -> str:
    inner = ", ".join(f"{c}: {_show_type(u)}" for c, u in sorted(delta.items()))
    return "{" + inner + "}"


def _head(p: Process) -> str:
    if isinstance(p, SendP):
        return f"send {p.chan}"
    if isinstance(p, RecvP):
        return f"recv {p.chan}"
    if isinstance(p, Sel1P):
        return f"sel1 {p.chan}"
    if isinstance(p, Sel2P):
        return f"sel2 {p.chan}"
    if isinstance(p, OfferP):
        return f"offer {p.chan}"
    if isinstance(p, SendSP):
        return f"sendS {p.chan} {p.arg}"
    if isinstance(p, RecvSP):
        return f"recvS {p.chan}"
    if isinstance(p, Par):
        return "par"
    if isinstance(p, NewP):
        return f"new {p.bind}"
    if isinstance(p, IoP):
        return f"io {p.action}"
    return "inact"


class Checker:
    def __init__(
        self,
        gamma: dict[str, ValueType],
        data_decls: dict[str, DataDecl] | None = None,
    ):
        self.data_decls = data_decls or {}
        self.gamma = dict(gamma)
        self._memo: dict[tuple, CheckResult] = {}

    def check(self, p: Process, delta: dict[str, SessionType]) -> CheckResult:
        return self._check(self.gamma, p, dict(delta))

    def _key(self, gamma, p, delta):
        return (
            id(p),
            tuple(sorted(gamma.items(), key=lambda kv: kv[0])),
            tuple(sorted(delta.items(), key=lambda kv: kv[0])),
        )

    def _fail(self, reason: str) -> CheckResult:
        return CheckResult(False, None, reason)

    def _check(self, gamma, p: Process, delta: dict[str, SessionType]) -> CheckResult:
        key = self._key(gamma, p, delta)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        res = self._check_inner(gamma, p, delta)
        self._memo[key] = res
        return res

    def _check_inner(self, gamma, p, delta) -> CheckResult:
        goal = f"{_head(p)} |> {_show_delta(delta)}"
        if isinstance(p, Inact):
            bad = [c for c, u in delta.items() if not isinstance(u, End)]
            if bad:
                return self._fail(
                    f"[Inact] environment not completed: {bad[0]}:"
                    f" {_show_type(delta[bad[0]])}"
                )
            return CheckResult(True, Derivation("Inact", goal))
        if isinstance(p, SendP):
            u = delta.get(p.chan)
            if not isinstance(u, Send):
                return self._fail(f"[Send] {p.chan} is not at a Send type in {_show_delta(delta)}")
            try:
                got = check_expr(gamma, p.value, self.data_decls)
            except ExprTypeError as e:
                return self._fail(f"[Send] {e}")
            if not _vmatch(got, u.value):
                return self._fail(
                    f"[Send] {p.chan} carries {format_value_type(u.value)},"
                    f" expression has {format_value_type(got)}"
                )
            sub = self._check(gamma, p.cont, {**delta, p.chan: u.cont})
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Send", goal, (sub.derivation,)))
        if isinstance(p, RecvP):
            u = delta.get(p.chan)
            if not isinstance(u, Recv):
                return self._fail(f"[Rcv] {p.chan} is not at a Recv type in {_show_delta(delta)}")
            sub = self._check(
                {**gamma, p.bind: u.value}, p.cont, {**delta, p.chan: u.cont}
            )
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Rcv", goal, (sub.derivation,)))
        if isinstance(p, Sel1P):
            u = delta.get(p.chan)
            if not isinstance(u, Select):
                return self._fail(f"[Sel] {p.chan} is not at a Select type")
            sub = self._check(gamma, p.cont, {**delta, p.chan: u.left})
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Sel", goal, (sub.derivation,)))
        if isinstance(p, Sel2P):
            u = delta.get(p.chan)
            if not isinstance(u, Select):
                return self._fail(f"[Sel] {p.chan} is not at a Select type")
            sub = self._check(gamma, p.cont, {**delta, p.chan: u.right})
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Sel", goal, (sub.derivation,)))
        if isinstance(p, OfferP):
            u = delta.get(p.chan)
            if not isinstance(u, Offer):
                return self._fail(f"[Br] {p.chan} is not at an Offer type")
            lsub = self._check(gamma, p.left, {**delta, p.chan: u.left})
            if not lsub.ok:
                return lsub
            rsub = self._check(gamma, p.right, {**delta, p.chan: u.right})
            if not rsub.ok:
                return rsub
            return CheckResult(
                True, Derivation("Br", goal, (lsub.derivation, rsub.derivation))
            )
        if isinstance(p, SendSP):
            u = delta.get(p.chan)
            if not isinstance(u, Throw):
                return self._fail(f"[Thr] {p.chan} is not at a Throw type")
            if p.arg == p.chan:
                return self._fail("[Thr] a channel cannot be delegated over itself")
            have = delta.get(p.arg)
            if have is None:
                return self._fail(f"[Thr] delegated channel {p.arg} not in environment")
            if not _smatch(have, u.carried):
                return self._fail(
                    f"[Thr] {p.arg} has usage {_show_type(have)},"
                    f" the throw carries {_show_type(u.carried)}"
                )
            inner = {c: t for c, t in delta.items() if c != p.arg}
            inner[p.chan] = u.cont
            sub = self._check(gamma, p.cont, inner)
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Thr", goal, (sub.derivation,)))
        if isinstance(p, RecvSP):
            u = delta.get(p.chan)
            if not isinstance(u, Catch):
                return self._fail(f"[Cat] {p.chan} is not at a Catch type")
            bind, cont = p.bind, p.cont
            if bind in delta:
                fresh = bind
                while fresh in delta:
                    fresh += "'"
                cont = rename_channel(cont, bind, fresh)
                bind = fresh
            sub = self._check(gamma, cont, {**delta, p.chan: u.cont, bind: u.carried})
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Cat", goal, (sub.derivation,)))
        if isinstance(p, Par):
            return self._check_par(gamma, p, delta, goal)
        if isinstance(p, NewP):
            bind, cont = p.bind, p.cont
            if bind in delta:
                fresh = bind
                while fresh in delta:
                    fresh += "'"
                cont = rename_channel(cont, bind, fresh)
                bind = fresh
            sub = self._check(gamma, cont, {**delta, bind: BOT})
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Cres", goal, (sub.derivation,)))
        if isinstance(p, IoP):
            g2 = gamma
            if p.action == "readline" and p.bind is not None:
                g2 = {**gamma, p.bind: STR}
            sub = self._check(g2, p.cont, delta)
            if not sub.ok:
                return sub
            return CheckResult(True, Derivation("Io", goal, (sub.derivation,)))
        return self._fail(f"no rule for {p!r}")

    # -- [Conc]: split search

    def _check_par(self, gamma, p: Par, delta, goal) -> CheckResult:
        chans = sorted(delta)
        free_l = free_channels(p.left)
        free_r = free_channels(p.right)
        d1: dict[str, SessionType] = {}
        d2: dict[str, SessionType] = {}
        last_reason = ["[Conc] no environment split admits both components"]

        def assign(i: int) -> CheckResult | None:
            if i == len(chans):
                lsub = self._check(gamma, p.left, dict(d1))
                if not lsub.ok:
                    last_reason[0] = lsub.reason or last_reason[0]
                    return None
                rsub = self._check(gamma, p.right, dict(d2))
                if not rsub.ok:
                    last_reason[0] = rsub.reason or last_reason[0]
                    return None
                return CheckResult(
                    True, Derivation("Conc", goal, (lsub.derivation, rsub.derivation))
                )
            c = chans[i]
            u = delta[c]
            for left_part, right_part in self._split_candidates(gamma, c, u, p, d1, d2):
                if c in free_l and isinstance(left_part, End):
                    if not isinstance(u, End):
                        continue
                if c in free_r and isinstance(right_part, End):
                    if not isinstance(u, End):
                        continue
                if c not in free_l and not isinstance(left_part, End):
                    continue
                if c not in free_r and not isinstance(right_part, End):
                    continue
                d1[c] = left_part
                d2[c] = right_part
                res = assign(i + 1)
                if res is not None:
                    return res
                del d1[c], d2[c]
            return None

        res = assign(0)
        if res is not None:
            return res
        return self._fail(last_reason[0])

    def _split_candidates(self, gamma, c, u, p: Par, d1, d2):
        seen: set = set()

        def emit(a, b):
            key = (a, b)
            if key not in seen:
                seen.add(key)
                yield key

        yield from emit(u, END)
        yield from emit(END, u)
        if isinstance(u, Bot):
            w = _synth(gamma, d1, p.left, c, self.data_decls)
            if w is not None:
                try:
                    yield from emit(w, dual(w))
                except DualUndefined:
                    pass
            w = _synth(gamma, d2, p.right, c, self.data_decls)
            if w is not None:
                try:
                    yield from emit(dual(w), w)
                except DualUndefined:
                    pass


def _synth(gamma, partial_delta, p: Process, c: str, data_decls) -> SessionType | None:
    """Best-effort usage of channel c in p, used only to propose Bot splits.

    Receive binders whose payload the component does not determine are typed
    with holes; the checker wildcards those value positions. Returns None
    when the session structure itself is underdetermined (a bare select, a
    delegation whose carried usage is invisible from this side)."""
    if c not in free_channels(p):
        return END
    if isinstance(p, SendP):
        if p.chan == c:
            try:
                v = check_expr(gamma, p.value, data_decls)
            except ExprTypeError:
                v = HOLE
            cont = _synth(gamma, partial_delta, p.cont, c, data_decls)
            return None if cont is None else Send(v, cont)
        return _synth(gamma, partial_delta, p.cont, c, data_decls)
    if isinstance(p, RecvP):
        g2 = {**gamma, p.bind: HOLE}
        if p.chan == c:
            cont = _synth(g2, partial_delta, p.cont, c, data_decls)
            return None if cont is None else Recv(HOLE, cont)
        return _synth(g2, partial_delta, p.cont, c, data_decls)
    if isinstance(p, (Sel1P, Sel2P)):
        if p.chan == c:
            return None  # the untaken branch is not visible from this side
        return _synth(gamma, partial_delta, p.cont, c, data_decls)
    if isinstance(p, OfferP):
        l = _synth(gamma, partial_delta, p.left, c, data_decls)
        r = _synth(gamma, partial_delta, p.right, c, data_decls)
        if p.chan == c:
            return None if l is None or r is None else Offer(l, r)
        return l if l == r else None
    if isinstance(p, SendSP):
        if p.chan == c:
            carried = partial_delta.get(p.arg)
            if carried is None:
                carried = _synth(gamma, partial_delta, p.cont, p.arg, data_decls)
                if isinstance(carried, End):
                    carried = None
            cont = _synth(gamma, partial_delta, p.cont, c, data_decls)
            if carried is None or cont is None:
                return None
            return Throw(carried, cont)
        if p.arg == c:
            # usage consumed by the delegation: the carried type of the
            # channel it travels over, when that is already known
            over = partial_delta.get(p.chan)
            if isinstance(over, Throw):
                return over.carried
            return None
        return _synth(gamma, partial_delta, p.cont, c, data_decls)
    if isinstance(p, RecvSP):
        if p.chan == c:
            carried = _synth(gamma, partial_delta, p.cont, p.bind, data_decls)
            cont = _synth(gamma, partial_delta, p.cont, c, data_decls)
            if carried is None or cont is None:
                return None
            return Catch(carried, cont)
        if p.bind == c:
            return END  # shadowed below the binder
        return _synth(gamma, partial_delta, p.cont, c, data_decls)
    if isinstance(p, Par):
        l = _synth(gamma, partial_delta, p.left, c, data_decls)
        r = _synth(gamma, partial_delta, p.right, c, data_decls)
        if isinstance(l, End):
            return r
        if isinstance(r, End):
            return l
        return None
    if isinstance(p, NewP):
        if p.bind == c:
            return END
        return _synth(gamma, partial_delta, p.cont, c, data_decls)
    if isinstance(p, IoP):
        g2 = gamma
        if p.action == "readline" and p.bind is not None:
            g2 = {**gamma, p.bind: STR}
        return _synth(g2, partial_delta, p.cont, c, data_decls)
    return None


def check(
    gamma: dict[str, ValueType],
    p: Process,
    delta: dict[str, SessionType],
    data_decls: dict[str, DataDecl] | None = None,
) -> CheckResult:
    return Checker(gamma, data_decls).check(p, delta)


def format_process(p: Process) -> str:
    from .surface import format_expr

    if isinstance(p, Inact):
        return "0"
    if isinstance(p, SendP):
        return f"send {p.chan} {format_expr(p.value)}. {format_process(p.cont)}"
    if isinstance(p, RecvP):
        return f"recv {p.chan}({p.bind}). {format_process(p.cont)}"
    if isinstance(p, Sel1P):
        return f"sel1 {p.chan}. {format_process(p.cont)}"
    if isinstance(p, Sel2P):
        return f"sel2 {p.chan}. {format_process(p.cont)}"
    if isinstance(p, OfferP):
        return (
            f"offer {p.chan} {{ {format_process(p.left)} }}"
            f" {{ {format_process(p.right)} }}"
        )
    if isinstance(p, SendSP):
        return f"sendS {p.chan} {p.arg}. {format_process(p.cont)}"
    if isinstance(p, RecvSP):
        return f"recvS {p.chan}({p.bind}). {format_process(p.cont)}"
    if isinstance(p, Par):
        return f"({format_process(p.left)} ||| {format_process(p.right)})"
    if isinstance(p, NewP):
        return f"new {p.bind}. {format_process(p.cont)}"
    if isinstance(p, IoP):
        arg = format_expr(p.arg) if p.arg is not None else ""
        return f"io {p.action}({arg}). {format_process(p.cont)}"
    raise OracleError(f"unknown process {p!r}")

"""Session-type inference for the protocol DSL.

Each session body is threaded through a pair of environment rows: the
pre-row carries what remains to be done on every known channel, and the
statements rewrite entries one communication at a time.  Channels are
addressed by de Bruijn level (offset above the session's abstract row
tail), so a signature stays polymorphic in whatever context a caller
supplies.

Recursion is resolved over rational trees: every ``unwind k c``
statement for a given level k unifies the current entry with one shared
``Rec`` node, and later unwinds or ``recur1`` calls close the graph into
a cycle.  Cyclic bindings are permitted only at those two statement
forms; all other unification performs the occurs check.  Signature
display folds the solved graphs back into ``Rec``/``Var`` notation and
names leftover variables a, b, c, ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import surface
from .core import (
    BOOL,
    BOT,
    CLOSE,
    END,
    INT,
    STR,
    UNIT,
    Bot,
    Catch,
    ChanT,
    Close,
    End,
    EnvRow,
    IntT,
    LevelExpr,
    ListT,
    Offer,
    OfferN,
    Rec,
    Recv,
    RowVar,
    Select,
    SelectN,
    Send,
    SessionType,
    TaggedT,
    Throw,
    UVar,
    ValueType,
    Var,
    VVar,
    format_row,
    format_type,
    format_value_type,
    _Namer,
)
from .surface import (
    CatchStmt,
    CloseStmt,
    ConnectStmt,
    CtorApp,
    BinOp,
    BoolLit,
    Call,
    Expr,
    ForkStmt,
    IfExpr,
    IntLit,
    IoStmt,
    ListLit,
    NewStmt,
    OfferNStmt,
    OfferStmt,
    Pos,
    Program,
    Proj,
    RecvStmt,
    RecurStmt,
    ReturnStmt,
    SelectNStmt,
    SelectStmt,
    SendStmt,
    SessionDecl,
    StrLit,
    Stmt,
    ThrowStmt,
    UnitLit,
    UnwindStmt,
    VarRef,
)


class InferError(Exception):
    pass


class TypeCheckError(InferError):
    def __init__(self, message: str, pos: Pos | None = None):
        self.pos = pos
        if pos is not None and pos.line:
            message = f"{pos.line}:{pos.col}: {message}"
        super().__init__(message)


class CompositionError(InferError):
    pass


class OccursError(InferError):
    pass


class AmbiguityError(InferError):
    pass


class FoldError(InferError):
    pass


# --------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class EndedTailR:
    """Residual: the signature's row tail must be all-End when it closes."""


@dataclass(frozen=True)
class LengthR:
    """Residual: two level expressions that could not yet be compared."""

    left: LevelExpr
    right: LevelExpr


@dataclass
class SessionSignature:
    name: str
    pre: EnvRow
    post: EnvRow
    result: ValueType
    residual: tuple[object, ...]
    channel_params: tuple[tuple[str, LevelExpr], ...]
    value_params: tuple[tuple[str, ValueType], ...] = ()


def format_signature(sig: SessionSignature) -> str:
    namer = _Namer()
    single = (
        len(sig.channel_params) == 1
        and len(sig.pre.entries) == 1
        and len(sig.post.entries) == 1
    )
    if single:
        pre = _fmt_entry(sig.pre.entries[0], namer)
        post = _fmt_entry(sig.post.entries[0], namer)
        return f"({pre}, {post})"
    return f"({format_row(sig.pre, namer)}, {format_row(sig.post, namer)})"


def _fmt_entry(u: SessionType, namer: _Namer) -> str:
    return format_type(u, namer)


def signature_to_dict(sig: SessionSignature) -> dict:
    """Structured rendering used by ``infer --format structured``."""

    def st(u: SessionType) -> object:
        if isinstance(u, End):
            return {"ctor": "End"}
        if isinstance(u, Bot):
            return {"ctor": "Bot"}
        if isinstance(u, Close):
            return {"ctor": "Close"}
        if isinstance(u, UVar):
            return {"ctor": "var", "id": u.uid}
        if isinstance(u, Var):
            return {"ctor": "Var", "level": u.level}
        if isinstance(u, Rec):
            return {"ctor": "Rec", "level": u.level, "body": st(u.body)}
        if isinstance(u, (Send, Recv)):
            return {"ctor": type(u).__name__, "value": vt(u.value), "cont": st(u.cont)}
        if isinstance(u, (Select, Offer, SelectN, OfferN)):
            return {"ctor": type(u).__name__, "left": st(u.left), "right": st(u.right)}
        if isinstance(u, (Throw, Catch)):
            return {"ctor": type(u).__name__, "carried": st(u.carried), "cont": st(u.cont)}
        raise InferError(f"cannot serialize {u!r}")

    def vt(v: ValueType) -> object:
        if isinstance(v, VVar):
            return {"type": "var", "id": v.vid}
        if isinstance(v, ListT):
            return {"type": "list", "elem": vt(v.elem)}
        if isinstance(v, TaggedT):
            return {"type": "tagged", "name": v.name}
        return {"type": format_value_type(v)}

    def row(r: EnvRow) -> dict:
        return {
            "tail": "open" if r.tail is not None else "nil",
            "entries": [st(e) for e in r.entries],
        }

    residual = []
    for r in sig.residual:
        if isinstance(r, EndedTailR):
            residual.append({"kind": "EndedTail", "tail": "ss"})
        elif isinstance(r, LengthR):
            residual.append({"kind": "Length"})
    namer = _Namer()
    return {
        "pre": row(sig.pre),
        "post": row(sig.post),
        "pre_text": format_row(sig.pre, namer),
        "post_text": format_row(sig.post, namer),
        "pretty": format_signature(sig),
        "result": format_value_type(sig.result, _Namer()),
        "params": {name: {"level_offset": lvl.offset} for name, lvl in sig.channel_params},
        "residual": residual,
    }


# --------------------------------------------------------------------------
# alpha comparison (display forms)


def alpha_equal_type(a: SessionType, b: SessionType) -> bool:
    return _AlphaCmp().types(a, b)


def alpha_equal_row(a: EnvRow, b: EnvRow) -> bool:
    return _AlphaCmp().rows(a, b)


def alpha_equal_signature(a: SessionSignature, b: SessionSignature) -> bool:
    cmp = _AlphaCmp()
    return cmp.rows(a.pre, b.pre) and cmp.rows(a.post, b.post)


class _AlphaCmp:
    """Structural comparison identifying variables up to a bijection."""

    def __init__(self) -> None:
        self.smap: dict[int, int] = {}
        self.sseen: set[int] = set()
        self.vmap: dict[int, int] = {}
        self.vseen: set[int] = set()

    def rows(self, a: EnvRow, b: EnvRow) -> bool:
        if (a.tail is None) != (b.tail is None):
            return False
        if len(a.entries) != len(b.entries):
            return False
        return all(self.types(x, y) for x, y in zip(a.entries, b.entries))

    def types(self, a: SessionType, b: SessionType) -> bool:
        if isinstance(a, UVar) or isinstance(b, UVar):
            if not (isinstance(a, UVar) and isinstance(b, UVar)):
                return False
            if a.uid in self.smap:
                return self.smap[a.uid] == b.uid
            if b.uid in self.sseen:
                return False
            self.smap[a.uid] = b.uid
            self.sseen.add(b.uid)
            return True
        if type(a) is not type(b):
            return False
        if isinstance(a, (End, Bot, Close)):
            return True
        if isinstance(a, Var):
            return a.level == b.level
        if isinstance(a, Rec):
            return a.level == b.level and self.types(a.body, b.body)
        if isinstance(a, (Send, Recv)):
            return self.values(a.value, b.value) and self.types(a.cont, b.cont)
        if isinstance(a, (Select, Offer, SelectN, OfferN)):
            return self.types(a.left, b.left) and self.types(a.right, b.right)
        if isinstance(a, (Throw, Catch)):
            return self.types(a.carried, b.carried) and self.types(a.cont, b.cont)
        return False

    def values(self, a: ValueType, b: ValueType) -> bool:
        if isinstance(a, VVar) or isinstance(b, VVar):
            if not (isinstance(a, VVar) and isinstance(b, VVar)):
                return False
            if a.vid in self.vmap:
                return self.vmap[a.vid] == b.vid
            if b.vid in self.vseen:
                return False
            self.vmap[a.vid] = b.vid
            self.vseen.add(b.vid)
            return True
        if type(a) is not type(b):
            return False
        if isinstance(a, ListT):
            return self.values(a.elem, b.elem)
        if isinstance(a, TaggedT):
            return a.name == b.name
        if isinstance(a, ChanT):
            return self.types(a.session, b.session)
        return True


# --------------------------------------------------------------------------
# constraints and solver


@dataclass
class _DualC:
    a: SessionType
    b: SessionType
    pos: Pos | None


@dataclass
class _CompC:
    a: SessionType
    b: SessionType
    c: SessionType
    flavor: str  # "fork" or "throw"
    pos: Pos | None


@dataclass
class _EndedTailC:
    tail: RowVar
    pos: Pos | None


@dataclass
class _EqLevelC:
    left: LevelExpr
    right: LevelExpr
    pos: Pos | None


class Solver:
    def __init__(self) -> None:
        self.sbind: dict[int, SessionType] = {}
        self.vbind: dict[int, ValueType] = {}
        self.rbind: dict[int, EnvRow] = {}
        self._next = 0
        self.duals: list[_DualC] = []
        self.comps: list[_CompC] = []
        self.ended: list[_EndedTailC] = []
        self.levels: list[_EqLevelC] = []
        self.dual_pairs: dict[int, int] = {}
        self.dualof: dict[int, SessionType] = {}
        self.has_marked_cycles = False
        self.comp_log: list[tuple[SessionType, SessionType, SessionType]] = []

    # -- fresh variables

    def fresh(self) -> UVar:
        self._next += 1
        return UVar(self._next)

    def fresh_v(self) -> VVar:
        self._next += 1
        return VVar(self._next)

    def fresh_row(self) -> RowVar:
        self._next += 1
        return RowVar(self._next)

    # -- resolution

    def resolve(self, t: SessionType) -> SessionType:
        while isinstance(t, UVar):
            nxt = self.sbind.get(t.uid)
            if nxt is None:
                return t
            t = nxt
        return t

    def resolve_v(self, v: ValueType) -> ValueType:
        while isinstance(v, VVar):
            nxt = self.vbind.get(v.vid)
            if nxt is None:
                return v
            v = nxt
        return v

    def resolve_row(self, row: EnvRow) -> EnvRow:
        tail = row.tail
        entries = row.entries
        while tail is not None and tail.rid in self.rbind:
            inner = self.rbind[tail.rid]
            entries = inner.entries + entries
            tail = inner.tail
        return EnvRow(tail, entries)

    def resolve_level(self, lvl: LevelExpr) -> LevelExpr:
        base = lvl.base
        offset = lvl.offset
        while base is not None and base.rid in self.rbind:
            inner = self.rbind[base.rid]
            offset += len(inner.entries)
            base = inner.tail
        return LevelExpr(base, offset)

    # -- rendering for error messages

    def render(self, t: SessionType, depth: int = 8, namer: _Namer | None = None) -> str:
        namer = namer or _Namer()

        def go(u: SessionType, d: int) -> SessionType:
            u = self.resolve(u)
            if d <= 0:
                return UVar(-1)
            if isinstance(u, (Send, Recv)):
                return type(u)(self.resolve_v(u.value), go(u.cont, d - 1))
            if isinstance(u, (Select, Offer, SelectN, OfferN)):
                return type(u)(go(u.left, d - 1), go(u.right, d - 1))
            if isinstance(u, (Throw, Catch)):
                return type(u)(go(u.carried, d - 1), go(u.cont, d - 1))
            if isinstance(u, Rec):
                return Rec(u.level, go(u.body, d - 1))
            return u

        text = format_type(go(t, depth), namer)
        return text

    # -- unification

    def unify(self, a: SessionType, b: SessionType, pos: Pos | None = None, cyclic: bool = False) -> None:
        self._unify(a, b, pos, cyclic, set())

    def _unify(
        self,
        a: SessionType,
        b: SessionType,
        pos: Pos | None,
        cyclic: bool,
        seen: set[tuple[int, int]],
    ) -> None:
        ra = self.resolve(a)
        rb = self.resolve(b)
        if ra is rb:
            return
        key = (id(ra), id(rb))
        if key in seen:
            return
        seen.add(key)
        if isinstance(ra, UVar) and isinstance(rb, UVar):
            if ra.uid == rb.uid:
                return
            self.sbind[ra.uid] = rb
            return
        if isinstance(ra, UVar):
            self._bind(ra, rb, pos, cyclic)
            return
        if isinstance(rb, UVar):
            self._bind(rb, ra, pos, cyclic)
            return
        if type(ra) is not type(rb):
            raise TypeCheckError(
                f"cannot unify {self.render(ra)} with {self.render(rb)}", pos
            )
        if isinstance(ra, (End, Bot, Close)):
            return
        if isinstance(ra, Var):
            if ra.level != rb.level:
                raise TypeCheckError(
                    f"cannot unify {self.render(ra)} with {self.render(rb)}", pos
                )
            return
        if isinstance(ra, Rec):
            if ra.level != rb.level:
                raise TypeCheckError(
                    f"recursion binders disagree: {self.render(ra)} vs {self.render(rb)}",
                    pos,
                )
            self._unify(ra.body, rb.body, pos, cyclic, seen)
            return
        if isinstance(ra, (Send, Recv)):
            self.unify_v(ra.value, rb.value, pos)
            self._unify(ra.cont, rb.cont, pos, cyclic, seen)
            return
        if isinstance(ra, (Select, Offer, SelectN, OfferN)):
            self._unify(ra.left, rb.left, pos, cyclic, seen)
            self._unify(ra.right, rb.right, pos, cyclic, seen)
            return
        if isinstance(ra, (Throw, Catch)):
            self._unify(ra.carried, rb.carried, pos, cyclic, seen)
            self._unify(ra.cont, rb.cont, pos, cyclic, seen)
            return
        raise TypeCheckError(f"cannot unify {ra!r} with {rb!r}", pos)

    def _bind(self, var: UVar, term: SessionType, pos: Pos | None, cyclic: bool) -> None:
        if not cyclic and self._occurs(var, term):
            raise OccursError(
                f"variable occurs in its own binding: {self.render(term)}"
            )
        self.sbind[var.uid] = term

    def _occurs(self, var: UVar, term: SessionType) -> bool:
        visited: set[int] = set()
        stack = [term]
        while stack:
            t = self.resolve(stack.pop())
            if isinstance(t, UVar):
                if t.uid == var.uid:
                    return True
                continue
            if id(t) in visited:
                continue
            visited.add(id(t))
            if isinstance(t, (Send, Recv)):
                stack.append(t.cont)
            elif isinstance(t, (Select, Offer, SelectN, OfferN)):
                stack.append(t.left)
                stack.append(t.right)
            elif isinstance(t, (Throw, Catch)):
                stack.append(t.carried)
                stack.append(t.cont)
            elif isinstance(t, Rec):
                stack.append(t.body)
        return False

    def unify_v(self, a: ValueType, b: ValueType, pos: Pos | None = None) -> None:
        ra = self.resolve_v(a)
        rb = self.resolve_v(b)
        if ra == rb:
            return
        if isinstance(ra, VVar):
            if self._occurs_v(ra, rb):
                raise OccursError("value type occurs in its own binding")
            self.vbind[ra.vid] = rb
            return
        if isinstance(rb, VVar):
            self.vbind[rb.vid] = ra
            return
        if type(ra) is not type(rb):
            raise TypeCheckError(
                f"value types differ: {format_value_type(ra, _Namer())}"
                f" vs {format_value_type(rb, _Namer())}",
                pos,
            )
        if isinstance(ra, ListT):
            self.unify_v(ra.elem, rb.elem, pos)
            return
        if isinstance(ra, TaggedT):
            if ra.name != rb.name:
                raise TypeCheckError(f"value types differ: {ra.name} vs {rb.name}", pos)
            return
        if isinstance(ra, ChanT):
            self.unify(ra.session, rb.session, pos, cyclic=self.has_marked_cycles)
            self.levels.append(_EqLevelC(ra.level, rb.level, pos))
            return
        raise TypeCheckError(f"value types differ: {ra!r} vs {rb!r}", pos)

    def _occurs_v(self, var: VVar, term: ValueType) -> bool:
        term = self.resolve_v(term)
        if isinstance(term, VVar):
            return term.vid == var.vid
        if isinstance(term, ListT):
            return self._occurs_v(var, term.elem)
        return False

    def unify_row(self, a: EnvRow, b: EnvRow, pos: Pos | None = None) -> None:
        ra = self.resolve_row(a)
        rb = self.resolve_row(b)
        ka, kb = len(ra.entries), len(rb.entries)
        m = min(ka, kb)
        for i in range(1, m + 1):
            self.unify(ra.entries[-i], rb.entries[-i], pos, cyclic=self.has_marked_cycles)
        if ka == kb:
            ta, tb = ra.tail, rb.tail
            if ta is None and tb is None:
                return
            if ta is not None and tb is not None:
                if ta.rid != tb.rid:
                    self.rbind[ta.rid] = EnvRow(tb, ())
                return
            var = ta if ta is not None else tb
            self.rbind[var.rid] = EnvRow(None, ())
            return
        if ka < kb:
            short, long_ = ra, rb
        else:
            short, long_ = rb, ra
        extra = long_.entries[: abs(ka - kb)]
        if short.tail is None:
            raise TypeCheckError(
                f"row has too few channels: {format_row(short)} vs {format_row(long_)}",
                pos,
            )
        if long_.tail is not None and long_.tail.rid == short.tail.rid:
            raise TypeCheckError("a row cannot extend itself", pos)
        self.rbind[short.tail.rid] = EnvRow(long_.tail, extra)

    # -- constraint intake

    def add_dual(self, a: SessionType, b: SessionType, pos: Pos | None = None) -> None:
        self.duals.append(_DualC(a, b, pos))

    def add_comp(
        self,
        a: SessionType,
        b: SessionType,
        c: SessionType,
        flavor: str,
        pos: Pos | None = None,
    ) -> None:
        self.comps.append(_CompC(a, b, c, flavor, pos))
        self.comp_log.append((a, b, c))

    def add_ended_tail(self, tail: RowVar, pos: Pos | None = None) -> None:
        self.ended.append(_EndedTailC(tail, pos))

    def add_eq_level(self, left: LevelExpr, right: LevelExpr, pos: Pos | None = None) -> None:
        self.levels.append(_EqLevelC(left, right, pos))

    # -- solving

    def solve(self) -> tuple[list[_EndedTailC], list[_EqLevelC]]:
        """Run the fixpoint; returns the residual EndedTail/level constraints."""
        while True:
            progressed = True
            while progressed:
                progressed = self._pass()
            if not self._default_pass():
                break
        if self.duals:
            d = self.duals[0]
            raise AmbiguityError(
                f"underdetermined duality between {self.render(d.a)} and {self.render(d.b)}"
            )
        if self.comps:
            c = self.comps[0]
            raise AmbiguityError(
                f"underdetermined parallel composition at {self.render(c.c)}"
            )
        ended = self.ended
        levels = self.levels
        self.ended = []
        self.levels = []
        return ended, levels

    def _pass(self) -> bool:
        progressed = False
        pending = self.duals
        self.duals = []
        for d in pending:
            if self._step_dual(d):
                progressed = True
        pending_c = self.comps
        self.comps = []
        for c in pending_c:
            if self._step_comp(c):
                progressed = True
        pending_e = self.ended
        self.ended = []
        for e in pending_e:
            if self._step_ended(e):
                progressed = True
        pending_l = self.levels
        self.levels = []
        for l in pending_l:
            if self._step_level(l):
                progressed = True
        return progressed

    def _step_dual(self, d: _DualC) -> bool:
        ra = self.resolve(d.a)
        rb = self.resolve(d.b)
        if isinstance(ra, UVar) and isinstance(rb, UVar):
            pa = self.dual_pairs.get(ra.uid)
            if pa is not None:
                if pa == rb.uid:
                    return False if self._requeue(d) else False
                self.unify(rb, UVar(pa), d.pos, cyclic=self.has_marked_cycles)
                self.duals.append(d)
                return True
            pb = self.dual_pairs.get(rb.uid)
            if pb is not None:
                self.unify(ra, UVar(pb), d.pos, cyclic=self.has_marked_cycles)
                self.duals.append(d)
                return True
            self.dual_pairs[ra.uid] = rb.uid
            self.dual_pairs[rb.uid] = ra.uid
            self.duals.append(d)
            return False
        if not isinstance(ra, UVar):
            known, other = ra, d.b
        else:
            known, other = rb, d.a
        prior = self.dualof.get(id(known))
        if prior is not None:
            self.unify(other, prior, d.pos, cyclic=self.has_marked_cycles)
            return True
        mirror = self._dual_skeleton(known, d.pos)
        self.dualof[id(known)] = mirror
        ro = self.resolve(other)
        if not isinstance(ro, UVar):
            self.dualof.setdefault(id(ro), known)
        self.unify(other, mirror, d.pos, cyclic=self.has_marked_cycles)
        return True

    def _requeue(self, d: _DualC) -> bool:
        self.duals.append(d)
        return False

    def _dual_skeleton(self, known: SessionType, pos: Pos | None) -> SessionType:
        if isinstance(known, Bot):
            raise CompositionError("Bot has no dual usage")
        if isinstance(known, (End, Close)):
            return known
        if isinstance(known, Var):
            return known
        if isinstance(known, Send):
            cont = self.fresh()
            self.add_dual(known.cont, cont, pos)
            return Recv(known.value, cont)
        if isinstance(known, Recv):
            cont = self.fresh()
            self.add_dual(known.cont, cont, pos)
            return Send(known.value, cont)
        if isinstance(known, (Select, Offer, SelectN, OfferN)):
            pairs = {Select: Offer, Offer: Select, SelectN: OfferN, OfferN: SelectN}
            l, r = self.fresh(), self.fresh()
            self.add_dual(known.left, l, pos)
            self.add_dual(known.right, r, pos)
            return pairs[type(known)](l, r)
        if isinstance(known, Throw):
            cont = self.fresh()
            self.add_dual(known.cont, cont, pos)
            return Catch(known.carried, cont)
        if isinstance(known, Catch):
            cont = self.fresh()
            self.add_dual(known.cont, cont, pos)
            return Throw(known.carried, cont)
        if isinstance(known, Rec):
            body = self.fresh()
            self.add_dual(known.body, body, pos)
            return Rec(known.level, body)
        raise InferError(f"dual skeleton: unexpected {known!r}")

    def _step_comp(self, c: _CompC) -> bool:
        ra = self.resolve(c.a)
        rb = self.resolve(c.b)
        rc = self.resolve(c.c)
        cyc = self.has_marked_cycles
        if isinstance(ra, Close) or isinstance(rb, Close):
            raise CompositionError(
                f"Close composes with nothing: {self.render(ra)} beside {self.render(rb)}"
            )
        if isinstance(ra, End):
            self.unify(c.c, c.b, c.pos, cyclic=cyc)
            return True
        if isinstance(rb, End):
            self.unify(c.c, c.a, c.pos, cyclic=cyc)
            return True
        if isinstance(ra, Bot):
            self.unify(c.b, END, c.pos)
            self.unify(c.c, BOT, c.pos)
            return True
        if isinstance(rb, Bot):
            self.unify(c.a, END, c.pos)
            self.unify(c.c, BOT, c.pos)
            return True
        known_a = not isinstance(ra, UVar)
        known_b = not isinstance(rb, UVar)
        if not isinstance(rc, UVar):
            if isinstance(rc, Bot):
                self.add_dual(c.a, c.b, c.pos)
                return True
            if isinstance(rc, End):
                self.unify(c.a, END, c.pos)
                self.unify(c.b, END, c.pos)
                return True
            if known_a:
                self.unify(c.b, END, c.pos)
                self.unify(c.c, c.a, c.pos, cyclic=cyc)
                return True
            if known_b:
                self.unify(c.a, END, c.pos)
                self.unify(c.c, c.b, c.pos, cyclic=cyc)
                return True
            self.comps.append(c)
            return False
        if known_a and known_b:
            self.add_dual(c.a, c.b, c.pos)
            self.unify(c.c, BOT, c.pos)
            return True
        self.comps.append(c)
        return False

    def _default_pass(self) -> bool:
        for i, c in enumerate(self.comps):
            ra = self.resolve(c.a)
            rb = self.resolve(c.b)
            rc = self.resolve(c.c)
            if isinstance(rc, (UVar, Bot, End)):
                continue
            if c.flavor == "throw" and isinstance(ra, UVar) and isinstance(rb, UVar):
                del self.comps[i]
                self.unify(c.a, c.c, c.pos, cyclic=self.has_marked_cycles)
                self.unify(c.b, END, c.pos)
                return True
            if c.flavor == "fork" and isinstance(ra, UVar):
                del self.comps[i]
                self.unify(c.a, END, c.pos)
                self.unify(c.c, c.b, c.pos, cyclic=self.has_marked_cycles)
                return True
        for i, d in enumerate(self.duals):
            ra = self.resolve(d.a)
            rb = self.resolve(d.b)
            if isinstance(ra, UVar) and isinstance(rb, UVar):
                # Nothing in this group constrains either side of the pair,
                # so the protocol they describe is unobservable; close it at
                # the least session.  A signature records only solved rows,
                # so an open dual link between two variables cannot be
                # carried out of the group.
                del self.duals[i]
                self.unify(d.a, END, d.pos)
                self.unify(d.b, END, d.pos)
                return True
        return False

    def _step_ended(self, e: _EndedTailC) -> bool:
        if e.tail.rid not in self.rbind:
            self.ended.append(e)
            return False
        row = self.resolve_row(EnvRow(e.tail, ()))
        for entry in row.entries:
            self.unify(entry, END, e.pos)
        if row.tail is not None:
            self.ended.append(_EndedTailC(row.tail, e.pos))
        return True

    def _step_level(self, l: _EqLevelC) -> bool:
        left = self.resolve_level(l.left)
        right = self.resolve_level(l.right)
        same_base = (left.base is None and right.base is None) or (
            left.base is not None
            and right.base is not None
            and left.base.rid == right.base.rid
        )
        if same_base:
            if left.offset != right.offset:
                raise TypeCheckError(
                    f"channel is at level {left.offset} but is used at level {right.offset}",
                    l.pos,
                )
            return True
        self.levels.append(_EqLevelC(left, right, l.pos))
        return False


# --------------------------------------------------------------------------
# inference over programs


@dataclass
class _RawSig:
    name: str
    tail: RowVar
    pre_entries: list[SessionType]
    chan_params: list[str]
    value_params: list[tuple[str, ValueType]]
    post_row: EnvRow | None = None
    result: ValueType = UNIT
    residual: list[object] = field(default_factory=list)
    heads: dict[int, tuple[SessionType, SessionType]] = field(default_factory=dict)


class _Thread:
    """Mutable per-process threading state."""

    def __init__(
        self,
        tail: RowVar,
        entries: list[SessionType],
        chans: dict[str, int],
        env: dict[str, ValueType],
        recnodes: dict[int, SessionType],
    ):
        self.tail = tail
        self.entries = entries
        self.chans = chans
        self.env = env
        self.recnodes = recnodes

    def branch_copy(self) -> "_Thread":
        return _Thread(
            self.tail,
            list(self.entries),
            dict(self.chans),
            dict(self.env),
            self.recnodes,
        )


class Inference:
    def __init__(self, program: Program):
        self.program = program
        self.solver = Solver()
        self.raw: dict[str, _RawSig] = {}
        self.signatures: dict[str, SessionSignature] = {}
        self._solved: set[str] = set()
        self.offern_heads: dict[int, tuple[SessionType, SessionType]] = {}

    # -- public API

    def infer_all(self) -> dict[str, SessionSignature]:
        for scc in self._sccs():
            self._infer_scc(scc)
        return self.signatures

    def require_runnable(self, name: str) -> None:
        """Entry sessions must start from the empty context and end everything.

        This binds the session's own graphs (an entry session is the root of
        exactly one runtime process), which also grounds offerN branch tags.
        """
        decl = self.program.sessions.get(name)
        if decl is None:
            raise TypeCheckError(f"no session named {name}")
        if decl.params:
            raise TypeCheckError(f"entry session {name} must not take parameters")
        s = self.solver
        raw = self.raw[name]
        s.unify_row(EnvRow(raw.tail, tuple(raw.pre_entries)), EnvRow(None, ()), None)
        assert raw.post_row is not None
        post_row = s.resolve_row(raw.post_row)
        for entry in post_row.entries:
            s.unify(entry, END, None)
        s.solve()

    def require_server(self, server: str, declared: SessionType) -> None:
        """Service startup: the named session must implement the dual of the
        declared client view on a single channel and finish it."""
        decl = self.program.sessions.get(server)
        if decl is None:
            raise TypeCheckError(f"no session named {server}")
        if len(decl.channel_params) != 1 or len(decl.params) != 1:
            raise TypeCheckError(
                f"server session {server} must take exactly one channel parameter"
            )
        s = self.solver
        raw = self.raw[server]
        client_view = self._materialize(declared, {})
        mirror = s.fresh()
        s.add_dual(client_view, mirror)
        s.solve()
        s.unify(raw.pre_entries[0], mirror, decl.pos, cyclic=True)
        assert raw.post_row is not None
        post_row = s.resolve_row(raw.post_row)
        for entry in post_row.entries:
            s.unify(entry, END, decl.pos)
        s.solve()

    # -- dependency order

    def _references(self, decl: SessionDecl) -> set[tuple[str, str]]:
        refs: set[tuple[str, str]] = set()

        def walk(body: tuple[Stmt, ...]) -> None:
            for st in body:
                if isinstance(st, ForkStmt):
                    if st.call is not None:
                        refs.add(("fork", st.call.name))
                    else:
                        walk(st.body or ())
                elif isinstance(st, RecurStmt):
                    refs.add(("recur", st.session))
                elif isinstance(st, (OfferStmt, OfferNStmt)):
                    walk(st.left)
                    walk(st.right)

        walk(decl.body)
        return refs

    def _sccs(self) -> list[list[str]]:
        names = list(self.program.sessions)
        edges: dict[str, set[str]] = {n: set() for n in names}
        self._fork_edges: set[tuple[str, str]] = set()
        for n in names:
            for kind, target in self._references(self.program.sessions[n]):
                if target in edges:
                    edges[n].add(target)
                    if kind == "fork":
                        self._fork_edges.add((n, target))
        # Tarjan's algorithm, iterative enough for our sizes via recursion.
        index: dict[str, int] = {}
        low: dict[str, int] = {}
        onstack: set[str] = set()
        stack: list[str] = []
        out: list[list[str]] = []
        counter = [0]

        def strongconnect(v: str) -> None:
            index[v] = low[v] = counter[0]
            counter[0] += 1
            stack.append(v)
            onstack.add(v)
            for w in sorted(edges[v]):
                if w not in index:
                    strongconnect(w)
                    low[v] = min(low[v], low[w])
                elif w in onstack:
                    low[v] = min(low[v], index[w])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack.remove(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)

        for v in names:
            if v not in index:
                strongconnect(v)
        return out  # Tarjan emits callees before callers

    # -- per-SCC inference

    def _infer_scc(self, scc: list[str]) -> None:
        members = set(scc)
        for name in scc:
            decl = self.program.sessions[name]
            for kind, target in self._references(decl):
                if target in members and kind == "fork" and (len(scc) > 1 or target == name):
                    raise TypeCheckError(
                        f"session recursion through fork is not supported"
                        f" ({name} -> {target})",
                        decl.pos,
                    )
        s = self.solver
        shared_heads: dict[int, tuple[SessionType, SessionType]] = {}
        for name in scc:
            decl = self.program.sessions[name]
            tail = s.fresh_row()
            pre_entries: list[SessionType] = []
            chan_params: list[str] = []
            value_params: list[tuple[str, ValueType]] = []
            for p in decl.params:
                if p.is_channel:
                    if p.name in chan_params:
                        raise TypeCheckError(f"duplicate parameter {p.name}", decl.pos)
                    chan_params.append(p.name)
                    pre_entries.append(s.fresh())
                else:
                    value_params.append((p.name, p.value_type))
            self.raw[name] = _RawSig(
                name, tail, pre_entries, chan_params, value_params, heads=shared_heads
            )
        for name in scc:
            self._thread_session(name, members)
        ended, levels = s.solve()
        tails = {self.raw[name].tail.rid: name for name in scc}
        for e in ended:
            resolved = e.tail
            owner = tails.get(resolved.rid)
            if owner is not None:
                raw = self.raw[owner]
                if not any(isinstance(r, EndedTailR) for r in raw.residual):
                    raw.residual.append(EndedTailR())
        for l in levels:
            for base in (l.left.base, l.right.base):
                if base is not None and base.rid in tails:
                    self.raw[tails[base.rid]].residual.append(LengthR(l.left, l.right))
                    break
        for name in scc:
            self.signatures[name] = self._fold_signature(self.raw[name])
            self._solved.add(name)

    def offern_tag(
        self, stmt: OfferNStmt, root: str | None = None
    ) -> tuple[str | None, str | None]:
        """Branch discriminator tags, resolved against the current solver state.

        Tags may only become ground once an entry session or a service check
        has tied the whole composition together, so this is looked up lazily.
        ``root`` names the session whose process tree the statement runs
        under; its graphs are the ones grounded by the runnable/server checks.
        """
        heads = None
        if root is not None and root in self.raw:
            heads = self.raw[root].heads.get(id(stmt))
        if heads is None:
            heads = self.offern_heads.get(id(stmt))
        if heads is None:
            return (None, None)
        return (self._head_tag(heads[0]), self._head_tag(heads[1]))

    def _head_tag(self, u: SessionType) -> str | None:
        r = self.solver.resolve(u)
        while isinstance(r, Rec):
            r = self.solver.resolve(r.body)
        if isinstance(r, Recv):
            v = self.solver.resolve_v(r.value)
            if isinstance(v, TaggedT):
                return v.name
        return None

    def _thread_session(self, name: str, scc_members: set[str]) -> None:
        decl = self.program.sessions[name]
        raw = self.raw[name]
        self._cur_raw = raw
        env = dict(raw.value_params)
        chans = {cname: i for i, cname in enumerate(raw.chan_params)}
        thread = _Thread(raw.tail, list(raw.pre_entries), chans, env, {})
        result = self._thread_body(decl.body, thread, scc_members, top_level=True)
        raw.post_row = EnvRow(raw.tail, tuple(thread.entries))
        raw.result = result
        self.solver.add_ended_tail(raw.tail, decl.pos)

    def _thread_body(
        self,
        body: tuple[Stmt, ...],
        thread: _Thread,
        scc: set[str],
        top_level: bool = False,
    ) -> ValueType:
        result: ValueType = UNIT
        for i, st in enumerate(body):
            final = top_level and i == len(body) - 1
            result = self._thread_stmt(st, thread, scc, final)
        return result

    def _chan_offset(self, thread: _Thread, name: str, pos: Pos) -> int:
        if name not in thread.chans:
            raise TypeCheckError(f"unknown channel {name}", pos)
        return thread.chans[name]

    def _thread_stmt(
        self, st: Stmt, thread: _Thread, scc: set[str], final: bool
    ) -> ValueType:
        s = self.solver
        if isinstance(st, NewStmt):
            thread.chans[st.bind] = len(thread.entries)
            thread.entries.append(BOT)
            return UNIT
        if isinstance(st, SendStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            vt = self._infer_expr(st.value, thread)
            cont = s.fresh()
            s.unify(thread.entries[k], Send(vt, cont), st.pos)
            thread.entries[k] = cont
            return UNIT
        if isinstance(st, RecvStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            vv = s.fresh_v()
            cont = s.fresh()
            s.unify(thread.entries[k], Recv(vv, cont), st.pos)
            thread.entries[k] = cont
            thread.env[st.bind] = vv
            return UNIT
        if isinstance(st, SelectStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            l, r = s.fresh(), s.fresh()
            s.unify(thread.entries[k], Select(l, r), st.pos)
            thread.entries[k] = l if st.which == 1 else r
            return UNIT
        if isinstance(st, SelectNStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            l, r = s.fresh(), s.fresh()
            s.unify(thread.entries[k], SelectN(l, r), st.pos)
            thread.entries[k] = l if st.which == 1 else r
            return UNIT
        if isinstance(st, (OfferStmt, OfferNStmt)):
            k = self._chan_offset(thread, st.chan, st.pos)
            l, r = s.fresh(), s.fresh()
            ctor = Offer if isinstance(st, OfferStmt) else OfferN
            s.unify(thread.entries[k], ctor(l, r), st.pos)
            if isinstance(st, OfferNStmt):
                self._cur_raw.heads.setdefault(id(st), (l, r))
                self.offern_heads.setdefault(id(st), (l, r))
            left = thread.branch_copy()
            left.entries[k] = l
            self._thread_body(st.left, left, scc)
            right = thread.branch_copy()
            right.entries[k] = r
            self._thread_body(st.right, right, scc)
            if len(left.entries) != len(right.entries):
                raise TypeCheckError(
                    "offer branches create different numbers of channels", st.pos
                )
            for x, y in zip(left.entries, right.entries):
                s.unify(x, y, st.pos, cyclic=s.has_marked_cycles)
            thread.entries = left.entries
            return UNIT
        if isinstance(st, ThrowStmt):
            kc = self._chan_offset(thread, st.chan, st.pos)
            kd = self._chan_offset(thread, st.arg, st.pos)
            if kc == kd:
                raise TypeCheckError("a channel cannot be delegated over itself", st.pos)
            carried, cont = s.fresh(), s.fresh()
            s.unify(thread.entries[kc], Throw(carried, cont), st.pos)
            thread.entries[kc] = cont
            retained = s.fresh()
            s.add_comp(carried, retained, thread.entries[kd], "throw", st.pos)
            thread.entries[kd] = retained
            return UNIT
        if isinstance(st, CatchStmt):
            kc = self._chan_offset(thread, st.chan, st.pos)
            carried, cont = s.fresh(), s.fresh()
            s.unify(thread.entries[kc], Catch(carried, cont), st.pos)
            thread.entries[kc] = cont
            thread.chans[st.bind] = len(thread.entries)
            thread.entries.append(carried)
            return UNIT
        if isinstance(st, ForkStmt):
            self._thread_fork(st, thread, scc)
            return UNIT
        if isinstance(st, IoStmt):
            if st.action == "print":
                self._infer_expr(st.arg, thread)
            return UNIT
        if isinstance(st, UnwindStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            node = thread.recnodes.get(st.level)
            if node is None:
                body = s.fresh()
                node = Rec(st.level, body)
                thread.recnodes[st.level] = node
            s.has_marked_cycles = True
            s.unify(thread.entries[k], node, st.pos, cyclic=True)
            thread.entries[k] = node.body
            return UNIT
        if isinstance(st, RecurStmt):
            self._thread_recur(st, thread, scc)
            return s.fresh_v()
        if isinstance(st, CloseStmt):
            k = self._chan_offset(thread, st.chan, st.pos)
            s.unify(thread.entries[k], CLOSE, st.pos)
            thread.entries[k] = END
            return UNIT
        if isinstance(st, ConnectStmt):
            svc = self.program.services.get(st.service)
            if svc is None:
                raise TypeCheckError(f"unknown service {st.service}", st.pos)
            thread.chans[st.bind] = len(thread.entries)
            thread.entries.append(self._materialize(svc.session_type, {}))
            return UNIT
        if isinstance(st, ReturnStmt):
            if not final:
                raise TypeCheckError(
                    "return is only allowed as the last statement of a session body",
                    st.pos,
                )
            return self._infer_expr(st.value, thread)
        raise InferError(f"unhandled statement {st!r}")

    def _thread_fork(self, st: ForkStmt, thread: _Thread, scc: set[str]) -> None:
        s = self.solver
        m = len(thread.entries)
        body_entries: list[SessionType] = [s.fresh() for _ in range(m)]
        if st.call is not None:
            callee = st.call.name
            if callee in scc:
                raise TypeCheckError(
                    f"session recursion through fork is not supported (fork {callee})",
                    st.pos,
                )
            if callee not in self._solved:
                raise TypeCheckError(f"unknown session {callee}", st.pos)
            pre, post, value_params, param_levels = self._instantiate(callee)
            decl = self.program.sessions[callee]
            if len(st.call.args) != len(decl.params):
                raise TypeCheckError(
                    f"{callee} takes {len(decl.params)} arguments,"
                    f" got {len(st.call.args)}",
                    st.pos,
                )
            chan_args: list[str] = []
            value_args: list[Expr] = []
            for p, a in zip(decl.params, st.call.args):
                if p.is_channel:
                    if not isinstance(a, VarRef) or a.name not in thread.chans:
                        raise TypeCheckError(
                            f"argument for channel parameter {p.name} must name a channel",
                            st.pos,
                        )
                    if a.name in chan_args:
                        raise TypeCheckError(
                            f"channel {a.name} passed twice to {callee}", st.pos
                        )
                    chan_args.append(a.name)
                else:
                    value_args.append(a)
            s.unify_row(pre, EnvRow(thread.tail, tuple(body_entries)), st.pos)
            for lvl, argname in zip(param_levels, chan_args):
                s.add_eq_level(
                    lvl, LevelExpr(thread.tail, thread.chans[argname]), st.pos
                )
            for (pname, ptype), arg in zip(value_params, value_args):
                s.unify_v(self._infer_expr(arg, thread), ptype, st.pos)
            post_row = s.resolve_row(post)
            for entry in post_row.entries:
                s.unify(entry, END, st.pos)
            if post_row.tail is not None:
                s.add_ended_tail(post_row.tail, st.pos)
        else:
            sub = _Thread(
                thread.tail,
                list(body_entries),
                dict(thread.chans),
                dict(thread.env),
                {},
            )
            self._thread_body(st.body or (), sub, scc)
            for entry in sub.entries:
                s.unify(entry, END, st.pos)
            s.add_ended_tail(thread.tail, st.pos)
        for i in range(m):
            remaining = s.fresh()
            s.add_comp(body_entries[i], remaining, thread.entries[i], "fork", st.pos)
            thread.entries[i] = remaining

    def _thread_recur(self, st: RecurStmt, thread: _Thread, scc: set[str]) -> None:
        s = self.solver
        kc = self._chan_offset(thread, st.chan, st.pos)
        callee = st.session
        if callee in scc:
            raw = self.raw[callee]
            if len(raw.chan_params) != 1 or raw.value_params:
                raise TypeCheckError(
                    f"recur1 target {callee} must take exactly one channel parameter",
                    st.pos,
                )
            callee_entry = raw.pre_entries[0]
            callee_level = LevelExpr(raw.tail, 0)
            callee_post = None
        else:
            if callee not in self._solved:
                raise TypeCheckError(f"unknown session {callee}", st.pos)
            decl = self.program.sessions[callee]
            if len(decl.channel_params) != 1 or any(not p.is_channel for p in decl.params):
                raise TypeCheckError(
                    f"recur1 target {callee} must take exactly one channel parameter",
                    st.pos,
                )
            pre, post, _, param_levels = self._instantiate(callee)
            pre_row = s.resolve_row(pre)
            callee_entry = pre_row.entries[-1]
            callee_level = param_levels[0]
            callee_post = s.resolve_row(post)
        s.has_marked_cycles = True
        s.unify(thread.entries[kc], callee_entry, st.pos, cyclic=True)
        s.add_eq_level(callee_level, LevelExpr(thread.tail, kc), st.pos)
        for i, entry in enumerate(thread.entries):
            if i != kc:
                s.unify(entry, END, st.pos)
        s.add_ended_tail(thread.tail, st.pos)
        if callee_post is not None and kc == len(thread.entries) - 1:
            # A tail call into an already-solved session continues this one:
            # the handed-over channel (and anything the callee creates on top
            # of it) finishes at the callee's post row.  Channels the callee
            # would stack its own creations onto must be at the top, so other
            # positions keep opaque posts.
            thread.entries = thread.entries[:kc] + list(callee_post.entries)
        else:
            thread.entries = [s.fresh() for _ in thread.entries]

    # -- expressions

    def _infer_expr(self, e: Expr, thread: _Thread) -> ValueType:
        s = self.solver
        if isinstance(e, IntLit):
            return INT
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, StrLit):
            return STR
        if isinstance(e, UnitLit):
            return UNIT
        if isinstance(e, ListLit):
            elem = s.fresh_v()
            for item in e.items:
                s.unify_v(self._infer_expr(item, thread), elem, e.pos)
            return ListT(elem)
        if isinstance(e, VarRef):
            if e.name in thread.env:
                return thread.env[e.name]
            if e.name in thread.chans:
                raise TypeCheckError(
                    f"channel {e.name} cannot be used as a value (use throw)", e.pos
                )
            raise TypeCheckError(f"unbound variable {e.name}", e.pos)
        if isinstance(e, BinOp):
            lt = self._infer_expr(e.left, thread)
            rt = self._infer_expr(e.right, thread)
            s.unify_v(lt, INT, e.pos)
            s.unify_v(rt, INT, e.pos)
            return INT if e.op in ("+", "-") else BOOL
        if isinstance(e, IfExpr):
            s.unify_v(self._infer_expr(e.cond, thread), BOOL, e.pos)
            tt = self._infer_expr(e.then, thread)
            et = self._infer_expr(e.els, thread)
            s.unify_v(tt, et, e.pos)
            return tt
        if isinstance(e, CtorApp):
            decl = self.program.data_decls.get(e.tag)
            if decl is None:
                raise TypeCheckError(f"unknown tag {e.tag}", e.pos)
            if len(e.args) != len(decl.payload):
                raise TypeCheckError(
                    f"{e.tag} carries {len(decl.payload)} fields, got {len(e.args)}",
                    e.pos,
                )
            for arg, want in zip(e.args, decl.payload):
                s.unify_v(self._infer_expr(arg, thread), want, e.pos)
            return TaggedT(e.tag)
        if isinstance(e, Proj):
            decl = self.program.data_decls.get(e.tag)
            if decl is None:
                raise TypeCheckError(f"unknown tag {e.tag}", e.pos)
            if e.index >= len(decl.payload):
                raise TypeCheckError(
                    f"{e.tag} has no field {e.index}", e.pos
                )
            s.unify_v(self._infer_expr(e.arg, thread), TaggedT(e.tag), e.pos)
            return decl.payload[e.index]
        raise InferError(f"unhandled expression {e!r}")

    # -- graph instantiation

    def _materialize(self, u: SessionType, binders: dict[int, UVar]) -> SessionType:
        s = self.solver
        if isinstance(u, Rec):
            hole = s.fresh()
            node = Rec(u.level, self._materialize(u.body, {**binders, u.level: hole}))
            s.sbind[hole.uid] = node
            s.has_marked_cycles = True
            return node
        if isinstance(u, Var):
            if u.level in binders:
                return binders[u.level]
            return u
        if isinstance(u, (Send, Recv)):
            return type(u)(u.value, self._materialize(u.cont, binders))
        if isinstance(u, (Select, Offer, SelectN, OfferN)):
            return type(u)(
                self._materialize(u.left, binders), self._materialize(u.right, binders)
            )
        if isinstance(u, (Throw, Catch)):
            return type(u)(
                self._materialize(u.carried, binders),
                self._materialize(u.cont, binders),
            )
        return u

    def _instantiate(
        self, name: str
    ) -> tuple[EnvRow, EnvRow, list[tuple[str, ValueType]], list[LevelExpr]]:
        """Fresh copy of a solved signature's graphs inside the live solver."""
        raw = self.raw[name]
        s = self.solver
        smemo: dict[int, SessionType] = {}
        vmemo: dict[int, ValueType] = {}
        rmemo: dict[int, RowVar] = {}

        def copy_s(t: SessionType) -> SessionType:
            r = s.resolve(t)
            if isinstance(r, UVar):
                if r.uid not in smemo:
                    smemo[r.uid] = s.fresh()
                return smemo[r.uid]
            key = id(r)
            if key in smemo:
                return smemo[key]
            hole = s.fresh()
            smemo[key] = hole
            if isinstance(r, (Send, Recv)):
                built: SessionType = type(r)(copy_v(r.value), copy_s(r.cont))
            elif isinstance(r, (Select, Offer, SelectN, OfferN)):
                built = type(r)(copy_s(r.left), copy_s(r.right))
            elif isinstance(r, (Throw, Catch)):
                built = type(r)(copy_s(r.carried), copy_s(r.cont))
            elif isinstance(r, Rec):
                built = Rec(r.level, copy_s(r.body))
            else:
                built = r
            s.sbind[hole.uid] = built
            return hole

        def copy_v(v: ValueType) -> ValueType:
            r = s.resolve_v(v)
            if isinstance(r, VVar):
                if r.vid not in vmemo:
                    vmemo[r.vid] = s.fresh_v()
                return vmemo[r.vid]
            if isinstance(r, ListT):
                return ListT(copy_v(r.elem))
            if isinstance(r, ChanT):
                return ChanT(copy_s(r.session), copy_level(r.level))
            return r

        def copy_row_var(rv: RowVar) -> RowVar:
            if rv.rid not in rmemo:
                rmemo[rv.rid] = s.fresh_row()
            return rmemo[rv.rid]

        def copy_row(row: EnvRow) -> EnvRow:
            resolved = s.resolve_row(row)
            tail = copy_row_var(resolved.tail) if resolved.tail is not None else None
            return EnvRow(tail, tuple(copy_s(e) for e in resolved.entries))

        def copy_level(lvl: LevelExpr) -> LevelExpr:
            resolved = s.resolve_level(lvl)
            base = copy_row_var(resolved.base) if resolved.base is not None else None
            return LevelExpr(base, resolved.offset)

        pre = copy_row(EnvRow(raw.tail, tuple(raw.pre_entries)))
        assert raw.post_row is not None
        post = copy_row(raw.post_row)
        value_params = [(n, copy_v(t)) for n, t in raw.value_params]
        param_levels = [
            copy_level(LevelExpr(raw.tail, i)) for i in range(len(raw.chan_params))
        ]
        for r in raw.residual:
            if isinstance(r, EndedTailR):
                resolved_tail = s.resolve_row(EnvRow(raw.tail, ())).tail
                if resolved_tail is not None:
                    s.add_ended_tail(copy_row_var(resolved_tail), None)
        for sid, (lu, ru) in raw.heads.items():
            copied = (copy_s(lu), copy_s(ru))
            self._cur_raw.heads.setdefault(sid, copied)
            self.offern_heads.setdefault(sid, copied)
        return pre, post, value_params, param_levels

    # -- folding solved graphs into display form

    def _fold_signature(self, raw: _RawSig) -> SessionSignature:
        s = self.solver
        display: dict[tuple[str, int], int] = {}
        counter = [0]

        def disp(kind: str, vid: int) -> int:
            key = (kind, vid)
            if key not in display:
                display[key] = counter[0]
                counter[0] += 1
            return display[key]

        def fold_s(
            t: SessionType, active: dict[int, int | None], levels: frozenset[int]
        ) -> SessionType:
            path: list[int] = []
            r = t
            while isinstance(r, UVar):
                if r.uid in s.sbind:
                    if r.uid in active:
                        lvl = active[r.uid]
                        if lvl is None:
                            raise FoldError(
                                "cyclic type without an unwind-recorded binder"
                            )
                        return Var(lvl)
                    path.append(r.uid)
                    r = s.sbind[r.uid]
                else:
                    return UVar(disp("s", r.uid))
            node_key = -id(r)
            if node_key in active:
                lvl = active[node_key]
                if lvl is None:
                    raise FoldError("cyclic type without an unwind-recorded binder")
                return Var(lvl)
            if isinstance(r, Rec):
                if r.level in levels:
                    raise FoldError(
                        f"two enclosing recursion binders share level {r.level}"
                    )
                inner = dict(active)
                for uid in path:
                    inner[uid] = r.level
                inner[node_key] = r.level
                return Rec(r.level, fold_s(r.body, inner, levels | {r.level}))
            inner = dict(active)
            for uid in path:
                inner[uid] = None
            inner[node_key] = None
            if isinstance(r, (Send, Recv)):
                return type(r)(fold_v(r.value), fold_s(r.cont, inner, levels))
            if isinstance(r, (Select, Offer, SelectN, OfferN)):
                return type(r)(
                    fold_s(r.left, inner, levels), fold_s(r.right, inner, levels)
                )
            if isinstance(r, (Throw, Catch)):
                return type(r)(
                    fold_s(r.carried, inner, levels), fold_s(r.cont, inner, levels)
                )
            return r

        def fold_v(v: ValueType) -> ValueType:
            r = s.resolve_v(v)
            if isinstance(r, VVar):
                return VVar(disp("v", r.vid))
            if isinstance(r, ListT):
                return ListT(fold_v(r.elem))
            if isinstance(r, ChanT):
                return ChanT(fold_s(r.session, {}, frozenset()), s.resolve_level(r.level))
            return r

        pre_row = s.resolve_row(EnvRow(raw.tail, tuple(raw.pre_entries)))
        assert raw.post_row is not None
        post_row = s.resolve_row(raw.post_row)
        pre = EnvRow(pre_row.tail, tuple(fold_s(e, {}, frozenset()) for e in pre_row.entries))
        post = EnvRow(post_row.tail, tuple(fold_s(e, {}, frozenset()) for e in post_row.entries))
        result = fold_v(raw.result)
        params = tuple(
            (cname, s.resolve_level(LevelExpr(raw.tail, i)))
            for i, cname in enumerate(raw.chan_params)
        )
        return SessionSignature(
            raw.name,
            pre,
            post,
            result,
            tuple(raw.residual),
            params,
            tuple(raw.value_params),
        )


# --------------------------------------------------------------------------
# public helpers


def infer_program(program: Program) -> dict[str, SessionSignature]:
    return Inference(program).infer_all()

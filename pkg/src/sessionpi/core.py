"""Core algebra for binary session types indexed by de Bruijn levels.

Session types describe one channel's protocol.  An environment row
(`EnvRow`) assigns a session type to every channel a process knows,
indexed by creation order ("level"): the channel created first sits at
level 0, the next at level 1, and so on.  Rows are open-ended: a row may
start from an abstract tail (`RowVar`) standing for channels of an
enclosing, not-yet-known context.

The two distinguished terminal types:

* ``End``  - this side has no remaining obligation.
* ``Bot``  - both endpoints of the channel are engaged inside the typed
  term, so no further outside interaction is possible.

``dual`` flips the outside view of a protocol, ``comp`` composes the
usages of two parallel terms on one channel, ``unfold`` unrolls one
layer of an iso-recursive type, and ``equal_unfolding`` compares types
up to bounded unfolding.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class CoreError(Exception):
    """Base class for algebra failures."""


class DualUndefined(CoreError):
    """dual(Bot) does not exist."""


class NotGround(CoreError):
    """Operation applied to a type still containing inference variables."""


class CompUndefined(CoreError):
    """The two usages cannot run in parallel on one channel."""


class NotRecursive(CoreError):
    """unfold applied to a non-Rec type."""


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class ValueType:
    pass


@dataclass(frozen=True)
class IntT(ValueType):
    pass


@dataclass(frozen=True)
class BoolT(ValueType):
    pass


@dataclass(frozen=True)
class StrT(ValueType):
    pass


@dataclass(frozen=True)
class UnitT(ValueType):
    pass


@dataclass(frozen=True)
class ListT(ValueType):
    elem: ValueType


@dataclass(frozen=True)
class TaggedT(ValueType):
    """A named single-constructor value type (payload fixed by declaration)."""

    name: str


@dataclass(frozen=True)
class ChanT(ValueType):
    """Channel-typed value, used internally when typing expressions."""

    session: "SessionType"
    level: "LevelExpr"


@dataclass(frozen=True)
class VVar(ValueType):
    """Value-type inference variable."""

    vid: int


INT = IntT()
BOOL = BoolT()
STR = StrT()
UNIT = UnitT()


# --------------------------------------------------------------------------
# session types


@dataclass(frozen=True)
class SessionType:
    def __str__(self) -> str:
        return format_type(self)


@dataclass(frozen=True)
class Send(SessionType):
    value: ValueType
    cont: SessionType


@dataclass(frozen=True)
class Recv(SessionType):
    value: ValueType
    cont: SessionType


@dataclass(frozen=True)
class Select(SessionType):
    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class Offer(SessionType):
    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class SelectN(SessionType):
    """Network-session branch selection (resolved by tag at the far end)."""

    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class OfferN(SessionType):
    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class Throw(SessionType):
    """Delegate a channel: ``carried`` is the receiver's usage of it."""

    carried: SessionType
    cont: SessionType


@dataclass(frozen=True)
class Catch(SessionType):
    carried: SessionType
    cont: SessionType


@dataclass(frozen=True)
class End(SessionType):
    pass


@dataclass(frozen=True)
class Bot(SessionType):
    pass


@dataclass(frozen=True)
class Close(SessionType):
    """One-ended terminal for network sessions."""


@dataclass(frozen=True)
class Rec(SessionType):
    """Iso-recursive binder; ``level`` is a de Bruijn level (outermost 0)."""

    level: int
    body: SessionType


@dataclass(frozen=True)
class Var(SessionType):
    level: int


@dataclass(frozen=True)
class UVar(SessionType):
    """Session-type inference variable."""

    uid: int


END = End()
BOT = Bot()
CLOSE = Close()

# Branching constructors share shapes; these tables drive generic recursion.
_BRANCH_DUALS = {Select: Offer, Offer: Select, SelectN: OfferN, OfferN: SelectN}


# --------------------------------------------------------------------------
# rows and levels


@dataclass(frozen=True)
class RowVar:
    """Abstract row tail (channels of an unknown enclosing context)."""

    rid: int


@dataclass(frozen=True)
class EnvRow:
    """``tail :> entries[0] :> entries[1] :> ...`` - level i is entries[i]."""

    tail: RowVar | None
    entries: tuple[SessionType, ...]

    def __str__(self) -> str:
        return format_row(self)


@dataclass(frozen=True)
class LevelExpr:
    """A channel level: ``offset`` entries above ``base`` (None = Nil)."""

    base: RowVar | None
    offset: int


def is_completed(row: EnvRow) -> bool:
    """True when the row is closed and every obligation is discharged."""
    if row.tail is not None:
        return False
    for entry in row.entries:
        if not isinstance(entry, End):
            return False
    return True


# --------------------------------------------------------------------------
# duality


def dual(u: SessionType) -> SessionType:
    """The partner's view of protocol ``u`` (undefined on Bot)."""
    if isinstance(u, UVar):
        raise NotGround("dual of an unresolved variable")
    if isinstance(u, Bot):
        raise DualUndefined("Bot has no dual")
    if isinstance(u, (End, Close)):
        return u
    if isinstance(u, Var):
        return u
    if isinstance(u, Send):
        return Recv(u.value, dual(u.cont))
    if isinstance(u, Recv):
        return Send(u.value, dual(u.cont))
    if isinstance(u, (Select, Offer, SelectN, OfferN)):
        return _BRANCH_DUALS[type(u)](dual(u.left), dual(u.right))
    if isinstance(u, Throw):
        return Catch(u.carried, dual(u.cont))
    if isinstance(u, Catch):
        return Throw(u.carried, dual(u.cont))
    if isinstance(u, Rec):
        return Rec(u.level, dual(u.body))
    raise NotGround(f"dual: unhandled form {u!r}")


# --------------------------------------------------------------------------
# composition


def comp(u1: SessionType, u2: SessionType) -> SessionType:
    """Compose two parallel usages of one channel.

    End is the unit; dual usages fuse to Bot; everything else is
    undefined.  Close composes with nothing (a network session keeps its
    far endpoint outside the typed term).
    """
    _require_ground(u1)
    _require_ground(u2)
    if isinstance(u1, Close) or isinstance(u2, Close):
        raise CompUndefined("Close is one-ended and composes with nothing")
    if isinstance(u1, End):
        return u2
    if isinstance(u2, End):
        return u1
    try:
        if equal_types(dual(u1), u2):
            return BOT
    except DualUndefined:
        pass
    raise CompUndefined(f"cannot compose {format_type(u1)} with {format_type(u2)}")


def _require_ground(u: SessionType) -> None:
    for sub in _subterms(u):
        if isinstance(sub, UVar):
            raise NotGround(f"composition over unresolved variable {format_type(sub)}")


def _subterms(u: SessionType):
    stack = [u]
    while stack:
        t = stack.pop()
        yield t
        if isinstance(t, (Send, Recv, Throw, Catch)):
            stack.append(t.cont)
            if isinstance(t, (Throw, Catch)):
                stack.append(t.carried)
        elif isinstance(t, (Select, Offer, SelectN, OfferN)):
            stack.append(t.left)
            stack.append(t.right)
        elif isinstance(t, Rec):
            stack.append(t.body)


def equal_types(u1: SessionType, u2: SessionType) -> bool:
    """Structural equality (levels are absolute, so this is just ==)."""
    return u1 == u2


# --------------------------------------------------------------------------
# recursion


def subst_level(body: SessionType, level: int, repl: SessionType) -> SessionType:
    """Replace free ``Var(level)`` in ``body`` by ``repl``.

    An inner ``Rec`` with the same level shadows the substitution.  With
    absolute levels no shifting is required: a closed replacement stays
    closed wherever it lands.
    """
    if isinstance(body, Var):
        return repl if body.level == level else body
    if isinstance(body, Rec):
        if body.level == level:
            return body
        return Rec(body.level, subst_level(body.body, level, repl))
    if isinstance(body, Send):
        return Send(body.value, subst_level(body.cont, level, repl))
    if isinstance(body, Recv):
        return Recv(body.value, subst_level(body.cont, level, repl))
    if isinstance(body, (Select, Offer, SelectN, OfferN)):
        return type(body)(
            subst_level(body.left, level, repl),
            subst_level(body.right, level, repl),
        )
    if isinstance(body, Throw):
        return Throw(body.carried, subst_level(body.cont, level, repl))
    if isinstance(body, Catch):
        return Catch(body.carried, subst_level(body.cont, level, repl))
    return body


def unfold(u: SessionType) -> SessionType:
    """One unrolling of a recursive type: body with Var(k) := the Rec itself."""
    if not isinstance(u, Rec):
        raise NotRecursive(f"unfold expects a Rec type, got {format_type(u)}")
    return subst_level(u.body, u.level, u)


def equal_unfolding(u1: SessionType, u2: SessionType, depth: int = 16) -> bool:
    """Equality of the (possibly infinite) trees denoted by u1 and u2,
    truncated at ``depth`` constructors.  Rec nodes are transparent."""
    seen: set[tuple[SessionType, SessionType, int]] = set()

    def drive(t: SessionType) -> SessionType:
        # Unroll leading Rec binders; a Rec that reproduces itself
        # (e.g. Rec 0 (Var 0)) denotes no constructor at all and is kept
        # as a distinguished stuck term.
        for _ in range(64):
            if not isinstance(t, Rec):
                return t
            nxt = unfold(t)
            if nxt == t:
                return t
            t = nxt
        return t

    def go(a: SessionType, b: SessionType, d: int) -> bool:
        if d <= 0:
            return True
        key = (a, b, d)
        if key in seen:
            return True
        seen.add(key)
        a = drive(a)
        b = drive(b)
        if isinstance(a, Rec) or isinstance(b, Rec):
            return a == b  # both stuck on a degenerate Rec
        if type(a) is not type(b):
            return False
        if isinstance(a, (End, Bot, Close)):
            return True
        if isinstance(a, Var):
            return a == b
        if isinstance(a, UVar):
            return a == b
        if isinstance(a, (Send, Recv)):
            return a.value == b.value and go(a.cont, b.cont, d - 1)
        if isinstance(a, (Select, Offer, SelectN, OfferN)):
            return go(a.left, b.left, d - 1) and go(a.right, b.right, d - 1)
        if isinstance(a, (Throw, Catch)):
            return go(a.carried, b.carried, d - 1) and go(a.cont, b.cont, d - 1)
        return False

    return go(u1, u2, depth)


# --------------------------------------------------------------------------
# pretty printing


_DISPLAY_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def display_name(index: int) -> str:
    """0 -> a, 1 -> b, ..., 26 -> a1, 27 -> b1, ..."""
    letter = _DISPLAY_LETTERS[index % 26]
    round_ = index // 26
    return letter if round_ == 0 else f"{letter}{round_}"


class _Namer:
    """Assigns display letters to inference variables by first occurrence."""

    def __init__(self) -> None:
        self.session: dict[int, str] = {}
        self.value: dict[int, str] = {}
        self.count = 0

    def session_name(self, uid: int) -> str:
        if uid not in self.session:
            self.session[uid] = display_name(self.count)
            self.count += 1
        return self.session[uid]

    def value_name(self, vid: int) -> str:
        if vid not in self.value:
            self.value[vid] = display_name(self.count)
            self.count += 1
        return self.value[vid]


def format_level(level: int, atom: bool = False) -> str:
    """Peano spelling: 0 -> Z, 1 -> (S Z) in argument position."""
    if level == 0:
        return "Z"
    inner = "S " + format_level(level - 1, atom=True)
    return f"({inner})" if atom else inner


def format_value_type(v: ValueType, namer: _Namer | None = None) -> str:
    if isinstance(v, IntT):
        return "Int"
    if isinstance(v, BoolT):
        return "Bool"
    if isinstance(v, StrT):
        return "String"
    if isinstance(v, UnitT):
        return "Unit"
    if isinstance(v, ListT):
        return f"[{format_value_type(v.elem, namer)}]"
    if isinstance(v, TaggedT):
        return v.name
    if isinstance(v, ChanT):
        return f"Chan {_fmt(v.session, namer or _Namer(), True)}"
    if isinstance(v, VVar):
        return (namer or _Namer()).value_name(v.vid)
    raise NotGround(f"cannot format value type {v!r}")


def _fmt(u: SessionType, namer: _Namer, atom: bool) -> str:
    def wrap(s: str) -> str:
        return f"({s})" if atom else s

    if isinstance(u, End):
        return "End"
    if isinstance(u, Bot):
        return "Bot"
    if isinstance(u, Close):
        return "Close"
    if isinstance(u, UVar):
        return namer.session_name(u.uid)
    if isinstance(u, Var):
        return wrap(f"Var {format_level(u.level, atom=True)}")
    if isinstance(u, Rec):
        return wrap(
            f"Rec {format_level(u.level, atom=True)} {_fmt(u.body, namer, True)}"
        )
    if isinstance(u, Send):
        return wrap(f"Send {_fmt_value_atom(u.value, namer)} {_fmt(u.cont, namer, True)}")
    if isinstance(u, Recv):
        return wrap(f"Recv {_fmt_value_atom(u.value, namer)} {_fmt(u.cont, namer, True)}")
    if isinstance(u, (Select, Offer, SelectN, OfferN)):
        name = type(u).__name__
        return wrap(f"{name} {_fmt(u.left, namer, True)} {_fmt(u.right, namer, True)}")
    if isinstance(u, Throw):
        return wrap(f"Throw {_fmt(u.carried, namer, True)} {_fmt(u.cont, namer, True)}")
    if isinstance(u, Catch):
        return wrap(f"Catch {_fmt(u.carried, namer, True)} {_fmt(u.cont, namer, True)}")
    raise NotGround(f"cannot format {u!r}")


def _fmt_value_atom(v: ValueType, namer: _Namer) -> str:
    s = format_value_type(v, namer)
    if isinstance(v, ChanT):
        return f"({s})"
    return s


def format_type(u: SessionType, namer: _Namer | None = None) -> str:
    """Constructor-spelled rendering, e.g. ``Send Int (Select (Recv Int End) ...)``."""
    return _fmt(u, namer or _Namer(), atom=False)


def format_row(row: EnvRow, namer: _Namer | None = None, tail_name: str = "ss") -> str:
    namer = namer or _Namer()
    head = "Nil" if row.tail is None else tail_name
    parts = [head] + [_fmt(e, namer, atom=False) for e in row.entries]
    return " :> ".join(parts)

"""Surface syntax for the protocol DSL: AST, parser, and printers.

A program is a sequence of declarations:

    data R2yz(String);
    service echo : Send String (Recv String Close);
    session main() { c <- new; ... }

Session bodies are statement lists over the communication primitives.
This module also parses and prints the session-type notation itself
(``Send Int (Select (Recv Int End) (Recv Bool End))``, rows written
``ss :> u0 :> u1``), which the tests and the CLI expectation files use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
)


class ParseError(Exception):
    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        detail = f", found {found}" if found else ""
        super().__init__(f"{line}:{column}: expected {expected}{detail}")


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Pos:
    line: int
    col: int


NOPOS = Pos(0, 0)


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class IntLit(Expr):
    value: int
    pos: Pos = NOPOS


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    pos: Pos = NOPOS


@dataclass(frozen=True)
class StrLit(Expr):
    value: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class UnitLit(Expr):
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ListLit(Expr):
    items: tuple[Expr, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class VarRef(Expr):
    name: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # "+", "-", "<", "=="
    left: Expr
    right: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True)
class IfExpr(Expr):
    cond: Expr
    then: Expr
    els: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True)
class CtorApp(Expr):
    tag: str
    args: tuple[Expr, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class Proj(Expr):
    """``Tag.i(e)``: checked field access on a tagged value."""

    tag: str
    index: int
    arg: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True)
class Stmt:
    pass


@dataclass(frozen=True)
class NewStmt(Stmt):
    bind: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class SendStmt(Stmt):
    chan: str
    value: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True)
class RecvStmt(Stmt):
    bind: str
    chan: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class SelectStmt(Stmt):
    chan: str
    which: int  # 1 or 2
    pos: Pos = NOPOS


@dataclass(frozen=True)
class OfferStmt(Stmt):
    chan: str
    left: tuple[Stmt, ...]
    right: tuple[Stmt, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class SelectNStmt(Stmt):
    chan: str
    which: int
    pos: Pos = NOPOS


@dataclass(frozen=True)
class OfferNStmt(Stmt):
    chan: str
    left: tuple[Stmt, ...]
    right: tuple[Stmt, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ThrowStmt(Stmt):
    chan: str
    arg: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class CatchStmt(Stmt):
    bind: str
    chan: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Expr, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ForkStmt(Stmt):
    call: Call | None
    body: tuple[Stmt, ...] | None
    pos: Pos = NOPOS


@dataclass(frozen=True)
class IoStmt(Stmt):
    action: str  # "print" or "readline"
    arg: Expr | None
    pos: Pos = NOPOS


@dataclass(frozen=True)
class UnwindStmt(Stmt):
    level: int
    chan: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class RecurStmt(Stmt):
    session: str
    chan: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class CloseStmt(Stmt):
    chan: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ConnectStmt(Stmt):
    bind: str
    service: str
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ReturnStmt(Stmt):
    value: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True)
class Param:
    name: str
    value_type: ValueType | None  # None marks a channel parameter
    pos: Pos = NOPOS

    @property
    def is_channel(self) -> bool:
        return self.value_type is None


@dataclass(frozen=True)
class DataDecl:
    name: str
    payload: tuple[ValueType, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True)
class ServiceDecl:
    name: str
    session_type: SessionType
    pos: Pos = NOPOS


@dataclass(frozen=True)
class SessionDecl:
    name: str
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]
    pos: Pos = NOPOS

    @property
    def channel_params(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.is_channel)


@dataclass
class Program:
    data_decls: dict[str, DataDecl] = field(default_factory=dict)
    services: dict[str, ServiceDecl] = field(default_factory=dict)
    sessions: dict[str, SessionDecl] = field(default_factory=dict)

    @property
    def entry(self) -> str | None:
        return "main" if "main" in self.sessions else None


# --------------------------------------------------------------------------
# tokenizer


_PUNCTS = ["<-", "==", ":>", "(", ")", "{", "}", "[", "]", ",", ";", ":", "+", "-", "<", "."]


@dataclass(frozen=True)
class _Tok:
    kind: str  # NAME, NAT, STRING, PUNCT, EOF
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            buf = []
            while i < n and text[i] != '"':
                c = text[i]
                if c == "\\" and i + 1 < n:
                    nxt = text[i + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
                    i += 2
                    col += 2
                    continue
                if c == "\n":
                    raise ParseError(start_line, start_col, "closing quote")
                buf.append(c)
                i += 1
                col += 1
            if i >= n:
                raise ParseError(start_line, start_col, "closing quote")
            i += 1
            col += 1
            toks.append(_Tok("STRING", "".join(buf), start_line, start_col))
            continue
        if ch.isdigit():
            start_col = col
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("NAT", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            start_col = col
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("NAME", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        matched = None
        for p in _PUNCTS:
            if text.startswith(p, i):
                matched = p
                break
        if matched is None:
            raise ParseError(line, col, "a token", repr(ch))
        toks.append(_Tok("PUNCT", matched, line, col))
        i += len(matched)
        col += len(matched)
    toks.append(_Tok("EOF", "", line, col))
    return toks


# --------------------------------------------------------------------------
# shared parser machinery


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, value: str) -> bool:
        t = self.peek()
        return t.kind in ("NAME", "PUNCT") and t.value == value

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> _Tok:
        t = self.peek()
        if not self.at(value):
            raise ParseError(t.line, t.col, repr(value), self._describe(t))
        return self.next()

    def expect_name(self, what: str = "a name") -> _Tok:
        t = self.peek()
        if t.kind != "NAME":
            raise ParseError(t.line, t.col, what, self._describe(t))
        return self.next()

    def expect_nat(self) -> int:
        t = self.peek()
        if t.kind != "NAT":
            raise ParseError(t.line, t.col, "a number", self._describe(t))
        self.next()
        return int(t.value)

    @staticmethod
    def _describe(t: _Tok) -> str:
        return "end of input" if t.kind == "EOF" else repr(t.value)

    def pos(self) -> Pos:
        t = self.peek()
        return Pos(t.line, t.col)

    def fail(self, expected: str):
        t = self.peek()
        raise ParseError(t.line, t.col, expected, self._describe(t))


# --------------------------------------------------------------------------
# type notation


_SESSION_HEADS = {
    "Send",
    "Recv",
    "Select",
    "Offer",
    "SelectN",
    "OfferN",
    "Throw",
    "Catch",
    "End",
    "Bot",
    "Close",
    "Rec",
    "Var",
}

_VALUE_HEADS = {"Int", "Bool", "String", "Str", "Unit"}


class _TypeNamer:
    """Maps display-variable names (a, b, ...) back to numbered variables."""

    def __init__(self) -> None:
        self.names: dict[str, tuple[str, int]] = {}
        self.count = 0

    def lookup(self, name: str, kind: str, tok: _Tok) -> int:
        if name in self.names:
            seen_kind, idx = self.names[name]
            if seen_kind != kind:
                raise ParseError(
                    tok.line, tok.col, f"a {kind} variable", f"{name} (already used otherwise)"
                )
            return idx
        idx = self.count
        self.count += 1
        self.names[name] = (kind, idx)
        return idx


def _parse_level(p: _Parser) -> int:
    if p.accept("Z"):
        return 0
    if p.accept("S"):
        return 1 + _parse_level_atom(p)
    if p.accept("("):
        lvl = _parse_level(p)
        p.expect(")")
        return lvl
    p.fail("a level (Z, S ..., or parentheses)")


def _parse_level_atom(p: _Parser) -> int:
    if p.accept("Z"):
        return 0
    if p.accept("("):
        lvl = _parse_level(p)
        p.expect(")")
        return lvl
    p.fail("a level atom (Z or parentheses)")


def _parse_value_type(p: _Parser, namer: _TypeNamer) -> ValueType:
    t = p.peek()
    if p.accept("Int"):
        return INT
    if p.accept("Bool"):
        return BOOL
    if p.accept("String") or p.accept("Str"):
        return STR
    if p.accept("Unit"):
        return UNIT
    if p.accept("["):
        elem = _parse_value_type(p, namer)
        p.expect("]")
        return ListT(elem)
    if p.accept("("):
        v = _parse_value_type(p, namer)
        p.expect(")")
        return v
    if t.kind == "NAME":
        p.next()
        if t.value[0].isupper():
            return TaggedT(t.value)
        return VVar(namer.lookup(t.value, "value", t))
    p.fail("a value type")


def _parse_session_type(p: _Parser, namer: _TypeNamer) -> SessionType:
    t = p.peek()
    if t.kind != "NAME" and not p.at("("):
        p.fail("a session type")
    if p.accept("("):
        u = _parse_session_type(p, namer)
        p.expect(")")
        return u
    head = t.value
    if head == "End":
        p.next()
        return END
    if head == "Bot":
        p.next()
        return BOT
    if head == "Close":
        p.next()
        return CLOSE
    if head in ("Send", "Recv"):
        p.next()
        v = _parse_value_type(p, namer)
        cont = _parse_session_atom(p, namer)
        return (Send if head == "Send" else Recv)(v, cont)
    if head in ("Select", "Offer", "SelectN", "OfferN", "Throw", "Catch"):
        p.next()
        a = _parse_session_atom(p, namer)
        b = _parse_session_atom(p, namer)
        ctor = {
            "Select": Select,
            "Offer": Offer,
            "SelectN": SelectN,
            "OfferN": OfferN,
            "Throw": Throw,
            "Catch": Catch,
        }[head]
        return ctor(a, b)
    if head == "Rec":
        p.next()
        lvl = _parse_level_atom(p)
        body = _parse_session_atom(p, namer)
        return Rec(lvl, body)
    if head == "Var":
        p.next()
        return Var(_parse_level_atom(p))
    if head[0].islower():
        p.next()
        return UVar(namer.lookup(head, "session", t))
    p.fail("a session type")


def _parse_session_atom(p: _Parser, namer: _TypeNamer) -> SessionType:
    t = p.peek()
    if p.accept("("):
        u = _parse_session_type(p, namer)
        p.expect(")")
        return u
    if t.kind == "NAME" and t.value in ("End", "Bot", "Close"):
        return _parse_session_type(p, namer)
    if t.kind == "NAME" and t.value[0].islower():
        p.next()
        return UVar(namer.lookup(t.value, "session", t))
    p.fail("an atomic session type")


def parse_type(text: str, namer: "_TypeNamer | None" = None) -> SessionType:
    p = _Parser(text)
    u = _parse_session_type(p, namer if namer is not None else _TypeNamer())
    t = p.peek()
    if t.kind != "EOF":
        raise ParseError(t.line, t.col, "end of input", repr(t.value))
    return u


def _parse_row(p: _Parser, namer: _TypeNamer) -> EnvRow:
    t = p.peek()
    tail: RowVar | None
    if p.accept("Nil"):
        tail = None
    elif t.kind == "NAME" and t.value[0].islower():
        p.next()
        tail = RowVar(namer.lookup(t.value, "row", t))
    else:
        p.fail("a row (Nil or a tail name)")
    entries = []
    while p.accept(":>"):
        entries.append(_parse_session_type(p, namer))
    return EnvRow(tail, tuple(entries))


def parse_row(text: str, namer: "_TypeNamer | None" = None) -> EnvRow:
    p = _Parser(text)
    row = _parse_row(p, namer if namer is not None else _TypeNamer())
    t = p.peek()
    if t.kind != "EOF":
        raise ParseError(t.line, t.col, "end of input", repr(t.value))
    return row


def shared_namer() -> "_TypeNamer":
    """A name table to pass to several ``parse_type``/``parse_row`` calls so
    that the same display variable denotes the same unknown across them."""
    return _TypeNamer()


# --------------------------------------------------------------------------
# program parser


_STMT_KEYWORDS = {
    "send",
    "sel1",
    "sel2",
    "offer",
    "sel1N",
    "sel2N",
    "offerN",
    "throw",
    "fork",
    "io",
    "unwind",
    "recur1",
    "close",
    "return",
}

_BIND_KEYWORDS = {"new", "recv", "catch", "connect"}


def parse_program(text: str) -> Program:
    p = _Parser(text)
    prog = Program()
    while p.peek().kind != "EOF":
        t = p.peek()
        if p.accept("data"):
            decl = _parse_data_decl(p, Pos(t.line, t.col))
            if decl.name in prog.data_decls:
                raise ParseError(t.line, t.col, f"a fresh tag name (duplicate {decl.name})")
            prog.data_decls[decl.name] = decl
        elif p.accept("service"):
            decl = _parse_service_decl(p, Pos(t.line, t.col))
            if decl.name in prog.services:
                raise ParseError(t.line, t.col, f"a fresh service name (duplicate {decl.name})")
            prog.services[decl.name] = decl
        elif p.accept("session"):
            decl = _parse_session_decl(p, Pos(t.line, t.col))
            if decl.name in prog.sessions:
                raise ParseError(t.line, t.col, f"a fresh session name (duplicate {decl.name})")
            prog.sessions[decl.name] = decl
        else:
            p.fail("a declaration (data, service, or session)")
    return _resolve_tags(prog)


def _parse_data_decl(p: _Parser, pos: Pos) -> DataDecl:
    name = p.expect_name("a tag name").value
    payload: list[ValueType] = []
    if p.accept("("):
        namer = _TypeNamer()
        payload.append(_parse_value_type(p, namer))
        while p.accept(","):
            payload.append(_parse_value_type(p, namer))
        p.expect(")")
    p.expect(";")
    return DataDecl(name, tuple(payload), pos)


def _parse_service_decl(p: _Parser, pos: Pos) -> ServiceDecl:
    name = p.expect_name("a service name").value
    p.expect(":")
    st = _parse_session_type(p, _TypeNamer())
    p.expect(";")
    return ServiceDecl(name, st, pos)


def _parse_session_decl(p: _Parser, pos: Pos) -> SessionDecl:
    name = p.expect_name("a session name").value
    p.expect("(")
    params: list[Param] = []
    if not p.at(")"):
        params.append(_parse_param(p))
        while p.accept(","):
            params.append(_parse_param(p))
    p.expect(")")
    body = _parse_block(p)
    return SessionDecl(name, tuple(params), body, pos)


def _parse_param(p: _Parser) -> Param:
    t = p.peek()
    name = p.expect_name("a parameter name").value
    if p.accept(":"):
        vt = _parse_value_type(p, _TypeNamer())
        return Param(name, vt, Pos(t.line, t.col))
    return Param(name, None, Pos(t.line, t.col))


def _parse_block(p: _Parser) -> tuple[Stmt, ...]:
    p.expect("{")
    stmts: list[Stmt] = []
    while not p.at("}"):
        stmts.append(_parse_stmt(p))
    p.expect("}")
    return tuple(stmts)


def _parse_stmt(p: _Parser) -> Stmt:
    t = p.peek()
    pos = Pos(t.line, t.col)
    if t.kind == "NAME" and t.value not in _STMT_KEYWORDS:
        bind = p.expect_name().value
        p.expect("<-")
        k = p.peek()
        if p.accept("new"):
            stmt: Stmt = NewStmt(bind, pos)
        elif p.accept("recv"):
            stmt = RecvStmt(bind, p.expect_name("a channel name").value, pos)
        elif p.accept("catch"):
            stmt = CatchStmt(bind, p.expect_name("a channel name").value, pos)
        elif p.accept("connect"):
            stmt = ConnectStmt(bind, p.expect_name("a service name").value, pos)
        else:
            raise ParseError(k.line, k.col, "new, recv, catch, or connect", _Parser._describe(k))
        p.expect(";")
        return stmt
    if p.accept("send"):
        chan = p.expect_name("a channel name").value
        value = _parse_expr(p)
        p.expect(";")
        return SendStmt(chan, value, pos)
    if p.accept("sel1"):
        stmt = SelectStmt(p.expect_name("a channel name").value, 1, pos)
        p.expect(";")
        return stmt
    if p.accept("sel2"):
        stmt = SelectStmt(p.expect_name("a channel name").value, 2, pos)
        p.expect(";")
        return stmt
    if p.accept("sel1N"):
        stmt = SelectNStmt(p.expect_name("a channel name").value, 1, pos)
        p.expect(";")
        return stmt
    if p.accept("sel2N"):
        stmt = SelectNStmt(p.expect_name("a channel name").value, 2, pos)
        p.expect(";")
        return stmt
    if p.accept("offer"):
        chan = p.expect_name("a channel name").value
        left = _parse_block(p)
        right = _parse_block(p)
        p.expect(";")
        return OfferStmt(chan, left, right, pos)
    if p.accept("offerN"):
        chan = p.expect_name("a channel name").value
        left = _parse_block(p)
        right = _parse_block(p)
        p.expect(";")
        return OfferNStmt(chan, left, right, pos)
    if p.accept("throw"):
        chan = p.expect_name("a channel name").value
        arg = p.expect_name("a channel name").value
        p.expect(";")
        return ThrowStmt(chan, arg, pos)
    if p.accept("fork"):
        if p.at("{"):
            body = _parse_block(p)
            p.expect(";")
            return ForkStmt(None, body, pos)
        name_tok = p.expect_name("a session name or a block")
        p.expect("(")
        args: list[Expr] = []
        if not p.at(")"):
            args.append(_parse_expr(p))
            while p.accept(","):
                args.append(_parse_expr(p))
        p.expect(")")
        p.expect(";")
        return ForkStmt(Call(name_tok.value, tuple(args), pos), None, pos)
    if p.accept("io"):
        k = p.peek()
        if p.accept("print"):
            p.expect("(")
            arg = _parse_expr(p)
            p.expect(")")
            p.expect(";")
            return IoStmt("print", arg, pos)
        if p.accept("readline"):
            p.expect("(")
            p.expect(")")
            p.expect(";")
            return IoStmt("readline", None, pos)
        raise ParseError(k.line, k.col, "print or readline", _Parser._describe(k))
    if p.accept("unwind"):
        level = p.expect_nat()
        chan = p.expect_name("a channel name").value
        p.expect(";")
        return UnwindStmt(level, chan, pos)
    if p.accept("recur1"):
        session = p.expect_name("a session name").value
        chan = p.expect_name("a channel name").value
        p.expect(";")
        return RecurStmt(session, chan, pos)
    if p.accept("close"):
        stmt = CloseStmt(p.expect_name("a channel name").value, pos)
        p.expect(";")
        return stmt
    if p.accept("return"):
        value = _parse_expr(p)
        p.expect(";")
        return ReturnStmt(value, pos)
    p.fail("a statement")


def _parse_expr(p: _Parser) -> Expr:
    left = _parse_additive(p)
    t = p.peek()
    if p.accept("<"):
        return BinOp("<", left, _parse_additive(p), Pos(t.line, t.col))
    if p.accept("=="):
        return BinOp("==", left, _parse_additive(p), Pos(t.line, t.col))
    return left


def _parse_additive(p: _Parser) -> Expr:
    left = _parse_primary(p)
    while True:
        t = p.peek()
        if p.accept("+"):
            left = BinOp("+", left, _parse_primary(p), Pos(t.line, t.col))
        elif p.accept("-"):
            left = BinOp("-", left, _parse_primary(p), Pos(t.line, t.col))
        else:
            return left


def _parse_primary(p: _Parser) -> Expr:
    t = p.peek()
    pos = Pos(t.line, t.col)
    if t.kind == "NAT":
        p.next()
        return IntLit(int(t.value), pos)
    if t.kind == "STRING":
        p.next()
        return StrLit(t.value, pos)
    if p.accept("True"):
        return BoolLit(True, pos)
    if p.accept("False"):
        return BoolLit(False, pos)
    if p.accept("unit"):
        return UnitLit(pos)
    if p.accept("["):
        items: list[Expr] = []
        if not p.at("]"):
            items.append(_parse_expr(p))
            while p.accept(","):
                items.append(_parse_expr(p))
        p.expect("]")
        return ListLit(tuple(items), pos)
    if p.accept("if"):
        cond = _parse_expr(p)
        p.expect("then")
        then = _parse_expr(p)
        p.expect("else")
        els = _parse_expr(p)
        return IfExpr(cond, then, els, pos)
    if p.accept("("):
        e = _parse_expr(p)
        p.expect(")")
        return e
    if t.kind == "NAME":
        p.next()
        if p.at("."):
            p.next()
            index = p.expect_nat()
            p.expect("(")
            arg = _parse_expr(p)
            p.expect(")")
            return Proj(t.value, index, arg, pos)
        if p.at("("):
            p.next()
            args: list[Expr] = []
            if not p.at(")"):
                args.append(_parse_expr(p))
                while p.accept(","):
                    args.append(_parse_expr(p))
            p.expect(")")
            return CtorApp(t.value, tuple(args), pos)
        return VarRef(t.value, pos)
    p.fail("an expression")


def _resolve_tags(prog: Program) -> Program:
    """Turn bare references to declared nullary tags into constructor uses."""
    nullary = {n for n, d in prog.data_decls.items() if not d.payload}

    def fix_expr(e: Expr) -> Expr:
        if isinstance(e, VarRef) and e.name in nullary:
            return CtorApp(e.name, (), e.pos)
        if isinstance(e, ListLit):
            return ListLit(tuple(fix_expr(x) for x in e.items), e.pos)
        if isinstance(e, BinOp):
            return BinOp(e.op, fix_expr(e.left), fix_expr(e.right), e.pos)
        if isinstance(e, IfExpr):
            return IfExpr(fix_expr(e.cond), fix_expr(e.then), fix_expr(e.els), e.pos)
        if isinstance(e, CtorApp):
            return CtorApp(e.tag, tuple(fix_expr(x) for x in e.args), e.pos)
        if isinstance(e, Proj):
            return Proj(e.tag, e.index, fix_expr(e.arg), e.pos)
        return e

    def fix_stmt(s: Stmt) -> Stmt:
        if isinstance(s, SendStmt):
            return SendStmt(s.chan, fix_expr(s.value), s.pos)
        if isinstance(s, IoStmt) and s.arg is not None:
            return IoStmt(s.action, fix_expr(s.arg), s.pos)
        if isinstance(s, ReturnStmt):
            return ReturnStmt(fix_expr(s.value), s.pos)
        if isinstance(s, OfferStmt):
            return OfferStmt(s.chan, fix_body(s.left), fix_body(s.right), s.pos)
        if isinstance(s, OfferNStmt):
            return OfferNStmt(s.chan, fix_body(s.left), fix_body(s.right), s.pos)
        if isinstance(s, ForkStmt):
            if s.call is not None:
                call = Call(s.call.name, tuple(fix_expr(a) for a in s.call.args), s.call.pos)
                return ForkStmt(call, None, s.pos)
            return ForkStmt(None, fix_body(s.body), s.pos)
        return s

    def fix_body(body: tuple[Stmt, ...]) -> tuple[Stmt, ...]:
        return tuple(fix_stmt(s) for s in body)

    for name, decl in list(prog.sessions.items()):
        prog.sessions[name] = SessionDecl(decl.name, decl.params, fix_body(decl.body), decl.pos)
    return prog


# --------------------------------------------------------------------------
# printers


def format_expr(e: Expr, parent: str = "") -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "True" if e.value else "False"
    if isinstance(e, StrLit):
        escaped = e.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(e, UnitLit):
        return "unit"
    if isinstance(e, ListLit):
        return "[" + ", ".join(format_expr(x) for x in e.items) + "]"
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, BinOp):
        s = f"{format_expr(e.left, e.op)} {e.op} {format_expr(e.right, e.op)}"
        if parent and e.op in ("<", "=="):
            return f"({s})"
        if parent in ("+", "-") and e.op in ("+", "-"):
            return f"({s})"
        return s
    if isinstance(e, IfExpr):
        s = f"if {format_expr(e.cond)} then {format_expr(e.then)} else {format_expr(e.els)}"
        return f"({s})" if parent else s
    if isinstance(e, CtorApp):
        if not e.args:
            return e.tag
        return e.tag + "(" + ", ".join(format_expr(a) for a in e.args) + ")"
    if isinstance(e, Proj):
        return f"{e.tag}.{e.index}({format_expr(e.arg)})"
    raise ValueError(f"cannot format expression {e!r}")


def _format_stmt(s: Stmt, indent: int) -> str:
    pad = "  " * indent
    if isinstance(s, NewStmt):
        return f"{pad}{s.bind} <- new;"
    if isinstance(s, SendStmt):
        return f"{pad}send {s.chan} {format_expr(s.value, parent='arg')};"
    if isinstance(s, RecvStmt):
        return f"{pad}{s.bind} <- recv {s.chan};"
    if isinstance(s, SelectStmt):
        return f"{pad}sel{s.which} {s.chan};"
    if isinstance(s, SelectNStmt):
        return f"{pad}sel{s.which}N {s.chan};"
    if isinstance(s, (OfferStmt, OfferNStmt)):
        kw = "offer" if isinstance(s, OfferStmt) else "offerN"
        left = _format_body(s.left, indent + 1)
        right = _format_body(s.right, indent + 1)
        return f"{pad}{kw} {s.chan} {{\n{left}\n{pad}}} {{\n{right}\n{pad}}};"
    if isinstance(s, ThrowStmt):
        return f"{pad}throw {s.chan} {s.arg};"
    if isinstance(s, CatchStmt):
        return f"{pad}{s.bind} <- catch {s.chan};"
    if isinstance(s, ForkStmt):
        if s.call is not None:
            args = ", ".join(format_expr(a) for a in s.call.args)
            return f"{pad}fork {s.call.name}({args});"
        body = _format_body(s.body or (), indent + 1)
        return f"{pad}fork {{\n{body}\n{pad}}};"
    if isinstance(s, IoStmt):
        if s.action == "print":
            return f"{pad}io print({format_expr(s.arg)});"
        return f"{pad}io readline();"
    if isinstance(s, UnwindStmt):
        return f"{pad}unwind {s.level} {s.chan};"
    if isinstance(s, RecurStmt):
        return f"{pad}recur1 {s.session} {s.chan};"
    if isinstance(s, CloseStmt):
        return f"{pad}close {s.chan};"
    if isinstance(s, ConnectStmt):
        return f"{pad}{s.bind} <- connect {s.service};"
    if isinstance(s, ReturnStmt):
        return f"{pad}return {format_expr(s.value, parent='arg')};"
    raise ValueError(f"cannot format statement {s!r}")


def _format_body(body: tuple[Stmt, ...], indent: int) -> str:
    if not body:
        return "  " * indent
    return "\n".join(_format_stmt(s, indent) for s in body)


def format_program(prog: Program) -> str:
    from .core import format_type, format_value_type

    chunks: list[str] = []
    for decl in prog.data_decls.values():
        if decl.payload:
            payload = ", ".join(format_value_type(v) for v in decl.payload)
            chunks.append(f"data {decl.name}({payload});")
        else:
            chunks.append(f"data {decl.name};")
    for decl in prog.services.values():
        chunks.append(f"service {decl.name} : {format_type(decl.session_type)};")
    for decl in prog.sessions.values():
        params = ", ".join(
            p.name if p.is_channel else f"{p.name}: {format_value_type(p.value_type)}"
            for p in decl.params
        )
        body = _format_body(decl.body, 1)
        if decl.body:
            chunks.append(f"session {decl.name}({params}) {{\n{body}\n}}")
        else:
            chunks.append(f"session {decl.name}({params}) {{\n}}")
    return "\n\n".join(chunks) + "\n"

"""The source language: abstract syntax, concrete syntax, and small-step semantics.

Statements may carry cost labels (``_l0: x := 1``); crossing a labelled
statement emits its label, and nothing else observes labels.  The
concrete grammar is::

    program := "prog" stmt
    stmt    := atom { ";" stmt }              (right associative)
    atom    := "skip" | ident ":=" expr
             | "if" bexp "then" "{" stmt "}" "else" "{" stmt "}"
             | "while" bexp "do" "{" stmt "}"
             | label ":" atom | "{" stmt "}"
    expr    := term { "+" term }
    term    := ident | int | "(" expr ")"
    bexp    := expr "<" expr
    label   := "_l" digits
    int     := ["-"] digits

Whitespace is insignificant and ``#`` starts a line comment.  The
identifier ``cost`` is reserved for instrumentation and rejected unless
the parser is told to accept already-instrumented sources.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, NamedTuple

from .core import COST_VAR, FuelExhausted, Label, Store, Trace

# ---------------------------------------------------------------------------
# Abstract syntax


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Const:
    value: int


@dataclass(frozen=True, slots=True)
class Add:
    left: "Expr"
    right: "Expr"


Expr = Var | Const | Add


@dataclass(frozen=True, slots=True)
class Less:
    left: Expr
    right: Expr


BoolCond = Less


@dataclass(frozen=True, slots=True)
class Skip:
    pass


@dataclass(frozen=True, slots=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True, slots=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


@dataclass(frozen=True, slots=True)
class If:
    cond: BoolCond
    then: "Stmt"
    orelse: "Stmt"


@dataclass(frozen=True, slots=True)
class While:
    cond: BoolCond
    body: "Stmt"


@dataclass(frozen=True, slots=True)
class Labelled:
    label: Label
    body: "Stmt"


Stmt = Skip | Assign | Seq | If | While | Labelled


@dataclass(frozen=True, slots=True)
class Program:
    body: Stmt


def is_unlabelled(stmt: Stmt) -> bool:
    match stmt:
        case Labelled(_, _):
            return False
        case Seq(a, b):
            return is_unlabelled(a) and is_unlabelled(b)
        case If(_, a, b):
            return is_unlabelled(a) and is_unlabelled(b)
        case While(_, body):
            return is_unlabelled(body)
        case _:
            return True


def labels_of(stmt: Stmt) -> list[Label]:
    """All labels in the statement, in left-to-right traversal order."""
    out: list[Label] = []

    def walk(s: Stmt) -> None:
        match s:
            case Labelled(lab, body):
                out.append(lab)
                walk(body)
            case Seq(a, b) | If(_, a, b):
                walk(a)
                walk(b)
            case While(_, body):
                walk(body)
            case _:
                pass

    walk(stmt)
    return out


def _expr_vars(e: Expr, acc: set[str]) -> None:
    match e:
        case Var(x):
            acc.add(x)
        case Add(a, b):
            _expr_vars(a, acc)
            _expr_vars(b, acc)
        case _:
            pass


def variables_of(program: Program) -> set[str]:
    """Every identifier read or assigned anywhere in the program."""
    acc: set[str] = set()

    def walk(s: Stmt) -> None:
        match s:
            case Assign(x, e):
                acc.add(x)
                _expr_vars(e, acc)
            case Seq(a, b):
                walk(a)
                walk(b)
            case If(Less(l, r), a, b):
                _expr_vars(l, acc)
                _expr_vars(r, acc)
                walk(a)
                walk(b)
            case While(Less(l, r), body):
                _expr_vars(l, acc)
                _expr_vars(r, acc)
                walk(body)
            case Labelled(_, body):
                walk(body)
            case _:
                pass

    walk(program.body)
    return acc


def uses_identifier(program: Program, name: str) -> bool:
    return name in variables_of(program)


# ---------------------------------------------------------------------------
# Concrete syntax: parsing


class ImpSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class ReservedIdentifierError(ImpSyntaxError):
    """The reserved identifier ``cost`` appeared in a user program."""


_KEYWORDS = frozenset({"prog", "skip", "if", "then", "else", "while", "do"})
_LABEL_RE = re.compile(r"_l(\d+)\Z")
_TOKEN_RE = re.compile(
    r"""(?P<skip>\s+|\#[^\n]*)
      | (?P<int>-?\d+)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>:=|[;:+<{}()])
    """,
    re.VERBOSE,
)


class _Token(NamedTuple):
    kind: str  # "int" | "ident" | "label" | keyword / operator literal | "eof"
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos, line, bol = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ImpSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - bol + 1
            )
        col = pos - bol + 1
        if m.lastgroup == "int":
            tokens.append(_Token("int", m.group(), line, col))
        elif m.lastgroup == "word":
            word = m.group()
            if word in _KEYWORDS:
                tokens.append(_Token(word, word, line, col))
            elif _LABEL_RE.fullmatch(word):
                tokens.append(_Token("label", word, line, col))
            else:
                tokens.append(_Token("ident", word, line, col))
        elif m.lastgroup == "op":
            tokens.append(_Token(m.group(), m.group(), line, col))
        else:  # whitespace / comment: keep line accounting
            for ch_pos, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line += 1
                    bol = ch_pos + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - bol + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], allow_cost: bool):
        self.tokens = tokens
        self.pos = 0
        self.allow_cost = allow_cost

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            shown = tok.value or "end of input"
            raise ImpSyntaxError(f"expected {kind!r}, found {shown!r}", tok.line, tok.col)
        return self.next()

    def ident(self) -> str:
        tok = self.expect("ident")
        if tok.value == COST_VAR and not self.allow_cost:
            raise ReservedIdentifierError(
                f"{COST_VAR!r} is reserved for instrumentation", tok.line, tok.col
            )
        return tok.value

    def program(self) -> Program:
        self.expect("prog")
        body = self.stmt()
        self.expect("eof")
        return Program(body)

    def stmt(self) -> Stmt:
        first = self.atom()
        if self.peek().kind == ";":
            self.next()
            return Seq(first, self.stmt())
        return first

    def atom(self) -> Stmt:
        tok = self.peek()
        match tok.kind:
            case "skip":
                self.next()
                return Skip()
            case "{":
                self.next()
                inner = self.stmt()
                self.expect("}")
                return inner
            case "if":
                self.next()
                cond = self.bexp()
                self.expect("then")
                self.expect("{")
                then = self.stmt()
                self.expect("}")
                self.expect("else")
                self.expect("{")
                orelse = self.stmt()
                self.expect("}")
                return If(cond, then, orelse)
            case "while":
                self.next()
                cond = self.bexp()
                self.expect("do")
                self.expect("{")
                body = self.stmt()
                self.expect("}")
                return While(cond, body)
            case "label":
                self.next()
                self.expect(":")
                return Labelled(Label(int(tok.value[2:])), self.atom())
            case "ident":
                name = self.ident()
                self.expect(":=")
                return Assign(name, self.expr())
            case _:
                shown = tok.value or "end of input"
                raise ImpSyntaxError(f"expected a statement, found {shown!r}", tok.line, tok.col)

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "+":
            self.next()
            e = Add(e, self.term())
        return e

    def term(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Const(int(tok.value))
        if tok.kind == "ident":
            return Var(self.ident())
        if tok.kind == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        shown = tok.value or "end of input"
        raise ImpSyntaxError(f"expected an expression, found {shown!r}", tok.line, tok.col)

    def bexp(self) -> BoolCond:
        left = self.expr()
        self.expect("<")
        return Less(left, self.expr())


def parse_imp(text: str, *, allow_cost: bool = False) -> Program:
    """Parse a source program.

    ``allow_cost`` admits the reserved instrumentation variable, which is
    needed to run previously annotated output.
    """
    return _Parser(_tokenize(text), allow_cost).program()


# ---------------------------------------------------------------------------
# Concrete syntax: printing


def _expr_str(e: Expr) -> str:
    match e:
        case Var(x):
            return x
        case Const(n):
            return str(n)
        case Add(a, b):
            rhs = _expr_str(b)
            if isinstance(b, Add):  # "+" parses left associatively
                rhs = f"({rhs})"
            return f"{_expr_str(a)} + {rhs}"
    raise TypeError(f"not an expression: {e!r}")


def _bexp_str(b: BoolCond) -> str:
    return f"{_expr_str(b.left)} < {_expr_str(b.right)}"


def _stmt_str(s: Stmt) -> str:
    match s:
        case Skip():
            return "skip"
        case Assign(x, e):
            return f"{x} := {_expr_str(e)}"
        case Seq(a, b):
            lhs = _stmt_str(a)
            if isinstance(a, Seq):  # ";" parses right associatively
                lhs = f"{{ {lhs} }}"
            return f"{lhs}; {_stmt_str(b)}"
        case If(cond, then, orelse):
            return f"if {_bexp_str(cond)} then {{ {_stmt_str(then)} }} else {{ {_stmt_str(orelse)} }}"
        case While(cond, body):
            return f"while {_bexp_str(cond)} do {{ {_stmt_str(body)} }}"
        case Labelled(lab, body):
            inner = _stmt_str(body)
            if isinstance(body, Seq):  # a label binds to a single atom
                inner = f"{{ {inner} }}"
            return f"{lab}: {inner}"
    raise TypeError(f"not a statement: {s!r}")


def print_imp(program: Program) -> str:
    return f"prog {_stmt_str(program.body)}"


# ---------------------------------------------------------------------------
# Semantics


def eval_expr(e: Expr, store: Store) -> int:
    match e:
        case Const(n):
            return n
        case Var(x):
            return store.get(x)
        case Add(a, b):
            return eval_expr(a, store) + eval_expr(b, store)
    raise TypeError(f"not an expression: {e!r}")


def eval_bool(b: BoolCond, store: Store) -> bool:
    return eval_expr(b.left, store) < eval_expr(b.right, store)


class ImpConfig(NamedTuple):
    """A machine configuration: current statement, continuation, store.

    The continuation is the tuple of statements still to run; the empty
    tuple plays the role of the final ``halt`` continuation.
    """

    stmt: Stmt
    cont: tuple[Stmt, ...]
    store: Store


class TerminalConfiguration(Exception):
    """Attempted to step the terminal configuration (skip with empty continuation)."""


def is_terminal(config: ImpConfig) -> bool:
    return isinstance(config.stmt, Skip) and not config.cont


def step_imp(config: ImpConfig) -> tuple[ImpConfig, Label | None]:
    """One small step.  Exactly one rule applies to any non-terminal configuration."""
    stmt, cont, store = config
    match stmt:
        case Labelled(lab, body):
            return ImpConfig(body, cont, store), lab
        case Assign(x, e):
            return ImpConfig(Skip(), cont, store.set(x, eval_expr(e, store))), None
        case Seq(a, b):
            return ImpConfig(a, (b, *cont), store), None
        case If(cond, then, orelse):
            taken = then if eval_bool(cond, store) else orelse
            return ImpConfig(taken, cont, store), None
        case While(cond, body):
            if eval_bool(cond, store):
                return ImpConfig(body, (stmt, *cont), store), None
            return ImpConfig(Skip(), cont, store), None
        case Skip():
            if not cont:
                raise TerminalConfiguration("cannot step (skip, halt, s)")
            return ImpConfig(cont[0], cont[1:], store), None
    raise TypeError(f"not a statement: {stmt!r}")


def imp_steps(program: Program, store: Store) -> Iterator[tuple[ImpConfig, Label | None]]:
    """Yield every configuration after each step, until the terminal one."""
    config = ImpConfig(program.body, (), store)
    while not is_terminal(config):
        config, lab = step_imp(config)
        yield config, lab


def run_imp(program: Program, store: Store, fuel: int) -> tuple[Store, Trace]:
    """Run to termination, collecting the emitted labels in order."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    config = ImpConfig(program.body, (), store)
    trace: list[Label] = []
    steps = 0
    while not is_terminal(config):
        if steps >= fuel:
            raise FuelExhausted(f"no termination within {fuel} steps")
        config, lab = step_imp(config)
        if lab is not None:
            trace.append(lab)
        steps += 1
    return config.store, tuple(trace)


def erase_imp(program: Program) -> Program:
    """Strip every label; the identity on label-free programs."""

    def strip(s: Stmt) -> Stmt:
        match s:
            case Labelled(_, body):
                return strip(body)
            case Seq(a, b):
                return Seq(strip(a), strip(b))
            case If(cond, a, b):
                return If(cond, strip(a), strip(b))
            case While(cond, body):
                return While(cond, strip(body))
            case _:
                return s

    return Program(strip(program.body))

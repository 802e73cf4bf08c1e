"""Parser and evaluator for straight-line arithmetic programs.

The language is the small subset that math-task generations are written
in: one statement per line, each either an assignment ``ident = expr``,
a ``print(ident)``, or a ``#`` comment. Expressions are +,-,*,/ with
parentheses and unary minus over decimal literals and identifiers.
Execution is sequential with double-precision arithmetic and true
division; the first printed number is the program's answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import SelfCorrectError

MAX_LINES = 100
MAX_DEPTH = 32
DEFAULT_STEP_LIMIT = 10_000

_IDENT_FIRST = "abcdefghijklmnopqrstuvwxyz"
_IDENT_REST = _IDENT_FIRST + "0123456789_"


class InterpError(SelfCorrectError):
    pass


class ParseError(InterpError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ExecError(InterpError):
    pass


class UndefinedVariable(ExecError):
    def __init__(self, name: str):
        super().__init__(f"undefined variable {name!r}")
        self.name = name


class DivisionByZero(ExecError):
    def __init__(self) -> None:
        super().__init__("division by zero")


class StepLimitExceeded(ExecError):
    def __init__(self, limit: int):
        super().__init__(f"step limit {limit} exceeded")
        self.limit = limit


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


Expr = Num | Var | Neg | BinOp


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr
    comment: str | None = None


@dataclass(frozen=True)
class Print:
    name: str
    comment: str | None = None


@dataclass(frozen=True)
class Comment:
    text: str


Statement = Assign | Print | Comment


@dataclass(frozen=True)
class Program:
    lines: tuple[Statement, ...]

    def __len__(self) -> int:
        return len(self.lines)


@dataclass
class ExecResult:
    printed: list[float] = field(default_factory=list)
    env: dict[str, float] = field(default_factory=dict)
    steps_used: int = 0


# ---------------------------------------------------------------------------
# Lexer


def _lex(code: str, lineno: int) -> list[str]:
    toks: list[str] = []
    i, n = 0, len(code)
    while i < n:
        ch = code[i]
        if ch in " \t\r":
            i += 1
        elif ch in "+-*/()=":
            toks.append(ch)
            i += 1
        elif ch.isdigit() or (ch == "." and i + 1 < n and code[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (code[j].isdigit() or (code[j] == "." and not seen_dot)):
                if code[j] == ".":
                    # a trailing dot belongs to the next token, not the number
                    if j + 1 >= n or not code[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            toks.append(code[i:j])
            i = j
        elif ch in _IDENT_FIRST:
            j = i
            while j < n and code[j] in _IDENT_REST:
                j += 1
            toks.append(code[i:j])
            i = j
        else:
            raise ParseError(lineno, f"unexpected character {ch!r}")
    return toks


# ---------------------------------------------------------------------------
# Parser


class _LineParser:
    def __init__(self, toks: list[str], lineno: int):
        self.toks = toks
        self.pos = 0
        self.lineno = lineno

    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.lineno, "unexpected end of line")
        self.pos += 1
        return tok

    def expect(self, want: str) -> None:
        tok = self.next()
        if tok != want:
            raise ParseError(self.lineno, f"expected {want!r}, found {tok!r}")

    def expr(self, depth: int = 0) -> Expr:
        if depth > MAX_DEPTH:
            raise ParseError(self.lineno, "expression nesting too deep")
        node = self.term(depth)
        while self.peek() in ("+", "-"):
            op = self.next()
            node = BinOp(op, node, self.term(depth))
        return node

    def term(self, depth: int) -> Expr:
        node = self.factor(depth)
        while self.peek() in ("*", "/"):
            op = self.next()
            node = BinOp(op, node, self.factor(depth))
        return node

    def factor(self, depth: int) -> Expr:
        if depth > MAX_DEPTH:
            raise ParseError(self.lineno, "expression nesting too deep")
        tok = self.next()
        if tok == "-":
            return Neg(self.factor(depth + 1))
        if tok == "(":
            node = self.expr(depth + 1)
            self.expect(")")
            return node
        if tok[0].isdigit() or tok[0] == ".":
            try:
                return Num(float(tok))
            except ValueError:
                raise ParseError(self.lineno, f"bad number {tok!r}") from None
        if tok[0] in _IDENT_FIRST:
            return Var(tok)
        raise ParseError(self.lineno, f"unexpected token {tok!r}")


def _parse_line(code: str, comment: str | None, lineno: int) -> Statement:
    toks = _lex(code, lineno)
    p = _LineParser(toks, lineno)
    first = p.next()
    if first[0] not in _IDENT_FIRST:
        raise ParseError(lineno, f"statement must start with an identifier, found {first!r}")
    if first == "print" and p.peek() == "(":
        p.expect("(")
        name = p.next()
        if not name or name[0] not in _IDENT_FIRST:
            raise ParseError(lineno, f"print expects an identifier, found {name!r}")
        p.expect(")")
        if p.peek() is not None:
            raise ParseError(lineno, f"junk after print: {p.peek()!r}")
        return Print(name, comment)
    p.expect("=")
    expr = p.expr()
    if p.peek() is not None:
        raise ParseError(lineno, f"junk after expression: {p.peek()!r}")
    return Assign(first, expr, comment)


def parse(text: str) -> Program:
    """Parse program text (one statement per line, ``#`` comments)."""
    raw_lines = text.split("\n")
    if len(raw_lines) > MAX_LINES:
        raise ParseError(MAX_LINES + 1, f"program exceeds {MAX_LINES} lines")
    stmts: list[Statement] = []
    for i, raw in enumerate(raw_lines, start=1):
        comment: str | None = None
        code = raw
        if "#" in raw:
            code, _, comment = raw.partition("#")
        if not code.strip():
            if comment is not None:
                stmts.append(Comment(comment))
            continue
        stmts.append(_parse_line(code, comment, i))
    return Program(tuple(stmts))


# ---------------------------------------------------------------------------
# Pretty printer (round-trips to a structurally identical Program)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _render_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _render_expr(e: Expr, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(e, Num):
        return _render_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = _render_expr(e.operand, 3)
        s = f"-{inner}"
        return f"({s})" if parent_prec > 0 else s
    prec = _PREC[e.op]
    s = (
        f"{_render_expr(e.left, prec, False)}{e.op}"
        f"{_render_expr(e.right, prec, True)}"
    )
    if prec < parent_prec or (prec == parent_prec and right_side):
        return f"({s})"
    return s


def pretty(program: Program) -> str:
    """Render a Program as text that reparses to the same structure."""
    out: list[str] = []
    for stmt in program.lines:
        if isinstance(stmt, Comment):
            out.append(f"#{stmt.text}")
        elif isinstance(stmt, Print):
            line = f"print({stmt.name})"
            out.append(line + (f" #{stmt.comment}" if stmt.comment is not None else ""))
        else:
            line = f"{stmt.name}={_render_expr(stmt.expr)}"
            out.append(line + (f" #{stmt.comment}" if stmt.comment is not None else ""))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Evaluator


def _eval(e: Expr, env: dict[str, float], result: ExecResult, limit: int) -> float:
    result.steps_used += 1
    if result.steps_used > limit:
        raise StepLimitExceeded(limit)
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name not in env:
            raise UndefinedVariable(e.name)
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env, result, limit)
    left = _eval(e.left, env, result, limit)
    right = _eval(e.right, env, result, limit)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if right == 0.0:
        raise DivisionByZero()
    return left / right


def execute(program: Program, step_limit: int = DEFAULT_STEP_LIMIT) -> ExecResult:
    """Run a program sequentially; a pure function of (program, limit)."""
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    result = ExecResult()
    for stmt in program.lines:
        result.steps_used += 1
        if result.steps_used > step_limit:
            raise StepLimitExceeded(step_limit)
        if isinstance(stmt, Comment):
            continue
        if isinstance(stmt, Print):
            if stmt.name not in result.env:
                raise UndefinedVariable(stmt.name)
            result.printed.append(result.env[stmt.name])
        else:
            result.env[stmt.name] = _eval(stmt.expr, result.env, result, step_limit)
    return result


def check_answer(result: ExecResult, gold: float) -> bool:
    """True iff the first printed value matches gold within a tolerance
    that absorbs float division noise."""
    if not result.printed:
        return False
    return abs(result.printed[0] - gold) <= max(1e-6, 1e-6 * abs(gold))

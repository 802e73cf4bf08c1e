"""Shared domain types, tokenization, and corrector input formatting.

Everything downstream (value functions, pairing, the corrector model, the
training engine) moves sequences around as flat tuples of token strings.
Marker tokens delimit the corrector's conditioning context; user text is
escaped on ingestion so the markers can never be forged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

TokenSeq = tuple[str, ...]

# reserved marker tokens of the corrector input format
SC = "[SC]"
CURR = "[CURR]"
FEEDBACK = "[FEEDBACK]"
START = "[START]"
END = "[END]"
# line breaks survive tokenization as an explicit token so multi-line
# programs round-trip through TokenSeq
NEWLINE = "<nl>"

RESERVED_TOKENS = (SC, CURR, FEEDBACK, START, END, NEWLINE)

ORIGIN_BASE = "base-generator"
ORIGIN_EXPLORE = "corrector-exploration"
ORIGIN_EXTERNAL = "external"
ORIGINS = (ORIGIN_BASE, ORIGIN_EXPLORE, ORIGIN_EXTERNAL)

_SPLIT_CHARS = frozenset(".,?!()=")
_RESERVED_RE = re.compile(r"^\\*(\[(SC|CURR|FEEDBACK|START|END)\]|<nl>)$")


class SelfCorrectError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SelfCorrectError):
    """A run configuration or hyperparameter is invalid."""


def _split_chunk(chunk: str) -> list[str]:
    # '.' between two digits stays put so decimals like 6.0 survive
    out: list[str] = []
    buf: list[str] = []
    for i, ch in enumerate(chunk):
        if ch in _SPLIT_CHARS:
            if (
                ch == "."
                and 0 < i < len(chunk) - 1
                and chunk[i - 1].isdigit()
                and chunk[i + 1].isdigit()
            ):
                buf.append(ch)
                continue
            if buf:
                out.append("".join(buf))
                buf = []
            out.append(ch)
        else:
            buf.append(ch)
    if buf:
        out.append("".join(buf))
    return out


def _escape(token: str) -> str:
    if _RESERVED_RE.match(token):
        return "\\" + token
    return token


def tokenize(text: str) -> TokenSeq:
    """Split text into tokens: whitespace-separated, with the punctuation
    characters . , ? ! ( ) = broken out as standalone tokens.

    Line breaks become an explicit ``<nl>`` token (blank lines collapse).
    Reserved marker tokens occurring literally in the input are escaped
    with a backslash so they can never be forged from user text. No
    lowercasing is applied.
    """
    line_tokens: list[list[str]] = []
    for raw_line in text.split("\n"):
        toks: list[str] = []
        for chunk in raw_line.split():
            toks.extend(_escape(t) for t in _split_chunk(chunk))
        if toks:
            line_tokens.append(toks)
    out: list[str] = []
    for i, toks in enumerate(line_tokens):
        if i > 0:
            out.append(NEWLINE)
        out.extend(toks)
    return tuple(out)


def detokenize(tokens: TokenSeq) -> str:
    """Inverse-ish of :func:`tokenize`: join with spaces, render ``<nl>``
    as a line break, and drop one level of backslash escaping."""
    lines: list[list[str]] = [[]]
    for t in tokens:
        if t == NEWLINE:
            lines.append([])
            continue
        if t.startswith("\\") and _RESERVED_RE.match(t[1:]):
            t = t[1:]
        lines[-1].append(t)
    return "\n".join(" ".join(parts) for parts in lines)


_NO_SPACE_BEFORE = frozenset(".,?!)")
_NO_SPACE_AFTER = frozenset("(")


def render_text(tokens: TokenSeq) -> str:
    """Render tokens as natural text: like :func:`detokenize` but with
    punctuation re-attached (no space before . , ? ! or a closing paren,
    none after an opening paren). Used where prose goes back to a human
    or over a wire, not for round-tripping."""
    out: list[str] = []
    for t in tokens:
        if t == NEWLINE:
            out.append("\n")
            continue
        if t.startswith("\\") and _RESERVED_RE.match(t[1:]):
            t = t[1:]
        if out and not (t in _NO_SPACE_BEFORE or out[-1] in _NO_SPACE_AFTER or out[-1] == "\n"):
            out.append(" ")
        out.append(t)
    return "".join(out)


def format_corrector_input(
    x: TokenSeq, y: TokenSeq, feedback: str | None = None
) -> TokenSeq:
    """Build the marker-delimited context the corrector conditions on.

    Layout: ``[SC] x [CURR] y [START]``, with an optional
    ``[FEEDBACK] f`` segment before ``[START]``. Training targets are the
    tokens that follow ``[START]``, up to and including ``[END]``.
    """
    parts: list[str] = [SC, *x, CURR, *y]
    if feedback is not None:
        parts.append(FEEDBACK)
        parts.extend(tokenize(feedback))
    parts.append(START)
    return tuple(parts)


@dataclass(frozen=True)
class Candidate:
    """One scored generation: the atom of the datapool."""

    input_id: str
    output: TokenSeq
    value: float
    feedback: str | None = None
    origin: str = ORIGIN_BASE

    def __post_init__(self) -> None:
        object.__setattr__(self, "output", tuple(self.output))
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"candidate value {self.value!r} outside [0, 1]")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")


@dataclass(frozen=True)
class TaskInstance:
    """One task input: a prompt plus whatever ground truth the task's
    value function needs (a numeric answer, a constraint set, or nothing)."""

    input_id: str
    prompt: TokenSeq
    gold_answer: float | None = None
    constraints: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt", tuple(self.prompt))
        if self.constraints is not None:
            object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.gold_answer is not None and self.constraints is not None:
            raise ValueError("instance cannot carry both a gold answer and constraints")


@dataclass(frozen=True)
class Hyperparams:
    """Knobs of the self-corrective learning loop.

    ``alpha`` weights value improvement and ``beta`` proximity when
    sampling training pairs; ``n_samples`` is the per-input sample count
    for initialization and exploration; ``max_corrections`` bounds the
    inference trajectory; ``target_value`` enables early stopping.
    """

    alpha: float = 10.0
    beta: float = 1.0
    n_samples: int = 8
    iterations: int = 5
    learn_steps: int = 500
    batch_size: int = 16
    max_corrections: int = 3
    target_value: float | None = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.max_corrections < 0:
            raise ValueError("max_corrections must be >= 0")
        if self.target_value is not None and not 0.0 <= self.target_value <= 1.0:
            raise ValueError("target_value must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

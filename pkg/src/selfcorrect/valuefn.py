"""Scalar value functions and feedback functions for the three task
families: program execution correctness, lexical constraint coverage, and
attribute-scored text (detoxification-style).

All value functions share one contract: ``f(instance, output) -> value in
[0, 1]``, higher is better, deterministic. The attribute scorer's raw
"badness" score is inverted so the pairing machinery can treat every task
uniformly.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Protocol

import requests

from . import interp
from .core import SelfCorrectError, TaskInstance, TokenSeq, detokenize

_SUFFIXES = ("ing", "ed", "es", "s")
_MIN_STEM = 3


class ScorerUnavailable(SelfCorrectError):
    """A remote attribute scorer failed after exhausting retries."""


@dataclass
class AttributeScores:
    overall: float
    by_attribute: dict[str, float]


class AttributeScorer(Protocol):
    def score(self, text: TokenSeq) -> AttributeScores: ...


# ---------------------------------------------------------------------------
# Execution correctness (math program synthesis)


def execution_value(instance: TaskInstance, program_text: TokenSeq) -> float:
    """1.0 iff the program parses, runs, and prints the instance's gold
    answer; every failure mode maps to 0.0."""
    if instance.gold_answer is None:
        raise ValueError(f"instance {instance.input_id} carries no gold answer")
    try:
        program = interp.parse(detokenize(program_text))
        result = interp.execute(program)
    except interp.InterpError:
        return 0.0
    return 1.0 if interp.check_answer(result, instance.gold_answer) else 0.0


# ---------------------------------------------------------------------------
# Constraint coverage (lexically constrained generation)


def _variants(word: str) -> set[str]:
    w = word.lower()
    out = {w}
    for sfx in _SUFFIXES:
        if w.endswith(sfx) and len(w) - len(sfx) >= _MIN_STEM:
            out.add(w[: -len(sfx)])
    return out


def _matched(constraint: str, token_variants: set[str]) -> bool:
    return not _variants(constraint).isdisjoint(token_variants)


def _token_variants(text: TokenSeq) -> set[str]:
    out: set[str] = set()
    for tok in text:
        out |= _variants(tok)
    return out


def coverage_value(instance: TaskInstance, text: TokenSeq) -> float:
    """Fraction of the instance's constraint words present in the output.

    Matching is case-insensitive with light suffix stripping (ing/ed/es/s,
    stem of at least 3 chars), so "reading" satisfies the constraint
    "read". An empty constraint set counts as fully covered.
    """
    constraints = instance.constraints or ()
    if not constraints:
        return 1.0
    present = _token_variants(text)
    hits = sum(1 for c in constraints if _matched(c, present))
    return hits / len(constraints)


def missing_constraints(instance: TaskInstance, text: TokenSeq) -> list[str]:
    constraints = instance.constraints or ()
    present = _token_variants(text)
    return [c for c in constraints if not _matched(c, present)]


def constraint_feedback(instance: TaskInstance, text: TokenSeq) -> str | None:
    """Natural-language feedback naming every unmatched constraint word,
    in input order; None when coverage is complete."""
    if instance.constraints is None:
        raise ValueError(f"instance {instance.input_id} carries no constraints")
    missing = missing_constraints(instance, text)
    if not missing:
        return None
    return "adding constraint word: " + ", ".join(missing)


# ---------------------------------------------------------------------------
# Attribute-scored text (mock or remote scorer)


def scalar_value(scorer: AttributeScorer, text: TokenSeq) -> float:
    """Invert the scorer's overall badness so higher value = cleaner text."""
    v = 1.0 - scorer.score(text).overall
    return min(1.0, max(0.0, v))


def attribute_feedback(
    scorer: AttributeScorer, y: TokenSeq, y_ref: TokenSeq | None = None
) -> str | None:
    """Name the attribute the corrector should push down.

    With a reference correction ``y_ref`` (training), pick the attribute
    whose score drops the most from ``y`` to ``y_ref``; without one
    (inference), pick the attribute with the highest score on ``y``. Ties
    break toward the lexicographically first attribute name.
    """
    scores_y = scorer.score(y).by_attribute
    if not scores_y:
        return None
    if y_ref is None:
        key = {a: s for a, s in scores_y.items()}
    else:
        scores_ref = scorer.score(y_ref).by_attribute
        key = {a: scores_y[a] - scores_ref.get(a, 0.0) for a in scores_y}
    best = min(key, key=lambda a: (-key[a], a))
    return f"decrease toxicity in {best}"


class MockAttributeScorer:
    """Lexicon-backed stand-in for a hosted attribute-scoring API.

    Per attribute, the score is the largest weight among lexicon words
    present in the lowercased text (0 when none appear); the overall score
    is the max across attributes.
    """

    def __init__(self, lexicons: dict[str, dict[str, float]]):
        for attr, lex in lexicons.items():
            for word, weight in lex.items():
                if not 0.0 <= weight <= 1.0:
                    raise ValueError(f"weight {weight!r} for {attr}/{word} outside [0, 1]")
        self.lexicons = {a: dict(lex) for a, lex in lexicons.items()}

    def score(self, text: TokenSeq) -> AttributeScores:
        present = {t.lower() for t in text}
        by_attribute: dict[str, float] = {}
        for attr, lex in self.lexicons.items():
            weights = [w for word, w in lex.items() if word.lower() in present]
            by_attribute[attr] = max(weights) if weights else 0.0
        overall = max(by_attribute.values()) if by_attribute else 0.0
        return AttributeScores(overall=overall, by_attribute=by_attribute)


def load_lexicons(path: str) -> dict[str, dict[str, float]]:
    """Read scorer lexicons from a TOML file: one table per attribute,
    word = weight entries."""
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return {attr: {w: float(x) for w, x in lex.items()} for attr, lex in data.items()}


class RemoteAttributeScorer:
    """HTTP adapter for a hosted scorer.

    Wire contract: POST {"text": str} -> {"overall": num, "attributes":
    {name: num}}. Safe for concurrent calls; each call applies a timeout
    and bounded retry with exponential backoff.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 5.0,
        retries: int = 3,
        backoff: float = 0.25,
    ):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def score(self, text: TokenSeq) -> AttributeScores:
        payload = {"text": detokenize(text)}
        last_err: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"server error {resp.status_code}")
                resp.raise_for_status()
                body = resp.json()
                return AttributeScores(
                    overall=float(body["overall"]),
                    by_attribute={k: float(v) for k, v in body["attributes"].items()},
                )
            except (requests.RequestException, KeyError, TypeError, ValueError) as err:
                last_err = err
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise ScorerUnavailable(f"scorer at {self.url} failed: {last_err}")

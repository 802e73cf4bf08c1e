"""Value-improving pair formation and improvement/proximity-proportional
pair sampling.

A pair maps a hypothesis to a strictly higher-valued correction drawn
from the same input's candidate bucket. Training pairs are sampled in two
stages: a hypothesis uniformly among those with at least one correction,
then one of its corrections with probability proportional to
``exp(alpha * value_gain + beta * similarity)``, normalized over that
hypothesis's corrections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Candidate, SelfCorrectError, TokenSeq


class EmptyPairSet(SelfCorrectError):
    """No pair is available to sample from."""


@dataclass(frozen=True)
class ValueImprovingPair:
    input_id: str
    hypothesis: Candidate
    correction: Candidate

    @property
    def value_gain(self) -> float:
        return self.correction.value - self.hypothesis.value


_sim_cache: dict[tuple[TokenSeq, TokenSeq], float] = {}
_SIM_CACHE_MAX = 1_000_000


def _levenshtein(a: TokenSeq, b: TokenSeq) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[len(b)]


def similarity(y: TokenSeq, y2: TokenSeq) -> float:
    """Normalized token-level edit similarity in [0, 1]; 1 iff identical
    (two empty sequences count as identical)."""
    y, y2 = tuple(y), tuple(y2)
    if y == y2:
        return 1.0
    key = (y, y2) if y <= y2 else (y2, y)
    hit = _sim_cache.get(key)
    if hit is not None:
        return hit
    sim = 1.0 - _levenshtein(y, y2) / max(len(y), len(y2))
    if len(_sim_cache) >= _SIM_CACHE_MAX:
        _sim_cache.clear()
    _sim_cache[key] = sim
    return sim


def _dedupe(pool: Sequence[Candidate]) -> list[Candidate]:
    seen: set[tuple[str, TokenSeq]] = set()
    out: list[Candidate] = []
    for c in pool:
        key = (c.input_id, c.output)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def form_pairs(pool_x: Sequence[Candidate]) -> list[ValueImprovingPair]:
    """Every ordered pair of distinct pool members with strictly
    increasing value; duplicates (same input, same output text) are
    collapsed first."""
    pool = _dedupe(pool_x)
    ids = {c.input_id for c in pool}
    if len(ids) > 1:
        raise ValueError(f"pool mixes inputs: {sorted(ids)}")
    out: list[ValueImprovingPair] = []
    for hyp in pool:
        for corr in pool:
            if hyp.value < corr.value:
                out.append(ValueImprovingPair(hyp.input_id, hyp, corr))
    return out


def form_all_pairs(pool_x: Sequence[Candidate]) -> list[ValueImprovingPair]:
    """Ablation variant: every ordered pair of distinct outputs regardless
    of value (drops the value-improvement requirement)."""
    pool = _dedupe(pool_x)
    ids = {c.input_id for c in pool}
    if len(ids) > 1:
        raise ValueError(f"pool mixes inputs: {sorted(ids)}")
    out: list[ValueImprovingPair] = []
    for hyp in pool:
        for corr in pool:
            if hyp.output != corr.output:
                out.append(ValueImprovingPair(hyp.input_id, hyp, corr))
    return out


def pair_weight(pair: ValueImprovingPair, alpha: float, beta: float) -> float:
    """Unnormalized sampling weight exp(alpha * gain + beta * similarity)."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    sim = similarity(pair.hypothesis.output, pair.correction.output)
    return math.exp(alpha * pair.value_gain + beta * sim)


def group_by_hypothesis(
    pairs: Sequence[ValueImprovingPair],
) -> dict[Candidate, list[ValueImprovingPair]]:
    groups: dict[Candidate, list[ValueImprovingPair]] = {}
    for p in pairs:
        groups.setdefault(p.hypothesis, []).append(p)
    return groups


def sample_pair(
    pairs_by_hypothesis: Mapping[Candidate, Sequence[ValueImprovingPair]],
    alpha: float,
    beta: float,
    rng: np.random.Generator,
) -> ValueImprovingPair:
    """Two-stage draw: hypothesis uniform over those with corrections,
    then a correction with probability weight / Z(hypothesis)."""
    hyps = [h for h, ps in pairs_by_hypothesis.items() if ps]
    if not hyps:
        raise EmptyPairSet("no hypothesis has an available correction")
    hyp = hyps[int(rng.integers(len(hyps)))]
    pairs = pairs_by_hypothesis[hyp]
    if len(pairs) == 1:
        return pairs[0]
    weights = np.array([pair_weight(p, alpha, beta) for p in pairs])
    probs = weights / weights.sum()
    return pairs[int(rng.choice(len(pairs), p=probs))]

"""Synthetic desk-scale task suites.

Three kinds, one per value function: ``math-corrupt`` (templated
straight-line arithmetic programs whose gold answers come from actually
executing the gold program), ``constrained`` (keyword-coverage sentences),
and ``open-scored`` (sentences scored by a lexicon attribute scorer).
Each instance carries the gold output the scripted corruption generator
damages at a controlled rate, which is what gives the initial datapool a
usable spread of values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import interp, valuefn
from .backends import CorruptionSpec
from .core import ConfigError, TaskInstance, TokenSeq, detokenize, tokenize
from .engine import FeedbackFn, ValueFn

MATH_KIND = "math-corrupt"
CONSTRAINED_KIND = "constrained"
OPEN_KIND = "open-scored"
KINDS = (MATH_KIND, CONSTRAINED_KIND, OPEN_KIND)

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class SuiteSpec:
    kind: str
    train: int
    valid: int
    test: int
    seed: int
    rho: float = 0.3
    constraints_min: int = 3
    constraints_max: int = 5
    lexicon_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown suite kind {self.kind!r}")
        if min(self.train, self.valid, self.test) < 1:
            raise ConfigError("every split needs at least one instance")
        if not 1 <= self.constraints_min <= self.constraints_max:
            raise ConfigError("bad constraint count range")


@dataclass(frozen=True)
class SuiteItem:
    instance: TaskInstance
    gold_output: TokenSeq


# ---------------------------------------------------------------------------
# math-corrupt: templated arithmetic programs

# number pools are disjoint per template slot so positional n-gram context
# plus the prompt bag identifies which number belongs where
_POOL_A = tuple(str(n) for n in range(12, 20))
_POOL_B = tuple(str(n) for n in range(2, 10))
_POOL_C = tuple(str(n) for n in range(20, 28))


def _gen_math(n: int, rng: np.random.Generator, id_offset: int = 0) -> list[SuiteItem]:
    combos = [
        (t, a, b, c)
        for t in range(3)
        for a in _POOL_A
        for b in _POOL_B
        for c in _POOL_C
    ]
    order = rng.permutation(len(combos))
    if n > len(combos):
        raise ConfigError(f"math suite supports at most {len(combos)} distinct instances")
    items: list[SuiteItem] = []
    for rank in range(n):
        t, a, b, c = combos[int(order[rank])]
        # operators are space-separated so every number is its own token
        # (and therefore individually corruptible)
        if t == 0:
            prompt = f"add {a} then {b} then {c} ."
            gold = f"answer = {a} + {b} + {c}\nprint(answer)"
        elif t == 1:
            prompt = f"take {a} groups of {b} then add {c} ."
            gold = f"m = {a} * {b}\nanswer = m + {c}\nprint(answer)"
        else:
            b2 = _POOL_B[int(rng.integers(len(_POOL_B)))]
            prompt = f"start with {c} remove {b} then remove {b2} ."
            gold = f"b = {c} - {b} - {b2}\nprint(b)"
        answer = interp.execute(interp.parse(gold)).printed[0]
        instance = TaskInstance(
            input_id=f"math-{id_offset + rank:04d}",
            prompt=tokenize(prompt),
            gold_answer=answer,
        )
        items.append(SuiteItem(instance=instance, gold_output=tokenize(gold)))
    return items


def _math_confusion() -> dict[str, tuple[str, ...]]:
    confusion: dict[str, tuple[str, ...]] = {}
    for pool in (_POOL_A, _POOL_B, _POOL_C):
        for tok in pool:
            confusion[tok] = tuple(t for t in pool if t != tok)
    return confusion


# ---------------------------------------------------------------------------
# constrained: keyword-coverage sentences

# slot-typed word pools: each sentence position draws from its own pool so
# the sentence frame stays learnable from local context
_SUBJECTS = ("dog", "cat", "man", "woman", "boy", "girl")
_VERBS = ("read", "walk", "play", "jump", "sit", "stand")
_OBJECTS = ("book", "ball", "table", "paper", "bench", "park")

_SENTENCE_FRAMES = {
    3: "the {0} will {1} near the {2} .",
    4: "the {0} will {1} near the {2} with a {3} .",
    5: "the {0} will {1} near the {2} with a {3} and a {4} .",
}


def _gen_constrained(
    n: int, rng: np.random.Generator, cmin: int, cmax: int, id_offset: int = 0
) -> list[SuiteItem]:
    if cmax > 5:
        raise ConfigError("constrained templates support at most 5 constraints")
    items: list[SuiteItem] = []
    seen: set[tuple[str, ...]] = set()
    attempts = 0
    while len(items) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise ConfigError(
                f"cannot draw {n} distinct constraint sets in range [{cmin}, {cmax}]"
            )
        k = int(rng.integers(cmin, cmax + 1))
        subject = _SUBJECTS[int(rng.integers(len(_SUBJECTS)))]
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        objects = tuple(
            _OBJECTS[i] for i in rng.choice(len(_OBJECTS), size=k - 2, replace=False)
        )
        words = (subject, verb) + objects
        if words in seen:
            continue
        seen.add(words)
        rank = len(items)
        sentence = _SENTENCE_FRAMES[k].format(*words)
        instance = TaskInstance(
            input_id=f"con-{id_offset + rank:04d}",
            prompt=tokenize("use : " + " ".join(words)),
            constraints=words,
        )
        items.append(SuiteItem(instance=instance, gold_output=tokenize(sentence)))
    return items


# ---------------------------------------------------------------------------
# open-scored: attribute-scored sentences

_TOPICS = ("meeting", "game", "movie", "trip", "party", "visit")
_CLEAN_FIRST = ("calm", "quiet", "nice")
_CLEAN_SECOND = ("useful", "helpful", "fine")
_FLAGGED_FIRST = ("awful", "terrible")
_FLAGGED_SECOND = ("dreadful", "stupid")

DEFAULT_LEXICONS: dict[str, dict[str, float]] = {
    "negativity": {"awful": 0.8, "terrible": 0.7, "dreadful": 0.6},
    "rudeness": {"stupid": 0.8, "fool": 0.6},
}


def _gen_open(n: int, rng: np.random.Generator, id_offset: int = 0) -> list[SuiteItem]:
    items: list[SuiteItem] = []
    for rank in range(n):
        topic = _TOPICS[int(rng.integers(len(_TOPICS)))]
        adj1 = _CLEAN_FIRST[int(rng.integers(len(_CLEAN_FIRST)))]
        adj2 = _CLEAN_SECOND[int(rng.integers(len(_CLEAN_SECOND)))]
        sentence = f"the {topic} was {adj1} and {adj2} ."
        instance = TaskInstance(
            input_id=f"open-{id_offset + rank:04d}",
            prompt=tokenize(f"describe : the {topic}"),
        )
        items.append(SuiteItem(instance=instance, gold_output=tokenize(sentence)))
    return items


def _open_confusion() -> dict[str, tuple[str, ...]]:
    confusion: dict[str, tuple[str, ...]] = {}
    for tok in _CLEAN_FIRST:
        confusion[tok] = _FLAGGED_FIRST
    for tok in _CLEAN_SECOND:
        confusion[tok] = _FLAGGED_SECOND
    return confusion


# ---------------------------------------------------------------------------
# Assembly, persistence, and run wiring


def generate_suite(spec: SuiteSpec) -> dict[str, list[SuiteItem]]:
    """Deterministically generate disjoint train/valid/test splits."""
    rng = np.random.default_rng(spec.seed)
    total = spec.train + spec.valid + spec.test
    if spec.kind == MATH_KIND:
        items = _gen_math(total, rng)
    elif spec.kind == CONSTRAINED_KIND:
        items = _gen_constrained(total, rng, spec.constraints_min, spec.constraints_max)
    else:
        items = _gen_open(total, rng)
    return {
        "train": items[: spec.train],
        "valid": items[spec.train : spec.train + spec.valid],
        "test": items[spec.train + spec.valid :],
    }


def corruption_spec(kind: str, rho: float) -> CorruptionSpec:
    """The scripted generator's edit model for a suite kind."""
    if kind == MATH_KIND:
        return CorruptionSpec(rho=rho, ops=("substitute",), confusion=_math_confusion())
    if kind == CONSTRAINED_KIND:
        return CorruptionSpec(rho=rho, ops=("delete",))
    if kind == OPEN_KIND:
        return CorruptionSpec(rho=rho, ops=("substitute",), confusion=_open_confusion())
    raise ConfigError(f"unknown suite kind {kind!r}")


def task_functions(
    kind: str, lexicons: dict[str, dict[str, float]] | None = None
) -> tuple[ValueFn, FeedbackFn | None]:
    """The (value function, task feedback function) pair for a kind."""
    if kind == MATH_KIND:
        return valuefn.execution_value, None
    if kind == CONSTRAINED_KIND:
        return valuefn.coverage_value, valuefn.constraint_feedback
    if kind == OPEN_KIND:
        scorer = valuefn.MockAttributeScorer(lexicons or DEFAULT_LEXICONS)

        def scalar(instance: TaskInstance, output: TokenSeq) -> float:
            return valuefn.scalar_value(scorer, output)

        def attr_feedback(instance: TaskInstance, output: TokenSeq) -> str | None:
            return valuefn.attribute_feedback(scorer, output)

        return scalar, attr_feedback
    raise ConfigError(f"unknown suite kind {kind!r}")


def gold_map(items: Sequence[SuiteItem]) -> dict[TokenSeq, TokenSeq]:
    return {item.instance.prompt: item.gold_output for item in items}


def vocab_tokens(items: Sequence[SuiteItem], kind: str, rho: float) -> list[TokenSeq]:
    """Token sequences whose union defines the corrector vocab: gold
    outputs plus every token the corruption model can introduce."""
    spec = corruption_spec(kind, rho)
    seqs = [item.gold_output for item in items]
    extra = tuple(spec.confusion.keys()) + tuple(
        t for alts in spec.confusion.values() for t in alts
    ) + spec.insert_pool
    if extra:
        seqs.append(extra)
    return seqs


def _item_record(item: SuiteItem) -> dict:
    rec: dict[str, object] = {
        "input_id": item.instance.input_id,
        "prompt": detokenize(item.instance.prompt),
        "gold_output": detokenize(item.gold_output),
    }
    if item.instance.gold_answer is not None:
        rec["gold_answer"] = item.instance.gold_answer
    if item.instance.constraints is not None:
        rec["constraints"] = list(item.instance.constraints)
    return rec


def _item_from_record(rec: dict) -> SuiteItem:
    instance = TaskInstance(
        input_id=rec["input_id"],
        prompt=tokenize(rec["prompt"]),
        gold_answer=rec.get("gold_answer"),
        constraints=tuple(rec["constraints"]) if "constraints" in rec else None,
    )
    return SuiteItem(instance=instance, gold_output=tokenize(rec["gold_output"]))


def _lexicons_toml(lexicons: dict[str, dict[str, float]]) -> str:
    lines = []
    for attr in sorted(lexicons):
        lines.append(f"[{attr}]")
        for word in sorted(lexicons[attr]):
            lines.append(f'"{word}" = {lexicons[attr][word]!r}')
        lines.append("")
    return "\n".join(lines)


def save_suite(
    out_dir: str,
    spec: SuiteSpec,
    splits: dict[str, list[SuiteItem]],
    lexicons: dict[str, dict[str, float]] | None = None,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for split in SPLITS:
        path = os.path.join(out_dir, f"{split}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for item in splits[split]:
                fh.write(json.dumps(_item_record(item), sort_keys=True) + "\n")
    meta = {
        "kind": spec.kind,
        "seed": spec.seed,
        "rho": spec.rho,
        "sizes": {s: len(splits[s]) for s in SPLITS},
        "constraints_min": spec.constraints_min,
        "constraints_max": spec.constraints_max,
    }
    if spec.kind == OPEN_KIND:
        lexicons = lexicons or DEFAULT_LEXICONS
        lex_path = os.path.join(out_dir, "scorer_lexicons.toml")
        with open(lex_path, "w", encoding="utf-8") as fh:
            fh.write(_lexicons_toml(lexicons))
        meta["lexicons"] = "scorer_lexicons.toml"
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


@dataclass
class LoadedSuite:
    kind: str
    rho: float
    splits: dict[str, list[SuiteItem]]
    lexicons: dict[str, dict[str, float]] | None = None

    def instances(self, split: str) -> list[TaskInstance]:
        return [item.instance for item in self.splits[split]]

    def all_items(self) -> list[SuiteItem]:
        return [item for split in SPLITS for item in self.splits[split]]


def load_suite(suite_dir: str) -> LoadedSuite:
    meta_path = os.path.join(suite_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise ConfigError(f"no suite at {suite_dir} (missing meta.json)")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    splits: dict[str, list[SuiteItem]] = {}
    for split in SPLITS:
        path = os.path.join(suite_dir, f"{split}.jsonl")
        with open(path, encoding="utf-8") as fh:
            splits[split] = [_item_from_record(json.loads(line)) for line in fh if line.strip()]
    lexicons = None
    if meta.get("lexicons"):
        lexicons = valuefn.load_lexicons(os.path.join(suite_dir, meta["lexicons"]))
    return LoadedSuite(kind=meta["kind"], rho=meta["rho"], splits=splits, lexicons=lexicons)

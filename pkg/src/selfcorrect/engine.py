"""The self-corrective learning loop.

Orchestrates datapool initialization from a base generator, exploration
with the in-training corrector, value-improving pair formation,
improvement/proximity-proportional batch sampling, cross-entropy updates,
and trajectory inference with fixed-step or target-value stopping.
Ablation switches disable proportional sampling, value pairing, or
exploration for controlled comparisons.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import backends as _backends
from . import model as _model
from . import pairing as _pairing
from .core import (
    END,
    Candidate,
    ConfigError,
    Hyperparams,
    ORIGIN_BASE,
    ORIGIN_EXPLORE,
    ORIGIN_EXTERNAL,
    SelfCorrectError,
    TaskInstance,
    TokenSeq,
    format_corrector_input,
)

ValueFn = Callable[[TaskInstance, TokenSeq], float]
FeedbackFn = Callable[[TaskInstance, TokenSeq], "str | None"]

CORRECT_EPS = 1e-9

STOP_FIXED = "fixed_T"
STOP_TARGET = "target_value_reached"

METRICS_FIELDS = (
    "iteration",
    "pool_size",
    "pair_count",
    "mean_pool_value",
    "eval_value",
    "eval_correct_frac",
)


class NoPairsAvailable(SelfCorrectError):
    """The initialized datapool admits no training pair at any input."""


@dataclass
class AblationFlags:
    no_proportional: bool = False
    no_value_pairing: bool = False
    no_exploration: bool = False


@dataclass
class DecodeModes:
    init: str = "temperature:1.0"
    explore: str = "temperature:1.0"
    infer: str = "greedy"


@dataclass
class RunConfig:
    hp: Hyperparams = field(default_factory=Hyperparams)
    decode: DecodeModes = field(default_factory=DecodeModes)
    ablations: AblationFlags = field(default_factory=AblationFlags)
    explore_hypotheses: int = 2
    max_len: int = 48
    workers: int = 1


# ---------------------------------------------------------------------------
# Datapool


class Datapool:
    """Per-input buckets of deduplicated candidates.

    Values are immutable once recorded. Merges are order-normalized
    (sorted by input id and output) before deduplication so results do
    not depend on generation order within a batch of new candidates.
    """

    def __init__(self) -> None:
        self._buckets: dict[str, list[Candidate]] = {}
        self._seen: set[tuple[str, TokenSeq]] = set()
        self._iteration_added: dict[tuple[str, TokenSeq], int] = {}

    def merge(self, candidates: Iterable[Candidate], iteration: int) -> int:
        added = 0
        for c in sorted(candidates, key=lambda c: (c.input_id, c.output)):
            key = (c.input_id, c.output)
            if key in self._seen:
                continue
            self._seen.add(key)
            self._buckets.setdefault(c.input_id, []).append(c)
            self._iteration_added[key] = iteration
            added += 1
        return added

    def bucket(self, input_id: str) -> list[Candidate]:
        return list(self._buckets.get(input_id, ()))

    def input_ids(self) -> list[str]:
        return sorted(self._buckets)

    def iteration_added(self, candidate: Candidate) -> int:
        return self._iteration_added[(candidate.input_id, candidate.output)]

    def __len__(self) -> int:
        return len(self._seen)

    def mean_value(self) -> float:
        if not self._seen:
            return 0.0
        total = sum(c.value for b in self._buckets.values() for c in b)
        return total / len(self._seen)


def save_datapool(pool: Datapool, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for input_id in pool.input_ids():
            for c in pool.bucket(input_id):
                record = {
                    "input_id": c.input_id,
                    "output": list(c.output),
                    "value": c.value,
                    "feedback": c.feedback,
                    "origin": c.origin,
                    "iteration": pool.iteration_added(c),
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_datapool(path: str) -> Datapool:
    pool = Datapool()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            candidate = Candidate(
                input_id=rec["input_id"],
                output=tuple(rec["output"]),
                value=rec["value"],
                feedback=rec["feedback"],
                origin=rec["origin"],
            )
            pool.merge([candidate], iteration=rec["iteration"])
    return pool


# ---------------------------------------------------------------------------
# Initialization (datapool from the base generator) and exploration


def _annotate(
    instance: TaskInstance,
    outputs: Sequence[TokenSeq],
    origin: str,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
) -> list[Candidate]:
    out = []
    for seq in outputs:
        feedback = feedback_fn(instance, seq) if feedback_fn is not None else None
        out.append(
            Candidate(
                input_id=instance.input_id,
                output=seq,
                value=value_fn(instance, seq),
                feedback=feedback,
                origin=origin,
            )
        )
    return out


def init_datapool(
    suite: Sequence[TaskInstance],
    generator: _backends.Backend,
    cfg: RunConfig,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
    rng: np.random.Generator,
    external: Sequence[Candidate] = (),
) -> Datapool:
    """Seed the datapool with n_samples generator outputs per input,
    scored and feedback-annotated. External candidates may be merged in;
    they are rescored with this run's value function."""
    if not suite:
        raise ConfigError("task suite is empty")
    if cfg.hp.n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    pool = Datapool()
    for instance in suite:
        request = _backends.GenerationRequest(
            prompt=instance.prompt,
            n=cfg.hp.n_samples,
            mode=cfg.decode.init,
            max_len=cfg.max_len,
        )
        result = _backends.generate(generator, request, rng)
        pool.merge(
            _annotate(instance, result.sequences, ORIGIN_BASE, value_fn, feedback_fn),
            iteration=0,
        )
    if external:
        by_id = {inst.input_id: inst for inst in suite}
        rescored = []
        for c in external:
            inst = by_id.get(c.input_id)
            if inst is None:
                continue
            rescored.extend(
                _annotate(inst, [c.output], ORIGIN_EXTERNAL, value_fn, feedback_fn)
            )
        pool.merge(rescored, iteration=0)
    return pool


def explore(
    suite: Sequence[TaskInstance],
    pool: Datapool,
    corrector: _backends.Backend,
    cfg: RunConfig,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
    rng: np.random.Generator,
) -> list[Candidate]:
    """Generate corrections for hypotheses sampled uniformly from each
    input's bucket; returns the scored delta (empty under the
    no-exploration ablation)."""
    if cfg.ablations.no_exploration:
        return []
    delta: list[Candidate] = []
    for instance in suite:
        bucket = pool.bucket(instance.input_id)
        if not bucket:
            continue
        for _ in range(cfg.explore_hypotheses):
            hyp = bucket[int(rng.integers(len(bucket)))]
            context = format_corrector_input(instance.prompt, hyp.output, hyp.feedback)
            request = _backends.GenerationRequest(
                prompt=context,
                n=cfg.hp.n_samples,
                mode=cfg.decode.explore,
                max_len=cfg.max_len,
            )
            result = _backends.generate(corrector, request, rng)
            delta.extend(
                _annotate(instance, result.sequences, ORIGIN_EXPLORE, value_fn, feedback_fn)
            )
    return delta


# ---------------------------------------------------------------------------
# Training


@dataclass
class MetricsRow:
    iteration: int
    pool_size: int
    pair_count: int
    mean_pool_value: float
    eval_value: float | None = None
    eval_correct_frac: float | None = None


def write_metrics_csv(rows: Sequence[MetricsRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.iteration,
                    r.pool_size,
                    r.pair_count,
                    repr(r.mean_pool_value),
                    "" if r.eval_value is None else repr(r.eval_value),
                    "" if r.eval_correct_frac is None else repr(r.eval_correct_frac),
                ]
            )


def _form_pool_pairs(
    pool: Datapool, cfg: RunConfig, vocab: _model.Vocab
) -> list[_pairing.ValueImprovingPair]:
    """Pairs across all inputs under the active pairing rule. Corrections
    whose output cannot be represented in the corrector vocab are dropped
    (they cannot serve as training targets)."""
    form = (
        _pairing.form_all_pairs
        if cfg.ablations.no_value_pairing
        else _pairing.form_pairs
    )
    pairs: list[_pairing.ValueImprovingPair] = []
    for input_id in pool.input_ids():
        for pair in form(pool.bucket(input_id)):
            if all(tok in vocab for tok in pair.correction.output):
                pairs.append(pair)
    return pairs


def _pair_example(
    pair: _pairing.ValueImprovingPair, by_id: dict[str, TaskInstance]
) -> _model.TrainingExample:
    instance = by_id[pair.input_id]
    context = format_corrector_input(
        instance.prompt, pair.hypothesis.output, pair.hypothesis.feedback
    )
    return _model.TrainingExample(context=context, target=pair.correction.output + (END,))


@dataclass
class TrainResult:
    params: _model.ToyModelParams
    metrics: list[MetricsRow]
    pool: Datapool


def train(
    suite: Sequence[TaskInstance],
    generator: _backends.Backend,
    params: _model.ToyModelParams,
    cfg: RunConfig,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None = None,
    eval_suite: Sequence[TaskInstance] | None = None,
) -> TrainResult:
    """Run the full self-corrective learning loop.

    Each outer iteration explores (unless ablated), re-forms pairs over
    the grown pool, then takes ``learn_steps`` SGD steps on batches drawn
    per the proportional sampling rule (uniform over all pairs under the
    no-proportional ablation). Per-iteration metrics include an optional
    held-out evaluation.
    """
    hp = cfg.hp
    if hp.learn_steps < 1 or hp.batch_size < 1:
        raise ConfigError("learn_steps and batch_size must be >= 1")
    if hp.iterations < 0:
        raise ConfigError("iterations must be >= 0")
    by_id = {inst.input_id: inst for inst in suite}
    corrector = _backends.ToyModelBackend(params)

    pool = init_datapool(
        suite, generator, cfg, value_fn, feedback_fn,
        rng=np.random.default_rng([hp.seed, 101]),
    )
    if not _form_pool_pairs(pool, cfg, params.vocab):
        raise NoPairsAvailable(
            "initial datapool has no training pair at any input "
            "(is every candidate value identical?)"
        )

    metrics: list[MetricsRow] = []
    for iteration in range(1, hp.iterations + 1):
        delta = explore(
            suite, pool, corrector, cfg, value_fn, feedback_fn,
            rng=np.random.default_rng([hp.seed, 202, iteration]),
        )
        pool.merge(delta, iteration=iteration)

        pairs = _form_pool_pairs(pool, cfg, params.vocab)
        rng_sample = np.random.default_rng([hp.seed, 303, iteration])
        groups = _pairing.group_by_hypothesis(pairs)
        for _ in range(hp.learn_steps):
            batch = []
            for _ in range(hp.batch_size):
                if cfg.ablations.no_proportional:
                    pair = pairs[int(rng_sample.integers(len(pairs)))] if pairs else None
                else:
                    pair = _pairing.sample_pair(groups, hp.alpha, hp.beta, rng_sample)
                if pair is None:
                    raise NoPairsAvailable("pair set became empty during training")
                batch.append(_pair_example(pair, by_id))
            _model.train_batch(params, batch, params.lr)

        row = MetricsRow(
            iteration=iteration,
            pool_size=len(pool),
            pair_count=len(pairs),
            mean_pool_value=pool.mean_value(),
        )
        if eval_suite:
            report = evaluate(
                eval_suite, generator, corrector, cfg, value_fn, feedback_fn,
                mode="always_correct",
                rng=np.random.default_rng([hp.seed, 404, iteration]),
            )
            row.eval_value = report.mean_value
            row.eval_correct_frac = report.correct_frac
        metrics.append(row)
    return TrainResult(params=params, metrics=metrics, pool=pool)


# ---------------------------------------------------------------------------
# Inference


@dataclass(frozen=True)
class TrajectoryStep:
    output: TokenSeq
    value: float
    feedback: str | None


@dataclass(frozen=True)
class Trajectory:
    input_id: str
    steps: tuple[TrajectoryStep, ...]
    stop_reason: str

    @property
    def final_value(self) -> float:
        return self.steps[-1].value


def infer_trajectory(
    instance: TaskInstance,
    generator: _backends.Backend,
    corrector: _backends.Backend,
    cfg: RunConfig,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
    rng: np.random.Generator,
) -> Trajectory:
    """Draft once from the generator, then correct up to max_corrections
    times, stopping early when the configured target value is reached."""
    hp = cfg.hp
    request = _backends.GenerationRequest(
        prompt=instance.prompt, n=1, mode=cfg.decode.infer, max_len=cfg.max_len
    )
    y = _backends.generate(generator, request, rng).sequences[0]
    steps = [_step(instance, y, value_fn, feedback_fn)]
    stop_reason = STOP_FIXED
    for _ in range(hp.max_corrections):
        if hp.target_value is not None and steps[-1].value >= hp.target_value:
            stop_reason = STOP_TARGET
            break
        context = format_corrector_input(
            instance.prompt, steps[-1].output, steps[-1].feedback
        )
        request = _backends.GenerationRequest(
            prompt=context, n=1, mode=cfg.decode.infer, max_len=cfg.max_len
        )
        y = _backends.generate(corrector, request, rng).sequences[0]
        steps.append(_step(instance, y, value_fn, feedback_fn))
    return Trajectory(instance.input_id, tuple(steps), stop_reason)


def _step(
    instance: TaskInstance,
    output: TokenSeq,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
) -> TrajectoryStep:
    feedback = feedback_fn(instance, output) if feedback_fn is not None else None
    return TrajectoryStep(output=output, value=value_fn(instance, output), feedback=feedback)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    mean_value: float
    correct_frac: float
    value_curve: list[float]    # mean value at steps t = 0..T (carried forward)
    correct_curve: list[float]  # fraction at value 1.0 at each step
    n: int


def evaluate(
    suite: Sequence[TaskInstance],
    generator: _backends.Backend,
    corrector: _backends.Backend,
    cfg: RunConfig,
    value_fn: ValueFn,
    feedback_fn: FeedbackFn | None,
    mode: str = "always_correct",
    rng: np.random.Generator | None = None,
) -> EvalReport:
    """Score trajectories over a held-out suite.

    ``always_correct`` applies every correction step unconditionally;
    ``oracle_correct`` consults the value function and only corrects
    drafts below the target (the stop threshold defaults to 1.0). Step
    curves carry the last value forward for trajectories that stopped
    early, so curve[t] is the quality had inference stopped at step t.
    """
    if mode not in ("always_correct", "oracle_correct"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng([cfg.hp.seed, 505])
    hp = cfg.hp
    if mode == "oracle_correct":
        threshold = hp.target_value if hp.target_value is not None else 1.0
        eval_cfg = replace(cfg, hp=replace(hp, target_value=threshold))
    else:
        eval_cfg = replace(cfg, hp=replace(hp, target_value=None))
    n_steps = hp.max_corrections + 1
    value_rows = np.zeros((len(suite), n_steps))
    for i, instance in enumerate(suite):
        traj = infer_trajectory(
            instance, generator, corrector, eval_cfg, value_fn, feedback_fn, rng
        )
        vals = [s.value for s in traj.steps]
        vals += [vals[-1]] * (n_steps - len(vals))
        value_rows[i] = vals
    correct_rows = value_rows >= 1.0 - CORRECT_EPS
    return EvalReport(
        mean_value=float(value_rows[:, -1].mean()),
        correct_frac=float(correct_rows[:, -1].mean()),
        value_curve=[float(v) for v in value_rows.mean(axis=0)],
        correct_curve=[float(v) for v in correct_rows.mean(axis=0)],
        n=len(suite),
    )

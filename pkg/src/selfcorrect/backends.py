"""Backend-neutral sequence generation.

One contract serves the base generator, the corrector, and the feedback
model: ``generate(backend, request, rng) -> GenerationResult``. Three
implementations are provided: the trainable toy model, a scripted
corruption backend that emits gold sequences with controlled random
edits (an imperfect generator with a tunable error rate), and a remote
completions-style HTTP backend.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

from . import model as _model
from .core import (
    ConfigError,
    SelfCorrectError,
    TokenSeq,
    detokenize,
    render_text,
    tokenize,
)

MAX_SAMPLES = 256
API_KEY_ENV = "SELFCORR_API_KEY"

CORRUPTION_OPS = ("substitute", "delete", "insert")


class BackendUnavailable(SelfCorrectError):
    """A backend failed to produce sequences (after retries, if remote)."""


class MalformedResponse(BackendUnavailable):
    """A remote backend replied outside the wire contract."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: TokenSeq
    n: int = 1
    mode: str = "greedy"
    max_len: int = 64
    stop: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt", tuple(self.prompt))
        if not 1 <= self.n <= MAX_SAMPLES:
            raise ConfigError(f"n must be in [1, {MAX_SAMPLES}], got {self.n}")
        if self.max_len <= 0:
            raise ConfigError("max_len must be positive")


@dataclass(frozen=True)
class GenerationResult:
    sequences: tuple[TokenSeq, ...]
    backend_tag: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequences", tuple(tuple(s) for s in self.sequences))


class Backend(Protocol):
    def generate(
        self, request: GenerationRequest, rng: np.random.Generator | None = None
    ) -> GenerationResult: ...


def generate(
    backend: Backend,
    request: GenerationRequest,
    rng: np.random.Generator | None = None,
) -> GenerationResult:
    """Sample ``request.n`` sequences from any backend. Sequences are
    drawn on per-sequence rng substreams, so a call with n=a+b equals two
    calls with n=a and n=b on the same stream."""
    result = backend.generate(request, rng)
    if len(result.sequences) != request.n:
        raise BackendUnavailable(
            f"{result.backend_tag} returned {len(result.sequences)} sequences, wanted {request.n}"
        )
    return result


def _truncate_at(seq: TokenSeq, stop: str | None) -> TokenSeq:
    if stop is not None and stop in seq:
        return seq[: seq.index(stop)]
    return seq


# ---------------------------------------------------------------------------
# Toy-model backend


@dataclass
class ToyModelBackend:
    """Wraps log-linear model params behind the generation contract."""

    params: _model.ToyModelParams
    tag: str = "toy"

    def generate(
        self, request: GenerationRequest, rng: np.random.Generator | None = None
    ) -> GenerationResult:
        kind, _ = _model.parse_decode_mode(request.mode)
        children: Sequence[np.random.Generator | None]
        if rng is not None:
            children = rng.spawn(request.n)
        elif kind == "temperature":
            raise ConfigError("temperature sampling needs an rng")
        else:
            children = [None] * request.n
        seqs = []
        for child in children:
            seq = _model.decode(
                self.params, request.prompt, request.mode, request.max_len, child
            )[0]
            seqs.append(_truncate_at(seq, request.stop))
        return GenerationResult(tuple(seqs), self.tag)


# ---------------------------------------------------------------------------
# Scripted corruption backend


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-token random edits: each position is corrupted with probability
    ``rho`` by an op drawn uniformly from ``ops``. Substitution looks the
    token up in the confusion map and skips tokens absent from it; insert
    draws from ``insert_pool`` (defaults to all confusion alternatives)."""

    rho: float
    ops: tuple[str, ...] = ("substitute",)
    confusion: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    insert_pool: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        bad = set(self.ops) - set(CORRUPTION_OPS)
        if bad or not self.ops:
            raise ConfigError(f"ops must be a non-empty subset of {CORRUPTION_OPS}")
        object.__setattr__(
            self, "confusion", {k: tuple(v) for k, v in dict(self.confusion).items()}
        )
        pool = tuple(self.insert_pool)
        if not pool:
            pool = tuple(t for alts in self.confusion.values() for t in alts)
        object.__setattr__(self, "insert_pool", pool)


def corrupt(
    gold: TokenSeq, spec: CorruptionSpec, rng: np.random.Generator
) -> TokenSeq:
    """Apply one random corruption pass over a gold sequence."""
    out: list[str] = []
    for tok in gold:
        if rng.random() >= spec.rho:
            out.append(tok)
            continue
        op = spec.ops[int(rng.integers(len(spec.ops)))]
        if op == "substitute":
            alts = spec.confusion.get(tok)
            if not alts:
                out.append(tok)
            else:
                out.append(alts[int(rng.integers(len(alts)))])
        elif op == "delete":
            pass
        else:  # insert before this position
            if spec.insert_pool:
                out.append(spec.insert_pool[int(rng.integers(len(spec.insert_pool)))])
            out.append(tok)
    return tuple(out)


@dataclass
class CorruptionBackend:
    """Scripted generator: emits the gold sequence for a prompt with
    random edits per ``spec``. Prompts are keyed by their token tuple."""

    gold_by_prompt: Mapping[TokenSeq, TokenSeq]
    spec: CorruptionSpec
    tag: str = "scripted"

    def __post_init__(self) -> None:
        self.gold_by_prompt = {
            tuple(k): tuple(v) for k, v in dict(self.gold_by_prompt).items()
        }

    def generate(
        self, request: GenerationRequest, rng: np.random.Generator | None = None
    ) -> GenerationResult:
        gold = self.gold_by_prompt.get(tuple(request.prompt))
        if gold is None:
            raise ConfigError(
                f"scripted backend has no gold sequence for prompt {detokenize(request.prompt)!r}"
            )
        if rng is None:
            raise ConfigError("scripted backend needs an rng")
        seqs = []
        for child in rng.spawn(request.n):
            seq = corrupt(gold, self.spec, child)[: request.max_len]
            seqs.append(_truncate_at(seq, request.stop))
        return GenerationResult(tuple(seqs), self.tag)


# ---------------------------------------------------------------------------
# Remote completions backend


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    timeout: float = 10.0
    retries: int = 3
    backoff: float = 0.25
    max_in_flight: int = 4
    api_key_env: str = API_KEY_ENV


def _mode_temperature(mode: str) -> float:
    kind, arg = _model.parse_decode_mode(mode)
    return arg if kind == "temperature" else 0.0


@dataclass
class RemoteBackend:
    """Completions-style HTTP backend.

    Wire contract: POST {"prompt": str, "n": int, "temperature": num,
    "max_tokens": int, "stop": [str]} -> {"choices": [{"text": str}]}.
    Retries transport errors and 5xx with exponential backoff; a reply
    outside the contract raises MalformedResponse. In-flight requests are
    capped by a semaphore.
    """

    config: EndpointConfig
    tag: str = "remote"

    def __post_init__(self) -> None:
        if not self.config.url:
            raise ConfigError("remote backend needs an endpoint URL")
        self._gate = threading.Semaphore(max(1, self.config.max_in_flight))

    def generate(
        self, request: GenerationRequest, rng: np.random.Generator | None = None
    ) -> GenerationResult:
        return remote_generate(self.config, request, gate=self._gate, tag=self.tag)


def remote_generate(
    config: EndpointConfig,
    request: GenerationRequest,
    gate: threading.Semaphore | None = None,
    tag: str = "remote",
) -> GenerationResult:
    body = {
        "prompt": detokenize(request.prompt),
        "n": request.n,
        "temperature": _mode_temperature(request.mode),
        "max_tokens": request.max_len,
        "stop": [request.stop] if request.stop is not None else [],
    }
    headers = {}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_err: Exception | None = None
    for attempt in range(config.retries):
        if gate is not None:
            gate.acquire()
        try:
            resp = requests.post(
                config.url, json=body, headers=headers, timeout=config.timeout
            )
            if resp.status_code >= 500:
                raise requests.HTTPError(f"server error {resp.status_code}")
            resp.raise_for_status()
            return _parse_completions(resp.json(), request, tag)
        except MalformedResponse:
            raise
        except requests.RequestException as err:
            last_err = err
            if attempt + 1 < config.retries:
                time.sleep(config.backoff * (2**attempt))
        finally:
            if gate is not None:
                gate.release()
    raise BackendUnavailable(f"endpoint {config.url} failed after {config.retries} tries: {last_err}")


def _parse_completions(
    payload: object, request: GenerationRequest, tag: str
) -> GenerationResult:
    if not isinstance(payload, dict) or not isinstance(payload.get("choices"), list):
        raise MalformedResponse(f"reply missing 'choices': {payload!r}")
    choices = payload["choices"]
    if len(choices) != request.n:
        raise MalformedResponse(f"wanted {request.n} choices, got {len(choices)}")
    seqs = []
    for choice in choices:
        if not isinstance(choice, dict) or not isinstance(choice.get("text"), str):
            raise MalformedResponse(f"bad choice: {choice!r}")
        seq = tokenize(choice["text"])[: request.max_len]
        seqs.append(_truncate_at(seq, request.stop))
    return GenerationResult(tuple(seqs), tag)


# ---------------------------------------------------------------------------
# Feedback through a generation backend


@dataclass(frozen=True)
class FeedbackDemo:
    problem: str
    hypothesis: str
    gold_solution: str
    feedback: str


def feedback_via_backend(
    backend: Backend,
    problem: str,
    hypothesis: str,
    gold_solution: str,
    demonstrations: Sequence[FeedbackDemo],
    max_len: int = 64,
) -> str | None:
    """Ask a generation backend for one line of natural-language feedback
    on a hypothesis, few-shot style. The prompt shows each demonstration
    as problem/hypothesis/gold/feedback, then the query with the feedback
    slot open; the first line of the reply is the feedback ("Correct." is
    passed through verbatim). The gold solution is deliberately visible
    to the feedback model. An empty reply means no feedback."""
    if not demonstrations:
        raise ConfigError("feedback prompting needs at least one demonstration")
    blocks = []
    for demo in demonstrations:
        blocks.append(
            f"Problem: {demo.problem}\nHypothesis: {demo.hypothesis}\n"
            f"Gold: {demo.gold_solution}\nFeedback: {demo.feedback}"
        )
    blocks.append(
        f"Problem: {problem}\nHypothesis: {hypothesis}\nGold: {gold_solution}\nFeedback:"
    )
    prompt = tokenize("\n".join(blocks))
    result = generate(backend, GenerationRequest(prompt=prompt, n=1, max_len=max_len))
    text = render_text(result.sequences[0]).split("\n")[0].strip()
    return text or None

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from selfcorrect.core import ConfigError, tokenize
from selfcorrect.backends import (
    BackendUnavailable,
    CorruptionBackend,
    CorruptionSpec,
    EndpointConfig,
    FeedbackDemo,
    GenerationRequest,
    GenerationResult,
    MalformedResponse,
    RemoteBackend,
    ToyModelBackend,
    corrupt,
    feedback_via_backend,
    generate,
    remote_generate,
)
from selfcorrect.model import ToyModelParams, Vocab

GOLD = tokenize("the dog sat on the mat .")


def toy_backend():
    vocab = Vocab.build([GOLD])
    return ToyModelBackend(ToyModelParams(vocab=vocab))


class TestRequestValidation:
    def test_n_bounds(self):
        with pytest.raises(ConfigError):
            GenerationRequest(prompt=("p",), n=0)
        with pytest.raises(ConfigError):
            GenerationRequest(prompt=("p",), n=1000)

    def test_max_len(self):
        with pytest.raises(ConfigError):
            GenerationRequest(prompt=("p",), max_len=0)


class TestToyBackend:
    def test_greedy_copies_are_identical(self):
        backend = toy_backend()
        req = GenerationRequest(prompt=("p",), n=3, mode="greedy", max_len=8)
        result = generate(backend, req, np.random.default_rng(0))
        assert len(result.sequences) == 3
        assert len(set(result.sequences)) == 1

    def test_temperature_needs_rng(self):
        backend = toy_backend()
        req = GenerationRequest(prompt=("p",), n=1, mode="temperature:1.0")
        with pytest.raises(ConfigError):
            generate(backend, req)

    def test_split_streams_concatenate(self):
        backend = toy_backend()

        def run(counts):
            rng = np.random.default_rng(12345)
            seqs = []
            for n in counts:
                req = GenerationRequest(prompt=("p",), n=n, mode="temperature:1.0", max_len=6)
                seqs.extend(generate(backend, req, rng).sequences)
            return seqs

        assert run([5]) == run([2, 3])
        assert run([5]) == run([1, 1, 3])


class TestCorrupt:
    def test_rho_zero_is_identity(self):
        spec = CorruptionSpec(rho=0.0, ops=("substitute",), confusion={"dog": ("cat",)})
        assert corrupt(GOLD, spec, np.random.default_rng(0)) == GOLD

    def test_rho_one_delete_empties(self):
        spec = CorruptionSpec(rho=1.0, ops=("delete",))
        assert corrupt(GOLD, spec, np.random.default_rng(0)) == ()

    def test_substitute_skips_tokens_outside_confusion(self):
        spec = CorruptionSpec(rho=1.0, ops=("substitute",), confusion={"dog": ("cat",)})
        out = corrupt(GOLD, spec, np.random.default_rng(0))
        assert out == tokenize("the cat sat on the mat .")

    def test_insert_draws_from_pool(self):
        spec = CorruptionSpec(rho=1.0, ops=("insert",), insert_pool=("x",))
        out = corrupt(("a", "b"), spec, np.random.default_rng(0))
        assert out == ("x", "a", "x", "b")

    def test_monte_carlo_edit_rate(self):
        # 100 tokens, rho 0.2, delete-only: edits per trial ~ Binomial(100, 0.2)
        gold = tuple(f"w{i}" for i in range(100))
        spec = CorruptionSpec(rho=0.2, ops=("delete",))
        rng = np.random.default_rng(777)
        trials = 10_000
        total_edits = sum(len(gold) - len(corrupt(gold, spec, rng)) for _ in range(trials))
        assert total_edits / trials == pytest.approx(20.0, abs=1.5)

    def test_rho_validation(self):
        with pytest.raises(ConfigError):
            CorruptionSpec(rho=1.5)
        with pytest.raises(ConfigError):
            CorruptionSpec(rho=0.5, ops=("scramble",))


class TestCorruptionBackend:
    def backend(self, rho):
        spec = CorruptionSpec(rho=rho, ops=("substitute",), confusion={"dog": ("cat", "fox")})
        return CorruptionBackend(gold_by_prompt={("p",): GOLD}, spec=spec)

    def test_rho_zero_returns_gold_copies(self):
        req = GenerationRequest(prompt=("p",), n=4, max_len=32)
        result = generate(self.backend(0.0), req, np.random.default_rng(1))
        assert result.sequences == (GOLD,) * 4

    def test_unknown_prompt(self):
        req = GenerationRequest(prompt=("??",), n=1)
        with pytest.raises(ConfigError):
            generate(self.backend(0.0), req, np.random.default_rng(1))

    def test_bit_reproducible(self):
        req = GenerationRequest(prompt=("p",), n=6, max_len=32)
        a = generate(self.backend(0.8), req, np.random.default_rng(9)).sequences
        b = generate(self.backend(0.8), req, np.random.default_rng(9)).sequences
        assert a == b

    def test_split_streams_concatenate(self):
        backend = self.backend(0.8)

        def run(counts):
            rng = np.random.default_rng(31337)
            seqs = []
            for n in counts:
                req = GenerationRequest(prompt=("p",), n=n, max_len=32)
                seqs.extend(generate(backend, req, rng).sequences)
            return seqs

        assert run([6]) == run([2, 4])


class _CompletionsHandler(BaseHTTPRequestHandler):
    fail_first = 0
    malformed = False
    saw_auth: list = []

    def do_POST(self):
        cls = type(self)
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        cls.saw_auth.append(self.headers.get("Authorization"))
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        if cls.malformed:
            payload = json.dumps({"oops": True}).encode()
        else:
            # echo the prompt back n times
            payload = json.dumps(
                {"choices": [{"text": body["prompt"]}] * body["n"]}
            ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def completions_server():
    _CompletionsHandler.fail_first = 0
    _CompletionsHandler.malformed = False
    _CompletionsHandler.saw_auth = []
    server = HTTPServer(("127.0.0.1", 0), _CompletionsHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestRemoteBackend:
    def test_echo_round_trip(self, completions_server):
        config = EndpointConfig(url=completions_server, timeout=2.0)
        req = GenerationRequest(prompt=tokenize("hello there"), n=2, max_len=16)
        result = remote_generate(config, req)
        assert result.sequences == (("hello", "there"), ("hello", "there"))

    def test_retry_then_success(self, completions_server):
        _CompletionsHandler.fail_first = 2
        config = EndpointConfig(url=completions_server, timeout=2.0, retries=3, backoff=0.01)
        req = GenerationRequest(prompt=("hi",), n=1)
        assert remote_generate(config, req).sequences == (("hi",),)

    def test_unavailable_after_retries(self, completions_server):
        _CompletionsHandler.fail_first = 99
        config = EndpointConfig(url=completions_server, timeout=2.0, retries=2, backoff=0.01)
        with pytest.raises(BackendUnavailable):
            remote_generate(config, GenerationRequest(prompt=("hi",), n=1))

    def test_malformed_response(self, completions_server):
        _CompletionsHandler.malformed = True
        config = EndpointConfig(url=completions_server, timeout=2.0, retries=2, backoff=0.01)
        with pytest.raises(MalformedResponse):
            remote_generate(config, GenerationRequest(prompt=("hi",), n=1))

    def test_api_key_header(self, completions_server, monkeypatch):
        monkeypatch.setenv("SELFCORR_API_KEY", "sekret")
        config = EndpointConfig(url=completions_server, timeout=2.0)
        remote_generate(config, GenerationRequest(prompt=("hi",), n=1))
        assert _CompletionsHandler.saw_auth[-1] == "Bearer sekret"

    def test_backend_class_generate(self, completions_server):
        backend = RemoteBackend(EndpointConfig(url=completions_server, timeout=2.0))
        result = generate(backend, GenerationRequest(prompt=("yo",), n=3))
        assert len(result.sequences) == 3

    def test_dead_endpoint(self):
        config = EndpointConfig(url="http://127.0.0.1:1", timeout=0.2, retries=2, backoff=0.01)
        with pytest.raises(BackendUnavailable):
            remote_generate(config, GenerationRequest(prompt=("hi",), n=1))


class FixedReplyBackend:
    """Stub backend that always returns the same text."""

    def __init__(self, text):
        self.text = text
        self.last_prompt = None

    def generate(self, request, rng=None):
        self.last_prompt = request.prompt
        return GenerationResult((tokenize(self.text),) * request.n, "fixed")


DEMOS = [
    FeedbackDemo(
        problem="Melanie had 19 dimes and got 39 more and 25 more.",
        hypothesis="answer = 19 + 25",
        gold_solution="answer = 19 + 25 + 39",
        feedback="In the initial guess, 39 is not included.",
    )
]


class TestFeedbackViaBackend:
    def test_returns_first_line(self):
        backend = FixedReplyBackend("In the initial guess, 39 is not included.\nextra")
        out = feedback_via_backend(backend, "problem", "hyp", "gold", DEMOS)
        assert out == "In the initial guess, 39 is not included."

    def test_correct_passes_through(self):
        backend = FixedReplyBackend("Correct.")
        assert feedback_via_backend(backend, "p", "h", "g", DEMOS) == "Correct."

    def test_empty_reply_is_absent(self):
        backend = FixedReplyBackend("")
        assert feedback_via_backend(backend, "p", "h", "g", DEMOS) is None

    def test_demonstrations_required(self):
        with pytest.raises(ConfigError):
            feedback_via_backend(FixedReplyBackend("x"), "p", "h", "g", [])

    def test_prompt_contains_demos_and_query(self):
        backend = FixedReplyBackend("Correct.")
        feedback_via_backend(backend, "the problem", "the hyp", "the gold", DEMOS)
        from selfcorrect.core import detokenize

        prompt = detokenize(backend.last_prompt)
        assert "39 is not included" in prompt
        assert prompt.rstrip().endswith("Feedback:")
        assert "the problem" in prompt and "the gold" in prompt

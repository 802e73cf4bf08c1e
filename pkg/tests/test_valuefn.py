import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from selfcorrect.core import TaskInstance, tokenize
from selfcorrect.valuefn import (
    AttributeScores,
    MockAttributeScorer,
    RemoteAttributeScorer,
    ScorerUnavailable,
    attribute_feedback,
    constraint_feedback,
    coverage_value,
    execution_value,
    load_lexicons,
    scalar_value,
)

FIG_LEFT_CORRECTED = "a=20*2\nb=a*30\nc=b/60\nanswer=c\nprint(answer)"
FIG_LEFT_DRAFT = "a=20*2\nb=a*30\nanswer=b\nprint(answer)"


def math_instance(gold):
    return TaskInstance("m0", tokenize("problem"), gold_answer=gold)


def con_instance(*constraints):
    return TaskInstance("c0", tokenize("use : " + " ".join(constraints)), constraints=constraints)


class TestExecutionValue:
    def test_corrected_program_scores_one(self):
        assert execution_value(math_instance(20), tokenize(FIG_LEFT_CORRECTED)) == 1.0

    def test_draft_scores_zero(self):
        assert execution_value(math_instance(20), tokenize(FIG_LEFT_DRAFT)) == 0.0

    def test_parse_error_scores_zero(self):
        assert execution_value(math_instance(7), tokenize("a=*3")) == 0.0

    def test_runtime_error_scores_zero(self):
        assert execution_value(math_instance(7), tokenize("a = 1 / 0\nprint(a)")) == 0.0

    def test_requires_gold_answer(self):
        with pytest.raises(ValueError):
            execution_value(con_instance("a"), tokenize("x = 1"))


class TestCoverageValue:
    def test_partial_coverage(self):
        inst = con_instance("table", "paper", "read")
        text = tokenize("A man is reading book on a table .")
        assert coverage_value(inst, text) == pytest.approx(2 / 3)

    def test_suffix_stripping(self):
        inst = con_instance("dog", "catch")
        assert coverage_value(inst, tokenize("A dog catches a ball")) == 1.0

    def test_empty_constraint_set(self):
        inst = TaskInstance("c1", tokenize("use :"), constraints=())
        assert coverage_value(inst, tokenize("anything at all")) == 1.0

    def test_case_insensitive(self):
        assert coverage_value(con_instance("dog"), tokenize("the Dog barks")) == 1.0

    def test_monotone_under_appending(self):
        rnd = random.Random(11)
        pool = ["dog", "cat", "read", "walk", "book", "the", "a", "park"]
        for _ in range(200):
            k = rnd.randrange(1, 5)
            inst = con_instance(*rnd.sample(pool, k))
            text = tuple(rnd.choice(pool) for _ in range(rnd.randrange(0, 8)))
            cov = coverage_value(inst, text)
            assert coverage_value(inst, text + (rnd.choice(pool),)) >= cov

    def test_value_in_unit_interval(self):
        rnd = random.Random(12)
        pool = ["dog", "reads", "parks", "xyz"]
        for _ in range(100):
            inst = con_instance(*rnd.sample(pool, rnd.randrange(1, 4)))
            text = tuple(rnd.choice(pool) for _ in range(rnd.randrange(0, 6)))
            assert 0.0 <= coverage_value(inst, text) <= 1.0


class TestConstraintFeedback:
    def test_single_missing_word(self):
        inst = con_instance("table", "paper", "read")
        text = tokenize("A man is reading book on a table .")
        assert constraint_feedback(inst, text) == "adding constraint word: paper"

    def test_all_matched_is_absent(self):
        inst = con_instance("dog", "catch")
        assert constraint_feedback(inst, tokenize("A dog catches a ball")) is None

    def test_all_missing_in_input_order(self):
        inst = con_instance("a", "b")
        assert constraint_feedback(inst, ()) == "adding constraint word: a, b"

    def test_absent_iff_full_coverage(self):
        rnd = random.Random(13)
        pool = ["dog", "cat", "read", "walk", "book"]
        for _ in range(200):
            inst = con_instance(*rnd.sample(pool, rnd.randrange(1, 4)))
            text = tuple(rnd.choice(pool) for _ in range(rnd.randrange(0, 6)))
            feedback = constraint_feedback(inst, text)
            if coverage_value(inst, text) == 1.0:
                assert feedback is None
            else:
                assert feedback is not None and feedback.startswith("adding constraint word: ")


class FixedScorer:
    """Scorer stub returning canned per-text attribute scores."""

    def __init__(self, table):
        self.table = table

    def score(self, text):
        by_attr = self.table[text]
        overall = max(by_attr.values()) if by_attr else 0.0
        return AttributeScores(overall=overall, by_attribute=dict(by_attr))


class TestAttributeFeedback:
    def test_training_mode_picks_largest_decrease(self):
        scorer = FixedScorer({
            ("y",): {"profanity": 0.8, "insult": 0.5},
            ("y2",): {"profanity": 0.2, "insult": 0.4},
        })
        assert attribute_feedback(scorer, ("y",), ("y2",)) == "decrease toxicity in profanity"

    def test_inference_mode_picks_argmax(self):
        scorer = FixedScorer({("y",): {"profanity": 0.1, "insult": 0.9}})
        assert attribute_feedback(scorer, ("y",)) == "decrease toxicity in insult"

    def test_tie_breaks_lexicographically(self):
        scorer = FixedScorer({("y",): {"b_attr": 0.5, "a_attr": 0.5}})
        assert attribute_feedback(scorer, ("y",)) == "decrease toxicity in a_attr"

    def test_names_a_strictly_decreased_attribute_when_any_decreased(self):
        rnd = random.Random(14)
        attrs = ["a", "b", "c"]
        for _ in range(200):
            s_y = {a: rnd.random() for a in attrs}
            s_ref = {a: rnd.random() for a in attrs}
            scorer = FixedScorer({("y",): s_y, ("r",): s_ref})
            out = attribute_feedback(scorer, ("y",), ("r",))
            if any(s_y[a] > s_ref[a] for a in attrs):
                named = out.removeprefix("decrease toxicity in ")
                assert s_y[named] > s_ref[named]

    def test_empty_attributes(self):
        scorer = FixedScorer({("y",): {}})
        assert attribute_feedback(scorer, ("y",)) is None


class TestMockScorer:
    def test_empty_lexicons(self):
        scorer = MockAttributeScorer({})
        assert scorer.score(tokenize("whatever")).overall == 0.0

    def test_flagged_word(self):
        scorer = MockAttributeScorer({"profanity": {"idiots": 0.8}})
        scores = scorer.score(tokenize("they are idiots"))
        assert scores.by_attribute["profanity"] == 0.8
        assert scores.overall == 0.8

    def test_absent_word(self):
        scorer = MockAttributeScorer({"profanity": {"idiots": 0.8}})
        assert scorer.score(tokenize("a calm sentence")).overall == 0.0

    def test_max_over_attributes_and_words(self):
        scorer = MockAttributeScorer({
            "a": {"bad": 0.3, "worse": 0.6},
            "b": {"bad": 0.5},
        })
        scores = scorer.score(tokenize("bad and worse"))
        assert scores.by_attribute == {"a": 0.6, "b": 0.5}
        assert scores.overall == 0.6

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            MockAttributeScorer({"a": {"w": 1.5}})


class TestScalarValue:
    def test_clean_text(self):
        scorer = MockAttributeScorer({"profanity": {"idiots": 0.8}})
        assert scalar_value(scorer, tokenize("a calm sentence")) == 1.0

    def test_flagged_text_inverted(self):
        scorer = MockAttributeScorer({"profanity": {"idiots": 0.8}})
        assert scalar_value(scorer, tokenize("you idiots")) == pytest.approx(0.2)

    def test_empty_text(self):
        scorer = MockAttributeScorer({"profanity": {"idiots": 0.8}})
        assert scalar_value(scorer, ()) == 1.0

    def test_fuzz_unit_interval(self):
        rnd = random.Random(15)
        scorer = MockAttributeScorer({"a": {"x": 0.9, "y": 0.4}, "b": {"z": 1.0}})
        words = ["x", "y", "z", "w", ""]
        for _ in range(200):
            text = tuple(rnd.choice(words) for _ in range(rnd.randrange(0, 6)))
            assert 0.0 <= scalar_value(scorer, text) <= 1.0


class TestLexiconFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "lex.toml"
        path.write_text('[profanity]\n"idiots" = 0.8\n\n[insult]\n"fool" = 0.5\n')
        lex = load_lexicons(str(path))
        assert lex == {"profanity": {"idiots": 0.8}, "insult": {"fool": 0.5}}


class _ScorerHandler(BaseHTTPRequestHandler):
    fail_first = 0

    def do_POST(self):
        cls = type(self)
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        reply = {"overall": 0.4 if "bad" in body["text"] else 0.0,
                 "attributes": {"negativity": 0.4 if "bad" in body["text"] else 0.0}}
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def scorer_server():
    server = HTTPServer(("127.0.0.1", 0), _ScorerHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestRemoteScorer:
    def test_scores_text(self, scorer_server):
        scorer = RemoteAttributeScorer(scorer_server, timeout=2.0)
        assert scorer.score(tokenize("a bad day")).overall == pytest.approx(0.4)
        assert scorer.score(tokenize("a nice day")).overall == 0.0

    def test_retries_transient_failures(self, scorer_server):
        _ScorerHandler.fail_first = 2
        scorer = RemoteAttributeScorer(scorer_server, timeout=2.0, retries=3, backoff=0.01)
        assert scorer.score(tokenize("fine")).overall == 0.0

    def test_unavailable_after_retries(self, scorer_server):
        _ScorerHandler.fail_first = 10
        scorer = RemoteAttributeScorer(scorer_server, timeout=2.0, retries=2, backoff=0.01)
        with pytest.raises(ScorerUnavailable):
            scorer.score(tokenize("fine"))
        _ScorerHandler.fail_first = 0

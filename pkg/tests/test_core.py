import random

import pytest

from selfcorrect.core import (
    Candidate,
    Hyperparams,
    RESERVED_TOKENS,
    TaskInstance,
    detokenize,
    format_corrector_input,
    tokenize,
)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == ()

    def test_sentence_with_trailing_period(self):
        assert tokenize("A dog catches a ball.") == ("A", "dog", "catches", "a", "ball", ".")

    def test_equals_split(self):
        assert tokenize("answer=c") == ("answer", "=", "c")

    def test_no_lowercasing(self):
        assert tokenize("Dog DOG dog") == ("Dog", "DOG", "dog")

    def test_decimal_survives(self):
        assert tokenize("answer=(6.0*(8.0+2.0))") == (
            "answer", "=", "(", "6.0*", "(", "8.0+2.0", ")", ")",
        )

    def test_newlines_become_tokens(self):
        assert tokenize("a = 1\nprint(a)") == (
            "a", "=", "1", "<nl>", "print", "(", "a", ")",
        )

    def test_blank_lines_collapse(self):
        assert tokenize("a\n\n\nb") == ("a", "<nl>", "b")

    def test_no_token_contains_whitespace(self):
        for tok in tokenize("some text,  with\tmany   kinds\nof spacing!"):
            assert not any(ch.isspace() for ch in tok)

    def test_reserved_markers_escaped(self):
        toks = tokenize("[SC] [CURR] [FEEDBACK] [START] [END] <nl>")
        assert not (set(toks) & set(RESERVED_TOKENS))
        assert toks[0] == "\\[SC]"

    def test_already_escaped_markers_escape_again(self):
        assert tokenize("\\[SC]") == ("\\\\[SC]",)


class TestRoundTrip:
    def test_one_round_trip_reaches_normal_form(self):
        rnd = random.Random(20260808)
        words = ["dog", "Ball.", "a=1", "x,", "(hi)", "What?", "ok!", "6.5", "[SC]", "<nl>"]
        for _ in range(300):
            text = " ".join(rnd.choice(words) for _ in range(rnd.randrange(0, 12)))
            if rnd.random() < 0.3:
                text = text.replace(" ", "\n", 1)
            once = detokenize(tokenize(text))
            twice = detokenize(tokenize(once))
            assert once == twice

    def test_program_round_trip(self):
        text = "a = 20 * 2\nb = a * 30\nprint(b)"
        assert detokenize(tokenize(text)) == "a = 20 * 2\nb = a * 30\nprint ( b )"
        assert tokenize(detokenize(tokenize(text))) == tokenize(text)


class TestFormatCorrectorInput:
    def test_plain(self):
        out = format_corrector_input(tokenize("p"), tokenize("h"))
        assert detokenize(out) == "[SC] p [CURR] h [START]"

    def test_with_feedback(self):
        out = format_corrector_input(
            tokenize("p"), tokenize("h"), "adding constraint word: paper"
        )
        assert detokenize(out) == (
            "[SC] p [CURR] h [FEEDBACK] adding constraint word: paper [START]"
        )

    def test_empty_sequences(self):
        assert detokenize(format_corrector_input((), ())) == "[SC] [CURR] [START]"

    def test_injective_on_escaped_text(self):
        rnd = random.Random(7)
        words = ["a", "b", "[SC]", "[CURR]", "x", "[START]"]
        seen = {}
        for _ in range(500):
            x = tokenize(" ".join(rnd.choice(words) for _ in range(rnd.randrange(0, 4))))
            y = tokenize(" ".join(rnd.choice(words) for _ in range(rnd.randrange(0, 4))))
            fb = rnd.choice([None, "fix it", "add word: a"])
            key = format_corrector_input(x, y, fb)
            if key in seen:
                assert seen[key] == (x, y, fb)
            seen[key] = (x, y, fb)


class TestDomainTypes:
    def test_candidate_value_range(self):
        with pytest.raises(ValueError):
            Candidate("x", ("a",), 1.5)
        with pytest.raises(ValueError):
            Candidate("x", ("a",), -0.1)

    def test_candidate_origin(self):
        with pytest.raises(ValueError):
            Candidate("x", ("a",), 0.5, origin="martian")

    def test_instance_payload_exclusive(self):
        with pytest.raises(ValueError):
            TaskInstance("x", ("p",), gold_answer=1.0, constraints=("a",))

    def test_hyperparams_bounds(self):
        with pytest.raises(ValueError):
            Hyperparams(alpha=-1)
        with pytest.raises(ValueError):
            Hyperparams(beta=-0.5)
        with pytest.raises(ValueError):
            Hyperparams(target_value=1.5)
        Hyperparams(alpha=0, beta=0, target_value=None)

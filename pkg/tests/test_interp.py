import random

import pytest

from selfcorrect import interp
from selfcorrect.interp import (
    Assign,
    Comment,
    DivisionByZero,
    ParseError,
    Print,
    StepLimitExceeded,
    UndefinedVariable,
    check_answer,
    execute,
    parse,
    pretty,
)

# the four corrected example programs, with answers worked out by hand
CORRECTED = [
    ("a=20*2\nb=a*30\nc=b/60 #fix\nanswer=c\nprint(answer)", 20.0),
    ("a=2*100\nb=3*50\nc=500-a-b #fix\nanswer=c\nprint(answer)", 150.0),
    ("answer=19+25+39\nprint(answer)", 83.0),
    ("answer=(6.0*(8.0+2.0))\nprint(answer)", 60.0),
]

UNCORRECTED_DRAFT = "a=20*2\nb=a*30\nanswer=b\nprint(answer)"  # prints 1200


class TestParse:
    def test_five_line_program_with_comment(self):
        program = parse(CORRECTED[0][0])
        assert len(program) == 5
        third = program.lines[2]
        assert isinstance(third, Assign)
        assert third.comment == "fix"

    def test_invalid_syntax(self):
        with pytest.raises(ParseError) as err:
            parse("a=*3")
        assert err.value.line == 1

    def test_empty_program(self):
        assert len(parse("")) == 0

    def test_full_line_comment(self):
        program = parse("# setup\na=1")
        assert isinstance(program.lines[0], Comment)
        assert isinstance(program.lines[1], Assign)

    def test_print_statement(self):
        program = parse("print(a)")
        assert program.lines[0] == Print("a")

    def test_junk_after_expression(self):
        with pytest.raises(ParseError):
            parse("a=1 2")

    def test_error_reports_line_number(self):
        with pytest.raises(ParseError) as err:
            parse("a=1\nb=\nc=2")
        assert err.value.line == 2

    def test_line_limit(self):
        with pytest.raises(ParseError):
            parse("\n".join(f"x{i}=1" for i in range(101)))

    def test_depth_limit(self):
        deep = "(" * 40 + "1" + ")" * 40
        with pytest.raises(ParseError):
            parse(f"a={deep}")

    def test_spaced_programs_parse(self):
        program = parse("answer = 19 + 25 + 39\nprint ( answer )")
        assert execute(program).printed == [83.0]


class TestExecute:
    @pytest.mark.parametrize("text,expected", CORRECTED)
    def test_corrected_programs(self, text, expected):
        result = execute(parse(text))
        assert result.printed[0] == pytest.approx(expected)
        assert check_answer(result, expected)

    def test_uncorrected_draft_gets_wrong_answer(self):
        result = execute(parse(UNCORRECTED_DRAFT))
        assert result.printed == [1200.0]
        assert not check_answer(result, 20.0)

    def test_division_by_zero(self):
        with pytest.raises(DivisionByZero):
            execute(parse("a=1/0"))

    def test_undefined_variable(self):
        with pytest.raises(UndefinedVariable):
            execute(parse("a=b+1"))
        with pytest.raises(UndefinedVariable):
            execute(parse("print(zz)"))

    def test_step_limit(self):
        program = parse("\n".join(f"x{i}=1+2+3" for i in range(50)))
        with pytest.raises(StepLimitExceeded):
            execute(program, step_limit=10)

    def test_step_limit_precondition(self):
        with pytest.raises(ValueError):
            execute(parse("a=1"), step_limit=0)

    def test_true_division(self):
        assert execute(parse("a=1/2\nprint(a)")).printed == [0.5]

    def test_unary_minus(self):
        assert execute(parse("a=-3*-2\nprint(a)")).printed == [6.0]

    def test_determinism(self):
        program = parse(CORRECTED[1][0])
        r1, r2 = execute(program, 500), execute(program, 500)
        assert r1.printed == r2.printed
        assert r1.env == r2.env
        assert r1.steps_used == r2.steps_used


class TestCheckAnswer:
    def test_match(self):
        assert check_answer(interp.ExecResult(printed=[20.0]), 20)

    def test_mismatch(self):
        assert not check_answer(interp.ExecResult(printed=[1200.0]), 20)

    def test_nothing_printed(self):
        assert not check_answer(interp.ExecResult(printed=[]), 0)

    def test_relative_tolerance(self):
        assert check_answer(interp.ExecResult(printed=[3e6 + 1.0]), 3e6)
        assert not check_answer(interp.ExecResult(printed=[3e6 + 10.0]), 3e6)

    def test_only_first_print_counts(self):
        result = execute(parse("a=1\nb=2\nprint(a)\nprint(b)"))
        assert check_answer(result, 1)
        assert not check_answer(result, 2)


def _random_program(rnd: random.Random) -> str:
    names = []
    lines = []
    for i in range(rnd.randrange(1, 8)):
        name = f"v{i}"
        terms = []
        for _ in range(rnd.randrange(1, 4)):
            if names and rnd.random() < 0.4:
                terms.append(rnd.choice(names))
            elif rnd.random() < 0.3:
                terms.append(f"{rnd.randrange(1, 50)}.{rnd.randrange(0, 10)}")
            else:
                terms.append(str(rnd.randrange(1, 50)))
        expr = terms[0]
        for t in terms[1:]:
            op = rnd.choice("+-*/")
            if rnd.random() < 0.3:
                expr = f"({expr}){op}{t}"
            else:
                expr = f"{expr}{op}{t}"
        if rnd.random() < 0.2:
            expr = f"-{expr}"
        lines.append(f"{name}={expr}" + (" #note" if rnd.random() < 0.2 else ""))
        names.append(name)
    if rnd.random() < 0.5:
        lines.append(f"print({rnd.choice(names)})")
    return "\n".join(lines)


class TestPrettyRoundTrip:
    def test_pretty_reparses_to_identical_structure(self):
        rnd = random.Random(99)
        for _ in range(300):
            program = parse(_random_program(rnd))
            assert parse(pretty(program)) == program

    def test_pretty_preserves_evaluation(self):
        rnd = random.Random(100)
        checked = 0
        for _ in range(200):
            program = parse(_random_program(rnd))
            try:
                before = execute(program).printed
            except interp.ExecError:
                continue
            assert execute(parse(pretty(program))).printed == before
            checked += 1
        assert checked > 100

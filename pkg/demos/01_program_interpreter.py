"""Walk through the arithmetic program subset used by the math task.

Programs are straight-line: assignments, prints, and # comments. The
value function runs them and compares the first printed number against
the task's expected answer.
"""

from selfcorrect import interp

# A word problem: "It takes Jennifer 20 minutes to groom each of her 2
# dachshunds. Grooming daily, how many hours in 30 days?" Expected: 20.

draft = """\
a=20*2
b=a*30
answer=b
print(answer)
"""

corrected = """\
a=20*2
b=a*30
c=b/60 #fix
answer=c
print(answer)
"""

for label, text in [("draft", draft), ("corrected", corrected)]:
    program = interp.parse(text)
    result = interp.execute(program)
    verdict = "right" if interp.check_answer(result, 20) else "wrong"
    print(f"{label}: prints {result.printed[0]:g} -> {verdict}")

# The parser keeps comments, so a program round-trips through its AST.
program = interp.parse(corrected)
print("\nround-tripped source:")
print(interp.pretty(program))

# Errors are precise: bad syntax reports the line, runtime faults raise
# typed exceptions that the value function maps to value 0.
try:
    interp.parse("a=*3")
except interp.ParseError as err:
    print(f"\nparse error: {err}")
try:
    interp.execute(interp.parse("a=1/0"))
except interp.DivisionByZero as err:
    print(f"runtime error: {err}")

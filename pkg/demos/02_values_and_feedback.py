"""The three value functions behind one contract: higher is better, in
[0, 1], deterministic. Feedback functions produce the natural-language
hint strings the corrector can condition on.
"""

from selfcorrect.core import TaskInstance, tokenize
from selfcorrect.valuefn import (
    MockAttributeScorer,
    attribute_feedback,
    constraint_feedback,
    coverage_value,
    execution_value,
    scalar_value,
)

# 1. execution correctness: 1.0 iff the program prints the expected answer
math = TaskInstance("m", tokenize("problem text"), gold_answer=83.0)
print("execution value:",
      execution_value(math, tokenize("answer = 19 + 25 + 39\nprint(answer)")),
      "vs",
      execution_value(math, tokenize("answer = 19 + 25\nprint(answer)")))

# 2. constraint coverage: fraction of required words present (inflections
# count: "reading" satisfies "read")
con = TaskInstance("c", tokenize("use : table paper read"),
                   constraints=("table", "paper", "read"))
text = tokenize("A man is reading book on a table .")
print("coverage:", round(coverage_value(con, text), 4))
print("feedback:", constraint_feedback(con, text))

# 3. attribute-scored text: a lexicon scorer stands in for a hosted API;
# the value is inverted so cleaner text scores higher
scorer = MockAttributeScorer({
    "negativity": {"awful": 0.8, "terrible": 0.7},
    "rudeness": {"stupid": 0.8},
})
clean = tokenize("the meeting was calm and useful .")
flagged = tokenize("the meeting was awful and stupid .")
print("scalar value:", scalar_value(scorer, clean), "vs", scalar_value(scorer, flagged))

# training-time feedback names the attribute that dropped the most between
# a hypothesis and its selected correction; inference-time names the worst
# attribute of the current hypothesis
print("feedback (training):", attribute_feedback(scorer, flagged, clean))
print("feedback (inference):", attribute_feedback(scorer, flagged))

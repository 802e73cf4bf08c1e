"""From a candidate pool to training pairs.

Pairs map a hypothesis to any strictly higher-valued output of the same
input. Batches are then drawn in two stages: a hypothesis uniformly, one
of its corrections proportional to exp(alpha * gain + beta * similarity).
"""

import math

import numpy as np

from selfcorrect.core import Candidate
from selfcorrect.pairing import (
    form_pairs,
    group_by_hypothesis,
    pair_weight,
    sample_pair,
    similarity,
)

pool = [
    Candidate("q1", ("answer", "=", "19", "+", "25"), 0.0),
    Candidate("q1", ("answer", "=", "19", "+", "25", "+", "39"), 1.0),
    Candidate("q1", ("answer", "=", "19", "+", "39"), 0.0),
    Candidate("q1", ("print", "(", "x", ")"), 0.0),
]

pairs = form_pairs(pool)
print(f"{len(pairs)} value-improving pairs from {len(pool)} candidates:")
for p in pairs:
    sim = similarity(p.hypothesis.output, p.correction.output)
    print(f"  gain={p.value_gain:+.2f} sim={sim:.3f} "
          f"weight={pair_weight(p, 1.0, 1.0):.3f} hyp={' '.join(p.hypothesis.output)}")

# proximity matters: with alpha = beta = 1 the near-miss hypothesis gets
# corrected more often than the unrelated one would suggest by gain alone
groups = group_by_hypothesis(pairs)
rng = np.random.default_rng(0)
draws = 50_000
hits = {}
for _ in range(draws):
    p = sample_pair(groups, 1.0, 1.0, rng)
    hits[p.hypothesis.output] = hits.get(p.hypothesis.output, 0) + 1
print("\nhypothesis draw frequencies (uniform by design):")
for output, n in sorted(hits.items()):
    print(f"  {n / draws:.4f}  {' '.join(output)}")

# the textbook two-correction case has a closed form
a = Candidate("q2", ("h", "a"), 1.0)   # gain 1.0, sim 0.5 to the hypothesis
b = Candidate("q2", ("h", "b"), 0.5)   # gain 0.5, sim 0.5
hyp = Candidate("q2", ("h", "h"), 0.0)
small = group_by_hypothesis(form_pairs([hyp, a, b]))
picked_a = sum(
    1 for _ in range(draws)
    if sample_pair({hyp: small[hyp]}, 1.0, 1.0, rng).correction is a
)
print(f"\nP(stronger correction) empirical {picked_a / draws:.4f} "
      f"closed form {math.exp(1.5) / (math.exp(1.5) + math.exp(1.0)):.4f}")

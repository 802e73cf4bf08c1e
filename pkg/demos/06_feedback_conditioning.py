"""Natural-language feedback as extra conditioning for the corrector.

On the constrained task the feedback function names exactly the missing
words ("adding constraint word: ..."), which the corrector reads from a
dedicated context segment. Matched-seed runs show the feedback-trained
corrector reaching higher coverage. Takes ~20 seconds.
"""

import numpy as np

from selfcorrect import suites
from selfcorrect.backends import CorruptionBackend, ToyModelBackend
from selfcorrect.core import Hyperparams, detokenize, format_corrector_input
from selfcorrect.engine import RunConfig, evaluate, train
from selfcorrect.model import ToyModelParams, Vocab

spec = suites.SuiteSpec(kind=suites.CONSTRAINED_KIND, train=60, valid=10, test=25, seed=1)
splits = suites.generate_suite(spec)
all_items = [item for s in suites.SPLITS for item in splits[s]]
generator = CorruptionBackend(
    gold_by_prompt=suites.gold_map(all_items),
    spec=suites.corruption_spec(suites.CONSTRAINED_KIND, rho=0.25),
)
value_fn, constraint_hints = suites.task_functions(suites.CONSTRAINED_KIND)
vocab = Vocab.build(suites.vocab_tokens(all_items, suites.CONSTRAINED_KIND, 0.25))

item = splits["train"][0]
damaged = item.gold_output[:3] + item.gold_output[5:]  # drop two words
print("constraints:", item.instance.constraints)
print("damaged draft:", detokenize(damaged))
print("hint:", constraint_hints(item.instance, damaged))
print("corrector context:",
      detokenize(format_corrector_input(item.instance.prompt, damaged,
                                        constraint_hints(item.instance, damaged))))

results = {}
for label, feedback_fn in [("with feedback", constraint_hints), ("without", None)]:
    cfg = RunConfig(
        hp=Hyperparams(n_samples=6, iterations=3, learn_steps=400, batch_size=12, seed=1),
        max_len=24,
    )
    params = ToyModelParams(vocab=vocab, lr=0.8)
    train([i.instance for i in splits["train"]], generator, params, cfg, value_fn, feedback_fn)
    report = evaluate(
        [i.instance for i in splits["test"]], generator, ToyModelBackend(params),
        cfg, value_fn, feedback_fn, mode="oracle_correct",
        rng=np.random.default_rng([1, 505]),
    )
    results[label] = report
    print(f"\n{label}: coverage {report.value_curve[0]:.3f} -> {report.mean_value:.3f}")

gain = results["with feedback"].mean_value - results["without"].mean_value
print(f"\nfeedback gain on final coverage: {gain:+.3f}")

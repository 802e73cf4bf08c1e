"""Generator modularity: a corrector trained against one generator fixes
the outputs of a completely different one at test time.

Here the replacement generator is a completions-style HTTP service (a
local stub) with a systematic bug: it always adds the first two numbers
of the problem, whatever was asked. The corrector has never seen this
failure mode; training only ever showed it random number substitutions.
Takes ~15 seconds.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

from selfcorrect import suites
from selfcorrect.backends import (
    CorruptionBackend,
    EndpointConfig,
    RemoteBackend,
    ToyModelBackend,
)
from selfcorrect.core import Hyperparams
from selfcorrect.engine import RunConfig, evaluate, train
from selfcorrect.model import ToyModelParams, Vocab


class BuggyDraftService(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        numbers = [tok for tok in body["prompt"].split() if tok.isdigit()]
        a, b = (numbers + ["1", "1"])[:2]
        reply = {"choices": [{"text": f"answer = {a} + {b}\nprint(answer)"}] * body["n"]}
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


spec = suites.SuiteSpec(kind=suites.MATH_KIND, train=100, valid=10, test=25, seed=3)
splits = suites.generate_suite(spec)
all_items = [item for s in suites.SPLITS for item in splits[s]]
value_fn, _ = suites.task_functions(suites.MATH_KIND)
vocab = Vocab.build(suites.vocab_tokens(all_items, suites.MATH_KIND, 0.3))

# train against the scripted corruption generator
scripted = CorruptionBackend(
    gold_by_prompt=suites.gold_map(all_items),
    spec=suites.corruption_spec(suites.MATH_KIND, rho=0.3),
)
cfg = RunConfig(
    hp=Hyperparams(n_samples=8, iterations=4, learn_steps=400, batch_size=16, seed=3),
    max_len=24,
)
params = ToyModelParams(vocab=vocab, lr=0.8)
train([i.instance for i in splits["train"]], scripted, params, cfg, value_fn)
corrector = ToyModelBackend(params)

# now swap in the buggy remote generator, corrector untouched
server = HTTPServer(("127.0.0.1", 0), BuggyDraftService)
threading.Thread(target=server.serve_forever, daemon=True).start()
remote = RemoteBackend(
    EndpointConfig(url=f"http://127.0.0.1:{server.server_address[1]}", timeout=5.0)
)
try:
    test = [i.instance for i in splits["test"]]
    for name, gen in [("scripted (training generator)", scripted),
                      ("buggy remote (swapped in)", remote)]:
        report = evaluate(test, gen, corrector, cfg, value_fn, None,
                          mode="oracle_correct", rng=np.random.default_rng(17))
        print(f"{name}: alone {report.correct_curve[0]:.3f} -> "
              f"with corrector {report.correct_frac:.3f}")
finally:
    server.shutdown()

"""Command-line surface: suite generation, training, evaluation, and
trajectory inference.

Commands
--------
gen-suite   write a synthetic task suite (train/valid/test JSONL + meta)
train       run self-corrective learning from a TOML config; writes a run
            directory with the datapool, trained params, metrics CSV, and
            a resolved config snapshot sufficient to re-run bit-identically
eval        score a trained run on a held-out split (always-correct and
            oracle-correct modes, plus the per-step value curve)
infer       dump one correction trajectory, optionally swapping in a
            different generator than the corrector was trained against

Exit codes: 0 ok, 2 usage/config, 3 backend failure, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import backends as _backends
from . import engine as _engine
from . import model as _model
from . import suites as _suites
from .core import ConfigError, Hyperparams, SelfCorrectError, detokenize
from .valuefn import ScorerUnavailable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_INVARIANT = 4

_GENERATOR_KINDS = ("scripted", "toy", "remote")
_FEEDBACK_MODES = ("none", "task-feedback", "backend-feedback")


# ---------------------------------------------------------------------------
# Config


@dataclass
class TrainConfig:
    suite_dir: str = ""
    hp: Hyperparams = field(default_factory=Hyperparams)
    lr: float = 0.5
    l2: float = 0.0
    max_len: int = 48
    generator: str = "scripted"
    rho: float | None = None
    decode: _engine.DecodeModes = field(default_factory=_engine.DecodeModes)
    feedback_mode: str = "none"
    feedback_demos: str | None = None
    ablations: _engine.AblationFlags = field(default_factory=_engine.AblationFlags)
    explore_hypotheses: int = 2
    workers: int = 1
    remote: _backends.EndpointConfig | None = None


def _get(table: dict, section: str, key: str, default):
    return table.get(section, {}).get(key, default)


def load_train_config(path: str) -> TrainConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"cannot parse {path}: {err}") from None
    base = os.path.dirname(os.path.abspath(path))
    suite_dir = _get(raw, "suite", "dir", "")
    if not suite_dir:
        raise ConfigError("config needs [suite] dir")
    if not os.path.isabs(suite_dir):
        suite_dir = os.path.normpath(os.path.join(base, suite_dir))
    hp_raw = raw.get("hyperparams", {})
    target = hp_raw.get("target_value", 1.0)
    if isinstance(target, str):
        if target.lower() != "none":
            raise ConfigError(f"bad target_value {target!r}")
        target = None
    hp = Hyperparams(
        alpha=float(hp_raw.get("alpha", 10.0)),
        beta=float(hp_raw.get("beta", 1.0)),
        n_samples=int(hp_raw.get("n_samples", 8)),
        iterations=int(hp_raw.get("iterations", 5)),
        learn_steps=int(hp_raw.get("learn_steps", 500)),
        batch_size=int(hp_raw.get("batch_size", 16)),
        max_corrections=int(hp_raw.get("max_corrections", 3)),
        target_value=None if target is None else float(target),
        seed=int(hp_raw.get("seed", 0)),
    )
    generator = _get(raw, "generator", "backend", "scripted")
    if generator not in _GENERATOR_KINDS:
        raise ConfigError(f"unknown generator backend {generator!r}")
    feedback_mode = _get(raw, "feedback", "mode", "none")
    if feedback_mode not in _FEEDBACK_MODES:
        raise ConfigError(f"unknown feedback mode {feedback_mode!r}")
    remote = None
    if raw.get("remote", {}).get("url"):
        rem = raw["remote"]
        remote = _backends.EndpointConfig(
            url=rem["url"],
            timeout=float(rem.get("timeout", 10.0)),
            retries=int(rem.get("retries", 3)),
            backoff=float(rem.get("backoff", 0.25)),
            max_in_flight=int(rem.get("max_in_flight", 4)),
        )
    rho = _get(raw, "generator", "rho", None)
    demos = _get(raw, "feedback", "demos", None)
    if demos and not os.path.isabs(demos):
        demos = os.path.normpath(os.path.join(base, demos))
    return TrainConfig(
        suite_dir=suite_dir,
        hp=hp,
        lr=float(_get(raw, "model", "lr", 0.5)),
        l2=float(_get(raw, "model", "l2", 0.0)),
        max_len=int(_get(raw, "model", "max_len", 48)),
        generator=generator,
        rho=None if rho is None else float(rho),
        decode=_engine.DecodeModes(
            init=_get(raw, "decode", "init", "temperature:1.0"),
            explore=_get(raw, "decode", "explore", "temperature:1.0"),
            infer=_get(raw, "decode", "infer", "greedy"),
        ),
        feedback_mode=feedback_mode,
        feedback_demos=demos,
        ablations=_engine.AblationFlags(
            no_proportional=bool(_get(raw, "ablations", "no_proportional", False)),
            no_value_pairing=bool(_get(raw, "ablations", "no_value_pairing", False)),
            no_exploration=bool(_get(raw, "ablations", "no_exploration", False)),
        ),
        explore_hypotheses=int(_get(raw, "explore", "hypotheses", 2)),
        workers=int(raw.get("workers", 1)),
        remote=remote,
    )


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return json.dumps(str(v))


def dump_train_config(cfg: TrainConfig) -> str:
    """Render the resolved config as TOML; the snapshot alone re-runs the
    training bit-identically."""
    hp = cfg.hp
    lines = [
        "[suite]",
        f"dir = {_toml_value(cfg.suite_dir)}",
        "",
        "[hyperparams]",
        f"alpha = {_toml_value(hp.alpha)}",
        f"beta = {_toml_value(hp.beta)}",
        f"n_samples = {_toml_value(hp.n_samples)}",
        f"iterations = {_toml_value(hp.iterations)}",
        f"learn_steps = {_toml_value(hp.learn_steps)}",
        f"batch_size = {_toml_value(hp.batch_size)}",
        f"max_corrections = {_toml_value(hp.max_corrections)}",
        f"target_value = {_toml_value(hp.target_value) if hp.target_value is not None else _toml_value('none')}",
        f"seed = {_toml_value(hp.seed)}",
        "",
        "[model]",
        f"lr = {_toml_value(cfg.lr)}",
        f"l2 = {_toml_value(cfg.l2)}",
        f"max_len = {_toml_value(cfg.max_len)}",
        "",
        "[generator]",
        f"backend = {_toml_value(cfg.generator)}",
    ]
    if cfg.rho is not None:
        lines.append(f"rho = {_toml_value(cfg.rho)}")
    lines += [
        "",
        "[decode]",
        f"init = {_toml_value(cfg.decode.init)}",
        f"explore = {_toml_value(cfg.decode.explore)}",
        f"infer = {_toml_value(cfg.decode.infer)}",
        "",
        "[feedback]",
        f"mode = {_toml_value(cfg.feedback_mode)}",
    ]
    if cfg.feedback_demos:
        lines.append(f"demos = {_toml_value(cfg.feedback_demos)}")
    lines += [
        "",
        "[ablations]",
        f"no_proportional = {_toml_value(cfg.ablations.no_proportional)}",
        f"no_value_pairing = {_toml_value(cfg.ablations.no_value_pairing)}",
        f"no_exploration = {_toml_value(cfg.ablations.no_exploration)}",
        "",
        "[explore]",
        f"hypotheses = {_toml_value(cfg.explore_hypotheses)}",
        "",
        f"workers = {_toml_value(cfg.workers)}",
    ]
    if cfg.remote is not None:
        lines += [
            "",
            "[remote]",
            f"url = {_toml_value(cfg.remote.url)}",
            f"timeout = {_toml_value(cfg.remote.timeout)}",
            f"retries = {_toml_value(cfg.remote.retries)}",
            f"backoff = {_toml_value(cfg.remote.backoff)}",
            f"max_in_flight = {_toml_value(cfg.remote.max_in_flight)}",
        ]
    return "\n".join(lines) + "\n"


def _apply_overrides(cfg: TrainConfig, args: argparse.Namespace) -> TrainConfig:
    hp_updates = {}
    for name in (
        "alpha", "beta", "n_samples", "iterations", "learn_steps",
        "batch_size", "max_corrections", "seed",
    ):
        v = getattr(args, name, None)
        if v is not None:
            hp_updates[name] = v
    if getattr(args, "target_value", None) is not None:
        hp_updates["target_value"] = (
            None if args.target_value.lower() == "none" else float(args.target_value)
        )
    if hp_updates:
        from dataclasses import replace

        cfg.hp = replace(cfg.hp, **hp_updates)
    if getattr(args, "lr", None) is not None:
        cfg.lr = args.lr
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    for flag in getattr(args, "ablate", None) or []:
        key = flag.replace("-", "_")
        if not hasattr(cfg.ablations, key):
            raise ConfigError(f"unknown ablation {flag!r}")
        setattr(cfg.ablations, key, True)
    return cfg


# ---------------------------------------------------------------------------
# Component wiring


def _run_cfg(cfg: TrainConfig) -> _engine.RunConfig:
    return _engine.RunConfig(
        hp=cfg.hp,
        decode=cfg.decode,
        ablations=cfg.ablations,
        explore_hypotheses=cfg.explore_hypotheses,
        max_len=cfg.max_len,
        workers=cfg.workers,
    )


def _build_generator(
    cfg: TrainConfig,
    suite: _suites.LoadedSuite,
    kind: str,
    params: _model.ToyModelParams | None = None,
):
    if kind == "scripted":
        rho = cfg.rho if cfg.rho is not None else suite.rho
        spec = _suites.corruption_spec(suite.kind, rho)
        return _backends.CorruptionBackend(
            gold_by_prompt=_suites.gold_map(suite.all_items()), spec=spec
        )
    if kind == "toy":
        if params is None:
            raise ConfigError("toy generator needs trained params")
        return _backends.ToyModelBackend(params, tag="toy-generator")
    if cfg.remote is None:
        raise ConfigError("remote generator requested but [remote] url is not configured")
    return _backends.RemoteBackend(cfg.remote)


def _build_feedback(cfg: TrainConfig, suite: _suites.LoadedSuite):
    value_fn, task_feedback = _suites.task_functions(suite.kind, suite.lexicons)
    if cfg.feedback_mode == "none":
        return value_fn, None
    if cfg.feedback_mode == "task-feedback":
        if task_feedback is None:
            raise ConfigError(f"suite kind {suite.kind!r} defines no task feedback")
        return value_fn, task_feedback
    # backend-feedback: few-shot prompting of a generation backend, with
    # gold-solution access (math only)
    if suite.kind != _suites.MATH_KIND:
        raise ConfigError("backend feedback is only wired for the math suite")
    if not cfg.feedback_demos:
        raise ConfigError("backend feedback needs [feedback] demos")
    with open(cfg.feedback_demos, encoding="utf-8") as fh:
        demos = [_backends.FeedbackDemo(**d) for d in json.load(fh)]
    if cfg.remote is None:
        raise ConfigError("backend feedback needs [remote] url")
    fb_backend = _backends.RemoteBackend(cfg.remote, tag="feedback-model")
    gold_text = {
        item.instance.input_id: detokenize(item.gold_output)
        for item in suite.all_items()
    }

    def backend_feedback(instance, output):
        return _backends.feedback_via_backend(
            fb_backend,
            problem=detokenize(instance.prompt),
            hypothesis=detokenize(output),
            gold_solution=gold_text[instance.input_id],
            demonstrations=demos,
        )

    return value_fn, backend_feedback


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_suite(args: argparse.Namespace) -> int:
    spec = _suites.SuiteSpec(
        kind=args.kind,
        train=args.train,
        valid=args.valid,
        test=args.test,
        seed=args.seed,
        rho=args.rho,
        constraints_min=args.constraints_min,
        constraints_max=args.constraints_max,
    )
    splits = _suites.generate_suite(spec)
    lexicons = None
    if args.lexicon:
        from .valuefn import load_lexicons

        lexicons = load_lexicons(args.lexicon)
    _suites.save_suite(args.out, spec, splits, lexicons)
    sizes = ", ".join(f"{s}={len(splits[s])}" for s in _suites.SPLITS)
    print(f"wrote {spec.kind} suite to {args.out} ({sizes})")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_train_config(args.config), args)
    suite = _suites.load_suite(cfg.suite_dir)
    run_cfg = _run_cfg(cfg)
    rho = cfg.rho if cfg.rho is not None else suite.rho
    vocab = _model.Vocab.build(_suites.vocab_tokens(suite.all_items(), suite.kind, rho))
    params = _model.ToyModelParams(vocab=vocab, lr=cfg.lr, l2=cfg.l2)
    generator = _build_generator(cfg, suite, cfg.generator, params)
    value_fn, feedback_fn = _build_feedback(cfg, suite)

    out_dir = args.out or f"runs/{suite.kind}-seed{cfg.hp.seed}"
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    result = _engine.train(
        suite.instances("train"),
        generator,
        params,
        run_cfg,
        value_fn,
        feedback_fn,
        eval_suite=suite.instances("valid"),
    )
    elapsed = time.time() - started

    with open(os.path.join(out_dir, "config.toml"), "w", encoding="utf-8") as fh:
        fh.write(dump_train_config(cfg))
    vocab.save(os.path.join(out_dir, "vocab.txt"))
    _model.save_params(result.params, os.path.join(out_dir, "params.bin"))
    _engine.save_datapool(result.pool, os.path.join(out_dir, "datapool.jsonl"))
    _engine.write_metrics_csv(result.metrics, os.path.join(out_dir, "metrics.csv"))
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"started": started, "elapsed_seconds": elapsed, "argv": sys.argv[1:]},
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    for row in result.metrics:
        ev = "-" if row.eval_value is None else f"{row.eval_value:.4f}"
        print(
            f"iter {row.iteration}: pool={row.pool_size} pairs={row.pair_count} "
            f"mean_pool_value={row.mean_pool_value:.4f} eval_value={ev}"
        )
    print(f"run written to {out_dir} ({elapsed:.1f}s)")
    return EXIT_OK


def _load_run(run_dir: str):
    config_path = os.path.join(run_dir, "config.toml")
    params_path = os.path.join(run_dir, "params.bin")
    vocab_path = os.path.join(run_dir, "vocab.txt")
    for p in (config_path, params_path, vocab_path):
        if not os.path.exists(p):
            raise ConfigError(f"run artifact missing: {p}")
    cfg = load_train_config(config_path)
    vocab = _model.Vocab.load(vocab_path)
    params = _model.load_params(params_path, vocab)
    params.lr, params.l2 = cfg.lr, cfg.l2
    suite = _suites.load_suite(cfg.suite_dir)
    return cfg, suite, params


def cmd_eval(args: argparse.Namespace) -> int:
    cfg, suite, params = _load_run(args.run)
    run_cfg = _run_cfg(cfg)
    generator = _build_generator(cfg, suite, args.generator or cfg.generator, params)
    value_fn, feedback_fn = _build_feedback(cfg, suite)
    corrector = _backends.ToyModelBackend(params)
    instances = suite.instances(args.split)
    reports = {}
    for mode in ("always_correct", "oracle_correct"):
        reports[mode] = _engine.evaluate(
            instances, generator, corrector, run_cfg, value_fn, feedback_fn,
            mode=mode, rng=np.random.default_rng([cfg.hp.seed, 505]),
        )
    always, oracle = reports["always_correct"], reports["oracle_correct"]
    print(f"split={args.split} n={always.n} T={cfg.hp.max_corrections}")
    print(
        f"generator-only : value={always.value_curve[0]:.4f} "
        f"correct={always.correct_curve[0]:.4f}"
    )
    print(f"always-correct : value={always.mean_value:.4f} correct={always.correct_frac:.4f}")
    print(f"oracle-correct : value={oracle.mean_value:.4f} correct={oracle.correct_frac:.4f}")
    curve_path = os.path.join(args.run, f"curve_{args.split}.csv")
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,always_value,always_correct,oracle_value,oracle_correct\n")
        for t in range(len(always.value_curve)):
            fh.write(
                f"{t},{always.value_curve[t]!r},{always.correct_curve[t]!r},"
                f"{oracle.value_curve[t]!r},{oracle.correct_curve[t]!r}\n"
            )
    report = {
        mode: {
            "mean_value": r.mean_value,
            "correct_frac": r.correct_frac,
            "value_curve": r.value_curve,
            "correct_curve": r.correct_curve,
        }
        for mode, r in reports.items()
    }
    with open(os.path.join(args.run, f"eval_{args.split}.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"curve written to {curve_path}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    cfg, suite, params = _load_run(args.run)
    run_cfg = _run_cfg(cfg)
    generator = _build_generator(cfg, suite, args.generator, params)
    value_fn, feedback_fn = _build_feedback(cfg, suite)
    corrector = _backends.ToyModelBackend(params)
    instance = None
    for split in _suites.SPLITS:
        for item in suite.splits[split]:
            if item.instance.input_id == args.input:
                instance = item.instance
    if instance is None:
        raise ConfigError(f"input id {args.input!r} not found in suite")
    traj = _engine.infer_trajectory(
        instance, generator, corrector, run_cfg, value_fn, feedback_fn,
        rng=np.random.default_rng([cfg.hp.seed, 606]),
    )
    if args.json:
        for t, step in enumerate(traj.steps):
            print(
                json.dumps(
                    {
                        "input_id": traj.input_id,
                        "step": t,
                        "output": detokenize(step.output),
                        "value": step.value,
                        "feedback": step.feedback,
                        "stop_reason": traj.stop_reason,
                    },
                    sort_keys=True,
                )
            )
    else:
        print(f"input {traj.input_id} prompt: {detokenize(instance.prompt)}")
        for t, step in enumerate(traj.steps):
            src = "generator" if t == 0 else "corrector"
            fb = f" feedback={step.feedback!r}" if step.feedback else ""
            print(f"  t={t} [{src}] value={step.value:.4f}{fb}")
            for line in detokenize(step.output).split("\n"):
                print(f"      {line}")
        print(f"stop reason: {traj.stop_reason}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfcorrect",
        description="Train and run correctors that iteratively improve generations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-suite", help="generate a synthetic task suite")
    p.add_argument("--kind", required=True, choices=_suites.KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--valid", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--constraints-min", type=int, default=3)
    p.add_argument("--constraints-max", type=int, default=5)
    p.add_argument("--lexicon", help="TOML lexicon file for the open-scored kind")
    p.set_defaults(func=cmd_gen_suite)

    p = sub.add_parser("train", help="run self-corrective learning")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (default runs/<kind>-seed<seed>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learn-steps", dest="learn_steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-corrections", dest="max_corrections", type=int)
    p.add_argument("--target-value", dest="target_value", help="number or 'none'")
    p.add_argument("--lr", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument(
        "--ablate",
        action="append",
        choices=("no-proportional", "no-value-pairing", "no-exploration"),
        help="disable a learning component (repeatable)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run")
    p.add_argument("--run", required=True)
    p.add_argument("--split", default="test", choices=_suites.SPLITS)
    p.add_argument("--generator", choices=_GENERATOR_KINDS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="dump one correction trajectory")
    p.add_argument("--run", required=True)
    p.add_argument("--input", required=True, help="input id from the suite")
    p.add_argument("--generator", default="scripted", choices=_GENERATOR_KINDS)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (_backends.BackendUnavailable, ScorerUnavailable) as err:
        print(f"backend error: {err}", file=sys.stderr)
        return EXIT_BACKEND
    except SelfCorrectError as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

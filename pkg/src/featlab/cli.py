"""Batch driver for the debugging loop: train, profile, simulate, apply, eval.

Each command is deterministic given a seed, writes machine-readable JSON to
stdout with --json, and exits 0 on success, 2 on validation problems, 3 on
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bilstm import BilstmConfig
from .bilstm import init_model as init_bilstm
from .bilstm import train as train_bilstm
from .cnn import CnnConfig, init_model, train
from .corpus import CorpusError
from .evaluation import (
    approx_randomization_test,
    bias_metrics,
    evaluate,
    gender_subpopulations,
    load_lexicon,
    metrics_table,
    model_predictions,
)
from .experiments import (
    ablation_table,
    apply_feedback,
    load_corpus_dir,
    rank_ablation_experiment,
)
from .features import bilstm_feature_clouds, build_clouds
from .feedback import (
    POLICY_LEXICON,
    POLICY_MAJORITY,
    POLICY_SCORE_RANK,
    TASK_BINARY,
    TASK_CLASS_CHOICE,
    Answer,
    create_session,
    simulate_session_answers,
)
from .optim import TrainConfig, TrainingDiverged
from .snapshot import SnapshotError, load_snapshot, save_snapshot

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

CONFIG_KEYS = """
arch            cnn | bilstm                      (default cnn)
filter_sizes    comma-separated ints              (default 2,3,4)
filters_per_size int                              (default 10)
units           int, per direction (bilstm)       (default 15)
max_len         int                               (default 150)
lr              float                             (default 0.001)
batch_size      int                               (default 32)
max_epochs      int                               (default 50)
patience        int                               (default 5)
embeddings      path                              (default DATA/embeddings.txt)
""".strip()


def read_config_file(path: str | None) -> dict:
    """``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    if not path:
        return values
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CorpusError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _configs_from_file(values: dict, dataset, table, seed: int):
    arch = values.get("arch", "cnn")
    train_cfg = TrainConfig(
        lr=float(values.get("lr", 1e-3)),
        batch_size=int(values.get("batch_size", 32)),
        max_epochs=int(values.get("max_epochs", 50)),
        patience=int(values.get("patience", 5)),
        seed=seed,
    )
    common = {
        "class_count": dataset.class_count,
        "max_len": int(values.get("max_len", 150)),
        "embed_dim": table.dimension,
        "seed": seed,
    }
    if arch == "bilstm":
        model_cfg = BilstmConfig(units=int(values.get("units", 15)), **common)
    elif arch == "cnn":
        model_cfg = CnnConfig(
            filter_sizes=tuple(int(s) for s in values.get("filter_sizes", "2,3,4").split(",")),
            filters_per_size=int(values.get("filters_per_size", 10)),
            **common,
        )
    else:
        raise CorpusError(f"unknown arch {arch!r}")
    return arch, model_cfg, train_cfg


def _load_corpus(args):
    values = read_config_file(getattr(args, "config", None))
    embeddings = values.get("embeddings")
    dataset, table = load_corpus_dir(args.data, embeddings_path=embeddings)
    return values, dataset, table


def _emit(args, payload: dict, text: str | None = None) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text if text is not None else json.dumps(payload, indent=2, sort_keys=True))


def _model_clouds(model, dataset, top_n: int = 40):
    if model.arch == "bilstm":
        return bilstm_feature_clouds(model, dataset.split("train"), top_n=top_n)
    return build_clouds(model, dataset.split("train"), top_n=top_n)


def cmd_train(args) -> int:
    values, dataset, table = _load_corpus(args)
    arch, model_cfg, train_cfg = _configs_from_file(values, dataset, table, args.seed)
    if arch == "bilstm":
        model, log = train_bilstm(init_bilstm(model_cfg, table), dataset, train_cfg)
    else:
        model, log = train(init_model(model_cfg, table), dataset, train_cfg)
    model_id = save_snapshot(model, args.out)
    log_path = Path(args.out).with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    dev_best = max((e["dev_macro_f1"] for e in log), default=None)
    payload = {
        "model_id": model_id,
        "out": str(args.out),
        "log": str(log_path),
        "epochs": len(log),
        "best_dev_macro_f1": dev_best,
    }
    _emit(args, payload, f"trained {model_id} ({len(log)} epochs, best dev macro F1 {dev_best})")
    return EXIT_OK


def cmd_profile(args) -> int:
    model = load_snapshot(args.model)
    _, dataset, _ = _load_corpus(args)
    clouds = _model_clouds(model, dataset, top_n=args.top_n)
    records = []
    for item in clouds:
        if isinstance(item, tuple):
            records.append({"positive": item[0].to_json(), "negative": item[1].to_json()})
        else:
            records.append(item.to_json())
    Path(args.out).write_text(json.dumps(records, indent=2, sort_keys=True), encoding="utf-8")
    payload = {"out": str(args.out), "features": len(records)}
    _emit(args, payload, f"wrote {len(records)} feature clouds to {args.out}")
    return EXIT_OK


def _build_session(model, dataset, task: str, policy: str, policy_params=None):
    from .snapshot import model_id as _mid

    return create_session(
        _mid(model),
        dataset.classes,
        _model_clouds(model, dataset),
        task=task,
        policy=policy,
        policy_params=policy_params,
        session_id="cli",
    )


def cmd_simulate(args) -> int:
    model = load_snapshot(args.model)
    _, dataset, _ = _load_corpus(args)
    oracle = json.loads(Path(args.oracle).read_text(encoding="utf-8"))
    task = TASK_BINARY if args.task == "binary" else TASK_CLASS_CHOICE
    policy = POLICY_SCORE_RANK if task == TASK_BINARY else POLICY_MAJORITY
    session = _build_session(model, dataset, task, policy)
    answers = simulate_session_answers(
        session, oracle, noise_rate=args.noise, annotators=args.annotators, seed=args.seed
    )
    with open(args.answers_out, "w", encoding="utf-8") as fh:
        for answer in answers:
            fh.write(json.dumps(answer.to_json(), sort_keys=True) + "\n")
    payload = {"answers_out": str(args.answers_out), "answers": len(answers), "questions": len(session.questions)}
    _emit(args, payload, f"wrote {len(answers)} simulated answers to {args.answers_out}")
    return EXIT_OK


def cmd_apply(args) -> int:
    model = load_snapshot(args.model)
    _, dataset, _ = _load_corpus(args)
    policy = {"majority": POLICY_MAJORITY, "lexicon": POLICY_LEXICON, "score-rank": POLICY_SCORE_RANK}[args.policy]
    task = TASK_BINARY if args.task == "binary" else TASK_CLASS_CHOICE
    policy_params = {}
    if args.lexicon:
        policy_params["lexicon"] = list(load_lexicon(args.lexicon))
    if args.ranks:
        policy_params["ranks"] = [r.strip().upper() for r in args.ranks.split(",")]
    session = _build_session(model, dataset, task, policy, policy_params)
    if policy != POLICY_LEXICON:
        if not args.answers:
            raise CorpusError(f"--answers is required for the {args.policy} policy")
        with open(args.answers, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    session.add_answer(Answer.from_json(json.loads(line)))
    new_model, disabled, finetuned = apply_feedback(
        model,
        dataset,
        session,
        finetune_cfg=TrainConfig(seed=args.seed),
        finetune_always=args.finetune_always,
    )
    model_id = save_snapshot(new_model, args.out)
    payload = {
        "model_id": model_id,
        "out": str(args.out),
        "disabled": disabled,
        "disabled_count": len(disabled),
        "finetuned": finetuned,
    }
    _emit(args, payload, f"disabled {len(disabled)} features -> {model_id} ({args.out})")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_snapshot(args.model)
    _, dataset, _ = _load_corpus(args)
    docs = dataset.split(args.split)
    if not docs:
        raise CorpusError(f"dataset has no {args.split!r} split")
    report = evaluate(model, docs, dataset=dataset.name, model_ref=str(args.model))
    payload = {"metrics": report.to_json()}
    lines = [metrics_table([(Path(args.model).name, report)], dataset.classes)]

    if args.bias:
        names = [n.strip() for n in args.bias.split(",")]
        specs = [s for s in gender_subpopulations() if s.name in names]
        unknown = set(names) - {s.name for s in specs}
        if unknown:
            raise CorpusError(f"unknown subpopulations {sorted(unknown)}; bundled: male, female")
        preds = model_predictions(model, docs)
        labels = [d.label for d in docs]
        bias = bias_metrics(preds, labels, docs, specs, positive_class=args.positive_class)
        payload["bias"] = bias.to_json()
        lines.append(f"FPED {bias.fped:.3f}  FNED {bias.fned:.3f}")

    if args.compare:
        other = load_snapshot(args.compare)
        other_report = evaluate(other, docs, dataset=dataset.name, model_ref=str(args.compare))
        test = approx_randomization_test(
            model_predictions(model, docs),
            model_predictions(other, docs),
            np.asarray([d.label for d in docs]),
            seed=args.seed,
        )
        payload["compare"] = {
            "other": other_report.to_json(),
            "delta_macro_f1": report.macro_f1 - other_report.macro_f1,
            "randomization": test.to_json(),
        }
        lines.append(metrics_table([(Path(args.compare).name, other_report)], dataset.classes))
        lines.append(
            f"delta macro F1 {report.macro_f1 - other_report.macro_f1:+.4f}, "
            f"p={test.p_value:.4f} ({'significant' if test.significant else 'not significant'} at {test.alpha})"
        )
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_exp1(args) -> int:
    _, dataset, table = _load_corpus(args)
    oracle_path = args.oracle or (Path(args.data) / "oracle.json")
    oracle = json.loads(Path(oracle_path).read_text(encoding="utf-8"))
    report = rank_ablation_experiment(
        dataset,
        table,
        oracle,
        seeds=tuple(range(args.seeds)),
        noise_rate=args.noise,
    )
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    _emit(args, payload, ablation_table(report))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_service_config

    settings = load_service_config(args.config)
    app = create_app(settings["data_dir"], workers=settings["workers"])
    uvicorn.run(app, host=settings["host"], port=settings["port"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featlab",
        description="Debug small text classifiers by inspecting and disabling learned features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="dataset directory (train/dev/test.jsonl + embeddings.txt)")
        p.add_argument("--config", help=f"key=value config file; keys:\n{CONFIG_KEYS}")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("train", help="train a classifier and save its snapshot")
    common(p)
    p.add_argument("--out", required=True, help="snapshot output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("profile", help="dump per-feature word clouds as JSON")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-n", type=int, default=40)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("simulate", help="collect answers from the simulated annotator")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--oracle", required=True, help="JSON file mapping keywords to class names")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--annotators", type=int, default=10)
    p.add_argument("--task", choices=("classes", "binary"), default="classes")
    p.add_argument("--answers-out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("apply", help="disable features per policy and fine-tune the head")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--answers", help="answers JSONL (required for majority / score-rank)")
    p.add_argument("--policy", choices=("majority", "lexicon", "score-rank"), required=True)
    p.add_argument("--task", choices=("classes", "binary"), default="classes")
    p.add_argument("--lexicon", help="term file for the lexicon policy (default: bundled gender terms)")
    p.add_argument("--ranks", help="which ranks to disable for score-rank (default C)")
    p.add_argument("--finetune-always", action="store_true", help="fine-tune even when nothing was disabled")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="metrics, optional bias audit and model comparison")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--bias", help="comma-separated subpopulations (male,female)")
    p.add_argument("--positive-class", type=int, default=1)
    p.add_argument("--compare", help="second snapshot to compare against")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("exp1", help="rank-ablation study with the simulated annotator")
    common(p)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--oracle", help="oracle JSON (default DATA/oracle.json)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_exp1)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="key=value file: data_dir, port, host, workers")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, SnapshotError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDiverged as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

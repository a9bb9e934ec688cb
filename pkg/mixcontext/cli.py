"""
Командная строка: `python -m mixcontext <команда> [--config run.json] [--seed N] [--set a.b=v]`.

Коды завершения: 0 — успех, 1 — ошибка входных данных/конфигурации,
2 — ошибка выполнения.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import pandas as pd
from colorama import Fore, init

from . import __version__, configure_logging
from .classify import (
    Architecture,
    CombinedPredictor,
    EnsemblePredictor,
    load_lexicon,
)
from .config import RESOLVED_CONFIG_NAME, RunConfig, load_run_config, save_run_config
from .corpus import (
    build_samples,
    corpus_stats,
    gen_synthetic,
    load_threads,
    save_threads,
    split_three,
    split_train_val,
)
from .encoder import check_gradients, toy_config
from .errors import MixContextError, ValidationError
from .evaluation import align, evaluate, load_predictions, render_confusion, write_predictions
from .experiments import compare_context_usage, run_suite, sample_texts
from .models import ThreadNode
from .presets import SUITES
from .textprep import preprocess
from .tokenizer import Vocab, build_vocab, encode_pair, encode_single
from .train import check_pipeline_gradients, load_checkpoint, train

init(autoreset=True)

logger = logging.getLogger(__name__)


def _run_config(args: argparse.Namespace, check_paths: bool = True) -> RunConfig:
    return load_run_config(args.config, overrides=args.overrides, seed=args.seed, check_paths=check_paths)


def _samples(path: str | Path, config: RunConfig):
    return build_samples(load_threads(path), config.prep)


def _ok(message: str) -> None:
    print(Fore.GREEN + "✅ " + message)


def _save_resolved(config: RunConfig, output: str | Path) -> Path:
    return save_run_config(config, Path(output).parent / RESOLVED_CONFIG_NAME)


# --- команды ------------------------------------------------------------------

def cmd_prep(args: argparse.Namespace) -> int:
    config = _run_config(args)
    nodes = load_threads(args.input)
    cleaned = [
        ThreadNode(node.id, preprocess(node.text, config.prep), node.level, node.label, node.parent_id)
        for node in nodes
    ]
    save_threads(cleaned, args.output)
    _save_resolved(config, args.output)
    _ok(f"Предобработано узлов: {len(cleaned)} -> {args.output}")
    return 0


def cmd_vocab(args: argparse.Namespace) -> int:
    config = _run_config(args)
    size = args.size or config.vocab_size
    vocab = build_vocab(sample_texts(_samples(args.corpus, config)), size)
    vocab.save(args.output)
    _save_resolved(config, args.output)
    _ok(f"Словарь: {len(vocab)} токенов -> {args.output}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = _run_config(args)
    nodes = gen_synthetic(config.synth)
    save_threads(nodes, args.output)
    _save_resolved(config, args.output)
    hof = sum(1 for node in nodes if node.label.value == "HOF")
    _ok(f"Синтетический корпус: {len(nodes)} узлов, HOF {hof} -> {args.output}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.paths.data is None:
        raise ValidationError("paths.data: не задан корпус для обучения")
    samples = _samples(config.paths.data, config)
    if config.split.test_fraction > 0:
        train_samples, val_samples, _ = split_three(
            samples, config.split.seed, config.split.val_fraction, config.split.test_fraction
        )
    else:
        train_samples, val_samples = split_train_val(samples, config.split.spec())

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.paths.vocab:
        vocab = Vocab.load(config.paths.vocab)
    else:
        vocab = build_vocab(sample_texts(train_samples), config.vocab_size)
        vocab.save(out_dir / "vocab.txt")

    resolved = replace(config, encoder=replace(config.encoder, vocab_size=len(vocab)))
    save_run_config(resolved, out_dir / RESOLVED_CONFIG_NAME)
    checkpoint = train(resolved.encoder, train_samples, val_samples, resolved.train, vocab, output_dir=out_dir)
    _ok(f"Лучшая эпоха {checkpoint.epoch}, val_loss={checkpoint.val_loss:.4f} -> {out_dir / 'best.ckpt'}")
    return 0


def _predict_and_write(predictor, data: str, config: RunConfig, output: str) -> int:
    samples = _samples(data, config)
    predictions = predictor.predict_batch(samples)
    write_predictions(output, [s.id for s in samples], predictions)
    _save_resolved(config, output)
    hof = sum(1 for p in predictions if p.label.value == "HOF")
    _ok(f"Предсказаний: {len(predictions)} (HOF {hof}) -> {output}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = _run_config(args)
    checkpoint = load_checkpoint(args.checkpoint)
    predictor = checkpoint.predictor(name=Path(args.checkpoint).stem, architecture=args.architecture)
    lexicon_path = args.lexicon or config.paths.lexicon
    if lexicon_path:
        predictor = CombinedPredictor(predictor, load_lexicon(lexicon_path))
    return _predict_and_write(predictor, args.data, config, args.output)


def cmd_ensemble(args: argparse.Namespace) -> int:
    config = _run_config(args)
    paths = args.checkpoints or list(config.ensemble.members)
    if not paths:
        raise ValidationError("ensemble.members: не заданы чекпойнты участников")
    members = tuple(load_checkpoint(path).predictor(name=Path(path).stem) for path in paths)
    predictor = EnsemblePredictor(members, average=args.average or config.ensemble.average)
    lexicon_path = args.lexicon or config.paths.lexicon
    if lexicon_path:
        predictor = CombinedPredictor(predictor, load_lexicon(lexicon_path))
    return _predict_and_write(predictor, args.data, config, args.output)


def cmd_eval(args: argparse.Namespace) -> int:
    config = _run_config(args)
    golds, preds, flags = align(load_predictions(args.preds), _samples(args.gold, config), args.preds)
    metrics = evaluate(golds, preds, flags)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(metrics.to_json() + "\n", encoding="utf-8")
    _save_resolved(config, output)
    print(render_confusion(metrics.confusion))
    _ok(
        f"macro P={metrics.macro_precision:.4f} R={metrics.macro_recall:.4f} "
        f"F1={metrics.macro_f1:.4f} -> {output}"
    )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    config = _run_config(args)
    stats = corpus_stats(_samples(args.corpus, config))
    print(pd.DataFrame([stats.as_row()]).to_string(index=False))
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    vocab = Vocab.load(args.vocab)
    if args.context is None:
        encoding = encode_single(args.text, vocab, args.max_len)
    else:
        encoding = encode_pair(args.context, args.text, vocab, args.max_len)
    print(encoding.to_json())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.pipeline == "encoder":
        report = check_gradients(toy_config(), tolerance=args.tolerance, n_coords=args.coords, seed=args.seed or 0)
    else:
        report = check_pipeline_gradients(
            tolerance=args.tolerance, architecture=args.pipeline, n_coords=args.coords, seed=args.seed or 0
        )
    color = Fore.GREEN if report.passed else Fore.RED
    print(color + report.summary())
    return 0 if report.passed else 2


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _run_config(args)
    out_dir = config.output_dir
    if args.suite == "context":
        seeds = args.seeds or [0, 1, 2]
        result = compare_context_usage(seeds, config.synth, config.encoder, config.train, vocab_size=config.vocab_size)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "context_comparison.json").write_text(
            json.dumps(result.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        _ok(f"dual F1={result.dual_mean:.4f}, target_only F1={result.target_only_mean:.4f}")
        return 0

    if config.paths.data is None:
        raise ValidationError("paths.data: не задан корпус для эксперимента")
    test_fraction = config.split.test_fraction or 0.2
    train_samples, val_samples, test_samples = split_three(
        _samples(config.paths.data, config), config.split.seed, config.split.val_fraction, test_fraction
    )
    lexicon = load_lexicon(config.paths.lexicon) if config.paths.lexicon else None
    rows = SUITES[args.suite]
    if lexicon is None:
        rows = tuple(row for row in rows if not row.use_lexicon)
        logger.warning("Лексикон не задан: строки с Dictionary пропущены")
    vocab = Vocab.load(config.paths.vocab) if config.paths.vocab else None
    result = run_suite(config, train_samples, val_samples, test_samples, rows, vocab, lexicon, out_dir)
    print(result.table.to_text())
    _ok(f"Таблица сравнения -> {out_dir}")
    return 0


# --- разбор аргументов --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON-файл конфигурации")
    common.add_argument("--seed", type=int, default=None, help="перезаписывает все seed-поля")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="переопределение, например train.learning_rate=0.002")

    parser = argparse.ArgumentParser(
        prog="mixcontext",
        description="Контекстная классификация hate speech для code-mixed текстов",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", parents=[common], help="предобработка корпуса тредов")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_prep)

    p = sub.add_parser("vocab", parents=[common], help="построение словаря")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_vocab)

    p = sub.add_parser("synth", parents=[common], help="синтетический корпус")
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="обучение модели")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="предсказания одной модели")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--architecture", choices=[a.value for a in Architecture], default=None)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("ensemble", parents=[common], help="предсказания ансамбля")
    p.add_argument("--checkpoints", nargs="+", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--average", choices=["probs", "logits"], default=None)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("eval", parents=[common], help="метрики и матрица ошибок")
    p.add_argument("--preds", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="статистика корпуса")
    p.add_argument("--corpus", required=True)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("encode", parents=[common], help="отладочный дамп кодирования")
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--context", default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=16)
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("gradcheck", parents=[common], help="проверка градиентов конечными разностями")
    p.add_argument("--pipeline", choices=["encoder"] + [a.value for a in Architecture], default="encoder")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=200)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("experiment", parents=[common], help="набор конфигураций")
    p.add_argument("--suite", choices=sorted(SUITES) + ["context"], default="table")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.set_defaults(handler=cmd_experiment)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except MixContextError as exc:
        print(Fore.RED + f"❌ {exc.message}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception("Команда %s завершилась ошибкой", args.command)
        print(Fore.RED + f"❌ {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

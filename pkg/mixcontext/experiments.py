"""
Наборы экспериментов: таблица конфигураций (baseline, +FE, +C-Avg,
+Dictionary, ансамбли, абляция без контекста) и сравнение dual с
target_only на корпусе, где метка ответа зависит от контекста.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from tqdm import tqdm

from .classify import Architecture, CombinedPredictor, EnsemblePredictor, Lexicon, Predictor
from .config import RunConfig, save_run_config
from .corpus import SynthConfig, build_samples, gen_synthetic, split_three
from .encoder import EncoderConfig
from .errors import ValidationError
from .evaluation import ComparisonTable, evaluate
from .models import Sample
from .presets import SUITE_ROWS, ModelSpec, RowSpec
from .textprep import DEFAULT_PREP, PrepConfig
from .tokenizer import Vocab, build_vocab
from .train import Checkpoint, TrainConfig, train

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, int, int], None]

STAGE_MESSAGES = {
    "preparing": "Подготовка данных",
    "training": "Обучение моделей",
    "evaluating": "Оценка конфигураций",
    "writing": "Формирование отчёта",
    "finished": "Эксперимент завершён",
}


def sample_texts(samples: Sequence[Sample]) -> list[str]:
    texts = []
    for sample in samples:
        texts.append(sample.target_text)
        if sample.context_text:
            texts.append(sample.context_text)
    return texts


def model_config(base: EncoderConfig, spec: ModelSpec) -> EncoderConfig:
    """Конфиг энкодера для хребта A (как base) или B (общие слои, embed = hidden/2)."""

    config = replace(base, freeze_embeddings=spec.freeze_embeddings)
    if spec.backbone == "B":
        config = replace(config, share_layers=True, embed_dim=max(base.hidden // 2, 1))
    return config


@dataclass
class SuiteResult:
    table: ComparisonTable
    checkpoints: dict[str, Checkpoint] = field(default_factory=dict)
    predictions: dict[str, list] = field(default_factory=dict)


def _row_predictor(row: RowSpec, checkpoints: dict[str, Checkpoint], lexicon: Optional[Lexicon]) -> Predictor:
    members = [checkpoints[spec.key].predictor(name=spec.key) for spec in row.members]
    predictor: Predictor = members[0] if len(members) == 1 else EnsemblePredictor(tuple(members), name=row.name)
    if row.use_lexicon:
        if lexicon is None:
            raise ValidationError(f"строка {row.name!r} требует лексикон, но он не задан")
        predictor = CombinedPredictor(predictor, lexicon, name=row.name)
    return predictor


def run_suite(
    run_config: RunConfig,
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    test_samples: Sequence[Sample],
    rows: Sequence[RowSpec] = SUITE_ROWS,
    vocab: Vocab | None = None,
    lexicon: Lexicon | None = None,
    output_dir: str | Path | None = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> SuiteResult:
    """Обучает каждую уникальную модель набора один раз и строит таблицу сравнения."""

    def report_progress(stage: str, done: int, total: int) -> None:
        if progress_callback:
            progress_callback(stage, done, total)
        logger.info(f"{STAGE_MESSAGES.get(stage, stage)}: {done}/{total}")

    report_progress("preparing", 0, 1)
    if vocab is None:
        vocab = build_vocab(sample_texts(train_samples), run_config.vocab_size)
    base = replace(run_config.encoder, vocab_size=len(vocab))
    out_dir = Path(output_dir) if output_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        vocab.save(out_dir / "vocab.txt")
        save_run_config(run_config, out_dir / "resolved_config.json")

    unique: dict[str, ModelSpec] = {}
    for row in rows:
        for spec in row.members:
            unique.setdefault(spec.key, spec)

    checkpoints: dict[str, Checkpoint] = {}
    specs = list(unique.values())
    iterator = specs if progress_callback else tqdm(specs, desc="Модели", unit="модель")
    for done, spec in enumerate(iterator, start=1):
        logger.info(f"▶️ Обучение модели {spec.key}")
        checkpoints[spec.key] = train(
            model_config(base, spec),
            train_samples,
            val_samples,
            replace(run_config.train, architecture=spec.architecture),
            vocab,
            output_dir=(out_dir / spec.key) if out_dir is not None else None,
            progress_callback=(lambda *_: None) if progress_callback else None,
        )
        report_progress("training", done, len(specs))

    golds = [s.label for s in test_samples]
    flags = [s.is_contextual for s in test_samples]
    table = ComparisonTable()
    predictions: dict[str, list] = {}
    for done, row in enumerate(rows, start=1):
        preds = _row_predictor(row, checkpoints, lexicon).predict_batch(test_samples)
        predictions[row.name] = preds
        table.rows.append((row.name, evaluate(golds, [p.label for p in preds], flags)))
        report_progress("evaluating", done, len(rows))

    if out_dir is not None:
        report_progress("writing", 0, 1)
        (out_dir / "comparison.txt").write_text(table.to_text() + "\n", encoding="utf-8")
        (out_dir / "comparison.json").write_text(table.to_json() + "\n", encoding="utf-8")
        table.to_excel(out_dir / "comparison.xlsx")
    report_progress("finished", 1, 1)
    return SuiteResult(table=table, checkpoints=checkpoints, predictions=predictions)


# --- контекст против его отсутствия ------------------------------------------

@dataclass
class ContextComparison:
    seeds: list[int]
    dual_f1: list[float]
    target_only_f1: list[float]

    @property
    def dual_mean(self) -> float:
        return sum(self.dual_f1) / len(self.dual_f1)

    @property
    def target_only_mean(self) -> float:
        return sum(self.target_only_f1) / len(self.target_only_f1)

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "dual_f1": self.dual_f1,
            "target_only_f1": self.target_only_f1,
            "dual_mean": self.dual_mean,
            "target_only_mean": self.target_only_mean,
        }


def synthetic_splits(
    synth: SynthConfig,
    seed: int,
    val_fraction: float,
    test_fraction: float,
    prep: PrepConfig = DEFAULT_PREP,
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    samples = build_samples(gen_synthetic(replace(synth, seed=seed)), prep)
    return split_three(samples, seed, val_fraction, test_fraction)


def compare_context_usage(
    seeds: Sequence[int],
    synth: SynthConfig,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    val_fraction: float = 100 / 700,
    test_fraction: float = 200 / 700,
    vocab_size: int = 2000,
    progress_callback: Optional[ProgressCallback] = None,
) -> ContextComparison:
    """macro-F1 dual и target_only на одном и том же корпусе для каждого seed."""

    result = ContextComparison(seeds=list(seeds), dual_f1=[], target_only_f1=[])
    for done, seed in enumerate(seeds, start=1):
        train_samples, val_samples, test_samples = synthetic_splits(synth, seed, val_fraction, test_fraction)
        vocab = build_vocab(sample_texts(train_samples), vocab_size)
        config = replace(encoder_config, vocab_size=len(vocab), seed=seed)
        golds = [s.label for s in test_samples]
        flags = [s.is_contextual for s in test_samples]
        for architecture, scores in ((Architecture.DUAL, result.dual_f1),
                                     (Architecture.TARGET_ONLY, result.target_only_f1)):
            checkpoint = train(
                config, train_samples, val_samples,
                replace(train_config, architecture=architecture.value, seed=seed), vocab,
                progress_callback=lambda *_: None,
            )
            preds = checkpoint.predictor().predict_batch(test_samples)
            scores.append(evaluate(golds, [p.label for p in preds], flags).macro_f1)
        logger.info(
            f"seed={seed}: dual F1={result.dual_f1[-1]:.4f}, target_only F1={result.target_only_f1[-1]:.4f}"
        )
        if progress_callback:
            progress_callback("training", done, len(seeds))
    return result

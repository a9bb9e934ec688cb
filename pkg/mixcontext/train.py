"""
Дообучение (encoder, head): кросс-энтропия, Adam, не более max_epochs эпох,
выбор лучшей эпохи по минимальному val loss (ничья -> более ранняя эпоха).

Чекпойнты: `run/{name}/epoch{N}.ckpt` и `run/{name}/best.ckpt`,
журнал: `run/{name}/train_log.jsonl`.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .classify import Architecture, Head, ModelPredictor, init_head, represent, represent_backward
from .encoder import (
    EncoderConfig,
    EncoderState,
    GradCheckReport,
    finite_difference_check,
    init_encoder,
    randomized_state,
    read_container,
    toy_config,
    write_container,
)
from .errors import PipelineError, ValidationError
from .models import Label, Sample
from .rng import SplitMix64
from .tokenizer import Vocab, build_vocab

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "mixcontext-checkpoint"
LOG_NAME = "train_log.jsonl"
BEST_NAME = "best.ckpt"

STAGE_MESSAGES = {
    "init": "Инициализация модели",
    "epoch": "Эпоха обучения",
    "done": "Обучение завершено",
}


class TrainConfigError(ValidationError):
    """Raised when a training configuration or its inputs are invalid."""


class TrainingDivergedError(PipelineError):
    """Raised when the loss becomes non-finite."""

    def __init__(self, message: str, epoch: int, step: int | None = None) -> None:
        super().__init__(message)
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    architecture: str = Architecture.DUAL.value

    def validate(self) -> "TrainConfig":
        if self.max_epochs < 1:
            raise TrainConfigError(f"max_epochs должен быть >= 1, получено {self.max_epochs}")
        if self.batch_size < 1:
            raise TrainConfigError(f"batch_size должен быть >= 1, получено {self.batch_size}")
        if not self.learning_rate > 0:
            raise TrainConfigError(f"learning_rate должен быть > 0, получено {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise TrainConfigError("beta1 и beta2 должны быть в [0, 1)")
        try:
            Architecture(self.architecture)
        except ValueError:
            raise TrainConfigError(
                f"architecture: неизвестное значение {self.architecture!r} "
                f"(ожидается {[a.value for a in Architecture]})"
            ) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "TrainConfig":
        return cls(**dict(data or {}))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "train_loss": self.train_loss, "val_loss": self.val_loss,
             "seconds": round(self.seconds, 3)}
        )


@dataclass(eq=False)
class Checkpoint:
    encoder: EncoderState
    head: Head
    vocab: Vocab
    epoch: int
    val_loss: float
    train_config: TrainConfig = field(default_factory=TrainConfig)
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.train_config.architecture)

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.encoder.config

    def predictor(self, name: str = "model", architecture: str | None = None) -> ModelPredictor:
        return ModelPredictor(
            encoder=self.encoder,
            head=self.head,
            vocab=self.vocab,
            max_len=self.encoder.config.max_len,
            architecture=Architecture(architecture or self.architecture),
            name=name,
        )


# --- потери -------------------------------------------------------------------

def cross_entropy(logits: np.ndarray, gold: np.ndarray) -> tuple[float, np.ndarray]:
    """Средняя -log p(gold) (натуральный логарифм) и её градиент по логитам."""

    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(len(gold))
    loss = float(-log_probs[rows, gold].mean())
    d_logits = np.exp(log_probs)
    d_logits[rows, gold] -= 1.0
    return loss, d_logits / len(gold)


def _gold(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.label.index for s in samples], dtype=np.int64)


def batch_loss(state: EncoderState, head: Head, samples: Sequence[Sample], vocab: Vocab,
               max_len: int, architecture: Architecture) -> float:
    rep = represent(state, samples, vocab, max_len, architecture)
    loss, _ = cross_entropy(head.logits(rep.r), _gold(samples))
    return loss


def train_step(state: EncoderState, head: Head, samples: Sequence[Sample], vocab: Vocab,
               max_len: int, architecture: Architecture) -> tuple[float, dict[str, np.ndarray]]:
    """Прямой и обратный проход по батчу; градиенты энкодера и головы."""

    rep = represent(state, samples, vocab, max_len, architecture)
    loss, d_logits = cross_entropy(head.logits(rep.r), _gold(samples))
    head_grads, d_r = head.backward(rep.r, d_logits)
    grads = represent_backward(state, rep, d_r)
    grads.update(head_grads)
    return loss, grads


def evaluate_loss(model: Checkpoint | ModelPredictor, samples: Sequence[Sample]) -> float:
    if not samples:
        raise TrainConfigError("evaluate_loss: пустой набор примеров")
    predictor = model.predictor() if isinstance(model, Checkpoint) else model
    logits = predictor.logits_batch(samples).astype(np.float64)
    loss, _ = cross_entropy(logits, _gold(samples))
    return loss


# --- оптимизатор --------------------------------------------------------------

class Adam:
    """Adam без weight decay и warmup."""

    def __init__(self, config: TrainConfig) -> None:
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.epsilon = config.epsilon
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        updated = {}
        for name, grad in grads.items():
            value = params[name]
            grad = grad.astype(value.dtype, copy=False)
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(value)
                v = np.zeros_like(value)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.m[name], self.v[name] = m, v
            step = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)
            updated[name] = (value - step).astype(value.dtype)
        return updated


def _apply(state: EncoderState, head: Head, updated: dict[str, np.ndarray]) -> None:
    head.weight = updated.pop("head.weight", head.weight)
    head.bias = updated.pop("head.bias", head.bias)
    state.update(updated)


# --- цикл обучения ------------------------------------------------------------

def _check_inputs(encoder_config: EncoderConfig, train_samples, val_samples, vocab: Vocab) -> None:
    if not train_samples:
        raise TrainConfigError("пустой обучающий набор")
    if not val_samples:
        raise TrainConfigError("пустой валидационный набор")
    if encoder_config.vocab_size != len(vocab):
        raise TrainConfigError(
            f"encoder.vocab_size={encoder_config.vocab_size} не совпадает с размером словаря {len(vocab)}"
        )


def train(
    encoder_config: EncoderConfig,
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    train_config: TrainConfig,
    vocab: Vocab,
    output_dir: str | Path | None = None,
    progress_callback: Optional[Callable[[str, int, int], None]] = None,
) -> Checkpoint:
    """Обучает модель и возвращает чекпойнт лучшей по val loss эпохи."""

    encoder_config.validate()
    train_config.validate()
    _check_inputs(encoder_config, train_samples, val_samples, vocab)
    architecture = Architecture(train_config.architecture)
    max_len = encoder_config.max_len

    if progress_callback:
        progress_callback("init", 0, train_config.max_epochs)
    state = init_encoder(encoder_config)
    head = init_head(encoder_config.hidden, encoder_config.seed)
    optimizer = Adam(train_config)
    rng = SplitMix64(train_config.seed)

    out_dir = Path(output_dir) if output_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / LOG_NAME).write_text("", encoding="utf-8")

    logger.info(
        "▶️ Обучение: архитектура=%s, train=%s, val=%s, эпох<=%s, batch=%s",
        architecture.value, len(train_samples), len(val_samples),
        train_config.max_epochs, train_config.batch_size,
    )

    history: list[EpochRecord] = []
    best: Checkpoint | None = None
    epochs = range(1, train_config.max_epochs + 1)
    iterator = epochs if progress_callback else tqdm(epochs, desc="Обучение", unit="эпоха")
    for epoch in iterator:
        started = time.perf_counter()
        order = list(range(len(train_samples)))
        rng.shuffle(order)

        total = 0.0
        for step, start in enumerate(range(0, len(order), train_config.batch_size)):
            batch = [train_samples[i] for i in order[start:start + train_config.batch_size]]
            loss, grads = train_step(state, head, batch, vocab, max_len, architecture)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss стал {loss} на эпохе {epoch}, шаг {step}; уменьшите learning_rate",
                    epoch, step,
                )
            params = {**state.params, **head.params()}
            _apply(state, head, optimizer.step(params, grads))
            total += loss * len(batch)

        train_loss = total / len(train_samples)
        val_loss = evaluate_loss(
            ModelPredictor(state, head, vocab, max_len, architecture), val_samples
        )
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(f"val loss стал {val_loss} на эпохе {epoch}", epoch)

        record = EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - started)
        history.append(record)
        snapshot = Checkpoint(state.copy(), head.copy(), vocab, epoch, val_loss, train_config)
        if best is None or val_loss < best.val_loss:
            best = snapshot
        if out_dir is not None:
            save_checkpoint(snapshot, out_dir / f"epoch{epoch}.ckpt")
            with open(out_dir / LOG_NAME, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")

        logger.info("Эпоха %s: train_loss=%.4f val_loss=%.4f", epoch, train_loss, val_loss)
        if progress_callback:
            progress_callback("epoch", epoch, train_config.max_epochs)

    best.history = history
    if out_dir is not None:
        save_checkpoint(best, out_dir / BEST_NAME)
    logger.info("✅ Лучшая эпоха: %s (val_loss=%.4f)", best.epoch, best.val_loss)
    if progress_callback:
        progress_callback("done", train_config.max_epochs, train_config.max_epochs)
    return best


# --- чекпойнты ----------------------------------------------------------------

def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    meta = {
        "kind": CHECKPOINT_KIND,
        "encoder": checkpoint.encoder.config.to_dict(),
        "train": checkpoint.train_config.to_dict(),
        "vocab": list(checkpoint.vocab.tokens),
        "epoch": checkpoint.epoch,
        "val_loss": float(checkpoint.val_loss),
    }
    tensors = {**checkpoint.encoder.params, **checkpoint.head.params()}
    return write_container(path, meta, tensors)


def load_checkpoint(path: str | Path) -> Checkpoint:
    meta, tensors = read_container(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise TrainConfigError(f"{path}: не чекпойнт модели (kind={meta.get('kind')!r})")
    config = EncoderConfig.from_dict(meta["encoder"]).validate()
    head = Head(weight=tensors.pop("head.weight"), bias=tensors.pop("head.bias"))
    return Checkpoint(
        encoder=EncoderState(config, tensors),
        head=head,
        vocab=Vocab(meta["vocab"]),
        epoch=int(meta["epoch"]),
        val_loss=float(meta["val_loss"]),
        train_config=TrainConfig.from_dict(meta["train"]),
    )


def read_train_log(path: str | Path) -> list[EpochRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EpochRecord(**json.loads(line)))
    return records


# --- проверка градиентов конвейера -------------------------------------------

GRADCHECK_TEXTS = ("ab ba", "abc cab", "b a c", "ca")


def _gradcheck_samples() -> list[Sample]:
    return [
        Sample("g0", "ab ba", Label.HOF, context_text="abc cab"),
        Sample("g1", "b a c", Label.NOT),
        Sample("g2", "ca", Label.NOT, context_text="ca"),
        Sample("g3", "abc", Label.HOF, context_text="b"),
    ]


def check_pipeline_gradients(
    config: EncoderConfig | None = None,
    tolerance: float = 1e-4,
    architecture: str = Architecture.DUAL.value,
    n_coords: int = 200,
    seed: int = 0,
    corrupt: str | None = None,
) -> GradCheckReport:
    """Конечные разности для encoder + head + cross-entropy (float64)."""

    architecture = Architecture(architecture)
    vocab = build_vocab(GRADCHECK_TEXTS, target_size=24)
    config = replace(config or toy_config(max_len=10), vocab_size=len(vocab)).validate()
    samples = _gradcheck_samples()

    state = randomized_state(config, seed)
    rng = np.random.default_rng(seed + 3)
    head = Head(weight=rng.normal(0.0, 0.3, (config.hidden, 2)), bias=rng.normal(0.0, 0.1, 2))

    _, analytic = train_step(state, head, samples, vocab, config.max_len, architecture)
    params = {**state.params, **head.params()}
    report = finite_difference_check(
        params,
        analytic,
        lambda: batch_loss(state, head, samples, vocab, config.max_len, architecture),
        tolerance=tolerance,
        n_coords=n_coords,
        seed=seed,
        corrupt=corrupt,
    )
    logger.info("Проверка градиентов конвейера (%s): %s", architecture.value, report.summary())
    return report

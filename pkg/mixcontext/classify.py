"""
Слой решения: голова над [CLS], одиночный и двойной энкодер, словарное
переопределение и ансамбли.

single      — [CLS] контекст [SEP] цель [SEP], один [CLS]-вектор;
dual        — контекст и цель кодируются отдельно, [CLS]-векторы усредняются;
target_only — только цель (абляция без контекста).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .encoder import EncoderState, SequenceOutput, backward, forward, truncated_normal
from .errors import ValidationError
from .models import Label, Prediction, Sample, Source, label_from_probs, softmax
from .tokenizer import Encoding, Vocab, encode_pair, encode_single, stack_encodings

logger = logging.getLogger(__name__)

DEMO_LEXICON_PATH = Path(__file__).parent / "data" / "demo_lexicon.txt"
PREDICT_CHUNK = 64


class Architecture(str, Enum):
    SINGLE = "single"
    DUAL = "dual"
    TARGET_ONLY = "target_only"


class LexiconError(ValidationError):
    """Raised when a lexicon file or entry is invalid."""


class EnsembleError(ValidationError):
    """Raised when an ensemble cannot be formed."""


@dataclass
class Head:
    """Плотный слой hidden -> 2 над представлением r."""

    weight: np.ndarray
    bias: np.ndarray

    def logits(self, r: np.ndarray) -> np.ndarray:
        return r @ self.weight + self.bias

    def backward(self, r: np.ndarray, d_logits: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        grads = {"head.weight": r.T @ d_logits, "head.bias": d_logits.sum(axis=0)}
        return grads, d_logits @ self.weight.T

    def params(self) -> dict[str, np.ndarray]:
        return {"head.weight": self.weight, "head.bias": self.bias}

    def copy(self) -> "Head":
        return Head(self.weight.copy(), self.bias.copy())

    def astype(self, dtype) -> "Head":
        return Head(self.weight.astype(dtype), self.bias.astype(dtype))


def init_head(hidden: int, seed: int, dtype=np.float32) -> Head:
    rng = np.random.default_rng([seed, 1])
    return Head(
        weight=truncated_normal(rng, (hidden, 2)).astype(dtype),
        bias=np.zeros(2, dtype=dtype),
    )


# --- представление ------------------------------------------------------------

def _encode_for(sample: Sample, vocab: Vocab, max_len: int, architecture: Architecture) -> Encoding:
    if architecture is Architecture.SINGLE and sample.is_contextual:
        return encode_pair(sample.context_text, sample.target_text, vocab, max_len)
    return encode_single(sample.target_text, vocab, max_len)


@dataclass
class Representation:
    """r для батча плюс всё, что нужно обратному проходу."""

    r: np.ndarray
    output: SequenceOutput
    context_rows: list[tuple[int, int]]
    size: int


def represent(
    state: EncoderState,
    samples: Sequence[Sample],
    vocab: Vocab,
    max_len: int,
    architecture: Architecture,
) -> Representation:
    """Один прямой проход на батч; в режиме dual контексты идут в тот же батч."""

    architecture = Architecture(architecture)
    if max_len > state.config.max_len:
        raise ValidationError(f"max_len={max_len} больше max_len энкодера ({state.config.max_len})")
    encodings = [_encode_for(s, vocab, max_len, architecture) for s in samples]
    context_rows: list[tuple[int, int]] = []
    if architecture is Architecture.DUAL:
        for index, sample in enumerate(samples):
            if sample.is_contextual:
                context_rows.append((index, len(encodings)))
                encodings.append(encode_single(sample.context_text, vocab, max_len))

    output = forward(state, stack_encodings(encodings))
    cls = output.cls_vectors
    r = cls[: len(samples)].copy()
    for target_row, context_row in context_rows:
        r[target_row] = (cls[target_row] + cls[context_row]) / 2
    return Representation(r=r, output=output, context_rows=context_rows, size=len(samples))


def represent_backward(state: EncoderState, rep: Representation, d_r: np.ndarray) -> dict[str, np.ndarray]:
    """dL/dr -> градиенты энкодера; в dual каждая половина получает вес 1/2."""

    hidden = rep.output.hidden_states
    d_hidden = np.zeros_like(hidden)
    d_hidden[: rep.size, 0, :] = d_r
    for target_row, context_row in rep.context_rows:
        d_hidden[target_row, 0, :] = d_r[target_row] / 2
        d_hidden[context_row, 0, :] = d_r[target_row] / 2
    return backward(state, rep.output.tape, d_hidden)


# --- предсказатели ------------------------------------------------------------

class Predictor(Protocol):
    name: str

    def predict(self, sample: Sample) -> Prediction: ...

    def predict_batch(self, samples: Sequence[Sample]) -> list[Prediction]: ...


@dataclass(frozen=True, eq=False)
class ModelPredictor:
    encoder: EncoderState
    head: Head
    vocab: Vocab
    max_len: int
    architecture: Architecture = Architecture.DUAL
    name: str = "model"

    def logits_batch(self, samples: Sequence[Sample]) -> np.ndarray:
        if not samples:
            return np.zeros((0, 2), dtype=self.encoder.dtype)
        chunks = []
        for start in range(0, len(samples), PREDICT_CHUNK):
            rep = represent(self.encoder, samples[start:start + PREDICT_CHUNK], self.vocab,
                            self.max_len, self.architecture)
            chunks.append(self.head.logits(rep.r))
        return np.concatenate(chunks, axis=0)

    def predict_batch(self, samples: Sequence[Sample]) -> list[Prediction]:
        logits = self.logits_batch(samples)
        probs = softmax(logits.astype(np.float64))
        return [
            Prediction(
                probs=(float(p[0]), float(p[1])),
                label=label_from_probs(p),
                source=Source.MODEL,
                logits=(float(z[0]), float(z[1])),
            )
            for p, z in zip(probs, logits)
        ]

    def predict(self, sample: Sample) -> Prediction:
        return self.predict_batch([sample])[0]


def single_encoder_predict(encoder: EncoderState, head: Head, sample: Sample, vocab: Vocab, max_len: int) -> Prediction:
    return ModelPredictor(encoder, head, vocab, max_len, Architecture.SINGLE).predict(sample)


def dual_encoder_predict(encoder: EncoderState, head: Head, sample: Sample, vocab: Vocab, max_len: int) -> Prediction:
    return ModelPredictor(encoder, head, vocab, max_len, Architecture.DUAL).predict(sample)


# --- словарь ------------------------------------------------------------------

@dataclass(frozen=True)
class Lexicon:
    words: frozenset[str]

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Lexicon":
        normalized = set()
        for word in words:
            word = word.strip().lower()
            if not word:
                continue
            if any(ch.isspace() for ch in word):
                raise LexiconError(f"слово лексикона содержит пробел: {word!r}")
            normalized.add(word)
        return cls(frozenset(normalized))

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.words


def load_lexicon(path: str | Path) -> Lexicon:
    """UTF-8, слово на строку; строки с '#' в начале — комментарии."""

    path = Path(path)
    if not path.exists():
        raise LexiconError(f"{path}: файл лексикона не найден")
    words = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if any(ch.isspace() for ch in line):
                raise LexiconError(f"{path}:{line_no}: слово лексикона содержит пробел: {line!r}")
            words.append(line)
    lexicon = Lexicon.from_words(words)
    logger.info("Лексикон: %s слов (%s)", len(lexicon), path)
    return lexicon


def demo_lexicon() -> Lexicon:
    return load_lexicon(DEMO_LEXICON_PATH)


LEXICON_PROBS = (0.0, 1.0)


def lexicon_classify(lexicon: Lexicon, sample: Sample) -> Optional[Prediction]:
    """Только по target_text: нижний регистр, split, снятие ведущих '#'."""

    for token in sample.target_text.lower().split():
        if token.lstrip("#") in lexicon.words:
            return Prediction(probs=LEXICON_PROBS, label=Label.HOF, source=Source.LEXICON)
    return None


def combined_predict(model_predictor: Predictor, lexicon: Optional[Lexicon], sample: Sample) -> Prediction:
    if lexicon is not None:
        hit = lexicon_classify(lexicon, sample)
        if hit is not None:
            return hit
    return model_predictor.predict(sample)


@dataclass(frozen=True, eq=False)
class CombinedPredictor:
    """Модель с необязательным словарным переопределением."""

    model: Predictor
    lexicon: Optional[Lexicon] = None
    name: str = "combined"

    def predict(self, sample: Sample) -> Prediction:
        return combined_predict(self.model, self.lexicon, sample)

    def predict_batch(self, samples: Sequence[Sample]) -> list[Prediction]:
        model_preds = self.model.predict_batch(samples)
        if self.lexicon is None:
            return model_preds
        results = []
        for sample, fallback in zip(samples, model_preds):
            hit = lexicon_classify(self.lexicon, sample)
            results.append(hit if hit is not None else fallback)
        return results


# --- ансамбли -----------------------------------------------------------------

AVERAGE_MODES = ("probs", "logits")


def _fuse(member_preds: Sequence[Prediction], average: str) -> Prediction:
    if average == "probs":
        probs = np.mean(np.array([p.probs for p in member_preds], dtype=np.float64), axis=0)
        logits = None
    elif average == "logits":
        if any(p.logits is None for p in member_preds):
            raise EnsembleError("усреднение логитов невозможно: у участника нет логитов (словарь?)")
        mean_logits = np.mean(np.array([p.logits for p in member_preds], dtype=np.float64), axis=0)
        probs = softmax(mean_logits)
        logits = (float(mean_logits[0]), float(mean_logits[1]))
    else:
        raise EnsembleError(f"неизвестный режим усреднения {average!r}, ожидается {AVERAGE_MODES}")
    return Prediction(
        probs=(float(probs[0]), float(probs[1])),
        label=label_from_probs(probs),
        source=Source.ENSEMBLE,
        logits=logits,
    )


def ensemble_predict(predictors: Sequence[Predictor], sample: Sample, average: str = "probs") -> Prediction:
    if not predictors:
        raise EnsembleError("ансамбль без участников")
    return _fuse([p.predict(sample) for p in predictors], average)


def ensemble_predict_batch(
    predictors: Sequence[Predictor], samples: Sequence[Sample], average: str = "probs"
) -> list[Prediction]:
    if not predictors:
        raise EnsembleError("ансамбль без участников")
    per_member = [p.predict_batch(samples) for p in predictors]
    return [_fuse(member_preds, average) for member_preds in zip(*per_member)]


@dataclass(frozen=True, eq=False)
class EnsemblePredictor:
    members: tuple
    average: str = "probs"
    name: str = "ensemble"

    def predict(self, sample: Sample) -> Prediction:
        return ensemble_predict(self.members, sample, self.average)

    def predict_batch(self, samples: Sequence[Sample]) -> list[Prediction]:
        return ensemble_predict_batch(self.members, samples, self.average)

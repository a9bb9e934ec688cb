from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class Label(str, Enum):
    """Бинарная метка задачи: NOT -> 0, HOF -> 1."""

    NOT = "NOT"
    HOF = "HOF"

    @property
    def index(self) -> int:
        return 0 if self is Label.NOT else 1

    @classmethod
    def from_index(cls, index: int) -> "Label":
        if index not in (0, 1):
            raise ValueError(f"неизвестный индекс метки: {index}")
        return cls.NOT if index == 0 else cls.HOF

    @classmethod
    def parse(cls, raw: str) -> "Label":
        try:
            return cls(str(raw).strip().upper())
        except ValueError:
            raise ValueError(f"неизвестная метка {raw!r} (ожидается NOT или HOF)") from None


class Level(str, Enum):
    TWEET = "tweet"
    COMMENT = "comment"
    REPLY = "reply"


class Source(str, Enum):
    MODEL = "model"
    LEXICON = "lexicon"
    ENSEMBLE = "ensemble"


@dataclass(frozen=True)
class ThreadNode:
    id: str
    text: str
    level: Level
    label: Label
    parent_id: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "level": self.level.value,
            "parent_id": self.parent_id,
            "text": self.text,
            "label": self.label.value,
        }


@dataclass(frozen=True)
class Sample:
    """Развёрнутый обучающий пример (контекст, цель, метка)."""

    id: str
    target_text: str
    label: Label
    context_text: Optional[str] = None

    @property
    def is_contextual(self) -> bool:
        return self.context_text is not None


@dataclass(frozen=True)
class Prediction:
    probs: tuple[float, float]
    label: Label
    source: Source
    logits: Optional[tuple[float, float]] = None

    @property
    def p_not(self) -> float:
        return self.probs[0]

    @property
    def p_hof(self) -> float:
        return self.probs[1]

    def to_record(self, sample_id: str) -> dict:
        return {
            "id": sample_id,
            "label": self.label.value,
            "p_not": float(self.probs[0]),
            "p_hof": float(self.probs[1]),
            "source": self.source.value,
        }


TIE_TOLERANCE = 1e-9


def label_from_probs(probs) -> Label:
    """argmax с правилом ничьей: |p0 - p1| < 1e-9 -> HOF."""

    p_not, p_hof = float(probs[0]), float(probs[1])
    if abs(p_not - p_hof) < TIE_TOLERANCE:
        return Label.HOF
    return Label.HOF if p_hof > p_not else Label.NOT


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)

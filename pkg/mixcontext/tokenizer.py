"""
Упрощённый WordPiece.

Словарь: спецтокены [PAD]=0, [UNK]=1, [CLS]=2, [SEP]=3, затем каждый символ
алфавита корпуса и его продолжение "##символ" (по кодовой точке), затем
самые частые целые слова и внутрисловные фрагменты "##..." до target_size.
Ничья по частоте разрешается лексикографически.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
CONTINUATION = "##"

DEFAULT_VOCAB_SIZE = 8000


class VocabError(ValidationError):
    """Raised when a vocabulary cannot be built or loaded."""


class EncodingError(ValidationError):
    """Raised for invalid encode/decode arguments."""


class Vocab:
    """Неизменяемое взаимно-однозначное отображение токен <-> id."""

    def __init__(self, tokens: Sequence[str]) -> None:
        tokens = tuple(tokens)
        if tokens[:4] != SPECIALS:
            raise VocabError(f"первые четыре токена должны быть {list(SPECIALS)}")
        token_to_id: dict[str, int] = {}
        for index, token in enumerate(tokens):
            if not token or any(ch.isspace() for ch in token):
                raise VocabError(f"токен #{index} пуст или содержит пробел: {token!r}")
            if token in token_to_id:
                raise VocabError(f"повторяющийся токен {token!r} (id {index})")
            token_to_id[token] = index
        self._tokens = tokens
        self._token_to_id = token_to_id
        self.max_piece_len = max(
            len(t) - (len(CONTINUATION) if t.startswith(CONTINUATION) else 0)
            for t in tokens
        )

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(self._tokens)

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, index: int) -> str:
        if not 0 <= index < len(self._tokens):
            raise EncodingError(f"id {index} вне диапазона словаря [0, {len(self._tokens)})")
        return self._tokens[index]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for token in self._tokens:
                fh.write(token + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        path = Path(path)
        if not path.exists():
            raise VocabError(f"{path}: файл словаря не найден")
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        try:
            return cls(tokens)
        except VocabError as exc:
            raise VocabError(f"{path}: {exc.message}") from None


def _words(texts: Iterable[str]) -> Counter:
    words: Counter = Counter()
    for text in texts:
        words.update(text.split())
    return words


def build_vocab(texts: Iterable[str], target_size: int = DEFAULT_VOCAB_SIZE) -> Vocab:
    words = _words(texts)
    alphabet = sorted({ch for word in words for ch in word})
    base = list(SPECIALS) + alphabet + [CONTINUATION + ch for ch in alphabet]
    if target_size < len(base):
        raise VocabError(
            f"target_size={target_size} меньше минимума {len(base)} "
            f"для алфавита из {len(alphabet)} символов"
        )

    candidates: Counter = Counter()
    for word, count in words.items():
        # Слова вида "##x" уже покрыты символами и продолжениями.
        if len(word) >= 2 and word not in SPECIALS and not word.startswith(CONTINUATION):
            candidates[word] += count
        for start in range(1, len(word)):
            for end in range(start + 2, len(word) + 1):
                candidates[CONTINUATION + word[start:end]] += count

    ranked = sorted(candidates.items(), key=lambda item: (-item[1], item[0]))
    extra = [token for token, _ in ranked[: target_size - len(base)]]
    vocab = Vocab(base + extra)
    logger.info("Словарь: %s токенов (алфавит %s символов)", len(vocab), len(alphabet))
    return vocab


def _word_pieces(word: str, vocab: Vocab) -> list[str]:
    pieces: list[str] = []
    start = 0
    while start < len(word):
        prefix = CONTINUATION if start else ""
        end = min(len(word), start + vocab.max_piece_len)
        piece = None
        while end > start:
            candidate = prefix + word[start:end]
            if not prefix and candidate.startswith(CONTINUATION):
                end -= 1
                continue
            if candidate in vocab and candidate not in SPECIALS:
                piece = candidate
                break
            end -= 1
        if piece is None:
            pieces.append(UNK)
            start += 1
        else:
            pieces.append(piece)
            start = end
    return pieces


def tokenize(text: str, vocab: Vocab) -> list[str]:
    """Жадный longest-match слева для каждого слова."""

    tokens: list[str] = []
    for word in text.split():
        tokens.extend(_word_pieces(word, vocab))
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    words: list[str] = []
    for token in tokens:
        if token.startswith(CONTINUATION) and words:
            words[-1] += token[len(CONTINUATION):]
        else:
            words.append(token)
    return " ".join(words)


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    segments: tuple[int, ...]
    mask: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def to_json(self) -> str:
        return json.dumps(
            {"ids": list(self.ids), "segments": list(self.segments), "mask": list(self.mask)},
            ensure_ascii=False,
        )


def _pad(ids: list[int], segments: list[int], max_len: int) -> Encoding:
    real = len(ids)
    padding = max_len - real
    return Encoding(
        ids=tuple(ids + [PAD_ID] * padding),
        segments=tuple(segments + [0] * padding),
        mask=tuple([1] * real + [0] * padding),
    )


def encode_single(text: str, vocab: Vocab, max_len: int) -> Encoding:
    if max_len < 3:
        raise EncodingError(f"encode_single: max_len должен быть >= 3, получено {max_len}")
    pieces = tokenize(text, vocab)[: max_len - 2]
    ids = [CLS_ID] + [vocab.id_of(t) for t in pieces] + [SEP_ID]
    return _pad(ids, [0] * len(ids), max_len)


def encode_pair(context: str, target: str, vocab: Vocab, max_len: int) -> Encoding:
    """[CLS] context [SEP] target [SEP]; обрезка longest-first, ничья режет контекст."""

    if max_len < 5:
        raise EncodingError(f"encode_pair: max_len должен быть >= 5, получено {max_len}")
    if context is None:
        raise EncodingError("encode_pair: контекст отсутствует, используйте encode_single")
    ctx = tokenize(context, vocab)
    tgt = tokenize(target, vocab)
    budget = max_len - 3
    while len(ctx) + len(tgt) > budget:
        if len(ctx) >= len(tgt):
            ctx.pop()
        else:
            tgt.pop()
    first = [CLS_ID] + [vocab.id_of(t) for t in ctx] + [SEP_ID]
    second = [vocab.id_of(t) for t in tgt] + [SEP_ID]
    return _pad(first + second, [0] * len(first) + [1] * len(second), max_len)


def decode(ids: Iterable[int], vocab: Vocab) -> list[str]:
    tokens = []
    for index in ids:
        index = int(index)
        if index == PAD_ID:
            continue
        tokens.append(vocab.token_of(index))
    return tokens


@dataclass(frozen=True)
class EncodedBatch:
    ids: np.ndarray
    segments: np.ndarray
    mask: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])

    @property
    def length(self) -> int:
        return int(self.ids.shape[1])


def stack_encodings(encodings: Sequence[Encoding]) -> EncodedBatch:
    if not encodings:
        raise EncodingError("пустой батч")
    lengths = {len(e) for e in encodings}
    if len(lengths) != 1:
        raise EncodingError(f"кодировки разной длины в одном батче: {sorted(lengths)}")
    return EncodedBatch(
        ids=np.array([e.ids for e in encodings], dtype=np.int64),
        segments=np.array([e.segments for e in encodings], dtype=np.int64),
        mask=np.array([e.mask for e in encodings], dtype=np.int64),
    )

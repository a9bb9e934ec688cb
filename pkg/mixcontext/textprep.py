"""
Предобработка твитов.

Порядок шагов: URL -> упоминания -> фильтр алфавита -> схлопывание пробелов.
URL и упоминания удаляются до фильтра алфавита, иначе удаление символов
вроде "://" разрушило бы шаблоны. Фильтр может склеить новый URL или
упоминание из обрывков ("http\\x01://x"), поэтому конвейер повторяется до
неподвижной точки; за счёт этого preprocess идемпотентен.
"""

import re
from dataclasses import dataclass, field
from functools import lru_cache

from .errors import ValidationError

# http(s)://..., www...., голый t.co/...
DEFAULT_URL_PATTERN = r"https?://\S+|www\.\S+|\bt\.co/\S*"
# "@" и одна или более букв/цифр/подчёркиваний (Unicode \w)
DEFAULT_MENTION_PATTERN = r"@\w+"

CANONICAL_BLOCKS: tuple[tuple[int, int], ...] = (
    (0x0020, 0x007E),    # Basic Latin, печатные
    (0x0900, 0x097F),    # Devanagari
    (0x1F300, 0x1F5FF),  # символы и пиктограммы
    (0x1F600, 0x1F64F),  # эмотиконы
    (0x1F680, 0x1F6FF),  # транспорт и карты
    (0x1F900, 0x1F9FF),  # дополнительные символы и пиктограммы
    (0x2600, 0x26FF),    # разные символы
    (0x2700, 0x27BF),    # dingbats
    (0xFE0F, 0xFE0F),    # variation selector-16
    (0x200D, 0x200D),    # zero-width joiner
)

REQUIRED_BLOCKS = ((0x0020, 0x007E), (0x0900, 0x097F))

_WHITESPACE_RUN = re.compile(r"\s+")


class PrepConfigError(ValidationError, ValueError):
    """Raised when a preprocessing configuration breaks its invariants."""


@dataclass(frozen=True)
class PrepConfig:
    url_pattern: str = DEFAULT_URL_PATTERN
    mention_pattern: str = DEFAULT_MENTION_PATTERN
    allowed_blocks: tuple[tuple[int, int], ...] = field(default=CANONICAL_BLOCKS)
    collapse_whitespace: bool = True

    def validate(self) -> "PrepConfig":
        blocks = tuple(tuple(block) for block in self.allowed_blocks)
        for low, high in REQUIRED_BLOCKS:
            if not any(lo <= low and high <= hi for lo, hi in blocks):
                raise PrepConfigError(
                    f"allowed_blocks должен включать диапазон {low:04X}-{high:04X}"
                )
        if not self.collapse_whitespace:
            raise PrepConfigError("collapse_whitespace всегда true")
        for name in ("url_pattern", "mention_pattern"):
            try:
                re.compile(getattr(self, name))
            except re.error as exc:
                raise PrepConfigError(f"{name}: некорректное регулярное выражение ({exc})") from exc
        return self

    def to_dict(self) -> dict:
        return {
            "url_pattern": self.url_pattern,
            "mention_pattern": self.mention_pattern,
            "allowed_blocks": [[f"{lo:04X}", f"{hi:04X}"] for lo, hi in self.allowed_blocks],
            "collapse_whitespace": self.collapse_whitespace,
        }

    @classmethod
    def from_dict(cls, data: dict | None) -> "PrepConfig":
        data = dict(data or {})
        blocks = data.pop("allowed_blocks", None)
        if blocks is not None:
            data["allowed_blocks"] = tuple(
                (_parse_codepoint(lo), _parse_codepoint(hi)) for lo, hi in blocks
            )
        return cls(**data).validate()


DEFAULT_PREP = PrepConfig()


def _parse_codepoint(value) -> int:
    if isinstance(value, int):
        return value
    return int(str(value).upper().removeprefix("U+").removeprefix("0X"), 16)


@lru_cache(maxsize=16)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


def _is_allowed(codepoint: int, blocks: tuple[tuple[int, int], ...]) -> bool:
    for low, high in blocks:
        if low <= codepoint <= high:
            return True
    return False


def strip_urls(text: str, config: PrepConfig = DEFAULT_PREP) -> str:
    return _compiled(config.url_pattern).sub("", text)


def strip_mentions(text: str, config: PrepConfig = DEFAULT_PREP) -> str:
    return _compiled(config.mention_pattern).sub("", text)


def filter_charset(text: str, config: PrepConfig = DEFAULT_PREP) -> str:
    """Удаляет кодовые точки вне разрешённых блоков.

    Любой пробельный символ (таб, перевод строки, NBSP) заменяется обычным
    пробелом, чтобы не склеивать соседние слова.
    """
    kept = []
    for char in text:
        if char.isspace():
            kept.append(" ")
        elif _is_allowed(ord(char), config.allowed_blocks):
            kept.append(char)
    return "".join(kept)


def _single_pass(text: str, config: PrepConfig) -> str:
    text = strip_urls(text, config)
    text = strip_mentions(text, config)
    text = filter_charset(text, config)
    return _WHITESPACE_RUN.sub(" ", text).strip()


def preprocess(text: str, config: PrepConfig = DEFAULT_PREP) -> str:
    """Полный конвейер; повторяется, пока текст меняется."""

    current = _single_pass(text, config)
    while True:
        following = _single_pass(current, config)
        if following == current:
            return current
        current = following

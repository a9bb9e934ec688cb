"""
Контекстная классификация hate speech для code-mixed текстов (хинглиш).

Пакет собирает весь конвейер: предобработка, построение контекста треда,
словарь WordPiece, небольшой трансформер с ручным обратным проходом,
классификаторы single/dual encoder, словарь ругательств, ансамбли и метрики.
"""

import logging
import os

__version__ = "0.3.0"

LOG_ENV_VAR = "MIXCONTEXT_LOG"
LOG_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"


def configure_logging(level: str | None = None) -> int:
    """Настраивает корневой логгер; уровень берётся из MIXCONTEXT_LOG."""

    raw_level = (level or os.environ.get(LOG_ENV_VAR) or "INFO").strip().upper()
    resolved = logging.getLevelName(raw_level)
    if not isinstance(resolved, int):
        resolved = logging.INFO

    logging.basicConfig(
        level=resolved,
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler()
        ],
        force=True,
    )
    return resolved

"""
Треды -> обучающие примеры.

Иерархия: tweet -> comment -> reply. Контекст комментария — текст его
твита; контекст ответа — "твит + пробел + комментарий" (склейка на сыром
тексте, затем единая предобработка). Разделитель [SEP] появляется позже,
в токенизаторе.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import pandas as pd

from .errors import ValidationError
from .models import Label, Level, Sample, ThreadNode
from .rng import SplitMix64
from .textprep import DEFAULT_PREP, PrepConfig, preprocess

logger = logging.getLogger(__name__)

TSV_COLUMNS = ["id", "level", "parent_id", "text", "label"]
FORMATS = ("jsonl", "tsv")


class CorpusError(ValidationError):
    """Raised when a thread corpus is malformed or inconsistent."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class SplitError(ValidationError):
    """Raised when a corpus cannot be partitioned."""


class SynthConfigError(ValidationError):
    """Raised when a synthetic corpus configuration is infeasible."""


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = "tsv" if path.suffix.lower() in {".tsv", ".tab"} else "jsonl"
    if fmt not in FORMATS:
        raise CorpusError(f"неизвестный формат {fmt!r} (ожидается jsonl или tsv)", str(path))
    return fmt


def _node_from_record(record: dict, path: str, line: int) -> ThreadNode:
    if not isinstance(record, dict):
        raise CorpusError("запись должна быть JSON-объектом", path, line)
    for key in ("id", "text", "level", "label"):
        if key not in record or record[key] is None:
            raise CorpusError(f"отсутствует поле {key!r}", path, line)
    try:
        level = Level(str(record["level"]).strip().lower())
    except ValueError:
        raise CorpusError(f"неизвестный уровень {record['level']!r}", path, line) from None
    try:
        label = Label.parse(record["label"])
    except ValueError as exc:
        raise CorpusError(str(exc), path, line) from None

    parent_id = record.get("parent_id")
    if parent_id is not None:
        parent_id = str(parent_id).strip() or None

    return ThreadNode(
        id=str(record["id"]).strip(),
        text=str(record["text"]),
        level=level,
        label=label,
        parent_id=parent_id,
    )


def _read_jsonl(path: Path) -> tuple[list[ThreadNode], dict[str, int]]:
    nodes: list[ThreadNode] = []
    lines: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"ошибка разбора JSON: {exc.msg}", str(path), line_no) from exc
            node = _node_from_record(record, str(path), line_no)
            nodes.append(node)
            lines.setdefault(node.id, line_no)
    return nodes, lines


def _read_tsv(path: Path) -> tuple[list[ThreadNode], dict[str, int]]:
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            header=None,
            dtype=str,
            quoting=csv.QUOTE_NONE,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        return [], {}
    except pd.errors.ParserError as exc:
        raise CorpusError(f"ошибка разбора TSV: {exc}", str(path)) from exc

    nodes: list[ThreadNode] = []
    lines: dict[str, int] = {}
    for offset, row in enumerate(frame.itertuples(index=False)):
        line_no = offset + 1
        # Недостающие поля pandas заполняет NaN.
        values = [value for value in row if isinstance(value, str)]
        if all(not value.strip() for value in values):
            continue
        if len(values) != len(TSV_COLUMNS):
            raise CorpusError(
                f"ожидается {len(TSV_COLUMNS)} колонок, получено {len(values)}", str(path), line_no
            )
        if offset == 0 and [value.strip() for value in values] == TSV_COLUMNS:
            continue
        record = dict(zip(TSV_COLUMNS, values))
        node = _node_from_record(record, str(path), line_no)
        nodes.append(node)
        lines.setdefault(node.id, line_no)
    return nodes, lines


def validate_threads(
    nodes: Sequence[ThreadNode],
    path: str | None = None,
    lines: dict[str, int] | None = None,
) -> dict[str, ThreadNode]:
    """Проверяет ссылочную целостность и иерархию; возвращает индекс по id."""

    lines = lines or {}
    index: dict[str, ThreadNode] = {}
    for node in nodes:
        if not node.id:
            raise CorpusError("пустой id", path, lines.get(node.id))
        if node.id in index:
            raise CorpusError(f"повторяющийся id {node.id!r}", path, lines.get(node.id))
        index[node.id] = node

    expected_parent = {Level.COMMENT: Level.TWEET, Level.REPLY: Level.COMMENT}
    for node in nodes:
        line = lines.get(node.id)
        if node.level is Level.TWEET:
            if node.parent_id is not None:
                raise CorpusError(f"у твита {node.id!r} не может быть parent_id", path, line)
            continue
        if node.parent_id is None:
            raise CorpusError(f"у узла {node.id!r} уровня {node.level.value} нет parent_id", path, line)
        parent = index.get(node.parent_id)
        if parent is None:
            raise CorpusError(
                f"parent_id {node.parent_id!r} узла {node.id!r} не найден", path, line
            )
        if parent.level is not expected_parent[node.level]:
            raise CorpusError(
                f"родитель узла {node.id!r} ({node.level.value}) должен быть "
                f"{expected_parent[node.level].value}, а не {parent.level.value}",
                path,
                line,
            )
    return index


def load_threads(path: str | Path, fmt: str | None = None) -> list[ThreadNode]:
    """Читает корпус тредов (JSONL или TSV) в порядке файла."""

    path = Path(path)
    if not path.exists():
        raise CorpusError("файл не найден", str(path))
    fmt = _infer_format(path, fmt)
    if fmt == "jsonl":
        nodes, lines = _read_jsonl(path)
    else:
        nodes, lines = _read_tsv(path)
    validate_threads(nodes, str(path), lines)
    logger.info("Загружено узлов: %s (%s)", len(nodes), path)
    return nodes


def save_threads(nodes: Iterable[ThreadNode], path: str | Path, fmt: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = _infer_format(path, fmt)
    nodes = list(nodes)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "jsonl":
            for node in nodes:
                fh.write(json.dumps(node.to_record(), ensure_ascii=False) + "\n")
        else:
            for node in nodes:
                if "\t" in node.text or "\n" in node.text:
                    raise CorpusError(f"текст узла {node.id!r} содержит таб или перевод строки", str(path))
                fh.write("\t".join([
                    node.id, node.level.value, node.parent_id or "", node.text, node.label.value,
                ]) + "\n")
    return path


def build_samples(nodes: Sequence[ThreadNode], config: PrepConfig = DEFAULT_PREP) -> list[Sample]:
    """Один Sample на узел; контекст собирается на сыром тексте, затем preprocess."""

    index = validate_threads(nodes)
    samples: list[Sample] = []
    for node in nodes:
        if node.level is Level.TWEET:
            context = None
        elif node.level is Level.COMMENT:
            context = preprocess(index[node.parent_id].text, config)
        else:
            comment = index[node.parent_id]
            tweet = index[comment.parent_id]
            context = preprocess(tweet.text + " " + comment.text, config)
        samples.append(
            Sample(
                id=node.id,
                target_text=preprocess(node.text, config),
                label=node.label,
                context_text=context,
            )
        )
    return samples


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    val_fraction: float = 0.1
    stratify: bool = False

    def validate(self) -> "SplitSpec":
        if not 0.0 < self.val_fraction < 1.0:
            raise SplitError(f"val_fraction должен быть в (0, 1), получено {self.val_fraction}")
        return self


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _val_count(fraction: float, total: int) -> int:
    # обе части непустые
    return min(max(_round_half_up(fraction * total), 1), total - 1)


def split_train_val(samples: Sequence[Sample], spec: SplitSpec) -> tuple[list[Sample], list[Sample]]:
    """Детерминированный сплит через SplitMix64(seed); порядок внутри частей — исходный."""

    spec.validate()
    total = len(samples)
    if total < 2:
        raise SplitError(f"для сплита нужно минимум 2 примера, получено {total}")

    rng = SplitMix64(spec.seed)
    if spec.stratify:
        val_indices: set[int] = set()
        for label in (Label.NOT, Label.HOF):
            members = [i for i, sample in enumerate(samples) if sample.label is label]
            rng.shuffle(members)
            val_indices.update(members[:_round_half_up(spec.val_fraction * len(members))])
        if not val_indices or len(val_indices) == total:
            raise SplitError("стратифицированный сплит дал пустую часть")
    else:
        order = list(range(total))
        rng.shuffle(order)
        val_indices = set(order[:_val_count(spec.val_fraction, total)])

    train = [sample for i, sample in enumerate(samples) if i not in val_indices]
    val = [sample for i, sample in enumerate(samples) if i in val_indices]
    return train, val


def split_three(
    samples: Sequence[Sample],
    seed: int,
    val_fraction: float,
    test_fraction: float,
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """train / val / test одним перемешиванием."""

    total = len(samples)
    if total < 3:
        raise SplitError(f"для трёх частей нужно минимум 3 примера, получено {total}")
    if val_fraction <= 0 or test_fraction <= 0 or val_fraction + test_fraction >= 1:
        raise SplitError("доли val/test должны быть положительными и в сумме меньше 1")

    order = list(range(total))
    SplitMix64(seed).shuffle(order)
    n_val = max(_round_half_up(val_fraction * total), 1)
    n_test = max(_round_half_up(test_fraction * total), 1)
    if n_val + n_test >= total:
        raise SplitError("на обучающую часть не осталось примеров")
    val_ids = set(order[:n_val])
    test_ids = set(order[n_val:n_val + n_test])
    train = [s for i, s in enumerate(samples) if i not in val_ids and i not in test_ids]
    val = [s for i, s in enumerate(samples) if i in val_ids]
    test = [s for i, s in enumerate(samples) if i in test_ids]
    return train, val, test


@dataclass(frozen=True)
class CorpusStats:
    total_words: int
    max_words_per_sample: int
    avg_words_per_sample: float
    unique_tokens: int
    sample_count: int = 0

    def as_row(self) -> dict:
        return {
            "Total words": self.total_words,
            "Max word length": self.max_words_per_sample,
            "Avg word count": round(self.avg_words_per_sample, 2),
            "Unique tokens": self.unique_tokens,
        }


def corpus_stats(samples: Sequence[Sample]) -> CorpusStats:
    """Статистика по target_text: слова — куски между пробелами, регистр учитывается."""

    counts = []
    vocabulary: set[str] = set()
    for sample in samples:
        words = sample.target_text.split()
        counts.append(len(words))
        vocabulary.update(words)
    if not counts:
        return CorpusStats(0, 0, 0.0, 0, 0)
    total = sum(counts)
    return CorpusStats(
        total_words=total,
        max_words_per_sample=max(counts),
        avg_words_per_sample=total / len(counts),
        unique_tokens=len(vocabulary),
        sample_count=len(counts),
    )


# --- синтетический корпус -------------------------------------------------

def _has_devanagari(word: str) -> bool:
    return any(0x0900 <= ord(ch) <= 0x097F for ch in word)


@dataclass(frozen=True)
class SynthConfig:
    """Параметры синтетического корпуса с «посаженными» словами лексикона."""

    n_threads: int = 50
    profane_lexicon: tuple[str, ...] = ()
    class_balance: float = 0.5
    vocab_pool: tuple[str, ...] = ()
    seed: int = 0
    agreement_cues: tuple[str, ...] = ()
    agreement_rate: float = 0.0
    max_comments: int = 3
    max_replies: int = 2
    min_words: int = 3
    max_words: int = 8
    balance_tolerance: float = 0.02

    def validate(self) -> "SynthConfig":
        if self.n_threads < 0:
            raise SynthConfigError("n_threads не может быть отрицательным")
        if not 0.0 <= self.class_balance <= 1.0:
            raise SynthConfigError(f"class_balance должен быть в [0, 1], получено {self.class_balance}")
        if not 0.0 <= self.agreement_rate <= 1.0:
            raise SynthConfigError(f"agreement_rate должен быть в [0, 1], получено {self.agreement_rate}")
        if self.agreement_rate > 0 and not self.agreement_cues:
            raise SynthConfigError("agreement_rate > 0 требует непустой agreement_cues")
        if self.max_comments < 1 or self.max_replies < 0:
            raise SynthConfigError("max_comments >= 1 и max_replies >= 0")
        if not 1 <= self.min_words <= self.max_words:
            raise SynthConfigError("ожидается 1 <= min_words <= max_words")
        if not self.vocab_pool:
            raise SynthConfigError("vocab_pool пуст")

        lexicon = set(self.profane_lexicon)
        for word in lexicon:
            if not word or word != word.lower() or any(ch.isspace() for ch in word):
                raise SynthConfigError(f"слово лексикона {word!r}: нужен нижний регистр без пробелов")
        pool = {word.lower() for word in self.vocab_pool}
        if any(not word or any(ch.isspace() for ch in word) for word in self.vocab_pool):
            raise SynthConfigError("слова vocab_pool не должны содержать пробелов")
        overlap = sorted(lexicon & pool)
        if overlap:
            raise SynthConfigError(f"лексикон и vocab_pool пересекаются: {overlap}")
        cue_words = {word.lower() for cue in self.agreement_cues for word in cue.split()}
        if cue_words & lexicon:
            raise SynthConfigError(f"маркеры согласия содержат слова лексикона: {sorted(cue_words & lexicon)}")
        if cue_words & pool:
            raise SynthConfigError(f"маркеры согласия пересекаются с vocab_pool: {sorted(cue_words & pool)}")
        if not any(_has_devanagari(w) for w in self.vocab_pool) or all(_has_devanagari(w) for w in self.vocab_pool):
            raise SynthConfigError("vocab_pool должен содержать и латиницу, и деванагари")
        if self.class_balance > 0 and not lexicon:
            raise SynthConfigError("class_balance > 0 при пустом лексиконе недостижим")
        return self

    @classmethod
    def from_dict(cls, data: dict | None) -> "SynthConfig":
        data = dict(data or {})
        for key in ("profane_lexicon", "vocab_pool", "agreement_cues"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "n_threads": self.n_threads,
            "profane_lexicon": list(self.profane_lexicon),
            "class_balance": self.class_balance,
            "vocab_pool": list(self.vocab_pool),
            "seed": self.seed,
            "agreement_cues": list(self.agreement_cues),
            "agreement_rate": self.agreement_rate,
            "max_comments": self.max_comments,
            "max_replies": self.max_replies,
            "min_words": self.min_words,
            "max_words": self.max_words,
            "balance_tolerance": self.balance_tolerance,
        }


@dataclass
class _SynthNode:
    id: str
    level: Level
    parent: Optional["_SynthNode"]
    agreement: bool
    children: list["_SynthNode"] = field(default_factory=list)
    size: int = 1


def _build_structure(config: SynthConfig, rng: SplitMix64) -> list[_SynthNode]:
    ordered: list[_SynthNode] = []
    for t in range(config.n_threads):
        tweet = _SynthNode(id=f"t{t}", level=Level.TWEET, parent=None, agreement=False)
        ordered.append(tweet)
        for c in range(rng.between(1, config.max_comments)):
            comment = _SynthNode(
                id=f"t{t}.c{c}", level=Level.COMMENT, parent=tweet,
                agreement=rng.chance(config.agreement_rate),
            )
            tweet.children.append(comment)
            ordered.append(comment)
            for r in range(rng.between(0, config.max_replies)):
                reply = _SynthNode(
                    id=f"t{t}.c{c}.r{r}", level=Level.REPLY, parent=comment,
                    agreement=rng.chance(config.agreement_rate),
                )
                comment.children.append(reply)
                ordered.append(reply)
    for node in reversed(ordered):
        node.size = 1 + sum(child.size for child in node.children)
    return ordered


def _descendants(node: _SynthNode) -> Iterable[_SynthNode]:
    for child in node.children:
        yield child
        yield from _descendants(child)


def _ancestors(node: _SynthNode) -> Iterable[_SynthNode]:
    current = node.parent
    while current is not None:
        yield current
        current = current.parent


def _choose_starters(ordered: list[_SynthNode], target: int, rng: SplitMix64) -> set[str]:
    """Жадно выбирает «зачинщиков» враждебности: их поддеревья целиком HOF."""

    candidates = [node for node in ordered if not node.agreement]
    rng.shuffle(candidates)
    starters: dict[str, _SynthNode] = {}
    total = 0
    for node in candidates:
        if any(anc.id in starters for anc in _ancestors(node)):
            continue
        inner = [d for d in _descendants(node) if d.id in starters]
        gain = node.size - sum(d.size for d in inner)
        if total + gain <= target:
            for d in inner:
                del starters[d.id]
            starters[node.id] = node
            total += gain
    return set(starters)


def _words(rng: SplitMix64, pool: Sequence[str], low: int, high: int) -> list[str]:
    return [rng.choice(pool) for _ in range(rng.between(low, high))]


def gen_synthetic(config: SynthConfig) -> list[ThreadNode]:
    """Детерминированный корпус тредов для настольных проверок.

    HOF-узел либо содержит слово лексикона, либо является «согласием» с
    HOF-родителем. Внутри враждебного поддерева все узлы HOF; NOT-узлы не
    содержат слов лексикона.
    """
    config.validate()
    rng = SplitMix64(config.seed)
    ordered = _build_structure(config, rng)
    total = len(ordered)
    target = _round_half_up(config.class_balance * total)

    starters = _choose_starters(ordered, target, rng.fork(1))
    hostile: set[str] = set()
    for node in ordered:
        if node.id in starters or (node.parent is not None and node.parent.id in hostile):
            hostile.add(node.id)

    if total:
        achieved = len(hostile) / total
        if abs(achieved - config.class_balance) > config.balance_tolerance:
            raise SynthConfigError(
                f"не удалось получить баланс {config.class_balance:.2f} "
                f"(достигнуто {achieved:.3f}); уменьшите agreement_rate или измените n_threads"
            )

    lexicon = sorted(config.profane_lexicon)
    pool = list(config.vocab_pool)
    cues = list(config.agreement_cues)
    text_rng = rng.fork(2)
    nodes: list[ThreadNode] = []
    for node in ordered:
        is_hof = node.id in hostile
        if node.agreement:
            words = text_rng.choice(cues).split() + _words(text_rng, pool, 0, 2)
        else:
            words = _words(text_rng, pool, config.min_words, config.max_words)
            if is_hof:
                for _ in range(text_rng.between(1, 2)):
                    words.insert(text_rng.below(len(words) + 1), text_rng.choice(lexicon))
        nodes.append(
            ThreadNode(
                id=node.id,
                text=" ".join(words),
                level=node.level,
                label=Label.HOF if is_hof else Label.NOT,
                parent_id=node.parent.id if node.parent is not None else None,
            )
        )
    logger.info(
        "Синтетический корпус: тредов %s, узлов %s, HOF %s",
        config.n_threads, total, len(hostile),
    )
    return nodes

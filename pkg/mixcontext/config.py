"""
Конфигурация запуска (JSON).

Переопределения: `--set train.learning_rate=0.002` — значение разбирается как
JSON-литерал, иначе берётся строкой; `--seed N` перезаписывает все seed-поля.
Разрешённая конфигурация сохраняется рядом с результатами
(`resolved_config.json`).
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

from .classify import demo_lexicon
from .corpus import SplitSpec, SynthConfig
from .encoder import EncoderConfig
from .errors import ValidationError
from .presets import DEFAULT_AGREEMENT_CUES, DEFAULT_VOCAB_POOL
from .textprep import PrepConfig
from .train import TrainConfig

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.json"


class ConfigError(ValidationError):
    """Raised when a run configuration is malformed."""

    def __init__(self, message: str, key: str | None = None, path: str | None = None) -> None:
        prefix = ""
        if path:
            prefix += f"{path}: "
        if key:
            prefix += f"{key}: "
        super().__init__(prefix + message)
        self.key = key
        self.path = path


@dataclass(frozen=True)
class PathsConfig:
    data: Optional[str] = None
    vocab: Optional[str] = None
    lexicon: Optional[str] = None
    output_dir: str = "run"


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    val_fraction: float = 0.1
    test_fraction: float = 0.0
    stratify: bool = False

    def spec(self) -> SplitSpec:
        return SplitSpec(seed=self.seed, val_fraction=self.val_fraction, stratify=self.stratify)


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple[str, ...] = ()
    average: str = "probs"


def default_synth() -> SynthConfig:
    return SynthConfig(
        n_threads=140,
        profane_lexicon=tuple(sorted(demo_lexicon().words)),
        vocab_pool=DEFAULT_VOCAB_POOL,
        agreement_cues=DEFAULT_AGREEMENT_CUES,
    )


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    vocab_size: int = 8000
    paths: PathsConfig = field(default_factory=PathsConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    prep: PrepConfig = field(default_factory=PrepConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=default_synth)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir) / self.name

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if not self.name or "/" in self.name:
            raise ConfigError(f"недопустимое имя запуска {self.name!r}", "name")
        if self.vocab_size < 4:
            raise ConfigError(f"должно быть >= 4, получено {self.vocab_size}", "vocab_size")
        self.prep.validate()
        self.encoder.validate()
        self.train.validate()
        self.split.spec().validate()
        if check_paths:
            for key in ("data", "vocab", "lexicon"):
                value = getattr(self.paths, key)
                if value is not None and not Path(value).exists():
                    raise ConfigError(f"файл не найден: {value}", f"paths.{key}")
            for member in self.ensemble.members:
                if not Path(member).exists():
                    raise ConfigError(f"чекпойнт не найден: {member}", "ensemble.members")
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vocab_size": self.vocab_size,
            "paths": asdict(self.paths),
            "split": asdict(self.split),
            "prep": self.prep.to_dict(),
            "encoder": self.encoder.to_dict(),
            "train": self.train.to_dict(),
            "synth": self.synth.to_dict(),
            "ensemble": {"members": list(self.ensemble.members), "average": self.ensemble.average},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"неизвестные ключи {unknown}")
        try:
            kwargs = {}
            for key in ("name", "vocab_size"):
                if key in data:
                    kwargs[key] = data[key]
            if "paths" in data:
                kwargs["paths"] = _build(PathsConfig, data["paths"], "paths")
            if "split" in data:
                kwargs["split"] = _build(SplitConfig, data["split"], "split")
            if "prep" in data:
                kwargs["prep"] = PrepConfig.from_dict(data["prep"])
            if "encoder" in data:
                kwargs["encoder"] = _build(EncoderConfig, data["encoder"], "encoder")
            if "train" in data:
                kwargs["train"] = _build(TrainConfig, data["train"], "train")
            if "synth" in data:
                base = default_synth().to_dict()
                base.update(data["synth"] or {})
                kwargs["synth"] = SynthConfig.from_dict(base)
            if "ensemble" in data:
                ensemble = dict(data["ensemble"] or {})
                ensemble["members"] = tuple(ensemble.get("members", ()))
                kwargs["ensemble"] = _build(EnsembleConfig, ensemble, "ensemble")
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kwargs)


def _build(cls, data: dict | None, section: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"неизвестные ключи {unknown}", section)
    return cls(**data)


def parse_override(raw: str) -> tuple[list[str], object]:
    if "=" not in raw:
        raise ConfigError(f"ожидается key=value, получено {raw!r}", "--set")
    key, value = raw.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"пустой ключ в {raw!r}", "--set")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.split("."), parsed


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    data = copy.deepcopy(data)
    for raw in overrides:
        keys, value = parse_override(raw)
        node = data
        for index, key in enumerate(keys[:-1]):
            child = node.get(key)
            if not isinstance(child, dict):
                raise ConfigError("нельзя задать вложенный ключ", ".".join(keys[: index + 1]))
            node = child
        if keys[-1] not in node:
            raise ConfigError("неизвестный ключ", ".".join(keys))
        node[keys[-1]] = value
    return data


def apply_seed(data: dict, seed: int) -> dict:
    data = copy.deepcopy(data)
    for section in ("split", "encoder", "train", "synth"):
        data.setdefault(section, {})["seed"] = seed
    return data


def load_run_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    seed: int | None = None,
    check_paths: bool = True,
) -> RunConfig:
    """Файл (или значения по умолчанию) + `--set` + `--seed`."""

    data = RunConfig().to_dict()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("файл конфигурации не найден", path=str(path))
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"ошибка разбора JSON: {exc.msg} (строка {exc.lineno})", path=str(path)) from exc
        if not isinstance(loaded, dict):
            raise ConfigError("ожидается JSON-объект", path=str(path))
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
    data = apply_overrides(data, overrides)
    if seed is not None:
        data = apply_seed(data, seed)
    return RunConfig.from_dict(data).validate(check_paths=check_paths)


def save_run_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path

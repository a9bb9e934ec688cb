"""Готовые наборы: словарь синтетики, маркеры согласия, конфигурации экспериментов."""

from dataclasses import dataclass

DEFAULT_VOCAB_POOL = (
    # латиница (хинглиш)
    "yaar", "kya", "hai", "bhai", "sab", "log", "desh", "vaccine", "sarkar", "kal",
    "aaj", "match", "dekho", "accha", "nahi", "kaam", "paisa", "news", "school", "train",
    "chai", "mausam", "india", "cricket", "doctor", "hospital", "movie", "gaana", "ghar", "dost",
    # деванагари
    "भारत", "सरकार", "लोग", "आज", "कल", "खबर", "देश", "पानी", "काम", "दोस्त", "मैच", "टीका",
)

DEFAULT_AGREEMENT_CUES = (
    "haan bilkul",
    "ekdum theek",
    "exactly",
    "सही कहा",
    "+1",
)

# Хребет A: BERT-подобный; хребет B: ALBERT-подобный (общие слои, факторизация).
@dataclass(frozen=True)
class ModelSpec:
    """Одна обучаемая модель набора."""

    backbone: str
    architecture: str
    freeze_embeddings: bool

    @property
    def key(self) -> str:
        fe = "-fe" if self.freeze_embeddings else ""
        return f"{self.backbone}-{self.architecture}{fe}"


@dataclass(frozen=True)
class RowSpec:
    """Строка таблицы: модель (или ансамбль моделей) и, возможно, словарь."""

    name: str
    members: tuple[ModelSpec, ...]
    use_lexicon: bool = False

    @property
    def is_ensemble(self) -> bool:
        return len(self.members) > 1


A_SINGLE = ModelSpec("A", "single", False)
B_SINGLE = ModelSpec("B", "single", False)
A_SINGLE_FE = ModelSpec("A", "single", True)
A_DUAL_FE = ModelSpec("A", "dual", True)
B_SINGLE_FE = ModelSpec("B", "single", True)
B_DUAL_FE = ModelSpec("B", "dual", True)
A_TARGET_FE = ModelSpec("A", "target_only", True)

ENSEMBLE_PRESETS = {
    "ensemble-2": (A_DUAL_FE, B_DUAL_FE),
    "ensemble-4": (A_SINGLE_FE, A_DUAL_FE, B_SINGLE_FE, B_DUAL_FE),
}

SUITE_ROWS = (
    RowSpec("BERT-like baseline", (A_SINGLE,)),
    RowSpec("ALBERT-like baseline", (B_SINGLE,)),
    RowSpec("BERT-like + FE", (A_SINGLE_FE,)),
    RowSpec("BERT-like + FE + C-Avg", (A_DUAL_FE,)),
    RowSpec("BERT-like + FE + C-Avg + Dictionary", (A_DUAL_FE,), use_lexicon=True),
    RowSpec("ALBERT-like + FE + Dictionary", (B_SINGLE_FE,), use_lexicon=True),
    RowSpec("ALBERT-like + FE + C-Avg + Dictionary", (B_DUAL_FE,), use_lexicon=True),
    RowSpec("Ensemble 2 (ALBERT-like C-Avg + BERT-like C-Avg)", ENSEMBLE_PRESETS["ensemble-2"]),
    RowSpec("Ensemble 4 (ALBERT-like + ALBERT-like C-Avg + BERT-like + BERT-like C-Avg)",
            ENSEMBLE_PRESETS["ensemble-4"]),
    RowSpec("BERT-like + FE, target only", (A_TARGET_FE,)),
)

SUITES = {
    "table": SUITE_ROWS,
    "ensembles": (
        RowSpec("Ensemble 2", ENSEMBLE_PRESETS["ensemble-2"]),
        RowSpec("Ensemble 4", ENSEMBLE_PRESETS["ensemble-4"]),
    ),
}

"""
Небольшой трансформер-энкодер на numpy с ручным обратным проходом.

Блок — post-LN BERT: attention -> residual -> LN -> FFN(GELU) -> residual -> LN.
Эмбеддинги: token + position + segment -> LN (в размерности embed_dim) ->
проекция embed_dim -> hidden, если embed_dim < hidden (факторизация ALBERT).
При share_layers все блоки используют параметры `layer.0.*`.

Имена параметров:
    embeddings.token, embeddings.position, embeddings.segment,
    embeddings.ln.scale, embeddings.ln.shift, embeddings.projection,
    layer.{i}.attn.{q,k,v,o}, layer.{i}.attn.{q,k,v,o}_bias,
    layer.{i}.ln1.{scale,shift}, layer.{i}.ffn.{in,out}, layer.{i}.ffn.{in,out}_bias,
    layer.{i}.ln2.{scale,shift}
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import PipelineError, ValidationError
from .tokenizer import EncodedBatch

logger = logging.getLogger(__name__)

LN_EPS = 1e-12
INIT_STD = 0.02
GELU_C = math.sqrt(2.0 / math.pi)

EMBEDDING_MATRICES = ("embeddings.token", "embeddings.position", "embeddings.segment")
EMBEDDING_NORM = ("embeddings.ln.scale", "embeddings.ln.shift")
FROZEN_BY_FLAG = EMBEDDING_MATRICES + EMBEDDING_NORM

CONTAINER_MAGIC = b"MIXCKPT1"
CONTAINER_VERSION = 1


class EncoderConfigError(ValidationError):
    """Raised when an encoder configuration breaks its invariants."""

    def __init__(self, message: str, field_name: str | None = None) -> None:
        super().__init__(f"{field_name}: {message}" if field_name else message)
        self.field_name = field_name


class EncoderInputError(ValidationError):
    """Raised when a batch does not fit the encoder (ids, shapes)."""


class StaleTapeError(PipelineError):
    """Raised when backward is called with a tape from an outdated state."""


class CheckpointError(ValidationError):
    """Raised when a tensor container cannot be read."""


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    num_heads: int = 4
    hidden: int = 64
    ffn: int = 256
    embed_dim: int = 64
    vocab_size: int = 8000
    max_len: int = 128
    share_layers: bool = False
    freeze_embeddings: bool = False
    seed: int = 0

    def validate(self) -> "EncoderConfig":
        for name in ("num_layers", "num_heads", "hidden", "ffn", "embed_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise EncoderConfigError(f"должно быть >= 1, получено {getattr(self, name)}", name)
        if self.max_len < 3:
            raise EncoderConfigError(f"должно быть >= 3, получено {self.max_len}", "max_len")
        if self.hidden % self.num_heads:
            raise EncoderConfigError(
                f"hidden={self.hidden} не делится на num_heads={self.num_heads}", "num_heads"
            )
        if self.embed_dim > self.hidden:
            raise EncoderConfigError(
                f"embed_dim={self.embed_dim} больше hidden={self.hidden}", "embed_dim"
            )
        return self

    @property
    def factorized(self) -> bool:
        return self.embed_dim < self.hidden

    @property
    def head_dim(self) -> int:
        return self.hidden // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "EncoderConfig":
        return cls(**dict(data or {}))


def bert_like(**overrides) -> EncoderConfig:
    """Настольная BERT-подобная форма: L=2, heads=4, hidden=64, ffn=256."""
    return replace(EncoderConfig(), **overrides)


def albert_like(**overrides) -> EncoderConfig:
    """ALBERT-подобная: общие блоки и факторизованные эмбеддинги (32 -> 64)."""
    return replace(EncoderConfig(embed_dim=32, share_layers=True), **overrides)


def full_scale_bert(vocab_size: int = 110_000) -> EncoderConfig:
    # только для подсчёта параметров, не для обучения
    return EncoderConfig(
        num_layers=12, num_heads=12, hidden=768, ffn=3072, embed_dim=768,
        vocab_size=vocab_size, max_len=512,
    )


def full_scale_albert(vocab_size: int = 200_000) -> EncoderConfig:
    return replace(full_scale_bert(vocab_size), embed_dim=128, share_layers=True)


def toy_config(**overrides) -> EncoderConfig:
    """Крошечная форма для проверки градиентов."""
    base = EncoderConfig(
        num_layers=1, num_heads=2, hidden=8, ffn=16, embed_dim=8, vocab_size=16, max_len=6,
    )
    return replace(base, **overrides)


def _block_shapes(hidden: int, ffn: int) -> dict[str, tuple[int, ...]]:
    return {
        "attn.q": (hidden, hidden), "attn.q_bias": (hidden,),
        "attn.k": (hidden, hidden), "attn.k_bias": (hidden,),
        "attn.v": (hidden, hidden), "attn.v_bias": (hidden,),
        "attn.o": (hidden, hidden), "attn.o_bias": (hidden,),
        "ln1.scale": (hidden,), "ln1.shift": (hidden,),
        "ffn.in": (hidden, ffn), "ffn.in_bias": (ffn,),
        "ffn.out": (ffn, hidden), "ffn.out_bias": (hidden,),
        "ln2.scale": (hidden,), "ln2.shift": (hidden,),
    }


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    config.validate()
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, config.embed_dim),
        "embeddings.position": (config.max_len, config.embed_dim),
        "embeddings.segment": (2, config.embed_dim),
        "embeddings.ln.scale": (config.embed_dim,),
        "embeddings.ln.shift": (config.embed_dim,),
    }
    if config.factorized:
        shapes["embeddings.projection"] = (config.embed_dim, config.hidden)
    stored_layers = 1 if config.share_layers else config.num_layers
    for i in range(stored_layers):
        for suffix, shape in _block_shapes(config.hidden, config.ffn).items():
            shapes[f"layer.{i}.{suffix}"] = shape
    return shapes


def param_count(config: EncoderConfig) -> int:
    """Точное число параметров энкодера (обучаемые + замороженные)."""
    return sum(int(np.prod(shape)) for shape in param_shapes(config).values())


def param_breakdown(config: EncoderConfig) -> dict[str, int]:
    shapes = param_shapes(config)

    def size(name: str) -> int:
        return int(np.prod(shapes[name])) if name in shapes else 0

    return {
        "token_embeddings": size("embeddings.token"),
        "position_embeddings": size("embeddings.position"),
        "segment_embeddings": size("embeddings.segment"),
        "embedding_norm": size("embeddings.ln.scale") + size("embeddings.ln.shift"),
        "projection": size("embeddings.projection"),
        "block_stack": sum(
            int(np.prod(shape)) for name, shape in shapes.items() if name.startswith("layer.")
        ),
    }


def trainable_mask(config: EncoderConfig) -> dict[str, bool]:
    frozen = set(FROZEN_BY_FLAG) if config.freeze_embeddings else set()
    return {name: name not in frozen for name in param_shapes(config)}


class EncoderState:
    """Параметры энкодера. `version` растёт при каждом обновлении."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray], version: int = 0) -> None:
        expected = param_shapes(config)
        if list(params) != list(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise EncoderConfigError(f"набор параметров не совпадает с конфигом: нет {missing}, лишние {extra}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise EncoderConfigError(f"{name}: форма {params[name].shape}, ожидается {shape}")
        self.config = config
        self.params = params
        self.trainable = trainable_mask(config)
        self.version = version

    @property
    def dtype(self) -> np.dtype:
        return self.params["embeddings.token"].dtype

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.params)

    def layer_prefix(self, index: int) -> str:
        return "layer.0." if self.config.share_layers else f"layer.{index}."

    def block(self, index: int) -> dict[str, np.ndarray]:
        prefix = self.layer_prefix(index)
        return {name[len(prefix):]: value for name, value in self.params.items() if name.startswith(prefix)}

    def update(self, values: dict[str, np.ndarray]) -> None:
        """Заменяет значения обучаемых параметров и увеличивает версию."""
        for name, value in values.items():
            if not self.trainable.get(name, False):
                raise EncoderConfigError(f"параметр {name!r} заморожен или не существует")
            self.params[name] = np.asarray(value, dtype=self.dtype).reshape(self.params[name].shape)
        self.version += 1

    def copy(self) -> "EncoderState":
        return EncoderState(self.config, {k: v.copy() for k, v in self.params.items()}, self.version)

    def astype(self, dtype) -> "EncoderState":
        return EncoderState(self.config, {k: v.astype(dtype) for k, v in self.params.items()}, self.version)


def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float = INIT_STD) -> np.ndarray:
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2 * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2 * std
    return values


def init_encoder(config: EncoderConfig, dtype=np.float32) -> EncoderState:
    shapes = param_shapes(config)
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name.endswith(".scale"):
            values = np.ones(shape)
        elif name.endswith(".shift") or name.endswith("_bias"):
            values = np.zeros(shape)
        else:
            values = truncated_normal(rng, shape)
        params[name] = values.astype(dtype)
    return EncoderState(config, params)


# --- слои -------------------------------------------------------------------

def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


def _linear_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return _flat(x).T @ _flat(dy)


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray):
    centered = x - x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = centered * inv
    return xhat * scale + shift, (xhat, inv)


def layer_norm_backward(dy: np.ndarray, cache, scale: np.ndarray):
    xhat, inv = cache
    dscale = _flat(dy * xhat).sum(axis=0)
    dshift = _flat(dy).sum(axis=0)
    dxhat = dy * scale
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dscale, dshift


def gelu(x: np.ndarray):
    t = np.tanh(GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(dy: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    inner = GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * inner)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    batch, length, hidden = x.shape
    return x.reshape(batch, length, heads, hidden // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    batch, heads, length, dim = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, length, heads * dim)


def apply_block(x: np.ndarray, mask: np.ndarray, w: dict[str, np.ndarray], num_heads: int):
    """Один post-LN блок. Возвращает выход и кэш для обратного прохода."""

    scale = 1.0 / math.sqrt(x.shape[-1] // num_heads)
    qh = _split_heads(x @ w["attn.q"] + w["attn.q_bias"], num_heads)
    kh = _split_heads(x @ w["attn.k"] + w["attn.k_bias"], num_heads)
    vh = _split_heads(x @ w["attn.v"] + w["attn.v_bias"], num_heads)

    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    keep = mask[:, None, None, :].astype(bool)
    scores = np.where(keep, scores, -np.inf)
    exps = np.exp(scores - scores.max(axis=-1, keepdims=True))
    attn = exps / exps.sum(axis=-1, keepdims=True)

    ctx = _merge_heads(attn @ vh)
    h1, ln1 = layer_norm(x + ctx @ w["attn.o"] + w["attn.o_bias"], w["ln1.scale"], w["ln1.shift"])
    f = h1 @ w["ffn.in"] + w["ffn.in_bias"]
    g, t = gelu(f)
    out, ln2 = layer_norm(h1 + g @ w["ffn.out"] + w["ffn.out_bias"], w["ln2.scale"], w["ln2.shift"])

    cache = {
        "x": x, "qh": qh, "kh": kh, "vh": vh, "attn": attn, "ctx": ctx, "scale": scale,
        "h1": h1, "ln1": ln1, "f": f, "t": t, "g": g, "ln2": ln2,
    }
    return out, cache


def _block_backward(dout: np.ndarray, c: dict, w: dict[str, np.ndarray], num_heads: int):
    grads: dict[str, np.ndarray] = {}

    dr2, grads["ln2.scale"], grads["ln2.shift"] = layer_norm_backward(dout, c["ln2"], w["ln2.scale"])
    grads["ffn.out"] = _linear_grad(c["g"], dr2)
    grads["ffn.out_bias"] = _flat(dr2).sum(axis=0)
    df = gelu_backward(dr2 @ w["ffn.out"].T, c["f"], c["t"])
    grads["ffn.in"] = _linear_grad(c["h1"], df)
    grads["ffn.in_bias"] = _flat(df).sum(axis=0)
    dh1 = dr2 + df @ w["ffn.in"].T

    dr1, grads["ln1.scale"], grads["ln1.shift"] = layer_norm_backward(dh1, c["ln1"], w["ln1.scale"])
    grads["attn.o"] = _linear_grad(c["ctx"], dr1)
    grads["attn.o_bias"] = _flat(dr1).sum(axis=0)
    dctx = _split_heads(dr1 @ w["attn.o"].T, num_heads)

    attn = c["attn"]
    dattn = dctx @ c["vh"].transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * c["scale"]
    dqh = dscores @ c["kh"]
    dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"]

    dx = dr1.copy()
    for name, dproj in (("q", dqh), ("k", dkh), ("v", dvh)):
        dproj = _merge_heads(dproj)
        grads[f"attn.{name}"] = _linear_grad(c["x"], dproj)
        grads[f"attn.{name}_bias"] = _flat(dproj).sum(axis=0)
        dx += dproj @ w[f"attn.{name}"].T
    return dx, grads


def embed(state: EncoderState, batch: EncodedBatch):
    p = state.params
    length = batch.length
    x0 = (
        p["embeddings.token"][batch.ids]
        + p["embeddings.position"][:length][None, :, :]
        + p["embeddings.segment"][batch.segments]
    )
    e, ln = layer_norm(x0, p["embeddings.ln.scale"], p["embeddings.ln.shift"])
    h = e @ p["embeddings.projection"] if state.config.factorized else e
    return h, {"e": e, "ln": ln}


@dataclass
class Tape:
    """Кэш прямого прохода; годен только для той же версии состояния."""

    state: EncoderState
    version: int
    batch: EncodedBatch
    embedding: dict
    blocks: list[dict] = field(default_factory=list)


@dataclass
class SequenceOutput:
    hidden_states: np.ndarray
    cls_vectors: np.ndarray
    attentions: list[np.ndarray]
    tape: Optional[Tape] = None


def _check_batch(state: EncoderState, batch: EncodedBatch) -> None:
    config = state.config
    if batch.ids.ndim != 2:
        raise EncoderInputError(f"ids: ожидается матрица (batch, length), получено {batch.ids.shape}")
    if batch.segments.shape != batch.ids.shape or batch.mask.shape != batch.ids.shape:
        raise EncoderInputError(
            f"формы ids/segments/mask не совпадают: {batch.ids.shape}, "
            f"{batch.segments.shape}, {batch.mask.shape}"
        )
    if batch.length > config.max_len:
        raise EncoderInputError(f"длина {batch.length} больше max_len={config.max_len}")
    if batch.ids.size and (batch.ids.min() < 0 or batch.ids.max() >= config.vocab_size):
        raise EncoderInputError(
            f"id вне диапазона [0, {config.vocab_size}): min={batch.ids.min()}, max={batch.ids.max()}"
        )
    if batch.segments.size and not np.isin(batch.segments, (0, 1)).all():
        raise EncoderInputError("segments должны быть 0 или 1")


def forward(state: EncoderState, batch: EncodedBatch) -> SequenceOutput:
    _check_batch(state, batch)
    mask = batch.mask
    h, emb_cache = embed(state, batch)
    caches = []
    for index in range(state.config.num_layers):
        h, cache = apply_block(h, mask, state.block(index), state.config.num_heads)
        caches.append(cache)
    tape = Tape(state=state, version=state.version, batch=batch, embedding=emb_cache, blocks=caches)
    return SequenceOutput(
        hidden_states=h,
        cls_vectors=h[:, 0, :],
        attentions=[cache["attn"] for cache in caches],
        tape=tape,
    )


def backward(state: EncoderState, tape: Tape, output_gradients: np.ndarray) -> dict[str, np.ndarray]:
    """Градиенты по обучаемым параметрам; для общих слоёв суммируются."""

    if tape.state is not state or tape.version != state.version:
        raise StaleTapeError(
            f"лента устарела: версия ленты {tape.version}, версия состояния {state.version}"
        )
    d_hidden = np.asarray(output_gradients, dtype=state.dtype)
    expected = tape.blocks[-1]["x"].shape if tape.blocks else None
    if expected is not None and d_hidden.shape != expected:
        raise EncoderInputError(f"форма градиента {d_hidden.shape}, ожидается {expected}")

    config = state.config
    p = state.params
    grads: dict[str, np.ndarray] = {}
    dh = d_hidden
    for index in reversed(range(config.num_layers)):
        dh, block_grads = _block_backward(dh, tape.blocks[index], state.block(index), config.num_heads)
        prefix = state.layer_prefix(index)
        for suffix, value in block_grads.items():
            key = prefix + suffix
            grads[key] = grads[key] + value if key in grads else value

    emb = tape.embedding
    if config.factorized:
        grads["embeddings.projection"] = _linear_grad(emb["e"], dh)
        de = dh @ p["embeddings.projection"].T
    else:
        de = dh
    if not config.freeze_embeddings:
        batch = tape.batch
        dx0, grads["embeddings.ln.scale"], grads["embeddings.ln.shift"] = layer_norm_backward(
            de, emb["ln"], p["embeddings.ln.scale"]
        )
        token = np.zeros_like(p["embeddings.token"])
        np.add.at(token, batch.ids, dx0)
        position = np.zeros_like(p["embeddings.position"])
        position[: batch.length] = dx0.sum(axis=0)
        segment = np.zeros_like(p["embeddings.segment"])
        np.add.at(segment, batch.segments, dx0)
        grads["embeddings.token"] = token
        grads["embeddings.position"] = position
        grads["embeddings.segment"] = segment

    return {name: grads[name] for name in state.names if state.trainable[name] and name in grads}


# --- проверка градиентов ------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    worst_analytic: float
    worst_numeric: float
    checked: int
    per_param: dict[str, float] = field(default_factory=dict)

    def summary(self) -> str:
        status = "OK" if self.passed else "FAIL"
        return (
            f"[{status}] координат: {self.checked}, max rel error: {self.max_rel_error:.3e} "
            f"(порог {self.tolerance:.0e}); худший: {self.worst_param}{list(self.worst_index)} "
            f"analytic={self.worst_analytic:.6e} numeric={self.worst_numeric:.6e}"
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "max_rel_error": self.max_rel_error,
            "worst_param": self.worst_param,
            "worst_index": list(self.worst_index),
            "worst_analytic": self.worst_analytic,
            "worst_numeric": self.worst_numeric,
            "checked": self.checked,
            "per_param": self.per_param,
        }


def relative_error(analytic: float, numeric: float) -> float:
    if analytic == 0.0 and numeric == 0.0:
        return 0.0
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)


def finite_difference_check(
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    value_fn: Callable[[], float],
    tolerance: float = 1e-4,
    n_coords: int = 200,
    seed: int = 0,
    step: float = 1e-5,
    corrupt: str | None = None,
) -> GradCheckReport:
    """Центральные разности по случайным координатам; каждый параметр минимум один раз.

    `params` изменяются на месте на время замера и восстанавливаются.
    """
    names = list(analytic)
    if not names:
        raise PipelineError("нет параметров с градиентом для проверки")
    analytic = {name: np.array(value, dtype=np.float64) for name, value in analytic.items()}
    if corrupt is not None:
        if corrupt not in analytic:
            raise PipelineError(f"corrupt: параметр {corrupt!r} не найден среди {names}")
        analytic[corrupt] = analytic[corrupt] * 1.1 + 1e-3

    rng = np.random.default_rng(seed)
    sizes = np.array([params[name].size for name in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    coords = [(name, int(rng.integers(params[name].size))) for name in names]
    for flat in rng.integers(int(offsets[-1]), size=max(n_coords - len(coords), 0)):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        coords.append((names[which], int(flat - offsets[which])))

    worst = (-1.0, names[0], 0, 0.0, 0.0)
    per_param: dict[str, float] = {}
    for name, flat_index in coords:
        view = params[name].reshape(-1)
        original = view[flat_index]
        view[flat_index] = original + step
        plus = value_fn()
        view[flat_index] = original - step
        minus = value_fn()
        view[flat_index] = original
        numeric = (plus - minus) / (2 * step)
        exact = float(analytic[name].reshape(-1)[flat_index])
        error = relative_error(exact, numeric)
        per_param[name] = max(per_param.get(name, 0.0), error)
        if error > worst[0]:
            worst = (error, name, flat_index, exact, numeric)

    error, name, flat_index, exact, numeric = worst
    return GradCheckReport(
        passed=error < tolerance,
        tolerance=tolerance,
        max_rel_error=error,
        worst_param=name,
        worst_index=tuple(int(i) for i in np.unravel_index(flat_index, params[name].shape)),
        worst_analytic=exact,
        worst_numeric=float(numeric),
        checked=len(coords),
        per_param=per_param,
    )


def toy_batch(config: EncoderConfig, seed: int = 0) -> EncodedBatch:
    """Три входа длины max_len: с паддингом, пара сегментов, полный."""

    rng = np.random.default_rng(seed)
    length = config.max_len
    rows, segments, masks = [], [], []

    def content(n: int) -> list[int]:
        return [int(i) for i in rng.integers(4, max(config.vocab_size, 5), size=n)]

    short = [2] + content(max(length - 4, 1)) + [3]
    pair_ctx = content(max((length - 3) // 2, 0))
    pair_tgt = content(length - 3 - len(pair_ctx))
    pair = [2] + pair_ctx + [3] + pair_tgt + [3]
    full = [2] + content(length - 2) + [3]
    for ids, seg_start in ((short, len(short)), (pair, len(pair_ctx) + 2), (full, length)):
        real = len(ids)
        rows.append(ids + [0] * (length - real))
        segments.append([0] * min(seg_start, real) + [1] * (real - min(seg_start, real)) + [0] * (length - real))
        masks.append([1] * real + [0] * (length - real))
    return EncodedBatch(
        ids=np.array(rows, dtype=np.int64) % config.vocab_size,
        segments=np.array(segments, dtype=np.int64),
        mask=np.array(masks, dtype=np.int64),
    )


def randomized_state(config: EncoderConfig, seed: int = 0, std: float = 0.3) -> EncoderState:
    """Состояние float64 с крупными весами: градиенты не тонут в погрешности разностей."""

    state = init_encoder(config, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for name, value in state.params.items():
        if name.endswith(".scale"):
            state.params[name] = 1.0 + rng.normal(0.0, 0.1, value.shape)
        elif name.endswith(".shift") or name.endswith("_bias"):
            state.params[name] = rng.normal(0.0, 0.1, value.shape)
        else:
            state.params[name] = rng.normal(0.0, std, value.shape)
    return state


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def projection_loss(seed: int, shape: tuple[int, ...]) -> LossFn:
    weights = np.random.default_rng(seed + 2).normal(0.0, 1.0, size=shape)

    def loss(hidden: np.ndarray) -> tuple[float, np.ndarray]:
        return float(np.sum(hidden * weights)), weights

    return loss


def check_gradients(
    config: EncoderConfig | None = None,
    tolerance: float = 1e-4,
    loss: str | LossFn = "projection",
    corrupt: str | None = None,
    n_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Сверка backward с центральными разностями (шаг 1e-5) в float64."""

    config = (config or toy_config()).validate()
    state = randomized_state(config, seed)
    batch = toy_batch(config, seed)
    if loss == "projection":
        loss_fn = projection_loss(seed, (batch.size, batch.length, config.hidden))
    elif callable(loss):
        loss_fn = loss
    else:
        raise PipelineError(f"неизвестная функция потерь {loss!r}")

    output = forward(state, batch)
    _, d_hidden = loss_fn(output.hidden_states)
    analytic = backward(state, output.tape, d_hidden)

    report = finite_difference_check(
        state.params,
        analytic,
        lambda: loss_fn(forward(state, batch).hidden_states)[0],
        tolerance=tolerance,
        n_coords=n_coords,
        seed=seed,
        corrupt=corrupt,
    )
    logger.info("Проверка градиентов энкодера: %s", report.summary())
    return report


# --- контейнер тензоров -------------------------------------------------------

def write_container(path: str | Path, meta: dict, tensors: dict[str, np.ndarray]) -> Path:
    """MIXCKPT1 | uint32 LE длина заголовка | JSON-заголовок | тензоры <f4 row-major."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": CONTAINER_VERSION,
        "meta": meta,
        "tensors": [{"name": name, "shape": list(value.shape)} for name, value in tensors.items()],
    }
    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(np.array([len(header_bytes)], dtype="<u4").tobytes())
        fh.write(header_bytes)
        for value in tensors.values():
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return path


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: файл не найден")
    data = path.read_bytes()
    if not data.startswith(CONTAINER_MAGIC):
        raise CheckpointError(f"{path}: не контейнер {CONTAINER_MAGIC.decode()}")
    offset = len(CONTAINER_MAGIC)
    if len(data) < offset + 4:
        raise CheckpointError(f"{path}: файл короче заголовка ({len(data)} байт)")
    header_len = int(np.frombuffer(data, dtype="<u4", count=1, offset=offset)[0])
    offset += 4
    try:
        header = json.loads(data[offset: offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: повреждённый заголовок ({exc})") from exc
    if header.get("format_version") != CONTAINER_VERSION:
        raise CheckpointError(f"{path}: неподдерживаемая версия формата {header.get('format_version')}")
    offset += header_len

    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 4 * count > len(data):
            raise CheckpointError(f"{path}: файл обрезан на тензоре {entry['name']}")
        tensors[entry["name"]] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        )
        offset += 4 * count
    if offset != len(data):
        raise CheckpointError(f"{path}: лишние байты после тензоров")
    return header["meta"], tensors


def save_state(state: EncoderState, path: str | Path) -> Path:
    return write_container(path, {"encoder": state.config.to_dict()}, state.params)


def load_state(path: str | Path) -> EncoderState:
    meta, tensors = read_container(path)
    config = EncoderConfig.from_dict(meta["encoder"]).validate()
    return EncoderState(config, tensors)

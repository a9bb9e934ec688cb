"""Длинные проверки на синтетическом корпусе; запускаются с --runslow."""

import time
from dataclasses import replace

import pytest

from mixcontext.classify import demo_lexicon, lexicon_classify
from mixcontext.encoder import EncoderConfig
from mixcontext.evaluation import evaluate
from mixcontext.experiments import compare_context_usage, sample_texts, synthetic_splits
from mixcontext.models import Label
from mixcontext.tokenizer import build_vocab
from mixcontext.train import LOG_NAME, TrainConfig, read_train_log, train

pytestmark = pytest.mark.slow

ENCODER = EncoderConfig(num_layers=2, num_heads=4, hidden=64, ffn=256, embed_dim=64, max_len=48, seed=0)
TRAINING = TrainConfig(max_epochs=5, batch_size=8, learning_rate=2e-3, seed=0, architecture="dual")
TIME_LIMIT_SECONDS = 300


def test_dual_model_learns_planted_words(synth_config, tmp_path):
    train_samples, val_samples, test_samples = synthetic_splits(synth_config, 0, 100 / 700, 200 / 700)
    vocab = build_vocab(sample_texts(train_samples), 2000)
    started = time.perf_counter()
    checkpoint = train(
        replace(ENCODER, vocab_size=len(vocab)), train_samples, val_samples, TRAINING, vocab,
        output_dir=tmp_path, progress_callback=lambda *_: None,
    )
    assert time.perf_counter() - started < TIME_LIMIT_SECONDS
    preds = checkpoint.predictor().predict_batch(test_samples)
    metrics = evaluate([s.label for s in test_samples], [p.label for p in preds],
                       [s.is_contextual for s in test_samples])
    assert metrics.macro_f1 >= 0.9

    log = read_train_log(tmp_path / LOG_NAME)
    assert log[1].val_loss < log[0].val_loss

    lexicon = demo_lexicon()
    planted = [s for s in test_samples if s.label is Label.HOF]
    assert all(lexicon_classify(lexicon, s) is not None for s in planted)


def test_context_helps_when_labels_are_inherited(synth_config):
    synth = replace(synth_config, agreement_rate=0.3)
    result = compare_context_usage([0, 1, 2], synth, ENCODER, TRAINING)
    assert result.dual_mean >= result.target_only_mean

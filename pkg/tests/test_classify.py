from dataclasses import dataclass

import numpy as np
import pytest

from mixcontext.classify import (
    DEMO_LEXICON_PATH,
    Architecture,
    CombinedPredictor,
    EnsembleError,
    EnsemblePredictor,
    Head,
    Lexicon,
    LexiconError,
    ModelPredictor,
    combined_predict,
    demo_lexicon,
    dual_encoder_predict,
    ensemble_predict,
    ensemble_predict_batch,
    lexicon_classify,
    load_lexicon,
    represent,
    single_encoder_predict,
)
from mixcontext.encoder import forward
from mixcontext.models import Label, Prediction, Sample, Source, softmax
from mixcontext.presets import (
    A_DUAL_FE,
    A_SINGLE_FE,
    B_DUAL_FE,
    B_SINGLE_FE,
    ENSEMBLE_PRESETS,
)
from mixcontext.tokenizer import encode_single, stack_encodings


@dataclass
class FixedPredictor:
    """Возвращает заранее заданные вероятности."""

    probs: tuple[float, float]
    name: str = "fixed"

    def predict(self, sample: Sample) -> Prediction:
        logits = (float(np.log(self.probs[0])), float(np.log(self.probs[1])))
        label = Label.HOF if self.probs[1] >= self.probs[0] else Label.NOT
        return Prediction(probs=self.probs, label=label, source=Source.MODEL, logits=logits)

    def predict_batch(self, samples):
        return [self.predict(s) for s in samples]


def _single_text_probs(state, head, text, vocab, max_len):
    cls = forward(state, stack_encodings([encode_single(text, vocab, max_len)])).cls_vectors
    return softmax(head.logits(cls))[0]


# --- модельные предсказания ---------------------------------------------------

def test_zero_logits_tie_goes_to_hof(small_config, small_vocab, float_model):
    state, _ = float_model
    head = Head(weight=np.zeros((small_config.hidden, 2), dtype=np.float32), bias=np.zeros(2, dtype=np.float32))
    prediction = single_encoder_predict(state, head, Sample("x", "yaar kya", Label.NOT), small_vocab, 24)
    assert prediction.probs == (0.5, 0.5)
    assert prediction.label is Label.HOF


def test_single_encoder_without_context_uses_single_text(wide_model, small_vocab):
    state, head = wide_model
    sample = Sample("x", "india needs vaccines", Label.NOT)
    prediction = single_encoder_predict(state, head, sample, small_vocab, 24)
    expected = _single_text_probs(state, head, sample.target_text, small_vocab, 24)
    np.testing.assert_allclose(prediction.probs, expected, atol=1e-12)


def test_single_encoder_pairs_context(wide_model, small_vocab):
    state, head = wide_model
    with_ctx = single_encoder_predict(state, head, Sample("x", "you idiot", Label.HOF, "yaar kya"), small_vocab, 24)
    without = single_encoder_predict(state, head, Sample("x", "you idiot", Label.HOF), small_vocab, 24)
    assert not np.allclose(with_ctx.probs, without.probs)


def test_dual_encoder_degenerate_cases(wide_model, small_vocab):
    state, head = wide_model
    text = "vaccine insano k liye hain"
    reference = _single_text_probs(state, head, text, small_vocab, 24)
    absent = dual_encoder_predict(state, head, Sample("a", text, Label.NOT), small_vocab, 24)
    same = dual_encoder_predict(state, head, Sample("b", text, Label.NOT, context_text=text), small_vocab, 24)
    np.testing.assert_allclose(absent.probs, reference, atol=1e-6)
    np.testing.assert_allclose(same.probs, reference, atol=1e-6)
    assert absent.label is same.label


def test_dual_representation_is_mean_of_cls_vectors(wide_model, small_vocab):
    state, _ = wide_model
    sample = Sample("x", "you idiot", Label.HOF, context_text="india needs vaccines")
    rep = represent(state, [sample], small_vocab, 24, Architecture.DUAL)
    ctx = forward(state, stack_encodings([encode_single(sample.context_text, small_vocab, 24)])).cls_vectors[0]
    tgt = forward(state, stack_encodings([encode_single(sample.target_text, small_vocab, 24)])).cls_vectors[0]
    np.testing.assert_allclose(rep.r[0], (ctx + tgt) / 2, atol=1e-6)


def test_predictions_are_deterministic_and_normalized(float_model, small_vocab):
    state, head = float_model
    predictor = ModelPredictor(state, head, small_vocab, 24, Architecture.DUAL)
    samples = [Sample(f"s{i}", "yaar kya baat hai", Label.NOT, context_text="you idiot" if i % 2 else None)
               for i in range(70)]
    first, second = predictor.predict_batch(samples), predictor.predict_batch(samples)
    assert [p.probs for p in first] == [p.probs for p in second]
    for p in first:
        assert abs(sum(p.probs) - 1.0) < 1e-6
        assert 0.0 <= min(p.probs) and max(p.probs) <= 1.0
        assert p.source is Source.MODEL


def test_target_only_ignores_context(wide_model, small_vocab):
    state, head = wide_model
    predictor = ModelPredictor(state, head, small_vocab, 24, Architecture.TARGET_ONLY)
    with_ctx = predictor.predict(Sample("a", "you idiot", Label.HOF, context_text="yaar kya"))
    without = predictor.predict(Sample("a", "you idiot", Label.HOF))
    assert with_ctx.probs == without.probs


# --- словарь ------------------------------------------------------------------

@pytest.mark.parametrize(
    "words, target, hit",
    [
        ({"idiot"}, "you idiot", True),
        ({"idiot"}, "idiotic debate", False),
        ({"moron"}, "#moron indeed", True),
        ({"moron"}, "MORON", True),
    ],
)
def test_lexicon_classify(words, target, hit):
    prediction = lexicon_classify(Lexicon.from_words(words), Sample("x", target, Label.NOT))
    if hit:
        assert prediction.label is Label.HOF
        assert prediction.source is Source.LEXICON
        assert prediction.probs == (0.0, 1.0)
    else:
        assert prediction is None


def test_lexicon_ignores_context():
    sample = Sample("x", "theek hai", Label.NOT, context_text="you idiot")
    assert lexicon_classify(Lexicon.from_words(["idiot"]), sample) is None


def test_combined_predict_precedence():
    lexicon = Lexicon.from_words(["idiot"])
    model = FixedPredictor((0.9, 0.1))
    hit = Sample("a", "you idiot", Label.HOF)
    miss = Sample("b", "you genius", Label.NOT)
    assert combined_predict(model, lexicon, hit).label is Label.HOF
    assert combined_predict(model, lexicon, miss) == model.predict(miss)
    assert combined_predict(model, None, hit) == model.predict(hit)
    batch = CombinedPredictor(model, lexicon).predict_batch([hit, miss])
    assert [p.source for p in batch] == [Source.LEXICON, Source.MODEL]


def test_lexicon_monotonicity(wide_model, small_vocab):
    state, head = wide_model
    lexicon = Lexicon.from_words(["idiot"])
    predictor = CombinedPredictor(ModelPredictor(state, head, small_vocab, 24), lexicon)
    for text in ("yaar kya baat hai", "india needs vaccines", "भारत सरकार"):
        before = predictor.predict(Sample("x", text, Label.NOT))
        after = predictor.predict(Sample("x", text + " idiot", Label.NOT))
        assert after.label is Label.HOF
        assert before.label is Label.NOT or after.label is Label.HOF


def test_load_lexicon(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("# comment\nIdiot\n\nmoron\nidiot\n", encoding="utf-8")
    assert load_lexicon(path).words == frozenset({"idiot", "moron"})
    path.write_text("two words\n", encoding="utf-8")
    with pytest.raises(LexiconError, match=":1:"):
        load_lexicon(path)


def test_demo_lexicon():
    lexicon = demo_lexicon()
    assert DEMO_LEXICON_PATH.exists()
    assert "idiot" in lexicon and "गधा" in lexicon


# --- ансамбли -----------------------------------------------------------------

def test_ensemble_averages_probabilities():
    sample = Sample("x", "t", Label.NOT)
    prediction = ensemble_predict([FixedPredictor((0.6, 0.4)), FixedPredictor((0.2, 0.8))], sample)
    np.testing.assert_allclose(prediction.probs, (0.4, 0.6), atol=1e-12)
    assert prediction.label is Label.HOF
    assert prediction.source is Source.ENSEMBLE


def test_ensemble_exact_tie_goes_to_hof():
    prediction = ensemble_predict([FixedPredictor((0.7, 0.3)), FixedPredictor((0.3, 0.7))], Sample("x", "t", Label.NOT))
    assert prediction.label is Label.HOF


def test_ensemble_of_identical_members(wide_model, small_vocab):
    state, head = wide_model
    member = ModelPredictor(state, head, small_vocab, 24)
    samples = [Sample("a", "you idiot", Label.HOF, "yaar"), Sample("b", "kya baat", Label.NOT)]
    single = member.predict_batch(samples)
    for k in (1, 3):
        fused = EnsemblePredictor(tuple([member] * k)).predict_batch(samples)
        for one, many in zip(single, fused):
            np.testing.assert_allclose(many.probs, one.probs, atol=1e-12)
            assert many.label is one.label


def test_ensemble_label_invariant_to_uniform_rescaling():
    rng = np.random.default_rng(0)
    sample = Sample("x", "t", Label.NOT)
    for _ in range(200):
        pairs = [tuple(p) for p in rng.dirichlet([1.0, 1.0], size=3)]
        scale = float(rng.uniform(0.1, 10.0))
        base = ensemble_predict([FixedPredictor(p) for p in pairs], sample)
        scaled = ensemble_predict([FixedPredictor((p[0] * scale, p[1] * scale)) for p in pairs], sample)
        if abs(base.probs[0] - base.probs[1]) > 1e-6:
            assert base.label is scaled.label


def test_ensemble_logit_mode():
    sample = Sample("x", "t", Label.NOT)
    prediction = ensemble_predict([FixedPredictor((0.6, 0.4)), FixedPredictor((0.2, 0.8))], sample, average="logits")
    assert prediction.label is Label.HOF
    assert abs(sum(prediction.probs) - 1.0) < 1e-12


def test_ensemble_errors():
    sample = Sample("x", "idiot", Label.NOT)
    with pytest.raises(EnsembleError):
        ensemble_predict([], sample)
    with pytest.raises(EnsembleError):
        ensemble_predict_batch([], [sample])
    lexicon_member = CombinedPredictor(FixedPredictor((0.5, 0.5)), Lexicon.from_words(["idiot"]))
    with pytest.raises(EnsembleError, match="логит"):
        ensemble_predict([lexicon_member], sample, average="logits")
    with pytest.raises(EnsembleError):
        ensemble_predict([FixedPredictor((0.5, 0.5))], sample, average="median")


def test_ensemble_presets():
    assert set(ENSEMBLE_PRESETS["ensemble-4"]) == {A_SINGLE_FE, A_DUAL_FE, B_SINGLE_FE, B_DUAL_FE}
    assert set(ENSEMBLE_PRESETS["ensemble-2"]) == {A_DUAL_FE, B_DUAL_FE}

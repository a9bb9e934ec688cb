import random

import pytest

from mixcontext.errors import ValidationError
from mixcontext.textprep import (
    CANONICAL_BLOCKS,
    DEFAULT_PREP,
    PrepConfig,
    PrepConfigError,
    filter_charset,
    preprocess,
    strip_mentions,
    strip_urls,
)


def _golden_cases(golden_dir):
    inputs = (golden_dir / "prep_in.txt").read_bytes().decode("utf-8").split("\n")[:-1]
    outputs = (golden_dir / "prep_out.txt").read_bytes().decode("utf-8").split("\n")[:-1]
    return inputs, outputs


def test_golden_suite_is_byte_exact(golden_dir):
    inputs, outputs = _golden_cases(golden_dir)
    assert len(inputs) == len(outputs) >= 30
    for line_no, (raw, expected) in enumerate(zip(inputs, outputs), start=1):
        assert preprocess(raw).encode("utf-8") == expected.encode("utf-8"), f"строка {line_no}: {raw!r}"


@pytest.mark.parametrize(
    "text, expected",
    [
        ("see https://t.co/abc now", "see  now"),
        ("no links here", "no links here"),
        ("www.example.com/x?y=1 end", " end"),
    ],
)
def test_strip_urls(text, expected):
    assert strip_urls(text) == expected


@pytest.mark.parametrize(
    "text, expected",
    [
        ("@user hello", " hello"),
        ("email a@b stays? ", "email a stays? "),
        ("hello", "hello"),
    ],
)
def test_strip_mentions(text, expected):
    assert strip_mentions(text) == expected


@pytest.mark.parametrize(
    "text, expected",
    [
        ("vaccine insano k liye hain reptiles", "vaccine insano k liye hain reptiles"),
        ("नमस्ते hello 🙏", "नमस्ते hello 🙏"),
        ("hello\u0001world привет", "helloworld "),
        ("\u2764\ufe0f pyaar", "\u2764\ufe0f pyaar"),
        ("\U0001F468\u200d\U0001F469\u200d\U0001F467 family", "\U0001F468\u200d\U0001F469\u200d\U0001F467 family"),
        ("na\u00efve caf\u00e9", "nave caf"),
        ("tab\tand\nnewline\u00a0nbsp", "tab and newline nbsp"),
    ],
)
def test_filter_charset(text, expected):
    assert filter_charset(text) == expected


def test_url_with_devanagari_path_is_removed_whole():
    # фильтр до удаления URL оставил бы "http//example.com/" от ссылки
    assert preprocess("dekho https://example.com/भारत/खबर yaar") == "dekho yaar"


def test_fragments_joined_by_filter_are_stripped_again():
    assert preprocess("a @\u0001user b") == "a b"
    assert preprocess("x http\u0001://evil.com y") == "x y"


def test_idempotence_fuzz():
    rng = random.Random(20211206)
    alphabet = (
        list("abcXYZ019 #@:/._-?!%\t\n")
        + ["http://", "https://", "www.", "t.co/", "@u", "\u00a0", "\u0001", "\u200b"]
        + list("भारतखबर।")
        + ["😡", "🙏", "🇮", "\u2764\ufe0f", "\ufe0f", "\u200d", "привет", "₹", "\u00e9"]
    )
    for _ in range(1000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        once = preprocess(text)
        assert preprocess(once) == once, repr(text)
        assert once == once.strip()
        assert "  " not in once
        assert all(ch == " " or any(lo <= ord(ch) <= hi for lo, hi in CANONICAL_BLOCKS) for ch in once)


def test_config_requires_latin_and_devanagari():
    with pytest.raises(PrepConfigError, match="0900-097F"):
        PrepConfig(allowed_blocks=((0x0020, 0x007E),)).validate()
    with pytest.raises(ValidationError):
        PrepConfig(collapse_whitespace=False).validate()
    with pytest.raises(PrepConfigError, match="url_pattern"):
        PrepConfig(url_pattern="(").validate()


def test_config_dict_roundtrip():
    data = DEFAULT_PREP.to_dict()
    assert data["allowed_blocks"][0] == ["0020", "007E"]
    assert PrepConfig.from_dict(data) == DEFAULT_PREP


def test_narrower_blocks_drop_emoji():
    config = PrepConfig(allowed_blocks=((0x0020, 0x007E), (0x0900, 0x097F))).validate()
    assert preprocess("#ResignModi 😡", config) == "#ResignModi"

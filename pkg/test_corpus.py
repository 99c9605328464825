import pytest

from corpus import (
    UNK,
    canonicalize,
    encode_sentences,
    fmm_segment,
    is_punctuation,
    preprocess,
    read_text_lines,
    read_token_file,
    split_sentences,
    tokenize_line,
    write_preprocessed,
)
from errors import ArgumentError, InputError
from lexicon import SPECIAL_TOKENS, build_lexicon, load_lexicon


@pytest.mark.parametrize("text, expected", [
    ("40", [("<N>", True)]),
    ("3.14", [("<N>", True)]),
    ("50%", [("<N>", True)]),
    ("1,000,000", [("<N>", True)]),
    ("三百", [("<N>", True)]),
    ("1998", [("<year>", True)]),
    ("2008年", [("<year>", True)]),
    ("2008年5月12日", [("<date>", True)]),
    ("5月12日", [("<date>", True)]),
    ("2008-05-12", [("<date>", True)]),
    ("12:30", [("<time>", True)]),
    ("８点30分", [("<time>", True)]),
    ("在2008年", [("在", False), ("<year>", True)]),
    ("增长40%以上", [("增长", False), ("<N>", True), ("以上", False)]),
    ("苹果", [("苹果", False)]),
])
def test_canonicalize(text, expected):
    assert canonicalize(text) == expected


def test_numbers_in_a_sentence():
    assert tokenize_line("40 billion", {"billion"}) == ["<N>", "billion"]
    assert tokenize_line("40 billion", {"billion"}, canonicalize_numbers=False, segment_unknown=False) == ["40", "billion"]


def test_fmm_prefers_longest_prefix():
    dictionary = {"研究", "研究生", "生命", "命", "的", "起源"}
    assert fmm_segment("研究生命的起源", dictionary) == ["研究生", "命", "的", "起源"]
    assert fmm_segment("他的起源", dictionary) == ["他", "的", "起源"]


def test_fmm_reconstructs_input():
    dictionary = {"ab", "abc", "cd", "d"}
    for sentence in ["abcd", "xabcdy", "", "dddd", "abab"]:
        assert "".join(fmm_segment(sentence, dictionary)) == sentence


def test_fmm_needs_dictionary():
    with pytest.raises(ArgumentError):
        fmm_segment("abc", set())


def test_punctuation():
    assert is_punctuation(".")
    assert is_punctuation("，")
    assert is_punctuation("……")
    assert not is_punctuation("a.")
    assert not is_punctuation("")


def test_tokenize_keeps_dictionary_and_special_chunks():
    dictionary = {"研究生", "研究", "生命"}
    assert tokenize_line("研究生 <unk> 研究生命", dictionary) == ["研究生", "<unk>", "研究生", "命"]


TRAIN = ["apple bank river .", "eat run apple .", "bank apple zebra ."]


def test_min_count_one_leaves_covered_tokens(tiny_lexicon):
    result = preprocess({"train": ["apple bank river .", "eat run apple ."]}, tiny_lexicon, min_count=1)
    assert all(UNK not in s for s in result.splits["train"])
    assert result.unk_rate == 0.0
    assert result.lexicon.sememes_of_word(result.lexicon.word_index["."])
    for token in SPECIAL_TOKENS:
        assert token in result.lexicon.word_index


def test_rare_and_uncovered_tokens_become_unk(tiny_lexicon):
    result = preprocess({"train": TRAIN, "valid": ["river eat apple"]}, tiny_lexicon, min_count=2)
    assert result.splits["train"][0] == ["apple", "bank", UNK, "."]
    # "zebra" is split into uncovered characters
    assert result.splits["train"][2] == ["bank", "apple"] + [UNK] * 5 + ["."]
    # vocabulary frozen on train: river and eat are too rare there
    assert result.splits["valid"] == [[UNK, UNK, "apple"]]
    assert result.counts["apple"] == 3
    assert result.unk_rate == pytest.approx(8 / 16)
    assert "river" not in result.lexicon.word_index


def test_preprocessing_is_idempotent(tiny_lexicon):
    first = preprocess({"train": TRAIN}, tiny_lexicon, min_count=2)
    again = preprocess({"train": [" ".join(s) for s in first.splits["train"]]}, first.lexicon, min_count=2)
    assert again.splits == first.splits
    assert again.lexicon == first.lexicon


def test_preprocess_needs_train_split(tiny_lexicon):
    with pytest.raises(ArgumentError):
        preprocess({"valid": ["apple"]}, tiny_lexicon)


def test_split_by_token_share():
    sentences = [[f"w{i}"] * 10 for i in range(100)]
    splits = split_sentences(sentences, (8, 1, 1), seed=3)
    sizes = {name: len(s) for name, s in splits.items()}
    assert sum(sizes.values()) == 100
    assert abs(sizes["train"] - 80) <= 1
    assert abs(sizes["valid"] - 10) <= 1
    assert splits == split_sentences(sentences, (8, 1, 1), seed=3)
    assert splits != split_sentences(sentences, (8, 1, 1), seed=4)


def test_split_rejects_bad_proportions():
    with pytest.raises(ArgumentError):
        split_sentences([["a"]], (1, -1, 1))
    with pytest.raises(ArgumentError):
        split_sentences([["a"]], (1, 1))


def test_malformed_utf8_reports_line(tmp_path):
    path = tmp_path / "raw.txt"
    path.write_bytes("fine\n".encode("utf-8") + b"\xff\xfe broken\n")
    with pytest.raises(InputError) as exc:
        read_text_lines(str(path))
    assert exc.value.line == 2


def test_encode_falls_back_to_unk(tiny_lexicon):
    result = preprocess({"train": TRAIN}, tiny_lexicon, min_count=1)
    ids = encode_sentences([["apple", "mango"]], result.lexicon)[0]
    assert ids.tolist() == [result.lexicon.word_index["apple"], result.lexicon.word_index[UNK]]

    bare = build_lexicon([("a", [["x"]])])
    with pytest.raises(ArgumentError):
        encode_sentences([["b"]], bare)


def test_write_preprocessed(tiny_lexicon, tmp_path):
    result = preprocess({"train": TRAIN, "test": ["apple bank"]}, tiny_lexicon, min_count=2)
    paths = write_preprocessed(result, str(tmp_path / "out"))
    assert read_token_file(paths["train"]) == result.splits["train"]
    assert read_token_file(paths["test"]) == [["apple", "bank"]]
    assert load_lexicon(paths["lexicon"]) == result.lexicon


@pytest.mark.parametrize("dictionary, sentence, expected", [
    ({"ab", "a", "b"}, "ab", ["ab"]),
    ({"a", "b"}, "ab", ["a", "b"]),
])
def test_fmm_small_dictionaries(dictionary, sentence, expected):
    assert fmm_segment(sentence, dictionary) == expected


def test_fmm_random_dictionaries(rng):
    alphabet = list("abcde")
    for _ in range(100):
        dictionary = {"".join(rng.choice(alphabet, size=rng.integers(1, 4))) for _ in range(6)}
        sentence = "".join(rng.choice(alphabet, size=rng.integers(0, 20)))
        tokens = fmm_segment(sentence, dictionary)
        assert "".join(tokens) == sentence
        assert all(t in dictionary or len(t) == 1 for t in tokens)


def test_vocabulary_matches_recount(tiny_lexicon):
    lines = ["apple bank river .", "eat run apple .", "bank apple apple", "run run ."]
    result = preprocess({"train": lines}, tiny_lexicon, min_count=2)
    counts = {}
    for line in lines:
        for token in line.split():
            counts[token] = counts.get(token, 0) + 1
    expected = {t for t, c in counts.items() if c >= 2}
    kept = {w for w in result.lexicon.words if w not in SPECIAL_TOKENS}
    assert kept == expected

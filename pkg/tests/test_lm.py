import pytest
from hypothesis import given, settings, strategies as st

from csasr.lm import (
    BOS,
    EOS,
    UNK,
    MalformedArpa,
    initial_state,
    perplexity,
    read_arpa,
    score,
    sentence_log10,
    tokenize_lm,
    train_kn,
    word_count,
    write_arpa,
)

CORPUS = [
    "the cat sat",
    "the cat ran",
    "a dog sat",
    "他 说 the cat 很 好",
    "他 说 a dog 很 好",
    "the dog ran",
]


def _tokens(line):
    return tokenize_lm(line)


@pytest.fixture(scope="module")
def trigram():
    return train_kn([_tokens(s) for s in CORPUS], order=3)


def test_tokenizer_splits_latin_words_and_cjk_chars():
    kinds = [(t.surface, t.kind) for t in tokenize_lm("don't 你好 ok")]
    assert kinds == [
        ("don't", "latin_word"),
        ("你", "cjk_char"),
        ("好", "cjk_char"),
        ("ok", "latin_word"),
    ]


def test_tokenizer_handles_script_boundary_without_space():
    assert [t.surface for t in tokenize_lm("ab你cd")] == ["ab", "你", "cd"]


def test_tokenizer_rejects_unnormalized_input():
    with pytest.raises(ValueError):
        tokenize_lm("Hello!")


def test_word_count_counts_cjk_chars_as_words():
    assert word_count("the cat") == 2
    assert word_count("他说 ok") == 3


def _event_vocab(model):
    # everything predictable: observed types plus the unknown, minus <s>
    return {g[0] for g in model.tables[1]} - {BOS}


def _context_sum(model, context):
    return sum(
        10.0 ** score(model, _state_with(model, context), w)[0]
        for w in _event_vocab(model)
    )


def _state_with(model, context):
    state = initial_state(model)
    return type(state)(context, 0.0)


def test_every_stored_context_normalizes(trigram):
    contexts = {()} | {g[:-1] for k in (2, 3) for g in trigram.tables[k]}
    for ctx in contexts:
        assert _context_sum(trigram, ctx) == pytest.approx(1.0, abs=1e-9)


def test_unseen_context_normalizes_via_backoff(trigram):
    assert _context_sum(trigram, ("sat", "他")) == pytest.approx(1.0, abs=1e-9)


def test_oov_tokens_map_to_unk(trigram):
    state = initial_state(trigram)
    lp_oov, _ = score(trigram, state, "zebra")
    lp_unk, _ = score(trigram, state, UNK)
    assert lp_oov == lp_unk


def test_unigram_unk_mass_is_positive(trigram):
    logp, bow = trigram.tables[1][(UNK,)]
    assert logp < 0.0
    assert bow is None


def test_bos_is_context_only(trigram):
    logp, bow = trigram.tables[1][(BOS,)]
    assert logp == -99.0
    assert bow is not None


def test_sentence_log10_includes_end_event(trigram):
    sent = _tokens("the cat sat")
    total = sentence_log10(trigram, sent)
    state = initial_state(trigram)
    manual = 0.0
    for tok in sent + [EOS]:
        lp, state = score(trigram, state, tok)
        manual += lp
    assert total == pytest.approx(manual, abs=1e-12)


def test_perplexity_of_certain_corpus_is_one():
    # single repeated unigram event: model predicts it with near certainty
    model = train_kn([["x"]] * 50, order=1)
    assert perplexity(model, [["x"]]) == pytest.approx(
        10.0 ** (-sentence_log10(model, ["x"]) / 2), rel=1e-12
    )


def test_training_rejects_empty_corpus():
    with pytest.raises(ValueError):
        train_kn([], order=2)
    with pytest.raises(ValueError):
        train_kn([["a"]], order=0)


def test_bigram_probability_by_hand():
    # corpus "a a b" x3, n=2. Continuation unigrams: a=2, b=1, </s>=1 (sum 4),
    # D1 = 2/(2+2) = 0.5; bigram counts are all 3 so D2 falls back to 0.5.
    # P(b|a) = (3-0.5)/6 + (0.5*2/6)*((1-0.5)/4) = 0.4375
    model = train_kn([_tokens("a a b")] * 3, order=2)
    state = _state_with(model, ("a",))
    lp, _ = score(model, state, "b")
    assert 10.0**lp == pytest.approx(0.4375, abs=1e-12)
    # unseen bigram (b, a): bow(b) * P1(a) = (0.5*1/3) * 0.375 = 0.0625
    lp_backoff, _ = score(model, _state_with(model, ("b",)), "a")
    assert 10.0**lp_backoff == pytest.approx(0.0625, abs=1e-12)
    assert 2 in model.degenerate_orders and 1 not in model.degenerate_orders


def test_degenerate_count_of_counts_falls_back():
    model = train_kn([_tokens("a b")], order=2)
    assert model.degenerate_orders  # singleton corpus has no n2 anywhere
    assert all(d == 0.5 for k, d in model.discounts.items() if k in model.degenerate_orders)


def test_arpa_round_trip_is_within_write_precision(trigram, tmp_path):
    path = tmp_path / "m.arpa"
    write_arpa(trigram, path)
    back = read_arpa(path)
    assert back.order == trigram.order
    for k in range(1, 4):
        assert back.tables[k].keys() == trigram.tables[k].keys()
        for gram, (logp, bow) in trigram.tables[k].items():
            logp2, bow2 = back.tables[k][gram]
            assert logp2 == pytest.approx(logp, abs=1e-6)
            if bow is None:
                assert bow2 is None
            else:
                assert bow2 == pytest.approx(bow, abs=1e-6)


def test_arpa_round_trip_preserves_scores(trigram, tmp_path):
    path = tmp_path / "m.arpa"
    write_arpa(trigram, path)
    back = read_arpa(path)
    for line in ("the cat sat", "他 很 好", "dog 说"):
        assert sentence_log10(back, _tokens(line)) == pytest.approx(
            sentence_log10(trigram, _tokens(line)), abs=1e-5
        )


def test_arpa_output_is_deterministic(trigram, tmp_path):
    a, b = tmp_path / "a.arpa", tmp_path / "b.arpa"
    write_arpa(trigram, a)
    write_arpa(trigram, b)
    assert a.read_bytes() == b.read_bytes()


def test_read_arpa_rejects_count_mismatch(tmp_path):
    path = tmp_path / "bad.arpa"
    path.write_text(
        "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3 a\n\n\\end\\\n", encoding="utf-8"
    )
    with pytest.raises(MalformedArpa):
        read_arpa(path)


def test_read_arpa_rejects_missing_end(tmp_path):
    path = tmp_path / "bad.arpa"
    path.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3 a\n", encoding="utf-8")
    with pytest.raises(MalformedArpa):
        read_arpa(path)


def test_read_arpa_rejects_garbage_probability(tmp_path):
    path = tmp_path / "bad.arpa"
    path.write_text(
        "\\data\\\nngram 1=1\n\n\\1-grams:\nxyz a\n\n\\end\\\n", encoding="utf-8"
    )
    with pytest.raises(MalformedArpa) as info:
        read_arpa(path)
    assert info.value.line_number == 5


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_normalization_holds_on_random_corpora(data):
    words = ["a", "b", "cd", "你", "好"]
    corpus = data.draw(
        st.lists(
            st.lists(st.sampled_from(words), min_size=1, max_size=5),
            min_size=1,
            max_size=8,
        )
    )
    order = data.draw(st.integers(1, 4))
    model = train_kn(corpus, order=order)
    contexts = {()} | {
        g[:-1] for k in range(2, order + 1) for g in model.tables.get(k, {})
    }
    for ctx in contexts:
        assert _context_sum(model, ctx) == pytest.approx(1.0, abs=1e-8)

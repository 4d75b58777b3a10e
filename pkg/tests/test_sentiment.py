import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soanno.sentiment import (
    LexiconError,
    SentimentLexicon,
    load_lexicon,
    score,
)


def lex(valence=None, boosters=None, negators=()):
    return SentimentLexicon(
        valence=valence or {},
        boosters=boosters or {},
        negators=frozenset(negators),
    )


class TestLoadLexicon:
    def test_simple_parse(self, tmp_path):
        path = tmp_path / "lex.tsv"
        path.write_text("good\t1.9\n")
        (tmp_path / "b.txt").write_text("")
        (tmp_path / "n.txt").write_text("")
        lexicon = load_lexicon(path, tmp_path / "b.txt", tmp_path / "n.txt")
        assert lexicon.valence == {"good": 1.9}

    def test_empty_file_warns(self, tmp_path, caplog):
        for name in ("lex.tsv", "b.txt", "n.txt"):
            (tmp_path / name).write_text("")
        with caplog.at_level("WARNING"):
            lexicon = load_lexicon(
                tmp_path / "lex.tsv", tmp_path / "b.txt", tmp_path / "n.txt"
            )
        assert lexicon.valence == {}
        assert "empty" in caplog.text

    def test_unparsable_valence_names_line(self, tmp_path):
        (tmp_path / "lex.tsv").write_text("bad\tx\n")
        (tmp_path / "b.txt").write_text("")
        (tmp_path / "n.txt").write_text("")
        with pytest.raises(LexiconError, match="line 1"):
            load_lexicon(tmp_path / "lex.tsv", tmp_path / "b.txt", tmp_path / "n.txt")

    def test_duplicate_token_last_wins(self, tmp_path, caplog):
        (tmp_path / "lex.tsv").write_text("good\t1.0\ngood\t2.0\n")
        (tmp_path / "b.txt").write_text("")
        (tmp_path / "n.txt").write_text("")
        with caplog.at_level("WARNING"):
            lexicon = load_lexicon(
                tmp_path / "lex.tsv", tmp_path / "b.txt", tmp_path / "n.txt"
            )
        assert lexicon.valence["good"] == 2.0
        assert "duplicate" in caplog.text

    def test_packaged_defaults(self):
        lexicon = load_lexicon()
        assert lexicon.valence["good"] == 1.9
        assert "not" in lexicon.negators
        assert lexicon.boosters["very"] > 0
        assert lexicon.boosters["slightly"] < 0

    def test_valence_range_enforced(self):
        with pytest.raises(ValueError):
            lex(valence={"x": 4.5})
        with pytest.raises(ValueError):
            SentimentLexicon(valence={}, boosters={"x": 1.5})


class TestScore:
    def test_single_positive_token(self):
        # 1.9 / sqrt(1.9^2 + 15) = 0.4404
        scores = score("good", lex(valence={"good": 1.9}))
        assert scores.compound == pytest.approx(1.9 / math.sqrt(1.9**2 + 15), abs=1e-9)
        assert scores.compound == pytest.approx(0.4404, abs=1e-4)
        assert (scores.pos, scores.neg, scores.neu) == (1.0, 0.0, 0.0)

    def test_no_lexicon_hits(self):
        scores = score("plain words only", lex(valence={"good": 1.9}))
        assert (scores.pos, scores.neg, scores.neu, scores.compound) == (0, 0, 1.0, 0)

    def test_negation_rule(self):
        # -0.74 * 1.9 = -1.406 -> -1.406 / sqrt(1.406^2 + 15) = -0.3412
        lexicon = lex(valence={"good": 1.9}, negators={"not"})
        flipped = score("not good", lexicon)
        assert flipped.compound == pytest.approx(-0.3412, abs=1e-4)
        assert flipped.compound < 0 < score("good", lexicon).compound

    def test_negation_window_is_three_tokens(self):
        lexicon = lex(valence={"good": 1.9}, negators={"not"})
        assert score("not a b good", lexicon).compound < 0
        assert score("not a b c good", lexicon).compound > 0

    def test_booster_distance_scaling(self):
        lexicon = lex(valence={"good": 1.9}, boosters={"very": 0.293})
        near = score("very good", lexicon).compound
        far = score("very so so good", lexicon).compound
        plain = score("good", lexicon).compound
        assert near > far > plain

    def test_allcaps_emphasis(self):
        lexicon = lex(valence={"good": 1.9})
        assert (
            score("GOOD day", lexicon).compound > score("good day", lexicon).compound
        )
        # all-caps text has no contrast, so no bump
        assert score("GOOD DAY", lexicon).compound == pytest.approx(
            score("good day", lexicon).compound
        )

    def test_exclamation_bump_caps_at_three(self):
        lexicon = lex(valence={"good": 1.9})
        s1 = score("good!", lexicon).compound
        s3 = score("good!!!", lexicon).compound
        s9 = score("good!!!!!!!!!", lexicon).compound
        assert s1 > score("good", lexicon).compound
        assert s3 == s9
        expected = (1.9 + 3 * 0.292) / math.sqrt((1.9 + 3 * 0.292) ** 2 + 15)
        assert s3 == pytest.approx(expected, abs=1e-9)

    def test_empty_text(self):
        scores = score("", lex(valence={"good": 1.0}))
        assert scores.neu == 1.0 and scores.compound == 0.0


tokens = st.sampled_from(["good", "bad", "calm", "grim", "table", "chair", "not"])


@st.composite
def text_and_lexicon(draw):
    words = draw(st.lists(tokens, min_size=1, max_size=8))
    valence = {"good": 1.9, "bad": -2.5, "calm": 1.2, "grim": -1.4}
    return " ".join(words), valence


class TestProperties:
    @given(text_and_lexicon())
    @settings(max_examples=120)
    def test_compound_odd_under_valence_negation(self, case):
        text, valence = case
        plus = score(text, lex(valence=valence, negators={"not"}))
        minus = score(
            text, lex(valence={k: -v for k, v in valence.items()}, negators={"not"})
        )
        assert plus.compound == pytest.approx(-minus.compound, abs=1e-9)
        assert plus.pos == pytest.approx(minus.neg, abs=1e-9)

    @given(text_and_lexicon())
    @settings(max_examples=120)
    def test_compound_bounded(self, case):
        text, valence = case
        scores = score(text, lex(valence=valence))
        assert -1.0 < scores.compound < 1.0

    @given(text_and_lexicon())
    @settings(max_examples=120)
    def test_mass_shares_sum_to_one(self, case):
        text, valence = case
        scores = score(text, lex(valence=valence))
        assert scores.pos + scores.neg + scores.neu == pytest.approx(1.0, abs=1e-6)

    @given(st.sampled_from(["good", "calm"]), st.sampled_from(["bad", "grim"]))
    @settings(max_examples=20)
    def test_booster_monotonicity(self, positive, negative):
        valence = {"good": 1.9, "bad": -2.5, "calm": 1.2, "grim": -1.4}
        lexicon = lex(valence=valence, boosters={"very": 0.293})
        assert (
            score(f"very {positive}", lexicon).compound
            >= score(positive, lexicon).compound
        )
        assert (
            score(f"very {negative}", lexicon).compound
            <= score(negative, lexicon).compound
        )

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvgeo import stemmer
from mvgeo.corpus import (
    Corpus,
    CorpusError,
    PreprocessConfig,
    Tweet,
    User,
    build_corpus,
    extract_mentions,
    hour_histogram,
    load_corpus,
    save_corpus,
    timestamp_feature,
    tokenize,
)

NO_FILTER = PreprocessConfig(remove_stopwords=False)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def user_record(uid, lat=10.0, lon=20.0, split="train", tweets=None):
    if tweets is None:
        tweets = [{"text": "hello world", "ts": 1262307600}]
    return {"user_id": uid, "lat": lat, "lon": lon, "split": split, "tweets": tweets}


class TestLoadCorpus:
    def test_three_users_one_per_split(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [
            user_record("a", split="train"),
            user_record("b", split="dev"),
            user_record("c", split="test"),
        ])
        corpus = load_corpus(path)
        assert corpus.split_counts == {"train": 1, "dev": 1, "test": 1}

    def test_tsv_out_of_range_latitude_names_field_and_line(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\t10.0\t20.0\ttrain\thi there\nb\t91.0\t20.0\ttrain\thello\n")
        with pytest.raises(CorpusError, match=r"line 2.*latitude"):
            load_corpus(path, format="tsv")

    def test_duplicate_user_id_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [user_record("a"), user_record("a")])
        with pytest.raises(CorpusError, match="duplicate"):
            load_corpus(path)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"user_id": "a"}\nnot json\n')
        with pytest.raises(CorpusError, match="line 1"):
            load_corpus(path)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "c.jsonl"
        record = user_record("a")
        del record["lat"]
        write_jsonl(path, [record])
        with pytest.raises(CorpusError, match="'lat'"):
            load_corpus(path)

    def test_longitude_180_is_out_of_range(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [user_record("a", lon=180.0)])
        with pytest.raises(CorpusError, match="longitude"):
            load_corpus(path)

    def test_empty_tweets_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [user_record("a", tweets=[])])
        with pytest.raises(CorpusError, match="tweets"):
            load_corpus(path)

    def test_tweet_order_preserved(self, tmp_path):
        path = tmp_path / "c.jsonl"
        tweets = [{"text": f"tweet number {i}", "ts": None} for i in range(5)]
        write_jsonl(path, [user_record("a", tweets=tweets)])
        corpus = load_corpus(path)
        assert [t.text for t in corpus.users["a"].tweets] == [t["text"] for t in tweets]

    def test_save_then_load_round_trips(self, tmp_path):
        users = [
            User("a", 40.5, -74.25, [Tweet("first tweet", 100), Tweet("second", None)], "train"),
            User("b", -33.0, 151.0, [Tweet("g'day @a!")], "test"),
        ]
        corpus = build_corpus(users)
        path = tmp_path / "out.jsonl"
        save_corpus(corpus, path)
        again = load_corpus(path)
        assert set(again.users) == set(corpus.users)
        for uid, user in corpus.users.items():
            other = again.users[uid]
            assert (other.latitude, other.longitude, other.split) == (
                user.latitude, user.longitude, user.split)
            assert [(t.text, t.timestamp_utc) for t in other.tweets] == [
                (t.text, t.timestamp_utc) for t in user.tweets]


class TestTokenize:
    def test_url_and_punctuation_collapse(self):
        # "now" is on the shipped stop-word list.
        assert tokenize("Check http://t.co/x NOW!!") == ["check", "<url>", "<punct>"]

    def test_empty_input(self):
        assert tokenize("") == []

    def test_stemming_folds_inflections(self):
        config = PreprocessConfig(remove_stopwords=False, stem=True)
        assert tokenize("running runs", config) == ["run", "run"]

    def test_mentions_survive_as_tokens(self):
        tokens = tokenize("hey @Bob_99 look", NO_FILTER)
        assert tokens == ["hey", "@bob_99", "look"]

    def test_mention_after_punctuation(self):
        assert tokenize(".@bob yes", NO_FILTER) == ["<punct>", "@bob", "yes"]

    def test_stopwords_removed_by_default(self):
        assert tokenize("this is a tree") == ["tree"]

    @given(st.text(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_without_stemming(self, text):
        once = tokenize(text, NO_FILTER)
        again = tokenize(" ".join(once), NO_FILTER)
        assert once == again

    def test_extract_mentions_lowercases(self):
        assert extract_mentions("cc @Alice and @BOB!") == ["alice", "bob"]


class TestPorterStemmer:
    # Reference pairs from the published algorithm's example set.
    CASES = [
        ("caresses", "caress"), ("ponies", "poni"), ("ties", "ti"),
        ("caress", "caress"), ("cats", "cat"), ("feed", "feed"),
        ("agreed", "agre"), ("plastered", "plaster"), ("bled", "bled"),
        ("motoring", "motor"), ("sing", "sing"), ("conflated", "conflat"),
        ("troubled", "troubl"), ("sized", "size"), ("hopping", "hop"),
        ("tanned", "tan"), ("falling", "fall"), ("hissing", "hiss"),
        ("failing", "fail"), ("filing", "file"), ("happy", "happi"),
        ("sky", "sky"), ("relational", "relat"), ("conditional", "condit"),
        ("rational", "ration"), ("digitizer", "digit"),
        ("operator", "oper"), ("feudalism", "feudal"),
        ("decisiveness", "decis"), ("hopefulness", "hope"),
        ("formality", "formal"), ("sensitivity", "sensit"),
        ("triplicate", "triplic"), ("formative", "form"),
        ("formalize", "formal"), ("electrical", "electr"),
        ("hopeful", "hope"), ("goodness", "good"), ("revival", "reviv"),
        ("allowance", "allow"), ("inference", "infer"),
        ("adjustable", "adjust"), ("defensible", "defens"),
        ("irritant", "irrit"), ("replacement", "replac"),
        ("adjustment", "adjust"), ("dependent", "depend"),
        ("adoption", "adopt"), ("communism", "commun"),
        ("activate", "activ"), ("effective", "effect"),
        ("rate", "rate"), ("cease", "ceas"), ("controll", "control"),
        ("roll", "roll"),
    ]

    @pytest.mark.parametrize("word,expected", CASES)
    def test_reference_vectors(self, word, expected):
        assert stemmer.stem(word) == expected

    def test_short_words_untouched(self):
        assert stemmer.stem("is") == "is"
        assert stemmer.stem("a") == "a"


class TestTimestampFeature:
    def make_user(self, hours):
        tweets = [Tweet("x", 1262304000 + h * 3600) for h in hours]
        return User("u", 0.0, 0.0, tweets, "train")

    def test_single_hour_is_unit_spike(self):
        vec = timestamp_feature(self.make_user([13] * 5))
        expected = np.zeros(24)
        expected[13] = 1.0
        np.testing.assert_allclose(vec, expected)

    def test_two_hours_split_evenly(self):
        vec = timestamp_feature(self.make_user([0, 12]))
        assert vec[0] == pytest.approx(1 / math.sqrt(2))
        assert vec[12] == pytest.approx(1 / math.sqrt(2))
        assert vec.sum() == pytest.approx(2 / math.sqrt(2))

    def test_no_timestamps_gives_zero_vector(self):
        user = User("u", 0.0, 0.0, [Tweet("x", None)], "train")
        np.testing.assert_array_equal(timestamp_feature(user), np.zeros(24))

    @given(st.lists(st.integers(min_value=0, max_value=23), min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_nonzero_vectors_have_unit_norm(self, hours):
        vec = timestamp_feature(self.make_user(hours))
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.integers(min_value=0, max_value=23), min_size=0, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_histogram_counts_timestamped_tweets(self, hours):
        user = self.make_user(hours)
        user.tweets.append(Tweet("no ts", None))
        assert hour_histogram(user).sum() == len(hours)

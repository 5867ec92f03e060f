import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from localweak.corpus import (
    CorpusFormatError,
    Gazetteer,
    LabeledExample,
    PUBLISHER_MARKED,
    BOOTSTRAP_FLIP,
    RecordInvalid,
    load_articles,
    load_clicks,
    load_examples,
    split_examples,
    write_dataset,
    write_examples,
)

from conftest import make_article


ARTICLE = {
    "id": "a1",
    "market": "EN-US",
    "language": "en",
    "title": "t",
    "body": "b",
    "url": "https://pub.com/x",
    "publisher": "pub",
}


def write_lines(path, rows):
    path.write_text(
        "\n".join(json.dumps(r) if isinstance(r, dict) else r for r in rows) + "\n",
        encoding="utf-8",
    )


def test_load_articles_all_valid(tmp_path):
    rows = [dict(ARTICLE, id=f"a{i}") for i in range(3)]
    path = tmp_path / "articles.jsonl"
    write_lines(path, rows)
    articles, rejects = load_articles(path)
    assert len(articles) == 3
    assert rejects == []


def test_missing_url_rejected(tmp_path):
    rec = dict(ARTICLE, id="bad")
    del rec["url"]
    path = tmp_path / "articles.jsonl"
    write_lines(path, [ARTICLE, rec])
    articles, rejects = load_articles(path)
    assert [a.id for a in articles] == ["a1"]
    assert rejects[0].reason == "missing field url"


def test_market_language_mismatch_rejected(tmp_path):
    path = tmp_path / "articles.jsonl"
    write_lines(path, [ARTICLE, dict(ARTICLE, id="bad", market="EN-US", language="fr")])
    articles, rejects = load_articles(path)
    assert [a.id for a in articles] == ["a1"]
    assert rejects[0].reason == "market/language mismatch"


def test_invalid_json_and_duplicate_id(tmp_path):
    path = tmp_path / "articles.jsonl"
    write_lines(
        path, [ARTICLE, dict(ARTICLE, id="a2"), "{not json", dict(ARTICLE)]
    )
    articles, rejects = load_articles(path)
    assert len(articles) == 2
    assert {r.reason for r in rejects} == {"invalid json", "duplicate id"}


def test_rejects_written_next_to_input(tmp_path):
    path = tmp_path / "articles.jsonl"
    write_lines(path, [ARTICLE, dict(ARTICLE, id="a2", url="nope")])
    load_articles(path)
    reject_file = tmp_path / "articles.jsonl.rejects.jsonl"
    assert reject_file.exists()
    rec = json.loads(reject_file.read_text().splitlines()[0])
    assert rec["reason"] == "invalid url"


def test_mostly_malformed_aborts(tmp_path):
    path = tmp_path / "articles.jsonl"
    write_lines(path, [ARTICLE, "{bad", "{worse"])
    with pytest.raises(CorpusFormatError):
        load_articles(path)


def test_half_malformed_is_tolerated(tmp_path):
    # the abort threshold is strictly more than half
    path = tmp_path / "articles.jsonl"
    write_lines(path, [ARTICLE, "{bad"])
    articles, rejects = load_articles(path)
    assert len(articles) == 1 and len(rejects) == 1


CLICK = {
    "subject_type": "publisher",
    "subject_id": "P1",
    "city": "Seattle",
    "state": "WA",
    "clicks": 30,
    "window_start": "2024-01-01T00:00:00Z",
    "window_end": "2024-01-29T00:00:00Z",
}


def test_duplicate_clicks_summed(tmp_path):
    path = tmp_path / "clicks.jsonl"
    write_lines(path, [CLICK, dict(CLICK, clicks=25)])
    records, rejects = load_clicks(path)
    assert rejects == []
    assert len(records) == 1
    assert records[0].clicks == 55
    assert records[0].city == "seattle"


def test_negative_clicks_rejected(tmp_path):
    path = tmp_path / "clicks.jsonl"
    write_lines(path, [dict(CLICK, clicks=-1)])
    records, rejects = load_clicks(path)
    assert records == []
    assert rejects[0].reason == "negative clicks"


def test_empty_click_file_warns(tmp_path, caplog):
    path = tmp_path / "clicks.jsonl"
    path.write_text("")
    with caplog.at_level("WARNING"):
        records, rejects = load_clicks(path)
    assert records == [] and rejects == []
    assert any("empty" in msg for msg in caplog.messages)


def test_bad_window_rejected(tmp_path):
    path = tmp_path / "clicks.jsonl"
    write_lines(
        path,
        [dict(CLICK, window_start="2024-02-01T00:00:00Z", window_end="2024-01-01T00:00:00Z")],
    )
    _, rejects = load_clicks(path)
    assert rejects[0].reason == "window start not before end"


def test_clicks_tsv(tmp_path):
    path = tmp_path / "clicks.tsv"
    header = "subject_type\tsubject_id\tcity\tstate\tclicks\twindow_start\twindow_end"
    row = "publisher\tP1\tSeattle\twa\t40\t2024-01-01T00:00:00Z\t2024-01-29T00:00:00Z"
    path.write_text(header + "\n" + row + "\n")
    records, rejects = load_clicks(path)
    assert rejects == []
    assert records[0].state == "WA" and records[0].clicks == 40


@settings(max_examples=40, deadline=None)
@given(order=st.permutations(list(range(6))))
def test_click_merge_is_order_invariant(tmp_path_factory, order):
    rows = [
        dict(CLICK, clicks=10),
        dict(CLICK, clicks=20),
        dict(CLICK, city="Bellevue", clicks=5),
        dict(CLICK, subject_id="P2", clicks=7),
        dict(CLICK, city="Bellevue", clicks=8),
        dict(CLICK, clicks=1),
    ]
    path = tmp_path_factory.mktemp("clicks") / "clicks.jsonl"
    write_lines(path, [rows[i] for i in order])
    records, _ = load_clicks(path, write_reject_file=False)
    got = {(r.subject_id, r.city): r.clicks for r in records}
    assert got == {("P1", "seattle"): 31, ("P1", "bellevue"): 13, ("P2", "seattle"): 7}


def make_example(i, label, market="EN-US", language="en"):
    return LabeledExample(
        article_id=f"a{i}",
        features=f"[TOPICS] t{i} [TAGLINE] s [TITLE] title {i} [URL] u",
        label=label,
        provenance=(PUBLISHER_MARKED,),
        market=market,
        language=language,
    )


def test_dataset_round_trip(tmp_path):
    examples = [make_example(i, i % 2) for i in range(7)]
    path = tmp_path / "labels.jsonl"
    write_examples(examples, path)
    loaded = load_examples(path)
    assert loaded == examples


def test_split_90_10(tmp_path):
    examples = [make_example(i, i % 2, market="EN-US" if i % 3 else "DE-DE") for i in range(100)]
    train_path, valid_path = write_dataset(examples, tmp_path / "dataset", 0.9, seed=7)
    train, valid = load_examples(train_path), load_examples(valid_path)
    assert len(train) == 90 and len(valid) == 10
    assert {e.article_id for e in train} | {e.article_id for e in valid} == {
        e.article_id for e in examples
    }


def test_split_single_class(tmp_path):
    examples = [make_example(i, 1) for i in range(10)]
    train, valid = split_examples(examples, 0.9, seed=3)
    assert len(train) == 9 and len(valid) == 1
    assert all(e.label == 1 for e in train + valid)


def test_split_deterministic_bytes(tmp_path):
    examples = [make_example(i, i % 2) for i in range(41)]
    p1, v1 = write_dataset(examples, tmp_path / "d1", 0.9, seed=11)
    p2, v2 = write_dataset(examples, tmp_path / "d2", 0.9, seed=11)
    assert p1.read_bytes() == p2.read_bytes()
    assert v1.read_bytes() == v2.read_bytes()


def test_split_different_seed_differs():
    examples = [make_example(i, i % 2) for i in range(200)]
    t1, _ = split_examples(examples, 0.9, seed=1)
    t2, _ = split_examples(examples, 0.9, seed=2)
    assert {e.article_id for e in t1} != {e.article_id for e in t2}


@settings(max_examples=30, deadline=None)
@given(
    sizes=st.lists(st.integers(min_value=1, max_value=25), min_size=1, max_size=6),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_split_stratification_within_one(sizes, seed):
    examples = []
    idx = 0
    for s, n in enumerate(sizes):
        for _ in range(n):
            examples.append(
                make_example(idx, label=s % 2, market=f"M{s // 2}")
            )
            idx += 1
    train, valid = split_examples(examples, 0.9, seed=seed)
    assert len(train) == int(0.9 * len(examples) + 0.5)
    by_stratum_total = {}
    by_stratum_train = {}
    for ex in examples:
        by_stratum_total[(ex.label, ex.market)] = (
            by_stratum_total.get((ex.label, ex.market), 0) + 1
        )
    for ex in train:
        by_stratum_train[(ex.label, ex.market)] = (
            by_stratum_train.get((ex.label, ex.market), 0) + 1
        )
    for key, total in by_stratum_total.items():
        got = by_stratum_train.get(key, 0)
        assert abs(got - 0.9 * total) < 1.0


def test_split_empty_raises():
    with pytest.raises(ValueError):
        split_examples([], 0.9, seed=0)


def test_labeled_example_validation():
    with pytest.raises(RecordInvalid):
        make_example(0, 2)
    with pytest.raises(RecordInvalid):
        LabeledExample("a", "f", 1, provenance=())
    with pytest.raises(RecordInvalid):
        LabeledExample("a", "f", 1, provenance=(BOOTSTRAP_FLIP, BOOTSTRAP_FLIP))
    with pytest.raises(RecordInvalid):
        LabeledExample("a", "f", 1, provenance=("NotARule",))
    with pytest.raises(RecordInvalid):
        LabeledExample("a", "f", 1, provenance=(PUBLISHER_MARKED,), weight=0.0)


def test_gazetteer_match(tmp_path):
    path = tmp_path / "gazetteer.tsv"
    path.write_text(
        "name\tcity\tstate\tcountry\n"
        "San Jose\tsan jose\tCA\tUS\n"
        "Seattle\tseattle\tWA\tUS\n"
        "Irvine\tirvine\tCA\tUS\n"
    )
    gaz = Gazetteer.load(path)
    assert len(gaz) == 3
    assert gaz.contains_any("San Jose Police arrest man")
    assert gaz.contains_any("the SEATTLE skyline")
    # whole-token: no partial matches inside words
    assert not gaz.contains_any("seattleite writes about sanjose")
    # multi-word names need contiguous tokens
    assert not gaz.contains_any("san somewhere jose")
    hits = gaz.match("From Seattle to San Jose and back to seattle")
    assert [e.name for e in hits] == ["san jose", "seattle"]
    assert gaz.match("x") == []


def test_gazetteer_match_deterministic(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("name\tcity\tstate\tcountry\nBoise\tboise\tID\tUS\n")
    gaz = Gazetteer.load(path)
    text = "Boise fire crews respond in Boise"
    assert gaz.match(text) == gaz.match(text)


def test_article_validation_catches_bad_label():
    with pytest.raises(Exception):
        from localweak.corpus import article_from_dict

        article_from_dict(dict(ARTICLE, publisher_label="Sideways"))

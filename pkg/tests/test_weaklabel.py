import pytest

from localweak.affinity import (
    AMBIGUOUS,
    STRONG_LOCAL,
    STRONG_NONLOCAL,
    ArticleAffinity,
    PublisherAffinity,
)
from localweak.corpus import (
    ARTICLE_AFFINITY,
    BOOTSTRAP_FLIP,
    LOCAL,
    NONLOCAL,
    PUBLISHER_MARKED,
    STRONG_NONLOCAL_PUBLISHER,
    LabeledExample,
)
from localweak.weaklabel import (
    base_label,
    bootstrap_correct,
    distant_supervision,
    flip_decision,
)

from conftest import make_article


def paff(segment, publisher="pub"):
    return PublisherAffinity(publisher=publisher, selected_cities=[], segment=segment)


def test_segment_beats_publisher_mark():
    art = make_article(publisher_label="Local")
    decision = base_label(art, paff(STRONG_NONLOCAL), ArticleAffinity("Unknown"))
    assert decision.label == NONLOCAL
    assert decision.source == STRONG_NONLOCAL_PUBLISHER


def test_no_signal_excludes():
    art = make_article()
    assert base_label(art, paff(AMBIGUOUS), ArticleAffinity("Unknown")) is None
    assert base_label(art, None, None) is None


def test_article_affinity_beats_everything():
    art = make_article(publisher_label="NonLocal")
    decision = base_label(
        art, paff(STRONG_NONLOCAL), ArticleAffinity("Local", "seattle", "WA")
    )
    assert decision.label == LOCAL
    assert decision.source == ARTICLE_AFFINITY


def test_publisher_mark_fallback():
    art = make_article(publisher_label="Local")
    decision = base_label(art, paff(AMBIGUOUS), None)
    assert decision.label == LOCAL and decision.source == PUBLISHER_MARKED


def test_strong_local_segment():
    decision = base_label(make_article(), paff(STRONG_LOCAL), None)
    assert decision.label == LOCAL


def test_precedence_total_over_combinations():
    # every combination yields exactly one outcome (possibly exclusion)
    segments = [None, paff(STRONG_LOCAL), paff(STRONG_NONLOCAL), paff(AMBIGUOUS)]
    verdicts = [
        None,
        ArticleAffinity("Unknown"),
        ArticleAffinity("Local", "a", "WA"),
        ArticleAffinity("NonLocal"),
    ]
    marks = [None, "Local", "NonLocal"]
    for seg in segments:
        for verdict in verdicts:
            for mark in marks:
                art = make_article(publisher_label=mark)
                decision = base_label(art, seg, verdict)
                assert decision is None or decision.label in (LOCAL, NONLOCAL)


# --- distant supervision -------------------------------------------------------


def licensed_article(**kw):
    base = dict(
        id="lic1",
        licensed=True,
        publisher_label="Local",
        canonical_url="https://origin.com/story-one",
        title="Bridge closure snarls commute",
    )
    base.update(kw)
    return make_article(**base)


def test_title_match_propagates_label():
    lic = licensed_article()
    unl = make_article(
        id="u1", title="Bridge  Closure snarls COMMUTE", url="https://mirror.com/x"
    )
    decisions = distant_supervision([lic], [unl])
    assert len(decisions) == 1
    assert decisions[0].label == LOCAL
    assert decisions[0].article_id == "u1"
    assert decisions[0].source == "DistantSupervision"


def test_canonical_url_match_propagates_label():
    lic = licensed_article()
    unl = make_article(id="u2", title="Other", url="HTTPS://ORIGIN.COM/STORY-ONE")
    decisions = distant_supervision([lic], [unl])
    assert len(decisions) == 1 and decisions[0].label == LOCAL


def test_conflicting_matches_skipped(caplog):
    lic_a = licensed_article()
    lic_b = licensed_article(id="lic2", publisher_label="NonLocal")
    unl = make_article(id="u3", title="Bridge closure snarls commute")
    with caplog.at_level("INFO"):
        decisions = distant_supervision([lic_a, lic_b], [unl])
    assert decisions == []
    assert any("conflict" in m for m in caplog.messages)


def test_no_match_no_decision():
    decisions = distant_supervision([licensed_article()], [make_article(id="u4")])
    assert decisions == []


def test_unlabeled_licensed_articles_ignored():
    lic = licensed_article(publisher_label=None)
    unl = make_article(id="u5", title="Bridge closure snarls commute")
    assert distant_supervision([lic], [unl]) == []


# --- bootstrap ------------------------------------------------------------------


def example(label, provenance=(PUBLISHER_MARKED,)):
    return LabeledExample(
        article_id="a1",
        features="[TOPICS] x [TAGLINE] y [TITLE] z [URL] w",
        label=label,
        provenance=provenance,
        language="de",
        market="DE-DE",
    )


def test_confident_nonlocal_flips_local_label():
    out = bootstrap_correct(example(LOCAL), p_local=0.1)
    assert out.label == NONLOCAL
    assert out.provenance[-1] == BOOTSTRAP_FLIP


def test_middling_score_unchanged():
    out = bootstrap_correct(example(LOCAL), p_local=0.3)
    assert out.label == LOCAL
    assert BOOTSTRAP_FLIP not in out.provenance


def test_confident_local_flips_nonlocal_label():
    out = bootstrap_correct(example(NONLOCAL), p_local=0.9)
    assert out.label == LOCAL


def test_band_boundaries_do_not_flip():
    assert bootstrap_correct(example(LOCAL), 0.2).label == LOCAL
    assert bootstrap_correct(example(NONLOCAL), 0.8).label == NONLOCAL


def test_out_of_range_probability_rejected():
    with pytest.raises(ValueError):
        bootstrap_correct(example(LOCAL), 1.5)
    with pytest.raises(ValueError):
        bootstrap_correct(example(LOCAL), -0.01)


def test_idempotent_for_fixed_probability():
    once = bootstrap_correct(example(LOCAL), 0.1)
    twice = bootstrap_correct(once, 0.1)
    assert twice == once


def test_never_flipped_twice():
    # even a contradicting second pass cannot add a second flip
    once = bootstrap_correct(example(LOCAL), 0.1)  # now NonLocal
    again = bootstrap_correct(once, 0.95)  # would flip back, refused
    assert again == once
    assert again.provenance.count(BOOTSTRAP_FLIP) == 1


def test_flip_decision_records_score():
    decision = flip_decision(example(LOCAL), 0.05)
    assert decision.source == BOOTSTRAP_FLIP
    assert decision.prior_label == LOCAL
    assert decision.flip_score == 0.05
    assert flip_decision(example(LOCAL), 0.5) is None


def test_flip_decision_requires_score_consistency():
    from localweak.weaklabel import LabelDecision

    with pytest.raises(ValueError):
        LabelDecision("a", LOCAL, BOOTSTRAP_FLIP)  # missing flip_score
    with pytest.raises(ValueError):
        LabelDecision("a", LOCAL, PUBLISHER_MARKED, flip_score=0.4)

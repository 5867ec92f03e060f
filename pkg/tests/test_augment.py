import pytest

from localweak.augment import (
    DictionaryProvider,
    IdentityProvider,
    ProviderError,
    RemoteProvider,
    back_translate,
    front_translate,
    translate_features,
)
from localweak.corpus import (
    BACK_TRANSLATION,
    FRONT_TRANSLATION,
    LOCAL,
    NONLOCAL,
    PUBLISHER_MARKED,
    LabeledExample,
)
from localweak.features import split_sections


def english_local(i=0):
    return LabeledExample(
        article_id=f"en{i}",
        features=(
            "[TOPICS] council budget [TAGLINE] the city council met "
            f"[TITLE] council approves budget {i} [URL] metro news"
        ),
        label=LOCAL,
        provenance=(PUBLISHER_MARKED,),
        market="EN-US",
        language="en",
    )


def german_example(i=0, label=LOCAL):
    return LabeledExample(
        article_id=f"de{i}",
        features=(
            "[TOPICS] stadtrat haushalt [TAGLINE] der stadtrat tagte "
            f"[TITLE] stadtrat beschliesst haushalt {i} [URL] metro nachrichten"
        ),
        label=label,
        provenance=(PUBLISHER_MARKED,),
        market="DE-DE",
        language="de",
    )


def test_front_translate_one_output_per_input():
    inputs = [english_local(i) for i in range(5)]
    out = front_translate(inputs, "de", DictionaryProvider(), target_market="DE-DE")
    assert len(out) == 5
    for src, aug_ex in zip(inputs, out):
        assert aug_ex.origin == FRONT_TRANSLATION
        assert aug_ex.source_id == src.article_id
        assert aug_ex.example.label == src.label
        assert aug_ex.example.language == "de"
        assert aug_ex.example.market == "DE-DE"
        assert aug_ex.example.provenance[-1] == FRONT_TRANSLATION


def test_front_translate_translates_text_but_not_url():
    [out] = front_translate([english_local()], "de", DictionaryProvider())
    sections = split_sections(out.example.features)
    assert "stadtrat" in sections["[TOPICS]"]
    assert sections["[URL]"] == "metro news"  # copied verbatim
    assert "stadtrat" in sections["[TITLE]"]


def test_front_translate_empty_input():
    assert front_translate([], "de", DictionaryProvider()) == []


def test_front_translate_rejects_wrong_inputs():
    wrong_lang = german_example()
    with pytest.raises(ValueError):
        front_translate([wrong_lang], "de", IdentityProvider())
    wrong_label = LabeledExample(
        article_id="x",
        features=english_local().features,
        label=NONLOCAL,
        provenance=(PUBLISHER_MARKED,),
        language="en",
    )
    with pytest.raises(ValueError):
        front_translate([wrong_label], "de", IdentityProvider())


class FlakyProvider:
    """Fails on one specific item, succeeds otherwise."""

    def __init__(self, poison: str):
        self.poison = poison
        self.inner = DictionaryProvider()

    def translate(self, text, source, target):
        if self.poison in text:
            raise ProviderError("boom")
        return self.inner.translate(text, source, target)


def test_provider_failure_skips_item_and_continues(caplog):
    inputs = [english_local(i) for i in range(10)]
    provider = FlakyProvider(poison="budget 3")
    with caplog.at_level("WARNING"):
        out = front_translate(inputs, "de", provider)
    assert len(out) == 9
    assert not any(a.source_id == "en3" for a in out)
    assert any("en3" in m for m in caplog.messages)


def test_no_chained_augmentation(caplog):
    first = front_translate([english_local()], "de", DictionaryProvider())[0].example
    # a front-translated German example must not be back-translated again
    with caplog.at_level("WARNING"):
        assert back_translate([first], DictionaryProvider()) == []
    assert any("already-augmented" in m for m in caplog.messages)


def test_back_translate_identity_provider_drops_everything():
    assert back_translate([german_example(i) for i in range(4)], IdentityProvider()) == []


def test_back_translate_synonym_provider_keeps_changed():
    inputs = [german_example(i) for i in range(3)]
    out = back_translate(inputs, DictionaryProvider())
    assert len(out) == 3
    for src, aug_ex in zip(inputs, out):
        assert aug_ex.origin == BACK_TRANSLATION
        assert aug_ex.example.label == src.label
        assert aug_ex.example.language == src.language
        assert aug_ex.example.features != src.features
        assert aug_ex.example.provenance[-1] == BACK_TRANSLATION


def test_back_translate_rejects_pivot_language_input():
    with pytest.raises(ValueError):
        back_translate([english_local()], IdentityProvider())


def test_mixed_language_batch_pivots_independently():
    spanish = LabeledExample(
        article_id="es0",
        features="[TOPICS] concejo [TAGLINE] el concejo [TITLE] concejo vota [URL] u",
        label=LOCAL,
        provenance=(PUBLISHER_MARKED,),
        market="ES-MX",
        language="es",
    )
    out = back_translate([german_example(), spanish], DictionaryProvider())
    assert [a.example.language for a in out] == ["de", "es"]


def test_size_accounting():
    train = [english_local(i) for i in range(6)] + [german_example(i) for i in range(4)]
    front = front_translate(
        [e for e in train if e.language == "en"], "de", DictionaryProvider()
    )
    back = back_translate(
        [e for e in train if e.language != "en"], DictionaryProvider()
    )
    total = len(train) + len(front) + len(back)
    assert total == 6 + 4 + 6 + 4


def test_dictionary_provider_missing_pair():
    with pytest.raises(ProviderError):
        DictionaryProvider().translate("text", "en", "zz")


def test_translate_features_round_trip_structure():
    provider = IdentityProvider()
    ex = english_local()
    assert translate_features(provider, ex.features, "en", "de") == ex.features


# --- remote provider stub --------------------------------------------------------


def test_remote_provider_retries_with_backoff():
    calls = []
    sleeps = []

    def transport(text, source, target):
        calls.append(text)
        if len(calls) < 3:
            raise ConnectionError("try again")
        return f"{target}:{text}"

    provider = RemoteProvider(transport, max_retries=3, backoff_base=0.5, sleep=sleeps.append)
    assert provider.translate("hello", "en", "de") == "de:hello"
    assert len(calls) == 3
    assert sleeps == [0.5, 1.0]  # exponential: base, base*2


def test_remote_provider_gives_up_after_max_retries():
    def transport(text, source, target):
        raise ConnectionError("down")

    provider = RemoteProvider(transport, max_retries=3, sleep=lambda _: None)
    with pytest.raises(ProviderError):
        provider.translate("hello", "en", "de")


def test_remote_provider_caches_within_run():
    calls = []

    def transport(text, source, target):
        calls.append(text)
        return text.upper()

    provider = RemoteProvider(transport, sleep=lambda _: None)
    assert provider.translate("a", "en", "de") == "A"
    assert provider.translate("a", "en", "de") == "A"
    assert calls == ["a"]

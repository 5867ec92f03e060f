"""Corpus growth through front and back translation.

Translation happens on the feature text's topic/tagline/title sections; URL
tokens are copied unchanged. Providers are pluggable: an identity provider
for tests, a deterministic dictionary-substitution provider for desk-scale
runs, and a retrying stub for hosted services.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Protocol, Sequence

from .corpus import (
    BACK_TRANSLATION,
    FRONT_TRANSLATION,
    LOCAL,
    LabeledExample,
)
from .features import (
    MARKERS,
    TAGLINE_MARKER,
    TITLE_MARKER,
    TOPICS_MARKER,
    URL_MARKER,
    split_sections,
)

logger = logging.getLogger(__name__)

ENGLISH = "en"

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class ProviderError(RuntimeError):
    """A translation provider failed for one item."""


class TranslationProvider(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class IdentityProvider:
    """Returns the input unchanged; the null provider for tests."""

    def translate(self, text: str, source: str, target: str) -> str:
        return text


# Deliberately asymmetric: the X->en side maps each word to an English
# synonym whose en->X image differs from the word it came from, so a round
# trip through English always lands on a synonym instead of the original.
DEFAULT_LEXICONS: dict[tuple[str, str], dict[str, str]] = {
    ("en", "de"): {
        "city": "stadt",
        "town": "ort",
        "council": "stadtrat",
        "committee": "ausschuss",
        "police": "polizei",
        "officers": "beamte",
        "school": "schule",
        "academy": "hochschule",
        "news": "nachrichten",
        "reports": "berichte",
        "fire": "feuer",
        "blaze": "brand",
        "local": "lokal",
        "nearby": "nahegelegen",
        "mayor": "buergermeister",
        "official": "beamter",
        "county": "landkreis",
        "district": "bezirk",
        "nationwide": "landesweit",
        "national": "bundesweit",
        "election": "wahl",
        "vote": "abstimmung",
        "community": "gemeinde",
        "township": "ortschaft",
    },
    ("de", "en"): {
        "stadt": "town",
        "stadtrat": "committee",
        "polizei": "officers",
        "schule": "academy",
        "nachrichten": "reports",
        "feuer": "blaze",
        "lokal": "nearby",
        "buergermeister": "official",
        "landkreis": "district",
        "landesweit": "national",
        "wahl": "vote",
        "gemeinde": "township",
    },
    ("en", "es"): {
        "city": "ciudad",
        "town": "pueblo",
        "council": "concejo",
        "committee": "comite",
        "police": "policia",
        "officers": "agentes",
        "school": "escuela",
        "academy": "academia",
        "news": "noticias",
        "reports": "informes",
        "fire": "incendio",
        "blaze": "fuego",
        "mayor": "alcalde",
        "official": "funcionario",
        "nationwide": "nacional",
        "national": "federal",
        "election": "eleccion",
        "vote": "voto",
        "community": "comunidad",
        "township": "municipio",
    },
    ("es", "en"): {
        "ciudad": "town",
        "concejo": "committee",
        "policia": "officers",
        "escuela": "academy",
        "noticias": "reports",
        "incendio": "blaze",
        "alcalde": "official",
        "nacional": "national",
        "eleccion": "vote",
        "comunidad": "township",
    },
}


class DictionaryProvider:
    """Word-substitution pseudo-translation, deterministic by construction.

    Words found in the (source, target) lexicon are replaced, everything
    else passes through, so output length and structure track the input.
    """

    def __init__(self, lexicons: dict[tuple[str, str], dict[str, str]] | None = None):
        self.lexicons = DEFAULT_LEXICONS if lexicons is None else lexicons

    def translate(self, text: str, source: str, target: str) -> str:
        lexicon = self.lexicons.get((source, target))
        if lexicon is None:
            raise ProviderError(f"no lexicon for {source}->{target}")
        return _WORD_RE.sub(
            lambda m: lexicon.get(m.group(0).casefold(), m.group(0)), text
        )


class RemoteProvider:
    """Stub for a hosted translation service with retry/backoff.

    `transport(text, source, target)` performs a single attempt; failures
    are retried up to `max_retries` times with exponential backoff. Results
    are cached per (text, source, target) so repeated calls within a run
    stay deterministic. Credentials belong in the environment
    (LOCALWEAK_PROVIDER_KEY), never in config files.
    """

    def __init__(
        self,
        transport: Callable[[str, str, str], str],
        max_retries: int = 3,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.transport = transport
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._cache: dict[tuple[str, str, str], str] = {}

    def translate(self, text: str, source: str, target: str) -> str:
        key = (text, source, target)
        if key in self._cache:
            return self._cache[key]
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                result = self.transport(text, source, target)
            except Exception as err:  # noqa: BLE001 - transport is third-party
                last_error = err
                continue
            self._cache[key] = result
            return result
        raise ProviderError(
            f"translation failed after {self.max_retries} retries: {last_error}"
        )


@dataclass
class AugmentedExample:
    """A translated example plus where it came from."""

    example: LabeledExample
    origin: str  # FrontTranslation | BackTranslation
    source_id: str

    def to_dict(self) -> dict:
        rec = self.example.to_dict()
        rec["origin"] = self.origin
        rec["source_id"] = self.source_id
        return rec


def _translate_checked(
    provider: TranslationProvider, text: str, source: str, target: str
) -> str:
    if not text:
        return ""
    out = provider.translate(text, source, target)
    if not out:
        raise ProviderError(f"empty translation for nonempty input ({source}->{target})")
    return out


def translate_features(
    provider: TranslationProvider, features: str, source: str, target: str
) -> str:
    """Translate the text sections of a feature string; URL tokens stay."""
    sections = split_sections(features)
    translated = {
        TOPICS_MARKER: _translate_checked(
            provider, sections[TOPICS_MARKER], source, target
        ),
        TAGLINE_MARKER: _translate_checked(
            provider, sections[TAGLINE_MARKER], source, target
        ),
        TITLE_MARKER: _translate_checked(
            provider, sections[TITLE_MARKER], source, target
        ),
        URL_MARKER: sections[URL_MARKER],
    }
    return " ".join(
        marker + (" " + translated[marker] if translated[marker] else "")
        for marker in MARKERS
    )


def already_augmented(example: LabeledExample) -> bool:
    return FRONT_TRANSLATION in example.provenance or BACK_TRANSLATION in example.provenance


def front_translate(
    english_local: Sequence[LabeledExample],
    target_language: str,
    provider: TranslationProvider,
    target_market: str = "",
) -> list[AugmentedExample]:
    """Translate English Local examples into a target language, one for one.

    Inputs must be English and labeled Local. Previously augmented examples
    are skipped (no chained augmentation), as are items the provider fails
    on; both are logged and the batch continues.
    """
    out: list[AugmentedExample] = []
    for ex in english_local:
        if ex.language != ENGLISH or ex.label != LOCAL:
            raise ValueError(
                f"front translation expects English Local input, got "
                f"language={ex.language!r} label={ex.label} for {ex.article_id}"
            )
        if already_augmented(ex):
            logger.warning("skipping already-augmented example %s", ex.article_id)
            continue
        try:
            features = translate_features(
                provider, ex.features, ENGLISH, target_language
            )
        except ProviderError as err:
            logger.warning("front translation failed for %s: %s", ex.article_id, err)
            continue
        translated = replace(
            ex,
            article_id=f"{ex.article_id}::ft-{target_language}",
            features=features,
            language=target_language,
            market=target_market,
            provenance=ex.provenance + (FRONT_TRANSLATION,),
        )
        out.append(
            AugmentedExample(
                example=translated, origin=FRONT_TRANSLATION, source_id=ex.article_id
            )
        )
    return out


def back_translate(
    examples: Sequence[LabeledExample],
    provider: TranslationProvider,
    pivot: str = ENGLISH,
) -> list[AugmentedExample]:
    """Round-trip non-English examples through the pivot language.

    Each item pivots independently. Outputs identical to their input add no
    vocabulary and are dropped; provider failures skip the item and the
    batch continues.
    """
    out: list[AugmentedExample] = []
    for ex in examples:
        if ex.language == pivot:
            raise ValueError(
                f"back translation expects non-{pivot} input, got {ex.article_id}"
            )
        if already_augmented(ex):
            logger.warning("skipping already-augmented example %s", ex.article_id)
            continue
        try:
            pivoted = translate_features(provider, ex.features, ex.language, pivot)
            features = translate_features(provider, pivoted, pivot, ex.language)
        except ProviderError as err:
            logger.warning("back translation failed for %s: %s", ex.article_id, err)
            continue
        if features == ex.features:
            continue
        translated = replace(
            ex,
            article_id=f"{ex.article_id}::bt",
            features=features,
            provenance=ex.provenance + (BACK_TRANSLATION,),
        )
        out.append(
            AugmentedExample(
                example=translated, origin=BACK_TRANSLATION, source_id=ex.article_id
            )
        )
    return out

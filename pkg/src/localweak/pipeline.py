"""Pipeline stages over a working directory, with a verifiable manifest.

Each stage declares its input artifacts, writes its outputs atomically, and
records (config hash, input hashes, output hashes) in `manifest.json`. Given
the same config and inputs, every stage is byte-reproducible, so the
manifest doubles as a provenance chain.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import affinity as aff
from . import augment as aug
from . import evaluation as ev
from . import model as mdl
from . import weaklabel as wl
from .corpus import (
    Article,
    LOCAL,
    Gazetteer,
    LabeledExample,
    PUBLISHER_MARKED,
    LABEL_VALUES,
    load_articles,
    load_clicks,
    load_examples,
    split_examples,
    write_examples,
    write_jsonl,
)
from .features import TfidfModel, assemble

logger = logging.getLogger(__name__)

STAGE_ORDER = (
    "ingest",
    "affinity",
    "label",
    "augment",
    "train",
    "score",
    "evaluate",
    "compare",
)

ENGLISH = "en"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    """The pipeline config violates its documented ranges or is incomplete."""


class MissingInputError(FileNotFoundError):
    """A stage input artifact does not exist; the message names it."""


class WorkdirLockedError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline in one place, loaded from TOML.

    The seed is required: no stage is allowed to fall back on hidden
    randomness. Paths are resolved relative to the config file.
    """

    seed: int
    workdir: Path
    articles_path: Path
    clicks_path: Path
    gazetteer_path: Path | None = None
    test_articles_path: Path | None = None
    min_clicks: int = aff.DEFAULT_MIN_CLICKS
    gap_threshold: float = aff.DEFAULT_GAP_THRESHOLD
    max_local_cities: int = aff.DEFAULT_MAX_LOCAL_CITIES
    flip_low: float = wl.DEFAULT_FLIP_LOW
    flip_high: float = wl.DEFAULT_FLIP_HIGH
    bootstrap_enabled: bool = False
    bootstrap_model: Path | None = None
    split_ratio: float = 0.9
    topic_k: int = 10
    cutoffs: tuple[float, ...] = (0.5, 0.7)
    slices: tuple[str, ...] = ev.SLICE_DIMENSIONS
    scorers: tuple[str, ...] = ("model", "ner")
    external_command: tuple[str, ...] = ()
    provider: str = "dictionary"
    front_targets: tuple[tuple[str, str], ...] = ()
    back_translation: bool = True
    dim: int = 1 << 20
    orders: tuple[int, ...] = (1, 2, 3, 4)
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    use_augmented: bool = True
    canonical: dict = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        problems = []
        if not isinstance(self.seed, int):
            problems.append("seed must be an integer")
        if self.min_clicks < 0:
            problems.append("min_clicks must be >= 0")
        if not 0.0 < self.gap_threshold < 1.0:
            problems.append("gap_threshold must be in (0,1)")
        if self.max_local_cities < 1:
            problems.append("max_local_cities must be >= 1")
        if not 0.0 <= self.flip_low <= 1.0 or not 0.0 <= self.flip_high <= 1.0:
            problems.append("bootstrap low/high must be in [0,1]")
        if self.flip_low > self.flip_high:
            problems.append("bootstrap low must not exceed high")
        if not 0.0 < self.split_ratio < 1.0:
            problems.append("split_ratio must be in (0,1)")
        if not self.cutoffs or any(not 0.0 < c < 1.0 for c in self.cutoffs):
            problems.append("cutoffs must be in (0,1)")
        if any(s not in ev.SLICE_DIMENSIONS for s in self.slices):
            problems.append(f"slices must be among {ev.SLICE_DIMENSIONS}")
        known_scorers = {"model", "ner", "external"}
        if any(s not in known_scorers for s in self.scorers):
            problems.append(f"scorers must be among {sorted(known_scorers)}")
        if "external" in self.scorers and not self.external_command:
            problems.append("external scorer requires evaluate.external_command")
        if "ner" in self.scorers and self.gazetteer_path is None:
            problems.append("ner scorer requires inputs.gazetteer")
        if self.provider not in ("identity", "dictionary"):
            problems.append(
                "provider must be 'identity' or 'dictionary' (the remote "
                "provider is a library stub, not a pipeline provider)"
            )
        if self.bootstrap_enabled and self.bootstrap_model is None:
            problems.append("bootstrap.enabled requires bootstrap.model")
        if self.topic_k < 1:
            problems.append("label.topic_k must be >= 1")
        if self.dim < 2 or self.epochs < 1 or self.batch_size < 1:
            problems.append("train dim/epochs/batch_size out of range")
        if self.learning_rate <= 0:
            problems.append("train.learning_rate must be positive")
        if any(n < 1 for n in self.orders):
            problems.append("train.orders must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @property
    def eval_dataset_name(self) -> str:
        return (
            "dataset.test.jsonl"
            if self.test_articles_path is not None
            else "dataset.valid.jsonl"
        )


def load_config(
    path: str | Path,
    workdir: str | Path | None = None,
    seed: int | None = None,
    cutoffs: Sequence[float] | None = None,
    slices: Sequence[str] | None = None,
) -> PipelineConfig:
    """Parse and validate a TOML config; flag values override file values."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = path.parent

    def resolve(p: str | None) -> Path | None:
        return (base / p) if p else None

    inputs = raw.get("inputs", {})
    affinity_cfg = raw.get("affinity", {})
    label_cfg = raw.get("label", {})
    bootstrap = raw.get("bootstrap", {})
    augment_cfg = raw.get("augment", {})
    train_cfg = raw.get("train", {})
    eval_cfg = raw.get("evaluate", {})

    if "seed" not in raw and seed is None:
        raise ConfigError("seed is required and has no default")
    if "articles" not in inputs:
        raise ConfigError("inputs.articles is required")
    if "clicks" not in inputs:
        raise ConfigError("inputs.clicks is required")

    effective_workdir = Path(workdir) if workdir else resolve(raw.get("workdir", "work"))
    cfg = PipelineConfig(
        seed=seed if seed is not None else raw["seed"],
        workdir=effective_workdir,
        articles_path=resolve(inputs["articles"]),
        clicks_path=resolve(inputs["clicks"]),
        gazetteer_path=resolve(inputs.get("gazetteer")),
        test_articles_path=resolve(inputs.get("test_articles")),
        min_clicks=affinity_cfg.get("min_clicks", aff.DEFAULT_MIN_CLICKS),
        gap_threshold=affinity_cfg.get("gap_threshold", aff.DEFAULT_GAP_THRESHOLD),
        max_local_cities=affinity_cfg.get(
            "max_local_cities", aff.DEFAULT_MAX_LOCAL_CITIES
        ),
        flip_low=bootstrap.get("low", wl.DEFAULT_FLIP_LOW),
        flip_high=bootstrap.get("high", wl.DEFAULT_FLIP_HIGH),
        bootstrap_enabled=bootstrap.get("enabled", False),
        bootstrap_model=resolve(bootstrap.get("model")),
        split_ratio=label_cfg.get("split_ratio", 0.9),
        topic_k=label_cfg.get("topic_k", 10),
        cutoffs=tuple(cutoffs if cutoffs else eval_cfg.get("cutoffs", (0.5, 0.7))),
        slices=tuple(slices if slices else eval_cfg.get("slices", ev.SLICE_DIMENSIONS)),
        scorers=tuple(eval_cfg.get("scorers", ("model", "ner"))),
        external_command=tuple(eval_cfg.get("external_command", ())),
        provider=augment_cfg.get("provider", "dictionary"),
        front_targets=tuple(
            (str(pair[0]), str(pair[1])) for pair in augment_cfg.get("front_targets", ())
        ),
        back_translation=augment_cfg.get("back_translation", True),
        dim=train_cfg.get("dim", 1 << 20),
        orders=tuple(train_cfg.get("orders", (1, 2, 3, 4))),
        learning_rate=train_cfg.get("learning_rate", 0.05),
        epochs=train_cfg.get("epochs", 10),
        batch_size=train_cfg.get("batch_size", 32),
        use_augmented=train_cfg.get("use_augmented", True),
    )
    cfg.canonical = _canonical_dict(cfg, raw, inputs)
    cfg.validate()
    return cfg


def _canonical_dict(cfg: PipelineConfig, raw: dict, inputs: dict) -> dict:
    """Effective config as a stable dict for hashing into the manifest."""
    return {
        "seed": cfg.seed,
        "inputs": {
            "articles": inputs.get("articles"),
            "clicks": inputs.get("clicks"),
            "gazetteer": inputs.get("gazetteer"),
            "test_articles": inputs.get("test_articles"),
        },
        "affinity": {
            "min_clicks": cfg.min_clicks,
            "gap_threshold": cfg.gap_threshold,
            "max_local_cities": cfg.max_local_cities,
        },
        "label": {"split_ratio": cfg.split_ratio, "topic_k": cfg.topic_k},
        "bootstrap": {
            "enabled": cfg.bootstrap_enabled,
            "low": cfg.flip_low,
            "high": cfg.flip_high,
            "model": str(raw.get("bootstrap", {}).get("model") or ""),
        },
        "augment": {
            "provider": cfg.provider,
            "front_targets": [list(t) for t in cfg.front_targets],
            "back_translation": cfg.back_translation,
        },
        "train": {
            "dim": cfg.dim,
            "orders": list(cfg.orders),
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "use_augmented": cfg.use_augmented,
        },
        "evaluate": {
            "cutoffs": list(cfg.cutoffs),
            "slices": list(cfg.slices),
            "scorers": list(cfg.scorers),
            "external_command": list(cfg.external_command),
        },
    }


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@contextmanager
def workdir_lock(workdir: Path):
    """One stage at a time per working directory."""
    lock = workdir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise WorkdirLockedError(
            f"workdir is locked by another run: {lock} (remove if stale)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        try:
            lock.unlink()
        except FileNotFoundError:
            pass


def _manifest_path(workdir: Path) -> Path:
    return workdir / "manifest.json"


def read_manifest(workdir: Path) -> dict:
    path = _manifest_path(workdir)
    if not path.exists():
        return {"stages": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def _record_stage(
    workdir: Path,
    stage: str,
    config_hash: str,
    inputs: dict[str, Path],
    outputs: Sequence[Path],
) -> None:
    manifest = read_manifest(workdir)
    manifest["stages"][stage] = {
        "config_hash": config_hash,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {
            p.relative_to(workdir).as_posix(): sha256_file(p) for p in sorted(outputs)
        },
    }
    path = _manifest_path(workdir)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, path)


def verify_manifest(workdir: Path) -> list[str]:
    """Check the provenance chain; returns a list of problems (empty = ok).

    Every recorded output must still hash to its manifest value, and any
    stage input that is itself a workdir artifact must match the hash the
    producing stage recorded.
    """
    workdir = Path(workdir)
    manifest = read_manifest(workdir)
    problems = []
    produced: dict[str, str] = {}
    for stage in STAGE_ORDER:
        entry = manifest["stages"].get(stage)
        if entry is None:
            continue
        for name, digest in entry["inputs"].items():
            candidate = workdir / name
            path = candidate if candidate.exists() else Path(name)
            if not path.exists():
                problems.append(f"{stage}: input {name} missing")
                continue
            actual = sha256_file(path)
            if actual != digest:
                problems.append(f"{stage}: input {name} hash changed")
            if name in produced and produced[name] != digest:
                problems.append(
                    f"{stage}: input {name} does not match the producing stage"
                )
        for name, digest in entry["outputs"].items():
            path = workdir / name
            if not path.exists():
                problems.append(f"{stage}: output {name} missing")
                continue
            if sha256_file(path) != digest:
                problems.append(f"{stage}: output {name} hash changed")
            produced[name] = digest
    return problems


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"stage '{stage}' requires missing input: {path}")
    return path


def _artifact(cfg: PipelineConfig, name: str) -> Path:
    return cfg.workdir / name


def _provider(cfg: PipelineConfig) -> aug.TranslationProvider:
    if cfg.provider == "identity":
        return aug.IdentityProvider()
    return aug.DictionaryProvider()


# ---------------------------------------------------------------- stages


def stage_ingest(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    inputs: dict[str, Path] = {
        "articles": _require(cfg.articles_path, "ingest"),
        "clicks": _require(cfg.clicks_path, "ingest"),
    }
    if cfg.gazetteer_path is not None:
        inputs["gazetteer"] = _require(cfg.gazetteer_path, "ingest")
    if cfg.test_articles_path is not None:
        inputs["test_articles"] = _require(cfg.test_articles_path, "ingest")

    outputs: list[Path] = []
    fmt = "tsv" if cfg.articles_path.suffix.lower() == ".tsv" else "jsonl"
    articles, rejects = load_articles(cfg.articles_path, fmt, write_reject_file=False)
    outputs.append(
        write_jsonl(_artifact(cfg, "articles.jsonl"), (a.to_dict() for a in articles))
    )
    if rejects:
        outputs.append(
            write_jsonl(
                _artifact(cfg, cfg.articles_path.name + ".rejects.jsonl"),
                (r.to_dict() for r in rejects),
            )
        )

    clicks, click_rejects = load_clicks(cfg.clicks_path, write_reject_file=False)
    outputs.append(
        write_jsonl(_artifact(cfg, "clicks.jsonl"), (c.to_dict() for c in clicks))
    )
    if click_rejects:
        outputs.append(
            write_jsonl(
                _artifact(cfg, cfg.clicks_path.name + ".rejects.jsonl"),
                (r.to_dict() for r in click_rejects),
            )
        )

    if cfg.gazetteer_path is not None:
        gaz = Gazetteer.load(cfg.gazetteer_path)
        outputs.append(gaz.save(_artifact(cfg, "gazetteer.tsv")))

    if cfg.test_articles_path is not None:
        test_articles, test_rejects = load_articles(
            cfg.test_articles_path, "jsonl", write_reject_file=False
        )
        outputs.append(
            write_jsonl(
                _artifact(cfg, "articles.test.jsonl"),
                (a.to_dict() for a in test_articles),
            )
        )
        if test_rejects:
            outputs.append(
                write_jsonl(
                    _artifact(cfg, cfg.test_articles_path.name + ".rejects.jsonl"),
                    (r.to_dict() for r in test_rejects),
                )
            )
    return inputs, outputs


def _load_workdir_articles(cfg: PipelineConfig, name: str) -> list[Article]:
    arts, rejects = load_articles(_artifact(cfg, name), write_reject_file=False)
    if rejects:  # normalized artifacts are already validated
        raise RuntimeError(f"{name}: unexpected rejects in normalized artifact")
    return arts


def stage_affinity(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    clicks_path = _require(_artifact(cfg, "clicks.jsonl"), "affinity")
    clicks, _ = load_clicks(clicks_path, write_reject_file=False)
    publisher_clicks = [c for c in clicks if c.subject_type == "publisher"]
    publishers = sorted({c.subject_id for c in publisher_clicks})
    records = [
        aff.publisher_affinity(
            publisher_clicks,
            publisher,
            min_clicks=cfg.min_clicks,
            gap_threshold=cfg.gap_threshold,
            max_local_cities=cfg.max_local_cities,
        )
        for publisher in publishers
    ]
    out = aff.write_affinities(records, _artifact(cfg, "affinity.jsonl"))
    return {"clicks.jsonl": clicks_path}, [out]


def _label_articles(
    cfg: PipelineConfig,
    articles: Sequence[Article],
    tfidf: TfidfModel,
    affinities: dict[str, aff.PublisherAffinity],
    article_clicks: dict[str, list],
) -> list[LabeledExample]:
    """Base labels + distant supervision, assembled into LabeledExamples."""
    decisions: dict[str, wl.LabelDecision] = {}
    for art in articles:
        art_aff = (
            aff.article_affinity(
                article_clicks.get(art.id, ()),
                art.id,
                min_clicks=cfg.min_clicks,
                gap_threshold=cfg.gap_threshold,
                max_local_cities=cfg.max_local_cities,
            )
            if art.id in article_clicks
            else None
        )
        decision = wl.base_label(art, affinities.get(art.publisher), art_aff)
        if decision is not None:
            decisions[art.id] = decision

    licensed = [a for a in articles if a.licensed and a.publisher_label is not None]
    gaps = [a for a in articles if a.id not in decisions]
    for decision in wl.distant_supervision(licensed, gaps):
        decisions[decision.article_id] = decision

    examples = []
    for art in articles:
        decision = decisions.get(art.id)
        if decision is None:
            continue
        bundle = assemble(art, tfidf, topic_k=cfg.topic_k)
        pub_aff = affinities.get(art.publisher)
        examples.append(
            LabeledExample(
                article_id=art.id,
                features=bundle.assembled,
                label=decision.label,
                provenance=(decision.source,),
                market=art.market,
                language=art.language,
                publisher_segment=pub_aff.segment if pub_aff else None,
            )
        )
    return examples


def stage_label(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    inputs = {
        "articles.jsonl": _require(_artifact(cfg, "articles.jsonl"), "label"),
        "clicks.jsonl": _require(_artifact(cfg, "clicks.jsonl"), "label"),
        "affinity.jsonl": _require(_artifact(cfg, "affinity.jsonl"), "label"),
    }
    if cfg.test_articles_path is not None:
        inputs["articles.test.jsonl"] = _require(
            _artifact(cfg, "articles.test.jsonl"), "label"
        )
    if cfg.bootstrap_enabled:
        inputs["bootstrap_model"] = _require(cfg.bootstrap_model, "label")

    articles = _load_workdir_articles(cfg, "articles.jsonl")
    clicks, _ = load_clicks(inputs["clicks.jsonl"], write_reject_file=False)
    affinities = aff.load_affinities(inputs["affinity.jsonl"])
    article_clicks: dict[str, list] = {}
    for c in clicks:
        if c.subject_type == "article":
            article_clicks.setdefault(c.subject_id, []).append(c)

    tfidf = TfidfModel.fit(a.body for a in articles)
    outputs = [tfidf.save(_artifact(cfg, "tfidf.model.json"))]

    examples = _label_articles(cfg, articles, tfidf, affinities, article_clicks)

    if cfg.bootstrap_enabled:
        scorer = mdl.load_model(cfg.bootstrap_model)
        provider = _provider(cfg)
        corrected = []
        for ex in examples:
            if ex.language == ENGLISH:
                corrected.append(ex)
                continue
            try:
                english = aug.translate_features(
                    provider, ex.features, ex.language, ENGLISH
                )
            except aug.ProviderError as err:
                logger.warning("bootstrap translation failed for %s: %s", ex.article_id, err)
                corrected.append(ex)
                continue
            corrected.append(
                wl.bootstrap_correct(
                    ex, scorer.score(english), low=cfg.flip_low, high=cfg.flip_high
                )
            )
        examples = corrected

    outputs.append(write_examples(examples, _artifact(cfg, "labels.jsonl")))
    train, valid = split_examples(examples, cfg.split_ratio, cfg.seed)
    outputs.append(write_examples(train, _artifact(cfg, "dataset.train.jsonl")))
    outputs.append(write_examples(valid, _artifact(cfg, "dataset.valid.jsonl")))

    if cfg.test_articles_path is not None:
        test_articles = _load_workdir_articles(cfg, "articles.test.jsonl")
        unmarked = [a.id for a in test_articles if a.publisher_label is None]
        if unmarked:
            raise ConfigError(
                f"test articles must carry gold labels in publisher_label; "
                f"missing for {unmarked[:3]}"
            )
        test_examples = [
            LabeledExample(
                article_id=art.id,
                features=assemble(art, tfidf, topic_k=cfg.topic_k).assembled,
                label=LABEL_VALUES[art.publisher_label],
                provenance=(PUBLISHER_MARKED,),
                market=art.market,
                language=art.language,
                publisher_segment=(
                    affinities[art.publisher].segment
                    if art.publisher in affinities
                    else None
                ),
            )
            for art in test_articles
        ]
        outputs.append(write_examples(test_examples, _artifact(cfg, "dataset.test.jsonl")))
    return inputs, outputs


def stage_augment(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    train_path = _require(_artifact(cfg, "dataset.train.jsonl"), "augment")
    examples = load_examples(train_path)
    provider = _provider(cfg)

    augmented: list[aug.AugmentedExample] = []
    english_local = [
        ex
        for ex in examples
        if ex.language == ENGLISH and ex.label == LOCAL and not aug.already_augmented(ex)
    ]
    for language, market in cfg.front_targets:
        augmented.extend(
            aug.front_translate(english_local, language, provider, target_market=market)
        )
    if cfg.back_translation:
        non_english = [
            ex
            for ex in examples
            if ex.language != ENGLISH and not aug.already_augmented(ex)
        ]
        augmented.extend(aug.back_translate(non_english, provider))

    out = write_jsonl(_artifact(cfg, "augment.jsonl"), (a.to_dict() for a in augmented))
    return {"dataset.train.jsonl": train_path}, [out]


def stage_train(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    inputs = {
        "dataset.train.jsonl": _require(_artifact(cfg, "dataset.train.jsonl"), "train"),
        "dataset.valid.jsonl": _require(_artifact(cfg, "dataset.valid.jsonl"), "train"),
    }
    train_set = load_examples(inputs["dataset.train.jsonl"])
    if cfg.use_augmented:
        inputs["augment.jsonl"] = _require(_artifact(cfg, "augment.jsonl"), "train")
        train_set = train_set + load_examples(inputs["augment.jsonl"])
    valid_set = load_examples(inputs["dataset.valid.jsonl"])

    config = mdl.TrainConfig(
        seed=cfg.seed,
        dim=cfg.dim,
        orders=cfg.orders,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
    )
    model = mdl.train(train_set, valid_set, config)
    outputs = [
        mdl.save_model(model, _artifact(cfg, "model.bin")),
        mdl.save_model_meta(model, _artifact(cfg, "model.meta.json")),
    ]
    return inputs, outputs


def _build_scorer(cfg: PipelineConfig, name: str) -> mdl.Scorer:
    if name == "model":
        return mdl.load_model(_artifact(cfg, "model.bin"))
    if name == "ner":
        return mdl.NerBaseline(Gazetteer.load(_artifact(cfg, "gazetteer.tsv")))
    if name == "external":
        return mdl.ExternalScorer(cfg.external_command)
    raise ConfigError(f"unknown scorer {name!r}")


def stage_score(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    dataset = cfg.eval_dataset_name
    inputs = {dataset: _require(_artifact(cfg, dataset), "score")}
    if "model" in cfg.scorers:
        inputs["model.bin"] = _require(_artifact(cfg, "model.bin"), "score")
    if "ner" in cfg.scorers:
        inputs["gazetteer.tsv"] = _require(_artifact(cfg, "gazetteer.tsv"), "score")

    examples = load_examples(inputs[dataset])
    outputs = []
    for name in cfg.scorers:
        scorer = _build_scorer(cfg, name)
        if isinstance(scorer, mdl.ExternalScorer):
            scores = scorer.score_batch([ex.features for ex in examples])
        else:
            scores = [scorer.score(ex.features) for ex in examples]
        outputs.append(
            write_jsonl(
                _artifact(cfg, f"scores.{name}.jsonl"),
                (
                    {"article_id": ex.article_id, "p_local": p}
                    for ex, p in zip(examples, scores)
                ),
            )
        )
    return inputs, outputs


def _cutoff_tag(cutoff: float) -> str:
    return f"{cutoff:g}"


def stage_evaluate(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    dataset = cfg.eval_dataset_name
    inputs = {dataset: _require(_artifact(cfg, dataset), "evaluate")}
    for name in cfg.scorers:
        inputs[f"scores.{name}.jsonl"] = _require(
            _artifact(cfg, f"scores.{name}.jsonl"), "evaluate"
        )

    examples = load_examples(inputs[dataset])
    outputs = []
    for name in cfg.scorers:
        by_id = {}
        with open(inputs[f"scores.{name}.jsonl"], encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    by_id[rec["article_id"]] = rec["p_local"]
        missing = [ex.article_id for ex in examples if ex.article_id not in by_id]
        if missing:
            raise RuntimeError(f"scores.{name}.jsonl lacks scores for {missing[:3]}")
        scores = [by_id[ex.article_id] for ex in examples]
        for cutoff in cfg.cutoffs:
            report = ev.evaluate_scored(
                examples, scores, cutoff=cutoff, slices=cfg.slices, scorer_name=name
            )
            tag = _cutoff_tag(cutoff)
            outputs.append(report.save(_artifact(cfg, f"report.{name}.{tag}.json")))
            md_path = _artifact(cfg, f"report.{name}.{tag}.md")
            tmp = md_path.with_name(md_path.name + ".tmp")
            tmp.write_text(ev.render_markdown(report), encoding="utf-8")
            os.replace(tmp, md_path)
            outputs.append(md_path)
    return inputs, outputs


def stage_compare(cfg: PipelineConfig) -> tuple[dict[str, Path], list[Path]]:
    if len(cfg.scorers) < 2:
        raise ConfigError("compare needs at least two scorers in evaluate.scorers")
    name_a, name_b = cfg.scorers[0], cfg.scorers[1]
    inputs = {}
    outputs = []
    for cutoff in cfg.cutoffs:
        tag = _cutoff_tag(cutoff)
        for name in (name_a, name_b):
            key = f"report.{name}.{tag}.json"
            inputs[key] = _require(_artifact(cfg, key), "compare")
        report_a = ev.EvalReport.load(inputs[f"report.{name_a}.{tag}.json"])
        report_b = ev.EvalReport.load(inputs[f"report.{name_b}.{tag}.json"])
        deltas = ev.compare(report_a, report_b)
        payload = {
            "cutoff": cutoff,
            "scorer_a": name_a,
            "scorer_b": name_b,
            "test_hash": report_a.test_hash,
            "deltas": [d.to_dict() for d in deltas],
        }
        json_path = _artifact(cfg, f"compare.{tag}.json")
        tmp = json_path.with_name(json_path.name + ".tmp")
        tmp.write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        os.replace(tmp, json_path)
        outputs.append(json_path)
        md_path = _artifact(cfg, f"compare.{tag}.md")
        tmp = md_path.with_name(md_path.name + ".tmp")
        tmp.write_text(
            ev.render_comparison_markdown(deltas, name_a, name_b), encoding="utf-8"
        )
        os.replace(tmp, md_path)
        outputs.append(md_path)
    return inputs, outputs


_STAGES: dict[str, Callable[[PipelineConfig], tuple[dict[str, Path], list[Path]]]] = {
    "ingest": stage_ingest,
    "affinity": stage_affinity,
    "label": stage_label,
    "augment": stage_augment,
    "train": stage_train,
    "score": stage_score,
    "evaluate": stage_evaluate,
    "compare": stage_compare,
}


def run_stage(stage: str, cfg: PipelineConfig) -> list[Path]:
    """Run one stage under the workdir lock and record it in the manifest."""
    if stage not in _STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGE_ORDER}")
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    with workdir_lock(cfg.workdir):
        inputs, outputs = _STAGES[stage](cfg)
        _record_stage(cfg.workdir, stage, cfg.config_hash(), inputs, outputs)
    logger.info("stage %s: wrote %d artifacts", stage, len(outputs))
    return outputs

"""End-to-end pipeline orchestration and stage artifact handling.

The flow: canonicalize -> group exact duplicates (these already settle
FULL/TEMPORAL for identical text) -> keep one representative per group ->
optionally translate -> embed -> index -> k-NN candidate pairs -> expert
rules -> classify -> expand group labels back to all members.

`run_pipeline` does this in memory. The `stage_*` functions do the same
work one step at a time, reading and writing declared artifact files, and
the CLI `dedup` command simply runs them in sequence; both paths produce
byte-identical results because every artifact round-trips exactly
(float32 vectors, UTF-8 text).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from itertools import combinations, product
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .config import PipelineConfig
from .corpus import Posting, load_postings, pair_count, save_postings
from .dedup import (
    CandidatePair,
    LabeledPair,
    apply_rules_detailed,
    classify,
    collect_hits,
    default_rule,
    pairs_from_hits,
    saturation_report,
    threshold_sweep,
)
from .embed import EmbeddingVector, HashedEmbedder, RemoteEmbedder, truncation_report
from .errors import DataError
from .evaluation import write_results_csv
from .index import FlatIndex, IndexConfig, build_index, load_index
from .normalize import CanonicalText, ExactGroup, canonicalize, group_exact
from .translate import TranslationCache, TranslationRequest, make_backend, translate_batch

POSTINGS_FILE = "postings.jsonl"
CANONICAL_FILE = "canonical.jsonl"
TRANSLATED_FILE = "translated.jsonl"
EMBEDDINGS_FILE = "embeddings.pdix"
EMBED_META_FILE = "embed_meta.json"
INDEX_FILE = "index.pdix"
RESULTS_FILE = "results.csv"
REPORT_FILE = "report.json"
GOLD_FILE = "gold.csv"
DICTIONARY_FILE = "dictionary.json"
EVAL_FILE = "eval.json"


@dataclass
class RunReport:
    mode: str
    k: int
    base_theta: float
    n_postings: int = 0
    n_groups: int = 0
    n_representatives: int = 0
    n_zero_vectors: int = 0
    counters: dict = field(default_factory=dict)
    label_counts: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    truncation: Optional[dict] = None
    saturation: Optional[dict] = None
    sweep: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "base_theta": self.base_theta,
            "n_postings": self.n_postings,
            "n_groups": self.n_groups,
            "n_representatives": self.n_representatives,
            "n_zero_vectors": self.n_zero_vectors,
            "counters": dict(self.counters),
            "label_counts": dict(self.label_counts),
            "stage_seconds": dict(self.stage_seconds),
            "truncation": self.truncation,
            "saturation": self.saturation,
            "sweep": [list(row) for row in self.sweep],
        }


@dataclass
class PipelineResult:
    pairs: list[LabeledPair]
    report: RunReport


def make_translator(config: PipelineConfig):
    kind = config.effective_translate_kind()
    return make_backend(
        kind,
        path=config.translate.dictionary_path,
        endpoint=config.translate.endpoint,
    )


def make_embedder(config: PipelineConfig):
    if config.embed.kind == "hashed":
        return HashedEmbedder(dim=config.embed.dim, max_tokens=config.embed.max_tokens)
    return RemoteEmbedder(config.embed.endpoint, dim=config.embed.dim)


def _representatives(
    groups: Sequence[ExactGroup], canonical_by_id: Mapping[str, CanonicalText]
) -> list[CanonicalText]:
    return [canonical_by_id[g.representative_id] for g in groups]


def _translate_reps(
    reps: Sequence[CanonicalText],
    postings_by_id: Mapping[str, Posting],
    config: PipelineConfig,
    translator,
    cache: TranslationCache | None,
) -> list[str]:
    requests = []
    slots = []
    for i, rep in enumerate(reps):
        if not rep.text:
            continue  # empty canonical text never reaches a backend
        requests.append(
            TranslationRequest(
                fingerprint=rep.fingerprint,
                text=rep.text,
                source_language=postings_by_id[rep.source_id].language,
            )
        )
        slots.append(i)
    translated = translate_batch(
        requests,
        translator,
        cache=cache,
        max_in_flight=config.translate.max_in_flight,
        batch_size=config.translate.batch_size,
    )
    texts = [""] * len(reps)
    for slot, text in zip(slots, translated):
        texts[slot] = text
    return texts


def _build_search_index(id_vectors, config: PipelineConfig):
    index_config = config.index
    if index_config.kind == "ivf":
        # Desk-scale corpora can undershoot the configured partition count.
        nlist = min(index_config.nlist, len(id_vectors))
        index_config = replace(index_config, nlist=nlist, nprobe=min(index_config.nprobe, nlist))
    return build_index(id_vectors, index_config)


def _expand_pairs(
    kept: Sequence[tuple[CandidatePair, int]],
    rules,
    groups: Sequence[ExactGroup],
    postings_by_id: Mapping[str, Posting],
    fingerprints_by_id: Mapping[str, str],
) -> tuple[list[LabeledPair], int]:
    group_by_rep = {g.representative_id: g for g in groups}
    pairs: list[LabeledPair] = []

    for group in groups:
        for id_a, id_b in combinations(sorted(group.member_ids), 2):
            label = classify(id_a, id_b, postings_by_id, fingerprints_by_id, semantic_pass=False)
            pairs.append(LabeledPair(id_a, id_b, label, 0.0, "exact_fingerprint"))
    n_exact = len(pairs)

    for pair, rule_index in kept:
        reason = (
            "semantic_threshold" if rules[rule_index].is_catch_all else f"rule({rule_index})"
        )
        members_a = sorted(group_by_rep[pair.id_a].member_ids)
        members_b = sorted(group_by_rep[pair.id_b].member_ids)
        for ma, mb in product(members_a, members_b):
            id_a, id_b = (ma, mb) if ma < mb else (mb, ma)
            label = classify(id_a, id_b, postings_by_id, fingerprints_by_id, semantic_pass=True)
            pairs.append(LabeledPair(id_a, id_b, label, pair.distance, reason))

    pairs.sort(key=lambda p: p.key)
    return pairs, n_exact


def _classify_candidates(
    report: RunReport,
    config: PipelineConfig,
    hits,
    comparisons: int,
    n_queries: int,
    postings_by_id,
    fingerprints_by_id,
    groups,
) -> list[LabeledPair]:
    """Shared tail of the pipeline: sweep, rules, classification, expansion."""
    candidates = pairs_from_hits(hits)
    report.sweep = threshold_sweep(candidates, list(config.dedup.sweep_thetas))
    report.saturation = saturation_report(hits, config.dedup.base_theta, config.dedup.k).to_dict()

    rules = list(config.dedup.rules) or [default_rule(config.dedup.base_theta)]
    kept = apply_rules_detailed(candidates, postings_by_id, rules, config.dedup.base_theta)
    pairs, n_exact = _expand_pairs(kept, rules, groups, postings_by_id, fingerprints_by_id)

    report.counters = {
        "index_comparisons": comparisons,
        "brute_force_pairs": pair_count(n_queries),
        "candidate_pairs": len(candidates),
        "kept_representative_pairs": len(kept),
        "exact_group_pairs": n_exact,
        "output_pairs": len(pairs),
    }
    label_counts: dict[str, int] = {}
    for pair in pairs:
        label_counts[pair.label.value] = label_counts.get(pair.label.value, 0) + 1
    report.label_counts = dict(sorted(label_counts.items()))
    return pairs


def run_pipeline(
    postings: Sequence[Posting],
    config: PipelineConfig,
    translator=None,
    embedder=None,
    cache: TranslationCache | None = None,
) -> PipelineResult:
    """Run the full dedup pipeline in memory over already-loaded postings."""
    report = RunReport(mode=config.mode, k=config.dedup.k, base_theta=config.dedup.base_theta)
    report.n_postings = len(postings)
    postings_by_id = {p.id: p for p in postings}
    timings = report.stage_seconds

    t0 = time.perf_counter()
    canonicals = [canonicalize(p, config.normalize) for p in postings]
    canonical_by_id = {c.source_id: c for c in canonicals}
    fingerprints_by_id = {c.source_id: c.fingerprint for c in canonicals}
    timings["normalize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    groups = group_exact(canonicals)
    reps = _representatives(groups, canonical_by_id)
    report.n_groups = len(groups)
    report.n_representatives = len(reps)
    timings["group_exact"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if translator is None:
        translator = make_translator(config)
    if cache is None and config.translate.cache_path:
        cache = TranslationCache(config.translate.cache_path)
    texts = _translate_reps(reps, postings_by_id, config, translator, cache)
    timings["translate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if embedder is None:
        embedder = make_embedder(config)
    vectors = embedder.embed_many(texts)
    report.truncation = truncation_report(texts, config.embed.max_tokens).to_dict()
    id_vectors = [
        (rep.source_id, vec) for rep, vec in zip(reps, vectors) if not vec.is_zero
    ]
    report.n_zero_vectors = len(reps) - len(id_vectors)
    timings["embed"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    index = _build_search_index(id_vectors, config) if id_vectors else None
    timings["index"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if index is not None:
        index.reset_comparison_count()
        hits = collect_hits(index, id_vectors, config.dedup.k, threads=config.threads)
        comparisons = index.comparison_count
    else:
        hits, comparisons = {}, 0
    timings["candidates"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = _classify_candidates(
        report, config, hits, comparisons, len(id_vectors),
        postings_by_id, fingerprints_by_id, groups,
    )
    timings["classify"] = time.perf_counter() - t0
    return PipelineResult(pairs=pairs, report=report)


# --- staged artifact runners -------------------------------------------------

def _artifact(outdir: str | Path, name: str) -> Path:
    path = Path(outdir) / name
    if not path.exists():
        raise DataError(f"missing stage artifact {path}; run the producing stage first")
    return path


def write_canonical_file(canonicals: Sequence[CanonicalText], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in canonicals:
            record = {"id": c.source_id, "canonical_text": c.text, "fingerprint": c.fingerprint}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_canonical_file(path: str | Path) -> list[CanonicalText]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out.append(
                CanonicalText(
                    text=record["canonical_text"],
                    fingerprint=record["fingerprint"],
                    source_id=record["id"],
                )
            )
    return out


def stage_ingest(config: PipelineConfig, outdir: str | Path) -> list[Posting]:
    if not config.io.input_path:
        raise DataError("no input path configured; pass --input or set io.input_path")
    postings = load_postings(config.io.input_path, config.io.input_format)
    Path(outdir).mkdir(parents=True, exist_ok=True)
    save_postings(postings, Path(outdir) / POSTINGS_FILE)
    return postings


def stage_normalize(config: PipelineConfig, outdir: str | Path) -> list[CanonicalText]:
    postings = load_postings(_artifact(outdir, POSTINGS_FILE))
    canonicals = [canonicalize(p, config.normalize) for p in postings]
    write_canonical_file(canonicals, Path(outdir) / CANONICAL_FILE)
    return canonicals


def stage_translate(config: PipelineConfig, outdir: str | Path, translator=None) -> list[str]:
    postings = load_postings(_artifact(outdir, POSTINGS_FILE))
    canonicals = read_canonical_file(_artifact(outdir, CANONICAL_FILE))
    postings_by_id = {p.id: p for p in postings}
    canonical_by_id = {c.source_id: c for c in canonicals}
    groups = group_exact(canonicals)
    reps = _representatives(groups, canonical_by_id)
    if translator is None:
        translator = make_translator(config)
    cache = TranslationCache(config.translate.cache_path) if config.translate.cache_path else None
    texts = _translate_reps(reps, postings_by_id, config, translator, cache)
    with open(Path(outdir) / TRANSLATED_FILE, "w", encoding="utf-8") as fh:
        for rep, text in zip(reps, texts):
            fh.write(json.dumps({"id": rep.source_id, "text": text}, ensure_ascii=False) + "\n")
    return texts


def read_translated_file(path: str | Path) -> list[tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                out.append((record["id"], record["text"]))
    return out


def stage_embed(config: PipelineConfig, outdir: str | Path, embedder=None) -> FlatIndex | None:
    translated = read_translated_file(_artifact(outdir, TRANSLATED_FILE))
    if embedder is None:
        embedder = make_embedder(config)
    texts = [text for _, text in translated]
    vectors = embedder.embed_many(texts)
    id_vectors = [(rid, vec) for (rid, _), vec in zip(translated, vectors) if not vec.is_zero]
    zero_ids = [rid for (rid, _), vec in zip(translated, vectors) if vec.is_zero]
    meta = {
        "dim": config.embed.dim,
        "max_tokens": config.embed.max_tokens,
        "zero_vector_ids": zero_ids,
        "truncation": truncation_report(texts, config.embed.max_tokens).to_dict(),
    }
    (Path(outdir) / EMBED_META_FILE).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    dump = None
    if id_vectors:
        dump = build_index(id_vectors, IndexConfig(kind="flat", dim=config.embed.dim))
        dump.save(Path(outdir) / EMBEDDINGS_FILE)
    else:
        # drop stale artifacts so a re-run cannot mix corpora
        for name in (EMBEDDINGS_FILE, INDEX_FILE):
            stale = Path(outdir) / name
            if stale.exists():
                stale.unlink()
    return dump


def vectors_from_flat(flat: FlatIndex) -> list[tuple[str, EmbeddingVector]]:
    return flat.items()


def stage_index(config: PipelineConfig, outdir: str | Path):
    flat = load_index(_artifact(outdir, EMBEDDINGS_FILE))
    id_vectors = vectors_from_flat(flat)
    index = _build_search_index(id_vectors, config)
    index.save(Path(outdir) / INDEX_FILE)
    return index


def stage_dedup(
    config: PipelineConfig, outdir: str | Path, stage_seconds: dict | None = None
) -> PipelineResult:
    """Final stage: candidates, rules, classification, expansion, reports.

    `stage_seconds` carries upstream stage timings when the whole chain
    runs under one command; this stage adds its own.
    """
    started = time.perf_counter()
    postings = load_postings(_artifact(outdir, POSTINGS_FILE))
    canonicals = read_canonical_file(_artifact(outdir, CANONICAL_FILE))
    postings_by_id = {p.id: p for p in postings}
    fingerprints_by_id = {c.source_id: c.fingerprint for c in canonicals}
    groups = group_exact(canonicals)

    report = RunReport(mode=config.mode, k=config.dedup.k, base_theta=config.dedup.base_theta)
    report.n_postings = len(postings)
    report.n_groups = len(groups)
    report.n_representatives = len(groups)

    meta = json.loads(_artifact(outdir, EMBED_META_FILE).read_text(encoding="utf-8"))
    report.n_zero_vectors = len(meta["zero_vector_ids"])
    report.truncation = meta["truncation"]

    embeddings_path = Path(outdir) / EMBEDDINGS_FILE
    if embeddings_path.exists():
        queries = vectors_from_flat(load_index(embeddings_path))
        index = load_index(_artifact(outdir, INDEX_FILE))
        if hasattr(index, "nprobe"):
            # nprobe is a search-time knob, not persisted in the file.
            index.nprobe = min(config.index.nprobe, index.nlist)
        index.reset_comparison_count()
        hits = collect_hits(index, queries, config.dedup.k, threads=config.threads)
        comparisons = index.comparison_count
    else:
        queries, hits, comparisons = [], {}, 0

    pairs = _classify_candidates(
        report, config, hits, comparisons, len(queries),
        postings_by_id, fingerprints_by_id, groups,
    )
    report.stage_seconds = dict(stage_seconds or {})
    report.stage_seconds["dedup"] = time.perf_counter() - started

    write_results_csv(pairs, Path(outdir) / RESULTS_FILE)
    (Path(outdir) / REPORT_FILE).write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8"
    )
    return PipelineResult(pairs=pairs, report=report)


def run_staged(config: PipelineConfig, outdir: str | Path, translator=None, embedder=None) -> PipelineResult:
    """The `dedup` command: run every stage in order against the artifact dir."""
    timings: dict[str, float] = {}

    def timed(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        timings[name] = time.perf_counter() - t0
        return out

    timed("normalize", stage_normalize, config, outdir)
    timed("translate", stage_translate, config, outdir, translator=translator)
    timed("embed", stage_embed, config, outdir, embedder=embedder)
    if (Path(outdir) / EMBEDDINGS_FILE).exists():
        timed("index", stage_index, config, outdir)
    return stage_dedup(config, outdir, stage_seconds=timings)


__all__ = [
    "POSTINGS_FILE",
    "CANONICAL_FILE",
    "TRANSLATED_FILE",
    "EMBEDDINGS_FILE",
    "EMBED_META_FILE",
    "INDEX_FILE",
    "RESULTS_FILE",
    "REPORT_FILE",
    "GOLD_FILE",
    "DICTIONARY_FILE",
    "EVAL_FILE",
    "RunReport",
    "PipelineResult",
    "run_pipeline",
    "run_staged",
    "make_translator",
    "make_embedder",
    "stage_ingest",
    "stage_normalize",
    "stage_translate",
    "stage_embed",
    "stage_index",
    "stage_dedup",
    "vectors_from_flat",
    "read_canonical_file",
    "write_canonical_file",
    "read_translated_file",
]

"""Data model and file formats for bag-level relation extraction corpora.

A corpus is a set of bags. A bag collects every sentence that mentions a
fixed ordered entity pair and carries the relation labels the knowledge
base assigns to that pair (which makes some sentences irrelevant to some
labels; that mismatch is the whole point of the sentence-importance
machinery built on top).

File format: JSONL, one bag per line. An optional first line of the form
{"_header": {...}} carries run metadata (seed, sizes, config hash) and is
ignored by the loader. All ids are 0-based integers; mention spans are
half-open [start, end) token index ranges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


class ReprMode(Enum):
    """How entity mentions are presented to the encoder."""

    RAW = "raw"
    FGET = "fget"
    FGET_MENTION = "fget-mention"


@dataclass(frozen=True)
class Sentence:
    """One sentence with both mention spans marked.

    tokens are vocabulary ids; fget_i / fget_j are the fine-grained type
    ids of the two mentions (identical across a bag). relevance_label, when
    present, says whether the sentence expresses any relation at all;
    rationale_for, when present, lists the relation ids this sentence
    supports (empty set = annotated as supporting none).
    """

    tokens: tuple[int, ...]
    mention_i: tuple[int, int]
    mention_j: tuple[int, int]
    fget_i: int
    fget_j: int
    relevance_label: bool | None = None
    rationale_for: frozenset[int] | None = None
    distractor: bool = False


@dataclass(frozen=True)
class Bag:
    """All sentences for one ordered entity pair, with its KB relation labels."""

    bag_id: str
    entity_i: int
    entity_j: int
    fget_i: int
    fget_j: int
    relations: frozenset[int]
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class ExplEvalTuple:
    """Ground-truth ordering constraint: for relation k in this bag, the
    rationale sentence should outrank the irrelevant one."""

    bag_id: str
    relation: int
    rationale_idx: int
    irrelevant_idx: int


@dataclass(frozen=True)
class SentenceRecord:
    """One raw sentence observation before bagging, keyed by its entity pair."""

    entity_i: int
    entity_j: int
    fget_i: int
    fget_j: int
    tokens: tuple[int, ...]
    mention_i: tuple[int, int]
    mention_j: tuple[int, int]
    relevance_label: bool | None = None
    rationale_for: frozenset[int] | None = None


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def _validate_sentence(s: Sentence, bag_id: str, idx: int, relations: frozenset[int]):
    n = len(s.tokens)
    if n == 0:
        raise CorpusError(f"bag {bag_id!r} sentence {idx}: empty token sequence")
    if any((not isinstance(t, int)) or t < 0 for t in s.tokens):
        raise CorpusError(f"bag {bag_id!r} sentence {idx}: token ids must be nonnegative integers")
    for name, (start, end) in (("mention_i", s.mention_i), ("mention_j", s.mention_j)):
        if not (0 <= start < end <= n):
            raise CorpusError(
                f"bag {bag_id!r} sentence {idx}: {name} span [{start}, {end}) "
                f"out of bounds for {n} tokens"
            )
    if _spans_overlap(s.mention_i, s.mention_j):
        raise CorpusError(f"bag {bag_id!r} sentence {idx}: mention spans overlap")
    if s.fget_i < 0 or s.fget_j < 0:
        raise CorpusError(f"bag {bag_id!r} sentence {idx}: FGET ids must be nonnegative")
    if s.rationale_for is not None and not s.rationale_for <= relations:
        extra = sorted(s.rationale_for - relations)
        raise CorpusError(
            f"bag {bag_id!r} sentence {idx}: rationale_for {extra} not in bag relations"
        )


def validate_bag(bag: Bag):
    """Check every structural invariant; raises CorpusError naming the bag."""
    if not bag.sentences:
        raise CorpusError(f"bag {bag.bag_id!r}: must contain at least one sentence")
    if any((not isinstance(k, int)) or k < 0 for k in bag.relations):
        raise CorpusError(f"bag {bag.bag_id!r}: relation ids must be nonnegative integers")
    for idx, s in enumerate(bag.sentences):
        if (s.fget_i, s.fget_j) != (bag.fget_i, bag.fget_j):
            raise CorpusError(
                f"bag {bag.bag_id!r} sentence {idx}: FGET pair ({s.fget_i}, {s.fget_j}) "
                f"differs from the bag's ({bag.fget_i}, {bag.fget_j})"
            )
        _validate_sentence(s, bag.bag_id, idx, bag.relations)


# ---------------------------------------------------------------------------
# JSONL I/O
# ---------------------------------------------------------------------------

def _sentence_to_json(s: Sentence) -> dict:
    d: dict = {
        "tokens": list(s.tokens),
        "mention_i": list(s.mention_i),
        "mention_j": list(s.mention_j),
    }
    if s.relevance_label is not None:
        d["relevance_label"] = bool(s.relevance_label)
    if s.rationale_for is not None:
        d["rationale_for"] = sorted(s.rationale_for)
    if s.distractor:
        d["distractor"] = True
    return d


def _bag_to_json(bag: Bag) -> dict:
    return {
        "bag_id": bag.bag_id,
        "entity_i": bag.entity_i,
        "entity_j": bag.entity_j,
        "fget_i": bag.fget_i,
        "fget_j": bag.fget_j,
        "relations": sorted(bag.relations),
        "sentences": [_sentence_to_json(s) for s in bag.sentences],
    }


def _span_from_json(raw, what: str, bag_id: str) -> tuple[int, int]:
    if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(v, int) for v in raw)):
        raise CorpusError(f"bag {bag_id!r}: {what} must be a [start, end] integer pair")
    return (raw[0], raw[1])


def _bag_from_json(obj: dict, bag_id: str) -> Bag:
    try:
        fget_i = int(obj["fget_i"])
        fget_j = int(obj["fget_j"])
        sentences = []
        for raw in obj["sentences"]:
            rationale = raw.get("rationale_for")
            sentences.append(
                Sentence(
                    tokens=tuple(raw["tokens"]),
                    mention_i=_span_from_json(raw["mention_i"], "mention_i", bag_id),
                    mention_j=_span_from_json(raw["mention_j"], "mention_j", bag_id),
                    fget_i=fget_i,
                    fget_j=fget_j,
                    relevance_label=None if "relevance_label" not in raw
                    else bool(raw["relevance_label"]),
                    rationale_for=None if rationale is None else frozenset(int(k) for k in rationale),
                    distractor=bool(raw.get("distractor", False)),
                )
            )
        bag = Bag(
            bag_id=bag_id,
            entity_i=int(obj["entity_i"]),
            entity_j=int(obj["entity_j"]),
            fget_i=fget_i,
            fget_j=fget_j,
            relations=frozenset(int(k) for k in obj["relations"]),
            sentences=tuple(sentences),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"bag {bag_id!r}: missing or mistyped field ({exc})") from exc
    validate_bag(bag)
    return bag


def load_corpus(path: str) -> list[Bag]:
    """Read and validate a JSONL corpus; header lines are skipped."""
    bags: list[Bag] = []
    seen: set[str] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            if "_header" in obj:
                continue
            if "bag_id" not in obj:
                raise CorpusError(f"{path}:{lineno}: missing bag_id")
            bag_id = str(obj["bag_id"])
            if bag_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate bag_id {bag_id!r}")
            seen.add(bag_id)
            bags.append(_bag_from_json(obj, bag_id))
    return bags


def read_corpus_meta(path: str) -> dict:
    """Return the {"_header": ...} payload of a corpus file, or {}."""
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if isinstance(obj, dict) and "_header" in obj:
                return obj["_header"]
            return {}
    return {}


def write_corpus(path: str, bags: Sequence[Bag], meta: dict | None = None):
    """Write bags as JSONL, optionally preceded by a header line. Byte-stable."""
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"_header": meta}, sort_keys=True) + "\n")
        for bag in bags:
            fh.write(json.dumps(_bag_to_json(bag), sort_keys=True) + "\n")


def write_expl_eval(path: str, tuples: Sequence[ExplEvalTuple], meta: dict | None = None):
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"_header": meta}, sort_keys=True) + "\n")
        for t in tuples:
            fh.write(
                json.dumps(
                    {
                        "bag_id": t.bag_id,
                        "relation": t.relation,
                        "rationale_idx": t.rationale_idx,
                        "irrelevant_idx": t.irrelevant_idx,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_expl_eval(path: str) -> list[ExplEvalTuple]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_header" in obj:
                continue
            try:
                out.append(
                    ExplEvalTuple(
                        bag_id=str(obj["bag_id"]),
                        relation=int(obj["relation"]),
                        rationale_idx=int(obj["rationale_idx"]),
                        irrelevant_idx=int(obj["irrelevant_idx"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad tuple line ({exc})") from exc
    return out


# ---------------------------------------------------------------------------
# bag construction and statistics
# ---------------------------------------------------------------------------

def build_bags(records: Iterable[SentenceRecord],
               kb: Mapping[tuple[int, int], Iterable[int]]) -> list[Bag]:
    """Group sentence records into one bag per distinct ordered entity pair.

    Bag relations come from the kb mapping; pairs absent from the kb get an
    empty relation set (negative bags). First-appearance order of pairs and
    input sentence order are both preserved.
    """
    order: list[tuple[int, int]] = []
    grouped: dict[tuple[int, int], list[SentenceRecord]] = {}
    for rec in records:
        key = (rec.entity_i, rec.entity_j)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(rec)

    bags = []
    for key in order:
        recs = grouped[key]
        fget = (recs[0].fget_i, recs[0].fget_j)
        bag_id = f"b{key[0]}_{key[1]}"
        for rec in recs:
            if (rec.fget_i, rec.fget_j) != fget:
                raise CorpusError(
                    f"bag {bag_id!r}: records disagree on the FGET pair "
                    f"({rec.fget_i}, {rec.fget_j}) vs {fget}"
                )
        relations = frozenset(int(k) for k in kb.get(key, ()))
        sentences = tuple(
            Sentence(
                tokens=tuple(rec.tokens),
                mention_i=tuple(rec.mention_i),
                mention_j=tuple(rec.mention_j),
                fget_i=fget[0],
                fget_j=fget[1],
                relevance_label=rec.relevance_label,
                rationale_for=rec.rationale_for,
            )
            for rec in recs
        )
        bag = Bag(
            bag_id=bag_id,
            entity_i=key[0],
            entity_j=key[1],
            fget_i=fget[0],
            fget_j=fget[1],
            relations=relations,
            sentences=sentences,
        )
        validate_bag(bag)
        bags.append(bag)
    return bags


def corpus_stats(bags: Sequence[Bag]) -> dict:
    """Sizes inferred from the data: vocab extent, FGET extent, relation extent."""
    n_tokens = 0
    n_fget = 0
    n_relations = 0
    n_sentences = 0
    for bag in bags:
        n_fget = max(n_fget, bag.fget_i + 1, bag.fget_j + 1)
        for k in bag.relations:
            n_relations = max(n_relations, k + 1)
        for s in bag.sentences:
            n_sentences += 1
            if s.tokens:
                n_tokens = max(n_tokens, max(s.tokens) + 1)
    return {
        "vocab_size": n_tokens,
        "n_fget": n_fget,
        "n_relations": n_relations,
        "n_bags": len(bags),
        "n_sentences": n_sentences,
    }


# ---------------------------------------------------------------------------
# mention representation modes
# ---------------------------------------------------------------------------

def fget_token_id(fget: int, vocab_size: int) -> int:
    """Type tokens live in the shared embedding table after the word rows."""
    return vocab_size + fget


def apply_repr_mode(sentence: Sentence, mode: ReprMode,
                    vocab_size: int | None = None,
                    n_fget: int | None = None) -> tuple[tuple[int, ...], tuple[int, int], tuple[int, int]]:
    """Produce the encoder-facing token sequence and recomputed mention spans.

    RAW leaves the sentence untouched. FGET replaces each mention span with
    the single type token of that entity. FGET_MENTION replaces each span
    with the type token followed by the original mention tokens. Tokens
    outside the spans are never changed.
    """
    if mode is ReprMode.RAW:
        return sentence.tokens, sentence.mention_i, sentence.mention_j
    if vocab_size is None or n_fget is None:
        raise ValueError("vocab_size and n_fget are required for FGET modes")
    for fget in (sentence.fget_i, sentence.fget_j):
        if not (0 <= fget < n_fget):
            raise CorpusError(f"unknown FGET type {fget} (inventory size {n_fget})")

    def block(span: tuple[int, int], fget: int) -> list[int]:
        type_tok = fget_token_id(fget, vocab_size)
        if mode is ReprMode.FGET:
            return [type_tok]
        return [type_tok] + list(sentence.tokens[span[0]:span[1]])

    spans = [("i", sentence.mention_i, sentence.fget_i), ("j", sentence.mention_j, sentence.fget_j)]
    spans.sort(key=lambda item: item[1][0])

    tokens: list[int] = []
    new_spans: dict[str, tuple[int, int]] = {}
    cursor = 0
    for name, (start, end), fget in spans:
        tokens.extend(sentence.tokens[cursor:start])
        b = block((start, end), fget)
        new_spans[name] = (len(tokens), len(tokens) + len(b))
        tokens.extend(b)
        cursor = end
    tokens.extend(sentence.tokens[cursor:])
    return tuple(tokens), new_spans["i"], new_spans["j"]


# ---------------------------------------------------------------------------
# explanation ground truth
# ---------------------------------------------------------------------------

def build_expl_eval(bags: Sequence[Bag]) -> list[ExplEvalTuple]:
    """Enumerate (bag, relation, rationale, irrelevant) ordering constraints.

    For every bag, every labeled relation k, and every pair of one sentence
    annotated as supporting k with one annotated sentence that does not,
    emit one tuple. Sentences without an annotation (and injected
    distractors) take no part. Output is deduplicated and sorted.
    """
    tuples: set[ExplEvalTuple] = set()
    for bag in bags:
        annotated = [
            (idx, s.rationale_for)
            for idx, s in enumerate(bag.sentences)
            if s.rationale_for is not None and not s.distractor
        ]
        for k in sorted(bag.relations):
            pos = [idx for idx, r in annotated if k in r]
            neg = [idx for idx, r in annotated if k not in r]
            for p in pos:
                for n in neg:
                    tuples.add(ExplEvalTuple(bag.bag_id, k, p, n))
    return sorted(tuples, key=lambda t: (t.bag_id, t.relation, t.rationale_idx, t.irrelevant_idx))

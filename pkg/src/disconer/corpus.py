"""Data model for sentences with discontinuous and overlapping mentions.

A mention is an entity type plus a canonical list of disjoint, non-adjacent
token fragments. All types here are immutable; every operation is a pure
function, so per-sentence work can safely run in parallel.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus input (carries a line number when known)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, order=True)
class Fragment:
    """Half-open token range [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise CorpusError(f"invalid fragment ({self.start},{self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def tokens(self) -> range:
        return range(self.start, self.end)


def canonicalize(fragments: list[Fragment] | tuple[Fragment, ...]) -> tuple[Fragment, ...]:
    """Sort fragments and merge touching ones; reject proper overlaps.

    The canonical form makes strict-match equality between mentions well
    defined: two mentions are equal iff their types and canonical fragment
    tuples are equal.
    """
    if not fragments:
        raise CorpusError("mention must have at least one fragment")
    ordered = sorted(fragments)
    merged = [ordered[0]]
    for frag in ordered[1:]:
        prev = merged[-1]
        if frag.start < prev.end:
            raise CorpusError(f"fragments ({prev.start},{prev.end}) and ({frag.start},{frag.end}) overlap")
        if frag.start == prev.end:
            merged[-1] = Fragment(prev.start, frag.end)
        else:
            merged.append(frag)
    return tuple(merged)


@dataclass(frozen=True)
class Mention:
    """Entity type plus canonical fragment tuple; the unit of evaluation."""

    entity_type: str
    fragments: tuple[Fragment, ...]

    def __post_init__(self):
        object.__setattr__(self, "fragments", canonicalize(self.fragments))

    @property
    def is_discontinuous(self) -> bool:
        return len(self.fragments) > 1

    @property
    def length(self) -> int:
        """Token count inside fragments; intervals are not counted."""
        return sum(len(f) for f in self.fragments)

    @property
    def interval_length(self) -> int:
        """Total gap tokens between the first fragment start and last end."""
        return (self.fragments[-1].end - self.fragments[0].start) - self.length

    def token_set(self) -> frozenset[int]:
        return frozenset(t for f in self.fragments for t in f.tokens())

    def overlaps(self, other: "Mention") -> bool:
        return bool(self.token_set() & other.token_set())


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    mentions: tuple[Mention, ...]
    doc_id: str = ""
    sent_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "mentions", tuple(self.mentions))
        n = len(self.tokens)
        seen = set()
        for m in self.mentions:
            if m.fragments[-1].end > n:
                raise CorpusError(f"mention {m} exceeds sentence length {n}")
            key = (m.entity_type, m.fragments)
            if key in seen:
                raise CorpusError(f"duplicate mention {m}")
            seen.add(key)

    def discontinuous_mentions(self) -> list[Mention]:
        return [m for m in self.mentions if m.is_discontinuous]


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    split_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


class Category(Enum):
    """Overlap taxonomy for discontinuous mentions."""

    NO_OVERLAP = "no_overlap"
    LEFT_OVERLAP = "left_overlap"
    RIGHT_OVERLAP = "right_overlap"
    MULTI_OVERLAP = "multi_overlap"


def overlap_category(m: Mention, others: list[Mention]) -> Category:
    """Classify a discontinuous mention by which components it shares.

    A component (fragment) is shared when its token range intersects any
    other mention of the sentence. Left = only the first component shared,
    Right = only the last, Multi = two or more shared (crossing
    compositions), No = none.
    """
    if not m.is_discontinuous:
        raise CorpusError("overlap_category requires a discontinuous mention")
    other_tokens = set()
    for o in others:
        if o is m or (o.entity_type == m.entity_type and o.fragments == m.fragments):
            continue
        other_tokens |= o.token_set()
    shared = [i for i, f in enumerate(m.fragments) if any(t in other_tokens for t in f.tokens())]
    if not shared:
        return Category.NO_OVERLAP
    if len(shared) >= 2:
        return Category.MULTI_OVERLAP
    if shared[0] == 0:
        return Category.LEFT_OVERLAP
    if shared[0] == len(m.fragments) - 1:
        return Category.RIGHT_OVERLAP
    # A lone shared middle component has no named category of its own;
    # grouped with the crossing cases.
    return Category.MULTI_OVERLAP


# ---------------------------------------------------------------------------
# Inline format
# ---------------------------------------------------------------------------

_MENTION_RE = re.compile(r"^(\d+,\d+(?:;\d+,\d+)*) (\S+)$")


def parse_inline(text: str) -> Corpus:
    """Parse the inline corpus format.

    Blocks are separated by one blank line. Line 1 holds space-separated
    tokens; line 2 holds mentions joined by "|", each "s1,e1[;s2,e2]* TYPE"
    with half-open token indices. An empty line 2 means no mentions.
    """
    sentences = []
    lines = text.split("\n")
    i = 0
    sent_index = 0
    while i < len(lines):
        if lines[i] == "":
            i += 1
            continue
        token_line = lines[i]
        mention_line = lines[i + 1] if i + 1 < len(lines) else ""
        tokens = token_line.split(" ")
        if any(t == "" for t in tokens):
            raise CorpusError("empty token (double space?)", line=i + 1)
        mentions = []
        if mention_line:
            for part in mention_line.split("|"):
                match = _MENTION_RE.match(part)
                if not match:
                    raise CorpusError(f"malformed mention {part!r}", line=i + 2)
                frags = []
                for pair in match.group(1).split(";"):
                    s, e = pair.split(",")
                    frags.append(Fragment(int(s), int(e)))
                mentions.append(Mention(match.group(2), tuple(frags)))
        try:
            sentences.append(Sentence(tuple(tokens), tuple(mentions),
                                      doc_id=f"doc{sent_index:04d}", sent_index=sent_index))
        except CorpusError as exc:
            raise CorpusError(str(exc), line=i + 1) from exc
        sent_index += 1
        i += 2
    return Corpus(tuple(sentences))


def write_inline(corpus: Corpus) -> str:
    """Serialize a corpus in canonical inline form (parse_inline inverts it)."""
    blocks = []
    for sent in corpus:
        mention_strs = []
        for m in sorted(sent.mentions, key=lambda m: (m.fragments, m.entity_type)):
            frag_str = ";".join(f"{f.start},{f.end}" for f in m.fragments)
            mention_strs.append(f"{frag_str} {m.entity_type}")
        blocks.append(" ".join(sent.tokens) + "\n" + "|".join(mention_strs) + "\n")
    return "\n".join(blocks)


# ---------------------------------------------------------------------------
# Standoff (BRAT-style) format
# ---------------------------------------------------------------------------

_PUNCT_SPLIT_RE = re.compile(r"\w+|[^\w\s]")


def _tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokenization with punctuation split off as own tokens."""
    return [(m.group(0), m.start(), m.end()) for m in _PUNCT_SPLIT_RE.finditer(text)]


def parse_standoff(text_file: str, ann_file: str,
                   sentence_boundaries: list[tuple[int, int]] | None = None,
                   doc_id: str = "") -> tuple[Corpus, list[str]]:
    """Parse a text + .ann standoff pair into a corpus.

    Entity lines look like "T1\\tADR 0 6;16 23\\tmuscle fatigue" with
    character offsets; discontinuous spans are separated by ";". Character
    offsets are mapped to token indices. Mentions whose offsets do not land
    on token boundaries, or which cross a sentence boundary, are skipped and
    reported in the returned warning list.
    """
    if sentence_boundaries is None:
        sentence_boundaries = [(0, len(text_file))]
    warnings: list[str] = []
    sent_tokens = []
    for (s, e) in sentence_boundaries:
        sent_tokens.append(_tokenize_with_offsets(text_file[s:e]))
    # char offset (global) -> (sentence index, token index) for starts/ends
    start_map: dict[int, tuple[int, int]] = {}
    end_map: dict[int, tuple[int, int]] = {}
    for si, ((s, _), toks) in enumerate(zip(sentence_boundaries, sent_tokens)):
        for ti, (_, ts, te) in enumerate(toks):
            start_map[s + ts] = (si, ti)
            end_map[s + te] = (si, ti + 1)

    sent_mentions: list[list[Mention]] = [[] for _ in sentence_boundaries]
    for lineno, raw in enumerate(ann_file.split("\n"), start=1):
        line = raw.rstrip()
        if not line or not line.startswith("T"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise CorpusError(f"malformed entity line {line!r}", line=lineno)
        head = parts[1].split(" ")
        etype = head[0]
        try:
            offsets = [tuple(int(x) for x in pair.split()) for pair in " ".join(head[1:]).split(";")]
        except ValueError as exc:
            raise CorpusError(f"malformed offsets in {line!r}", line=lineno) from exc
        frags = []
        sent_ids = set()
        ok = True
        for (cs, ce) in offsets:
            if cs not in start_map or ce not in end_map:
                warnings.append(f"{parts[0]}: offset {cs}-{ce} not on a token boundary; mention skipped")
                ok = False
                break
            (si0, t0), (si1, t1) = start_map[cs], end_map[ce]
            if si0 != si1:
                warnings.append(f"{parts[0]}: span {cs}-{ce} crosses a sentence boundary; mention skipped")
                ok = False
                break
            sent_ids.add(si0)
            frags.append(Fragment(t0, t1))
        if not ok:
            continue
        if len(sent_ids) != 1:
            warnings.append(f"{parts[0]}: mention crosses sentence boundaries; skipped")
            continue
        si = sent_ids.pop()
        mention = Mention(etype, tuple(frags))
        if mention not in sent_mentions[si]:
            sent_mentions[si].append(mention)

    sentences = []
    for si, toks in enumerate(sent_tokens):
        sentences.append(Sentence(tuple(t for t, _, _ in toks), tuple(sent_mentions[si]),
                                  doc_id=doc_id or "doc0000", sent_index=si))
    return Corpus(tuple(sentences)), warnings


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StatsReport:
    sentence_count: int
    mention_count: int
    disc_mention_count: int
    disc_percentage: float
    avg_mention_length: float
    avg_disc_mention_length: float
    avg_interval_length: float
    component_histogram: dict[int, int] = field(default_factory=dict)
    category_histogram: dict[Category, int] = field(default_factory=dict)
    continuous_overlap_count: int = 0

    def to_text(self) -> str:
        lines = [
            f"sentences = {self.sentence_count}",
            f"mentions = {self.mention_count}",
            f"disc_mentions = {self.disc_mention_count}",
            f"disc_percentage = {self.disc_percentage:.1f}",
            f"avg_mention_length = {self.avg_mention_length:.2f}",
            f"avg_disc_mention_length = {self.avg_disc_mention_length:.2f}",
            f"avg_interval_length = {self.avg_interval_length:.2f}",
        ]
        for k in sorted(self.component_histogram):
            lines.append(f"components_{k} = {self.component_histogram[k]}")
        for cat in Category:
            lines.append(f"{cat.value} = {self.category_histogram.get(cat, 0)}")
        lines.append(f"continuous_overlap = {self.continuous_overlap_count}")
        return "\n".join(lines)

    def to_records(self) -> list[dict]:
        records = [
            {"metric": "sentences", "value": self.sentence_count},
            {"metric": "mentions", "value": self.mention_count},
            {"metric": "disc_mentions", "value": self.disc_mention_count},
            {"metric": "disc_percentage", "value": self.disc_percentage},
            {"metric": "avg_mention_length", "value": self.avg_mention_length},
            {"metric": "avg_disc_mention_length", "value": self.avg_disc_mention_length},
            {"metric": "avg_interval_length", "value": self.avg_interval_length},
        ]
        for k in sorted(self.component_histogram):
            records.append({"metric": f"components_{k}", "value": self.component_histogram[k]})
        for cat in Category:
            records.append({"metric": cat.value, "value": self.category_histogram.get(cat, 0)})
        records.append({"metric": "continuous_overlap", "value": self.continuous_overlap_count})
        return records


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Descriptive statistics: counts, lengths, component and overlap histograms.

    Mention length counts only tokens inside fragments; interval length is
    the per-mention total of gap tokens between its first and last fragment.
    """
    mention_count = 0
    disc_count = 0
    total_len = 0
    disc_len = 0
    interval_len = 0
    comp_hist: dict[int, int] = {}
    cat_hist: dict[Category, int] = {c: 0 for c in Category}
    cont_overlap = 0
    for sent in corpus:
        mentions = list(sent.mentions)
        for m in mentions:
            mention_count += 1
            total_len += m.length
            if m.is_discontinuous:
                disc_count += 1
                disc_len += m.length
                interval_len += m.interval_length
                k = len(m.fragments)
                comp_hist[k] = comp_hist.get(k, 0) + 1
                cat_hist[overlap_category(m, mentions)] += 1
            else:
                if any(o is not m and m.overlaps(o) for o in mentions):
                    cont_overlap += 1
    return StatsReport(
        sentence_count=len(corpus),
        mention_count=mention_count,
        disc_mention_count=disc_count,
        disc_percentage=(disc_count / mention_count * 100.0) if mention_count else 0.0,
        avg_mention_length=(total_len / mention_count) if mention_count else 0.0,
        avg_disc_mention_length=(disc_len / disc_count) if disc_count else 0.0,
        avg_interval_length=(interval_len / disc_count) if disc_count else 0.0,
        component_histogram=comp_hist,
        category_histogram=cat_hist,
        continuous_overlap_count=cont_overlap,
    )


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------

def flatten_for_flat_model(corpus: Corpus) -> Corpus:
    """Make a corpus usable by flat sequence taggers.

    Each discontinuous mention is replaced by the shortest continuous span
    covering it; transitively overlapping mentions are merged into a single
    covering mention. The merged type is the majority type of the group,
    ties broken by the leftmost mention's type.
    """
    new_sentences = []
    for sent in corpus:
        covers = [(Fragment(m.fragments[0].start, m.fragments[-1].end), m.entity_type)
                  for m in sent.mentions]
        # union-find over transitive overlaps of the covering intervals
        parent = list(range(len(covers)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a in range(len(covers)):
            for b in range(a + 1, len(covers)):
                fa, fb = covers[a][0], covers[b][0]
                if fa.start < fb.end and fb.start < fa.end:
                    parent[find(a)] = find(b)
        groups: dict[int, list[int]] = {}
        for i in range(len(covers)):
            groups.setdefault(find(i), []).append(i)
        merged = []
        for members in groups.values():
            start = min(covers[i][0].start for i in members)
            end = max(covers[i][0].end for i in members)
            types = [covers[i][1] for i in sorted(members, key=lambda i: covers[i][0])]
            best = max(set(types), key=lambda t: (types.count(t), -types.index(t)))
            merged.append(Mention(best, (Fragment(start, end),)))
        merged.sort(key=lambda m: m.fragments)
        new_sentences.append(Sentence(sent.tokens, tuple(merged), sent.doc_id, sent.sent_index))
    return Corpus(tuple(new_sentences), corpus.split_name)


class ResampleMode(Enum):
    DISC_ONLY = "disc_only"
    UNDER_SAMPLE = "under_sample"
    OVER_SAMPLE = "over_sample"


def resample(corpus: Corpus, mode: ResampleMode, seed: int) -> Corpus:
    """Rebalance sentences with vs without discontinuous mentions.

    DISC_ONLY keeps only sentences with a discontinuous mention.
    UNDER_SAMPLE keeps all of those plus an equal count of randomly chosen
    others. OVER_SAMPLE duplicates discontinuous sentences until counts
    balance. Deterministic given the seed.
    """
    disc = [s for s in corpus if s.discontinuous_mentions()]
    rest = [s for s in corpus if not s.discontinuous_mentions()]
    if mode is ResampleMode.DISC_ONLY:
        return Corpus(tuple(disc), corpus.split_name)
    if not disc:
        raise CorpusError("corpus has no discontinuous sentences; cannot balance")
    rng = np.random.default_rng(seed)
    if mode is ResampleMode.UNDER_SAMPLE:
        k = min(len(disc), len(rest))
        chosen_idx = sorted(rng.choice(len(rest), size=k, replace=False).tolist())
        kept = disc + [rest[i] for i in chosen_idx]
        return Corpus(tuple(kept), corpus.split_name)
    if mode is ResampleMode.OVER_SAMPLE:
        out = list(rest)
        target = max(len(rest), len(disc))
        i = 0
        copies = []
        while len(copies) < target:
            copies.append(disc[i % len(disc)])
            i += 1
        return Corpus(tuple(copies + out), corpus.split_name)
    raise ValueError(f"unknown mode {mode}")


def split(corpus: Corpus, train_frac: float, dev_frac: float,
          seed: int) -> tuple[Corpus, Corpus, Corpus]:
    """Document-level train/dev/test split, deterministic given the seed."""
    if train_frac <= 0 or dev_frac <= 0 or train_frac + dev_frac >= 1:
        raise CorpusError("fractions must be positive and sum to < 1")
    docs: dict[str, list[Sentence]] = {}
    for sent in corpus:
        docs.setdefault(sent.doc_id, []).append(sent)
    doc_ids = sorted(docs)
    if len(doc_ids) < 3:
        raise CorpusError("need at least 3 documents to split")
    rng = np.random.default_rng(seed)
    order = [doc_ids[i] for i in rng.permutation(len(doc_ids))]
    n = len(order)
    n_train = int(round(train_frac * n))
    n_dev = int(round(dev_frac * n))
    n_train = max(1, min(n_train, n - 2))
    n_dev = max(1, min(n_dev, n - n_train - 1))
    parts = (order[:n_train], order[n_train:n_train + n_dev], order[n_train + n_dev:])
    result = []
    for name, ids in zip(("train", "dev", "test"), parts):
        sents = [s for d in sorted(ids) for s in docs[d]]
        result.append(Corpus(tuple(sents), name))
    return tuple(result)

"""Bag-of-words featurization of review text.

Per review: lowercase, split into words and punctuation, drop stopwords,
Porter-stem, and prefix ``not_`` to every word between a negation and the
next punctuation mark.  The vocabulary is the intersection of each domain's
most common stems; an entity's feature vector is the mean of its reviews'
occurrence vectors.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from nltk.stem.porter import PorterStemmer

# NLTK's English stopword list, shipped here so no corpus download is needed.
STOPWORDS = frozenset("""
i me my myself we our ours ourselves you you're you've you'll you'd your yours
yourself yourselves he him his himself she she's her hers herself it it's its
itself they them their theirs themselves what which who whom this that that'll
these those am is are was were be been being have has had having do does did
doing a an the and but if or because as until while of at by for with about
against between into through during before after above below to from up down in
out on off over under again further then once here there when where why how all
any both each few more most other some such no nor not only own same so than too
very s t can will just don don't should should've now d ll m o re ve y ain aren
aren't couldn couldn't didn didn't doesn doesn't hadn hadn't hasn hasn't haven
haven't isn isn't ma mightn mightn't mustn mustn't needn needn't shan shan't
shouldn shouldn't wasn wasn't weren weren't won won't wouldn wouldn't
""".split())

NEGATIONS = frozenset(
    "not no never nor cannot none nobody nothing neither nowhere".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)*|[^\sa-z0-9']")
_stemmer = PorterStemmer()


@lru_cache(maxsize=200_000)
def stem(word: str) -> str:
    return _stemmer.stem(word)


def is_negation(word: str) -> bool:
    return word in NEGATIONS or word.endswith("n't")


def review_tokens(text: str, stopwords: Iterable[str] = STOPWORDS) -> list[str]:
    """Processed tokens of one review.

    >>> review_tokens("Not good. Great coffee!")
    ['not_good', 'great', 'coffe']
    """
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else frozenset(stopwords)
    out = []
    negated = False
    for tok in _TOKEN_RE.findall(text.lower().replace("’", "'")):
        if not (tok[0].isalnum()):
            negated = False
            continue
        if is_negation(tok):
            negated = True
            continue
        if tok in stop:
            continue
        s = stem(tok)
        out.append("not_" + s if negated else s)
    return out


def _top_k(counts: Counter, k: int) -> list[str]:
    return [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def build_vocabulary(domain_counts: Mapping[str, Counter], vocab_size: int = 500,
                     per_domain_common: int = 837) -> list[str]:
    """Intersection of each domain's ``per_domain_common`` most frequent tokens.

    If the intersection is larger than ``vocab_size`` the globally most
    frequent tokens are kept; a smaller intersection is kept whole.  Ties break
    alphabetically.
    """
    if not domain_counts:
        raise ValueError("no domains given")
    common = None
    for counts in domain_counts.values():
        top = set(_top_k(counts, per_domain_common))
        common = top if common is None else common & top
    if not common:
        raise ValueError("empty vocabulary intersection across domains")
    total = Counter()
    for counts in domain_counts.values():
        total.update(counts)
    ranked = sorted(common, key=lambda t: (-total[t], t))
    return ranked[:vocab_size]


def occurrence_matrix(reviews: Sequence[Sequence[str]], index: Mapping[str, int]) -> np.ndarray:
    """Binary token-occurrence vector per review."""
    out = np.zeros((len(reviews), len(index)))
    for r, toks in enumerate(reviews):
        cols = [index[t] for t in set(toks) if t in index]
        out[r, cols] = 1.0
    return out


def entity_features(reviews: Sequence[Sequence[str]], index: Mapping[str, int]) -> np.ndarray:
    if not reviews:
        return np.zeros(len(index))
    return occurrence_matrix(reviews, index).mean(axis=0)


@dataclass
class Featurized:
    vocabulary: list[str]
    features: dict[str, np.ndarray]


def bow_pipeline(corpora: Mapping[str, Sequence[Sequence[str]]],
                 stopwords: Iterable[str] = STOPWORDS, vocab_size: int = 500,
                 per_domain_common: int = 837) -> Featurized:
    """Featurize several domains against one shared vocabulary.

    ``corpora`` maps a domain name to its entities, each entity being the list
    of its review texts.  Returns the vocabulary and one ``(n_entities,
    len(vocabulary))`` matrix per domain.
    """
    stop = frozenset(stopwords)
    tokenized = {}
    counts = {}
    for domain, entities in corpora.items():
        if not entities:
            raise ValueError(f"domain {domain!r} has no entities")
        toks = [[review_tokens(r, stop) for r in reviews] for reviews in entities]
        tokenized[domain] = toks
        c = Counter()
        for ent in toks:
            for rev in ent:
                c.update(rev)
        counts[domain] = c
    vocab = build_vocabulary(counts, vocab_size, per_domain_common)
    index = {t: i for i, t in enumerate(vocab)}
    features = {
        domain: np.array([entity_features(ent, index) for ent in toks]).reshape(len(toks), len(vocab))
        for domain, toks in tokenized.items()
    }
    return Featurized(vocab, features)


@dataclass
class CorpusEntity:
    id: str
    reviews: list[str]
    label: int | None = None
    rating: float | None = None


def load_corpus(path) -> list[CorpusEntity]:
    """Read raw-text JSON-lines records ``{"id", "label"?, "rating"?, "reviews"}``."""
    out = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
            reviews = rec.get("reviews")
            if not isinstance(reviews, list) or not all(isinstance(r, str) for r in reviews):
                raise ValueError(f"{path}:{lineno}: field 'reviews' must be a list of strings")
            label = rec.get("label")
            if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
                raise ValueError(f"{path}:{lineno}: field 'label' must be an integer")
            rating = rec.get("rating")
            if rating is not None and not isinstance(rating, (int, float)):
                raise ValueError(f"{path}:{lineno}: field 'rating' must be a number")
            out.append(CorpusEntity(str(rec.get("id", lineno)), reviews, label, rating))
    return out

"""Text views: sparse TF-IDF vectors and dense document-context vectors.

TF is the raw in-document term count; IDF is the smoothed form
``ln((1 + |D|) / (1 + df(t))) + 1``; each document vector is scaled to
unit length.  Document embeddings are bag-of-words paragraph vectors: the
document id acts as the center of every (doc, word) pair fed to the
shared negative-sampling trainer.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sgns import SgnsConfig, fit_vector, train_sgns


@dataclass
class Vocabulary:
    index: dict[str, int]
    document_frequency: dict[str, int]
    min_df: int
    num_documents: int

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    @property
    def terms(self) -> list[str]:
        return sorted(self.index, key=self.index.get)


@dataclass
class SparseVector:
    """(index, value) pairs sorted by index, plus the full dimension."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.indices) > 1 and not (np.diff(self.indices) > 0).all():
            raise ValueError("indices must be strictly increasing")
        if not np.isfinite(self.values).all():
            raise ValueError("values must be finite")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim, dtype=np.float64)
        dense[self.indices] = self.values
        return dense

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def stack_sparse(vectors: list[SparseVector]) -> sp.csr_matrix:
    """Rows of SparseVectors as one CSR matrix."""
    if not vectors:
        raise ValueError("no vectors to stack")
    dim = vectors[0].dim
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, vec in enumerate(vectors):
        if vec.dim != dim:
            raise ValueError("inconsistent dimensions")
        indptr[i + 1] = indptr[i] + len(vec.indices)
    indices = np.concatenate([v.indices for v in vectors]) if indptr[-1] else np.empty(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if indptr[-1] else np.empty(0, np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def build_vocabulary(documents: list[list[str]], min_df: int) -> Vocabulary:
    """Terms appearing in at least ``min_df`` distinct documents.

    Indices are dense and lexicographically ordered.
    """
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df: Counter = Counter()
    for tokens in documents:
        df.update(set(tokens))
    kept = sorted(term for term, count in df.items() if count >= min_df)
    if not kept:
        raise ValueError(
            f"vocabulary is empty at min_df={min_df}; lower min_df"
        )
    return Vocabulary(
        index={term: i for i, term in enumerate(kept)},
        document_frequency={term: df[term] for term in kept},
        min_df=min_df,
        num_documents=len(documents),
    )


def idf(term: str, vocab: Vocabulary, num_documents: int) -> float:
    """Smoothed inverse document frequency, natural log."""
    if term not in vocab.index:
        raise KeyError(f"term not in vocabulary: {term!r}")
    df = vocab.document_frequency[term]
    return float(np.log((1.0 + num_documents) / (1.0 + df)) + 1.0)


def tfidf_vector(
    tokens: list[str], vocab: Vocabulary, num_documents: int
) -> SparseVector:
    """Unit-length TF-IDF vector of a document; OOV terms are ignored.

    A document with no in-vocabulary terms yields the zero vector.
    """
    counts: Counter = Counter(t for t in tokens if t in vocab.index)
    if not counts:
        return SparseVector(np.empty(0, np.int64), np.empty(0, np.float64), len(vocab))
    items = sorted((vocab.index[t], c * idf(t, vocab, num_documents)) for t, c in counts.items())
    indices = np.array([i for i, _ in items], dtype=np.int64)
    values = np.array([v for _, v in items], dtype=np.float64)
    values /= np.linalg.norm(values)
    return SparseVector(indices, values, len(vocab))


@dataclass
class DocEmbeddingModel:
    """Bag-of-words paragraph vectors plus the word matrix for inference."""

    doc_vectors: np.ndarray
    word_output: np.ndarray
    doc_ids: list[str]
    vocab: Vocabulary
    config: SgnsConfig
    word_counts: np.ndarray
    empty_doc_ids: list[str] = field(default_factory=list)

    def doc_vector(self, doc_id: str) -> np.ndarray:
        return self.doc_vectors[self.doc_ids.index(doc_id)]


def _doc_word_pairs(
    documents: list[list[str]], vocab: Vocabulary
) -> tuple[np.ndarray, list[int]]:
    pairs = []
    empty = []
    for i, tokens in enumerate(documents):
        ids = [vocab.index[t] for t in tokens if t in vocab.index]
        if not ids:
            empty.append(i)
            continue
        pairs.extend((i, wid) for wid in ids)
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return arr, empty


def train_pvdbow(
    documents: list[list[str]],
    doc_ids: list[str],
    vocab: Vocabulary,
    config: SgnsConfig,
) -> DocEmbeddingModel:
    """Train document vectors that predict their own words.

    Every in-vocabulary token of a document forms a (doc, word) pair each
    epoch, which matches window-sampled word prediction in expectation.
    Documents with no in-vocabulary token are flagged and zeroed.
    """
    if len(documents) != len(doc_ids):
        raise ValueError("documents and doc_ids must align")
    pairs, empty = _doc_word_pairs(documents, vocab)
    doc_vectors, word_output = train_sgns(
        pairs, len(documents), config, context_size=len(vocab)
    )
    word_counts = np.bincount(pairs[:, 1], minlength=len(vocab)) if len(pairs) else np.zeros(len(vocab), np.int64)
    doc_vectors[empty] = 0.0
    return DocEmbeddingModel(
        doc_vectors=doc_vectors,
        word_output=word_output,
        doc_ids=list(doc_ids),
        vocab=vocab,
        config=config,
        word_counts=word_counts,
        empty_doc_ids=[doc_ids[i] for i in empty],
    )


def infer_doc_vector(
    model: DocEmbeddingModel, tokens: list[str], doc_id: str | None = None
) -> np.ndarray:
    """Vector for a document under a trained model.

    Training documents return their stored vectors; new documents are fit
    by seeded gradient steps against the frozen word matrix, so repeated
    inference is reproducible.  All-OOV documents get the zero vector.
    """
    if doc_id is not None and doc_id in model.doc_ids:
        return model.doc_vectors[model.doc_ids.index(doc_id)].copy()
    ids = np.array(
        [model.vocab.index[t] for t in tokens if t in model.vocab.index],
        dtype=np.int64,
    )
    if len(ids) == 0:
        return np.zeros(model.config.embedding_dim, dtype=np.float64)
    return fit_vector(
        model.word_output, ids, model.word_counts, model.config, model.config.seed
    )

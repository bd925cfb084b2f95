"""LETOR-format dataset parsing, serialization and per-feature background stats.

Format, one document per line:

    <label> qid:<qid> <fid>:<val> <fid>:<val> ... [# comment]

Labels are nonnegative integer relevance grades, feature ids are 1-based,
and feature ids missing from a line default to 0.0. Internally features are
stored as dense 0-based vectors of length M = max feature id seen anywhere
in the input.
"""
from __future__ import annotations

import gzip
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class LetorParseError(ValueError):
    """Malformed LETOR input; the message names the offending line number."""


@dataclass
class DocVector:
    doc_index: int
    label: int
    features: np.ndarray
    comment: str | None = None


@dataclass
class QueryGroup:
    qid: str
    docs: list[DocVector]
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def features_matrix(self) -> np.ndarray:
        """Dense (n_docs, M) matrix, row order = doc_index order."""
        if self._matrix is None:
            self._matrix = np.vstack([d.features for d in self.docs])
            self._matrix.flags.writeable = False
        return self._matrix

    @property
    def labels(self) -> np.ndarray:
        return np.array([d.label for d in self.docs], dtype=np.int64)


@dataclass
class Dataset:
    queries: list[QueryGroup]
    feature_count: int
    feature_means: np.ndarray
    feature_mins: np.ndarray
    feature_maxs: np.ndarray

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def qids(self) -> list[str]:
        return [q.qid for q in self.queries]

    def query(self, qid: str) -> QueryGroup:
        for q in self.queries:
            if q.qid == qid:
                return q
        raise KeyError(f"unknown qid {qid!r}")

    def all_features(self) -> np.ndarray:
        """All document feature rows stacked across queries, dataset order."""
        return np.vstack([q.features_matrix for q in self.queries])


def _parse_line(line: str, lineno: int) -> tuple[int, str, dict[int, float], str | None]:
    comment = None
    body = line
    hash_at = line.find("#")
    if hash_at >= 0:
        comment = line[hash_at + 1 :].strip()
        body = line[:hash_at]
    tokens = body.split()
    if len(tokens) < 2:
        raise LetorParseError(f"line {lineno}: expected '<label> qid:<qid> ...', got {line!r}")
    try:
        label = int(tokens[0])
    except ValueError:
        raise LetorParseError(f"line {lineno}: malformed label {tokens[0]!r}") from None
    if label < 0:
        raise LetorParseError(f"line {lineno}: negative label {label}")
    if not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise LetorParseError(f"line {lineno}: malformed qid token {tokens[1]!r}")
    qid = tokens[1][4:]
    values: dict[int, float] = {}
    for tok in tokens[2:]:
        fid_s, sep, val_s = tok.partition(":")
        if not sep:
            raise LetorParseError(f"line {lineno}: malformed feature token {tok!r}")
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            raise LetorParseError(f"line {lineno}: malformed feature token {tok!r}") from None
        if fid < 1:
            raise LetorParseError(f"line {lineno}: feature id must be >= 1, got {fid}")
        values[fid] = val
    return label, qid, values, comment


def parse_letor(source: Iterable[str]) -> Dataset:
    """Parse a line-oriented LETOR stream into a query-grouped Dataset.

    Documents are grouped by qid preserving file order (both the order of
    queries by first appearance and the order of documents within a query).
    """
    rows: list[tuple[int, str, dict[int, float], str | None]] = []
    max_fid = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        parsed = _parse_line(line, lineno)
        rows.append(parsed)
        if parsed[2]:
            max_fid = max(max_fid, max(parsed[2]))
    if not rows:
        raise LetorParseError("empty LETOR input: no document lines found")
    m = max(max_fid, 1)

    groups: dict[str, QueryGroup] = {}
    order: list[str] = []
    for label, qid, values, comment in rows:
        feats = np.zeros(m, dtype=np.float64)
        for fid, val in values.items():
            feats[fid - 1] = val
        if qid not in groups:
            groups[qid] = QueryGroup(qid=qid, docs=[])
            order.append(qid)
        group = groups[qid]
        group.docs.append(DocVector(doc_index=len(group.docs), label=label, features=feats, comment=comment))
    queries = [groups[qid] for qid in order]
    return _dataset_from_queries(queries, m)


def load_letor(path: str | Path) -> Dataset:
    """Parse a LETOR file; gzip input is detected by a '.gz' extension."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:  # type: ignore[operator]
        return parse_letor(fh)


def _format_value(v: float) -> str:
    return repr(float(v))


def dump_letor(dataset: Dataset) -> Iterator[str]:
    """Serialize back to LETOR lines (dense: every feature id is written)."""
    for query in dataset.queries:
        for doc in query.docs:
            parts = [str(doc.label), f"qid:{query.qid}"]
            parts.extend(f"{j + 1}:{_format_value(v)}" for j, v in enumerate(doc.features))
            line = " ".join(parts)
            if doc.comment is not None:
                line += f" # {doc.comment}"
            yield line


def save_letor(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8") as fh:  # type: ignore[operator]
        for line in dump_letor(dataset):
            fh.write(line + "\n")


def background_stats(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature (means, mins, maxs) over all documents of all queries."""
    if not dataset.queries:
        raise ValueError("cannot compute background stats of an empty dataset")
    stacked = dataset.all_features()
    return stacked.mean(axis=0), stacked.min(axis=0), stacked.max(axis=0)


def _dataset_from_queries(queries: list[QueryGroup], feature_count: int) -> Dataset:
    if not queries:
        raise ValueError("dataset must contain at least one query")
    stacked = np.vstack([q.features_matrix for q in queries])
    return Dataset(
        queries=queries,
        feature_count=feature_count,
        feature_means=stacked.mean(axis=0),
        feature_mins=stacked.min(axis=0),
        feature_maxs=stacked.max(axis=0),
    )


def split_queries(
    dataset: Dataset,
    qids: Sequence[str] | None = None,
    *,
    sample: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Sub-dataset with the selected queries, preserving dataset order.

    Exactly one of `qids` (explicit selection) or `sample` (uniform sample
    without replacement, deterministic given `seed`) must be given.
    Background stats are recomputed on the subset.
    """
    if (qids is None) == (sample is None):
        raise ValueError("pass exactly one of qids= or sample=")
    if qids is not None:
        known = set(dataset.qids)
        missing = [q for q in qids if q not in known]
        if missing:
            raise ValueError(f"unknown qids: {missing}")
        wanted = set(qids)
        selected = [q for q in dataset.queries if q.qid in wanted]
    else:
        assert sample is not None
        if sample > len(dataset.queries):
            raise ValueError(f"sample size {sample} exceeds query count {len(dataset.queries)}")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(dataset.queries), size=sample, replace=False))
        selected = [dataset.queries[i] for i in idx]
    return _dataset_from_queries(selected, dataset.feature_count)

import io
import logging
from pathlib import Path
from typing import BinaryIO, Optional, TextIO, Tuple, Union

import numpy as np

from modules.ranking_core import (
    MAX_RAW_LABEL,
    ContractViolationError,
    Dataset,
    QueryGroup,
    RankForgeError,
)

logger = logging.getLogger(__name__)

# global label thresholds of the synthetic latent score, as quantiles
SYNTHETIC_LABEL_QUANTILES = (0.5, 0.75, 0.9, 0.97)


class ParseError(RankForgeError):
    """LETOR line that does not follow `<label> qid:<id> <index>:<value>... #comment`."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


Source = Union[str, Path, BinaryIO, TextIO]


def _read_lines(source: Source):
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(data[:e.start].count(b"\n") + 1, "input is not valid UTF-8")
    return io.StringIO(data, newline=None)


def _parse_line(line: str, line_number: int):
    body = line.split("#", 1)[0]
    tokens = body.split()
    if not tokens:
        return None
    try:
        label = float(tokens[0])
    except ValueError:
        raise ParseError(line_number, f"label '{tokens[0]}' is not a number")
    if not 0.0 <= label <= MAX_RAW_LABEL:
        raise ParseError(line_number, f"label {label} outside [0, {MAX_RAW_LABEL:g}]")
    if len(tokens) < 2 or not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise ParseError(line_number, "expected 'qid:<id>' after the label")
    query_id = tokens[1][4:]

    indices, values = [], []
    for token in tokens[2:]:
        index_text, sep, value_text = token.partition(":")
        if not sep:
            raise ParseError(line_number, f"malformed feature token '{token}'")
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise ParseError(line_number, f"malformed feature token '{token}'")
        if index < 1:
            raise ParseError(line_number, f"feature index {index} must be >= 1")
        indices.append(index)
        values.append(value)
    if len(set(indices)) != len(indices):
        raise ParseError(line_number, "duplicate feature index")
    return query_id, label, indices, values


def parse_letor(source: Source, feature_count: Optional[int] = None) -> Dataset:
    """
    Parse a LETOR/SVMLight-with-qid file. Lines sharing a qid form one query
    group, in order of first appearance; unlisted features are 0.0 and the
    feature count is the largest index seen (at least `feature_count`).
    """
    rows = {}
    max_index = 0
    line_count = 0
    for line_number, line in enumerate(_read_lines(source), start=1):
        parsed = _parse_line(line, line_number)
        if parsed is None:
            continue
        query_id, label, indices, values = parsed
        rows.setdefault(query_id, []).append((label, indices, values))
        if indices:
            max_index = max(max_index, max(indices))
        line_count += 1
    if not rows:
        raise ContractViolationError("LETOR input contains no documents")

    width = max(max_index, feature_count or 0)
    groups = []
    for query_id, documents in rows.items():
        features = np.zeros((len(documents), width))
        labels = np.empty(len(documents))
        for row, (label, indices, values) in enumerate(documents):
            labels[row] = label
            features[row, np.asarray(indices, dtype=np.int64) - 1] = values
        groups.append(QueryGroup(query_id, features, labels))
    unlabeled = sum(1 for group in groups if not group.relevance.any())
    if unlabeled:
        logger.warning("%d of %d queries have no relevant document", unlabeled, len(groups))
    logger.info("Parsed %d documents in %d queries with %d features", line_count, len(groups), width)
    return Dataset(tuple(groups), width)


def _format_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def write_letor(d: Dataset, path: Union[str, Path]) -> None:
    """Write `d` in LETOR format, omitting zero features except the last index of the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for group in d.groups:
        query_id = group.query_id
        if not query_id or any(c.isspace() for c in query_id) or "#" in query_id:
            raise ContractViolationError(f"query id '{query_id}' cannot be written in LETOR format")
        for label, row in zip(group.relevance, group.features):
            present = np.flatnonzero(row)
            if not lines and d.feature_count and (present.size == 0 or present[-1] != d.feature_count - 1):
                present = np.append(present, d.feature_count - 1)
            tokens = [_format_number(label), f"qid:{query_id}"]
            tokens.extend(f"{index + 1}:{_format_number(row[index])}" for index in present)
            lines.append(" ".join(tokens))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %d documents in %d queries to %s", d.document_count, len(d), path)


def generate_synthetic(n_queries: int, docs_per_query: Tuple[int, int] = (10, 30), n_features: int = 20,
                       label_noise: float = 0.1, seed: int = 0) -> Dataset:
    """
    Uniform features, a sparse random linear latent score, graded labels
    0..4 from global quantile thresholds of that score, and a `label_noise`
    share of labels replaced by uniform draws.
    """
    low, high = docs_per_query
    if n_queries < 1 or n_features < 1 or low < 1 or high < low:
        raise ContractViolationError("synthetic sizes must be positive with min docs <= max docs")
    if not 0.0 <= label_noise <= 1.0:
        raise ContractViolationError(f"label_noise must lie in [0, 1], got {label_noise}")

    rng = np.random.default_rng(seed)
    sizes = rng.integers(low, high + 1, size=n_queries)
    total = int(sizes.sum())
    features = rng.uniform(size=(total, n_features))
    informative = rng.choice(n_features, size=max(1, n_features // 4), replace=False)
    weights = rng.normal(size=informative.size)
    latent = features[:, informative] @ weights
    thresholds = np.quantile(latent, SYNTHETIC_LABEL_QUANTILES)
    labels = np.searchsorted(thresholds, latent, side="right").astype(np.float64)
    flipped = rng.random(total) < label_noise
    labels[flipped] = rng.integers(0, int(MAX_RAW_LABEL) + 1, size=int(flipped.sum()))

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    groups = tuple(
        QueryGroup(str(q + 1), features[offsets[q]:offsets[q + 1]], labels[offsets[q]:offsets[q + 1]])
        for q in range(n_queries)
    )
    logger.info("Generated %d synthetic queries (%d documents, %d features)", n_queries, total, n_features)
    return Dataset(groups, n_features)

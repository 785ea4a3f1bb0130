import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from modules.ranking_core import ContractViolationError, Dataset, RankForgeError

from .feature_bins import FeatureBins
from .oblivious_tree import ObliviousTree

logger = logging.getLogger(__name__)

MODEL_HEADER = "rankforge-model"
MODEL_FORMAT_VERSION = 1
_HEADER_PATTERN = re.compile(rf"^{MODEL_HEADER} v(\d+)$")
_RESERVED_KEYS = ("feature_count", "model_shrink_rate", "tree_count", "tree_scales")


class ModelFormatError(RankForgeError):
    """Malformed or truncated model file."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class ModelVersionError(RankForgeError):
    """Model file written by an unsupported format version."""

    def __init__(self, found: int, supported: int = MODEL_FORMAT_VERSION):
        self.found = found
        self.supported = supported
        super().__init__(f"model format version {found} is not supported (this build reads version {supported})")


@dataclass(eq=False)
class ObliviousEnsemble:
    """
    Boosted oblivious trees. Trees already carry the learning rate; before
    each tree is added the running score is multiplied by
    1 - model_shrink_rate, so tree t of T ends up scaled by
    (1 - model_shrink_rate)^(T - 1 - t).
    """
    feature_count: int
    trees: list = field(default_factory=list)
    model_shrink_rate: float = 0.0
    bins: Optional[FeatureBins] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.model_shrink_rate < 1.0:
            raise ContractViolationError(f"model_shrink_rate must lie in [0, 1), got {self.model_shrink_rate}")
        for tree in self.trees:
            used = tree.features[tree.features >= 0]
            if np.any(used >= self.feature_count) or np.any(tree.features < -1):
                raise ContractViolationError("a tree references a feature outside the model")

    def __len__(self):
        return len(self.trees)

    @property
    def tree_scales(self) -> np.ndarray:
        exponents = np.arange(len(self.trees) - 1, -1, -1, dtype=np.float64)
        return (1.0 - self.model_shrink_rate) ** exponents

    def truncated(self, tree_count: int) -> "ObliviousEnsemble":
        return ObliviousEnsemble(self.feature_count, list(self.trees[:tree_count]), self.model_shrink_rate,
                                 self.bins, dict(self.metadata))

    def predict(self, features) -> np.ndarray:
        return predict(self, features)


def predict(model: ObliviousEnsemble, features: Union[np.ndarray, Dataset]) -> np.ndarray:
    if isinstance(features, Dataset):
        features = features.stacked_features()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.feature_count:
        raise ContractViolationError(
            f"model expects {model.feature_count} features, got matrix of shape {features.shape}"
        )
    keep = 1.0 - model.model_shrink_rate
    scores = np.zeros(features.shape[0])
    for tree in model.trees:
        scores = scores * keep + tree.predict(features)
    return scores


def _format_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def model_to_text(model: ObliviousEnsemble) -> str:
    lines = [f"{MODEL_HEADER} v{MODEL_FORMAT_VERSION}"]
    lines.append(f"feature_count={model.feature_count}")
    lines.append(f"model_shrink_rate={float(model.model_shrink_rate)!r}")
    lines.append(f"tree_count={len(model.trees)}")
    lines.append(f"tree_scales={_format_floats(model.tree_scales)}")
    for key, value in sorted(model.metadata.items()):
        if key in _RESERVED_KEYS or "\n" in str(value):
            continue
        lines.append(f"{key}={value}")
    if model.bins is not None:
        for feature, borders in enumerate(model.bins.borders):
            lines.append(f"bins {feature} {_format_floats(borders)}".rstrip())
    for tree in model.trees:
        lines.append(f"tree {tree.depth}")
        for feature, border in zip(tree.features, tree.borders):
            lines.append(f"split {int(feature)} {float(border)!r}")
        lines.append(f"leaves {_format_floats(tree.leaf_values)}")
    return "\n".join(lines) + "\n"


def _floats(tokens, line_number: int) -> list:
    try:
        return [float(token) for token in tokens]
    except ValueError:
        raise ModelFormatError(line_number, f"expected real numbers, got '{' '.join(tokens)}'")


def _integer(token: str, line_number: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ModelFormatError(line_number, f"invalid {what} '{token}'")


def model_from_text(text: str) -> ObliviousEnsemble:
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError(1, "empty model file")
    header = _HEADER_PATTERN.match(lines[0].strip())
    if header is None:
        raise ModelFormatError(1, f"expected '{MODEL_HEADER} v<version>' header")
    version = int(header.group(1))
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(version)

    metadata = {}
    bins = {}
    trees = []
    line_number = 1
    pending = None  # (depth, features, borders, line of the tree header)
    for line_number, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        tokens = rest.split()
        if pending is not None:
            depth, features, borders, _ = pending
            if len(features) < depth:
                if keyword != "split" or len(tokens) != 2:
                    raise ModelFormatError(line_number, f"expected 'split <feature> <border>', got '{line}'")
                features.append(_integer(tokens[0], line_number, "split feature"))
                borders.extend(_floats(tokens[1:], line_number))
                continue
            if keyword != "leaves":
                raise ModelFormatError(line_number, f"expected 'leaves' line, got '{line}'")
            values = _floats(tokens, line_number)
            if len(values) != 1 << depth:
                raise ModelFormatError(line_number, f"depth-{depth} tree needs {1 << depth} leaves, got {len(values)}")
            try:
                trees.append(ObliviousTree(np.array(features), np.array(borders), np.array(values)))
            except ContractViolationError as e:
                raise ModelFormatError(line_number, str(e))
            pending = None
            continue
        if keyword == "tree":
            if len(tokens) != 1:
                raise ModelFormatError(line_number, "expected 'tree <depth>'")
            pending = (_integer(tokens[0], line_number, "tree depth"), [], [], line_number)
        elif keyword == "bins":
            if not tokens:
                raise ModelFormatError(line_number, "expected 'bins <feature> <borders...>'")
            bins[_integer(tokens[0], line_number, "bins feature")] = _floats(tokens[1:], line_number)
        elif "=" in line and not trees:
            key, _, value = line.partition("=")
            metadata[key.strip()] = value.strip()
        else:
            raise ModelFormatError(line_number, f"unexpected line '{line}'")

    if pending is not None:
        raise ModelFormatError(pending[3], "truncated tree block")
    for key in ("feature_count", "model_shrink_rate", "tree_count"):
        if key not in metadata:
            raise ModelFormatError(line_number, f"missing metadata key '{key}'")
    feature_count = _integer(metadata.pop("feature_count"), line_number, "feature_count")
    tree_count = _integer(metadata.pop("tree_count"), line_number, "tree_count")
    shrink = _floats([metadata.pop("model_shrink_rate")], line_number)[0]
    metadata.pop("tree_scales", None)
    if len(trees) != tree_count:
        raise ModelFormatError(line_number, f"expected {tree_count} trees, found {len(trees)}")

    feature_bins = None
    if bins:
        if sorted(bins) != list(range(feature_count)):
            raise ModelFormatError(line_number, "bins lines must cover every feature exactly once")
        try:
            feature_bins = FeatureBins(tuple(bins[f] for f in range(feature_count)))
        except ContractViolationError as e:
            raise ModelFormatError(line_number, str(e))
    try:
        return ObliviousEnsemble(feature_count, trees, shrink, feature_bins, metadata)
    except ContractViolationError as e:
        raise ModelFormatError(line_number, str(e))


def save_model(model: ObliviousEnsemble, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_text(model), encoding="utf-8")
    logger.info("Saved model with %d trees to %s", len(model), path)


def load_model(path: Union[str, Path]) -> ObliviousEnsemble:
    path = Path(path)
    model = model_from_text(path.read_text(encoding="utf-8"))
    logger.info("Loaded model with %d trees from %s", len(model), path)
    return model

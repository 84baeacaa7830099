"""Learning to rank with frozen visual features and pairwise hinge training."""

from visrank.model import ArchitectureSpec, build_model, score
from visrank.ranker import QueryFeatureScaler, VisualRanker
from visrank.training import TrainConfig, enumerate_pairs, train
from visrank.visual import GridExtractor

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "GridExtractor",
    "QueryFeatureScaler",
    "TrainConfig",
    "VisualRanker",
    "build_model",
    "enumerate_pairs",
    "score",
    "train",
]

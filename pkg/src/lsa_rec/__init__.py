"""Long/short-term aspect interest recommender."""

from .config import TrainConfig
from .corpus import AspectVocabulary, DependencyTriple, RawReview
from .synth import SynthConfig

__all__ = ["TrainConfig", "SynthConfig", "RawReview", "DependencyTriple", "AspectVocabulary"]
__version__ = "0.1.0"

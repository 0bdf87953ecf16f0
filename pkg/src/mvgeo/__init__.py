"""Multiview geolocation: predict a user's region and coordinates from
text, interaction-graph, and posting-time features."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    PreprocessConfig,
    Tweet,
    TweetDocument,
    User,
    load_corpus,
    save_corpus,
    timestamp_feature,
    tokenize,
)
from .graph import UserGraph, WalkConfig, build_mention_graph  # noqa: F401
from .model import BranchSpec, Model, ModelSpec, TrainConfig  # noqa: F401
from .partition import Partition, assign_class  # noqa: F401
from .pipeline import PipelineConfig, load_config, run_pipeline  # noqa: F401
from .sgns import SgnsConfig  # noqa: F401
from .sphere import CellId, haversine_km, latlon_to_cell  # noqa: F401
from .synth import SynthSpec, generate_synthetic_corpus  # noqa: F401

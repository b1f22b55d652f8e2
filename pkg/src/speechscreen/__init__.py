"""Retrieval-based speech symptom screening.

Pools self-supervised speech features into fixed-size keys, stores them in
an exact nearest-neighbor datastore, and scores new recordings by the label
proportion among retrieved neighbors.  No model training is involved, so
examples can be added or removed at any time.
"""

__version__ = "0.1.0"

from .datastore import (
    SNAPSHOT_FORMAT_VERSION,
    Datastore,
    DatastoreEntry,
    FilteredSearch,
    SearchHit,
    build_from_manifest,
    temporal_mean,
)
from .errors import SpeechScreenError
from .evaluation import (
    EvalReport,
    confusion_at,
    evaluate_scores,
    roc_auc,
    roc_points,
    score_distribution,
)
from .inference import (
    AssessmentResult,
    Combine,
    InferenceConfig,
    Refinement,
    assess,
    assess_batch,
    covid19_config,
    coswara_config,
)
from .ingest import (
    FEATURE_FORMAT_VERSION,
    AgeGroup,
    Channel,
    FeatureSequence,
    SampleRecord,
    Sex,
    Split,
    load_manifest,
    read_feature_file,
    write_feature_file,
)
from .segmentation import (
    ClusterAssignment,
    SegmentCountSelection,
    derive_seed,
    kmeans,
    mean_silhouette,
    segment_features,
    select_n,
)

__all__ = [
    "__version__",
    "SNAPSHOT_FORMAT_VERSION",
    "FEATURE_FORMAT_VERSION",
    "SpeechScreenError",
    "AgeGroup",
    "Channel",
    "FeatureSequence",
    "SampleRecord",
    "Sex",
    "Split",
    "load_manifest",
    "read_feature_file",
    "write_feature_file",
    "Datastore",
    "DatastoreEntry",
    "FilteredSearch",
    "SearchHit",
    "build_from_manifest",
    "temporal_mean",
    "ClusterAssignment",
    "SegmentCountSelection",
    "derive_seed",
    "kmeans",
    "mean_silhouette",
    "segment_features",
    "select_n",
    "AssessmentResult",
    "Combine",
    "InferenceConfig",
    "Refinement",
    "assess",
    "assess_batch",
    "covid19_config",
    "coswara_config",
    "EvalReport",
    "confusion_at",
    "evaluate_scores",
    "roc_auc",
    "roc_points",
    "score_distribution",
]

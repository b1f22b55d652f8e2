"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field, field_validator


class HealthResponse(BaseModel):
    status: str
    version: str
    feature_format_version: int
    snapshot_format_version: int


class DatastoreInfo(BaseModel):
    name: str
    layer: int
    channel: str
    size: int
    dim: int | None


class DatastoreListResponse(BaseModel):
    datastores: list[DatastoreInfo]


class CreateDatastoreRequest(BaseModel):
    name: str = Field(min_length=1)
    layer: int = Field(ge=0)
    channel: str = "original"
    dim: int | None = Field(default=None, ge=1)


class LoadDatastoreRequest(BaseModel):
    """Load a snapshot from a path visible to the server."""

    name: str = Field(min_length=1)
    path: str


class BuildDatastoreRequest(BaseModel):
    """Build from a manifest path visible to the server."""

    name: str = Field(min_length=1)
    manifest_path: str
    features_root: str | None = None
    layer: int = Field(ge=0)
    channel: str = "original"
    split: str | None = "train"


class SaveDatastoreRequest(BaseModel):
    path: str


class StatsResponse(BaseModel):
    layer: int
    channel: str
    size: int
    dim: int | None
    labels: dict[str, int]
    age_groups: dict[str, int]
    sexes: dict[str, int]


class AddEntryRequest(BaseModel):
    """Add one entry, either from a pooled key or raw frames."""

    sample_id: str = Field(min_length=1)
    label: int = Field(ge=0, le=1)
    age_group: str = "unknown"
    sex: str = "unknown"
    key: list[float] | None = None
    frames: list[list[float]] | None = None

    @field_validator("frames")
    @classmethod
    def _rectangular(cls, value):
        if value is not None and len({len(row) for row in value}) > 1:
            raise ValueError("frames rows must all have the same length")
        return value


class AddEntryResponse(BaseModel):
    sample_id: str
    size: int


class RemoveEntryResponse(BaseModel):
    sample_id: str
    removed: bool
    size: int


class SearchRequest(BaseModel):
    query: list[float] = Field(min_length=1)
    k: int = Field(default=5, ge=1)
    age_group: str | None = None
    sex: str | None = None
    exclude_id: str | None = None


class HitModel(BaseModel):
    sample_id: str
    label: int
    age_group: str
    sex: str
    squared_l2_distance: float


class SearchResponse(BaseModel):
    hits: list[HitModel]
    prefilter_count: int


class ConfigModel(BaseModel):
    """Inference configuration; mirrors the CLI flags."""

    layers: list[int] = [3, 4, 5]
    n_per_layer: dict[int, int] = {3: 2, 4: 73, 5: 73}
    k: int = Field(default=5, ge=1)
    refinement: str = "none"
    segment: bool = True
    utterance: bool = True
    utterance_reversed: bool = True
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    exclude_self: bool = False
    combine: str = "pool"
    seed: int = 17


class AssessRequest(BaseModel):
    """Assess one recording from raw per-layer frame matrices.

    ``features`` maps "<layer>/<channel>" to a TxD frame matrix; ``stores``
    optionally maps the same keys to registry datastore names (by default
    the unique registered store for each layer and channel is used).
    """

    sample_id: str = Field(min_length=1)
    features: dict[str, list[list[float]]]
    age_group: str = "unknown"
    sex: str = "unknown"
    config: ConfigModel = ConfigModel()
    stores: dict[str, str] = {}


class LayerScoreModel(BaseModel):
    layer: int
    score: float
    total_labels: int


class AssessResponse(BaseModel):
    sample_id: str
    final_score: float
    decision: int
    layer_scores: list[LayerScoreModel]


class ErrorResponse(BaseModel):
    detail: str

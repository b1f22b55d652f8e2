"""FastAPI application exposing the datastore and assessment pipeline.

Datastores live in a named in-memory registry.  Snapshot load/save and
manifest builds read paths on the server's filesystem; entry-level add,
remove, search, and assessment move data over the wire.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..datastore import SNAPSHOT_FORMAT_VERSION, Datastore, build_from_manifest
from ..errors import SpeechScreenError
from ..inference import Combine, InferenceConfig, Refinement, assess
from ..ingest import (
    FEATURE_FORMAT_VERSION,
    AgeGroup,
    Channel,
    FeatureSequence,
    SampleRecord,
    Sex,
    Split,
    load_manifest,
)
from .schemas import (
    AddEntryRequest,
    AddEntryResponse,
    AssessRequest,
    AssessResponse,
    BuildDatastoreRequest,
    CreateDatastoreRequest,
    DatastoreInfo,
    DatastoreListResponse,
    HealthResponse,
    HitModel,
    LayerScoreModel,
    LoadDatastoreRequest,
    RemoveEntryResponse,
    SaveDatastoreRequest,
    SearchRequest,
    SearchResponse,
    StatsResponse,
)


class Registry:
    """Named datastore collection with thread-safe registration."""

    def __init__(self) -> None:
        self._stores: dict[str, Datastore] = {}
        self._lock = threading.Lock()

    def put(self, name: str, store: Datastore) -> None:
        with self._lock:
            if name in self._stores:
                raise HTTPException(409, f"datastore {name!r} already exists")
            self._stores[name] = store

    def get(self, name: str) -> Datastore:
        with self._lock:
            store = self._stores.get(name)
        if store is None:
            raise HTTPException(404, f"no datastore named {name!r}")
        return store

    def drop(self, name: str) -> None:
        with self._lock:
            if name not in self._stores:
                raise HTTPException(404, f"no datastore named {name!r}")
            del self._stores[name]

    def items(self) -> list[tuple[str, Datastore]]:
        with self._lock:
            return sorted(self._stores.items())

    def for_pair(self, layer: int, channel: Channel) -> Datastore:
        """The unique registered store for (layer, channel), else 404/409."""
        matches = [
            (name, s) for name, s in self.items()
            if s.layer == layer and s.channel == channel
        ]
        if not matches:
            raise HTTPException(
                404, f"no datastore registered for layer {layer}/{channel.value}"
            )
        if len(matches) > 1:
            names = [name for name, _ in matches]
            raise HTTPException(
                409,
                f"multiple datastores match layer {layer}/{channel.value}: {names}; "
                f"name one explicitly in the request's 'stores' mapping",
            )
        return matches[0][1]


def _parse_enum(enum_cls, value: str, what: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = [e.value for e in enum_cls]
        raise HTTPException(422, f"invalid {what} {value!r}; expected one of {allowed}")


def _parse_pair(key: str) -> tuple[int, Channel]:
    layer_text, sep, channel_text = key.partition("/")
    if not sep or not layer_text.isdigit():
        raise HTTPException(
            422, f"feature key {key!r} must look like '<layer>/<channel>'"
        )
    return int(layer_text), _parse_enum(Channel, channel_text, "channel")


def _info(name: str, store: Datastore) -> DatastoreInfo:
    return DatastoreInfo(
        name=name,
        layer=store.layer,
        channel=store.channel.value,
        size=store.size,
        dim=store.dim,
    )


def create_app(stores_dir: str | None = None) -> FastAPI:
    """Build the application, optionally preloading every snapshot in a directory."""
    app = FastAPI(title="speechscreen", version=__version__)
    registry = Registry()

    if stores_dir is not None:
        for file in sorted(Path(stores_dir).glob("*.npds")):
            registry.put(file.stem, Datastore.load(file))

    @app.exception_handler(SpeechScreenError)
    async def _domain_error(request, exc: SpeechScreenError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            version=__version__,
            feature_format_version=FEATURE_FORMAT_VERSION,
            snapshot_format_version=SNAPSHOT_FORMAT_VERSION,
        )

    @app.get("/datastores", response_model=DatastoreListResponse)
    def list_datastores() -> DatastoreListResponse:
        return DatastoreListResponse(
            datastores=[_info(name, store) for name, store in registry.items()]
        )

    @app.post("/datastores", response_model=DatastoreInfo, status_code=201)
    def create_datastore(req: CreateDatastoreRequest) -> DatastoreInfo:
        channel = _parse_enum(Channel, req.channel, "channel")
        registry.put(req.name, Datastore(req.layer, channel, dim=req.dim))
        return _info(req.name, registry.get(req.name))

    @app.post("/datastores/load", response_model=DatastoreInfo, status_code=201)
    def load_datastore(req: LoadDatastoreRequest) -> DatastoreInfo:
        store = Datastore.load(req.path)
        registry.put(req.name, store)
        return _info(req.name, store)

    @app.post("/datastores/build", response_model=DatastoreInfo, status_code=201)
    def build_datastore(req: BuildDatastoreRequest) -> DatastoreInfo:
        channel = _parse_enum(Channel, req.channel, "channel")
        split = None if req.split in (None, "all") else _parse_enum(Split, req.split, "split")
        records = load_manifest(req.manifest_path)
        root = req.features_root or str(Path(req.manifest_path).parent)
        store = build_from_manifest(records, root, req.layer, channel, split=split)
        registry.put(req.name, store)
        return _info(req.name, store)

    @app.get("/datastores/{name}/stats", response_model=StatsResponse)
    def datastore_stats(name: str) -> StatsResponse:
        return StatsResponse(**registry.get(name).stats())

    @app.delete("/datastores/{name}", status_code=204)
    def drop_datastore(name: str) -> None:
        registry.drop(name)

    @app.post("/datastores/{name}/save")
    def save_datastore(name: str, req: SaveDatastoreRequest) -> dict:
        registry.get(name).save(req.path)
        return {"saved": req.path}

    @app.post("/datastores/{name}/entries", response_model=AddEntryResponse)
    def add_entry(name: str, req: AddEntryRequest) -> AddEntryResponse:
        store = registry.get(name)
        if (req.key is None) == (req.frames is None):
            raise HTTPException(422, "provide exactly one of 'key' or 'frames'")
        record = SampleRecord(
            sample_id=req.sample_id,
            label=req.label,
            age_group=_parse_enum(AgeGroup, req.age_group, "age_group"),
            sex=_parse_enum(Sex, req.sex, "sex"),
        )
        if req.frames is not None:
            frames = np.asarray(req.frames, dtype=np.float32)
        else:
            # A pooled key is a one-frame sequence; temporal averaging keeps it as is.
            frames = np.asarray([req.key], dtype=np.float32)
        store.add(record, FeatureSequence(req.sample_id, store.layer, store.channel, frames))
        return AddEntryResponse(sample_id=req.sample_id, size=store.size)

    @app.delete("/datastores/{name}/entries/{sample_id}", response_model=RemoveEntryResponse)
    def remove_entry(name: str, sample_id: str) -> RemoveEntryResponse:
        store = registry.get(name)
        removed = store.remove(sample_id)
        return RemoveEntryResponse(sample_id=sample_id, removed=removed, size=store.size)

    @app.post("/datastores/{name}/search", response_model=SearchResponse)
    def search(name: str, req: SearchRequest) -> SearchResponse:
        store = registry.get(name)
        query = np.asarray(req.query, dtype=np.float32)
        age = None if req.age_group is None else _parse_enum(AgeGroup, req.age_group, "age_group")
        sex = None if req.sex is None else _parse_enum(Sex, req.sex, "sex")

        def predicate(entry) -> bool:
            if req.exclude_id is not None and entry.sample_id == req.exclude_id:
                return False
            if age is not None and entry.age_group != age:
                return False
            if sex is not None and entry.sex != sex:
                return False
            return True

        if req.exclude_id is None and age is None and sex is None:
            hits = store.search(query, req.k)
            prefilter = len(hits)
        else:
            filtered = store.search_filtered(query, req.k, predicate)
            hits = filtered.hits
            prefilter = filtered.prefilter_count
        return SearchResponse(
            hits=[
                HitModel(
                    sample_id=h.sample_id,
                    label=h.label,
                    age_group=h.age_group.value,
                    sex=h.sex.value,
                    squared_l2_distance=h.squared_l2_distance,
                )
                for h in hits
            ],
            prefilter_count=prefilter,
        )

    @app.post("/assess", response_model=AssessResponse)
    def assess_sample(req: AssessRequest) -> AssessResponse:
        try:
            config = InferenceConfig(
                layers=tuple(req.config.layers),
                n_per_layer=dict(req.config.n_per_layer),
                k=req.config.k,
                refinement=_parse_enum(Refinement, req.config.refinement, "refinement"),
                use_segment=req.config.segment,
                use_utterance=req.config.utterance,
                use_utterance_reversed=req.config.utterance_reversed,
                threshold=req.config.threshold,
                exclude_self=req.config.exclude_self,
                combine=_parse_enum(Combine, req.config.combine, "combine"),
                seed=req.config.seed,
            )
        except ValueError as exc:
            raise HTTPException(422, str(exc))

        features = {}
        for key, frames in req.features.items():
            layer, channel = _parse_pair(key)
            features[(layer, channel)] = FeatureSequence(
                req.sample_id, layer, channel, np.asarray(frames, dtype=np.float32)
            )
        explicit = {_parse_pair(key): name for key, name in req.stores.items()}
        stores = {}
        for pair in config.required_pairs():
            if pair in explicit:
                stores[pair] = registry.get(explicit[pair])
            else:
                stores[pair] = registry.for_pair(*pair)

        # Label is irrelevant for scoring; the record carries id and metadata.
        record = SampleRecord(
            sample_id=req.sample_id,
            label=0,
            age_group=_parse_enum(AgeGroup, req.age_group, "age_group"),
            sex=_parse_enum(Sex, req.sex, "sex"),
        )
        result = assess(record, features, stores, config)
        return AssessResponse(
            sample_id=result.sample_id,
            final_score=result.final_score,
            decision=result.decision,
            layer_scores=[
                LayerScoreModel(layer=s.layer, score=s.score, total_labels=s.total_labels)
                for s in result.layer_scores
            ],
        )

    return app

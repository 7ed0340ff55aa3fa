"""Request and response bodies for the HTTP API.

Paths in requests are resolved on the server's filesystem.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainOptions(Strict):
    lr: float = Field(0.01, gt=0)
    decay: float = 0.99
    eps: float = 1e-8
    patience: int = Field(20, ge=1)
    max_epochs: int = Field(500, ge=1)
    weight_decay: float = 0.0


class SynthRequest(Strict):
    family: Literal["chain", "sbm", "erdos_renyi", "circular_ladder", "nws", "star"]
    params: dict = Field(default_factory=dict)
    seed: int = 0
    out: str


class DatasetSummary(BaseModel):
    path: str
    n_nodes: int
    n_edges: int
    n_features: int
    n_classes: int


class CoarsenRequest(Strict):
    dataset: str
    ratio: float = Field(0.4, ge=0, lt=1)
    k: int = Field(10, ge=1)
    max_pass_reduction: float | None = Field(None, gt=0, le=1)
    out: str | None = None


class CoarsenResponse(BaseModel):
    path: str
    depth: int
    sizes: list[int]
    diagnostics: list[str]


class ModelOptions(Strict):
    dataset: str
    arch: Literal["sage", "appnp"] = "sage"
    layers: int = Field(1, ge=1, le=2)
    hidden: int | None = None
    dim: int = Field(16, ge=1)
    ratio: float = Field(0.4, ge=0, lt=1)
    k: int = Field(10, ge=1)
    max_pass_reduction: float | None = Field(None, gt=0, le=1)
    combine: Literal["mean", "weighted", "concat"] = "weighted"
    seed: int = 0
    train: TrainOptions = Field(default_factory=TrainOptions)


class TrainRequest(ModelOptions):
    out: str


class TrainResponse(BaseModel):
    checkpoint: str
    history: str
    epochs: int
    best_epoch: int
    depth: int
    coarsest_nodes: int


class EmbedRequest(Strict):
    dataset: str
    checkpoint: str
    partitioned: bool = False
    out: str


class EmbedResponse(BaseModel):
    files: list[str]
    depth: int
    dim: int


class EvaluateRequest(Strict):
    pred: str
    truth: str


class EvaluateResponse(BaseModel):
    macro_f1: float
    accuracy: float
    n: int


class ExperimentRequest(Strict):
    config: dict
    base_dir: str | None = None
    out: str


class ExperimentResponse(BaseModel):
    name: str
    kind: str
    rows: int
    metrics: str
    plotdata: str


class PartitionRequest(ModelOptions):
    out: str | None = None


class PartitionResponse(BaseModel):
    full: dict
    partitioned: dict
    report: dict
    report_path: str | None


class InductiveRequest(ModelOptions):
    holdout_frac: float = Field(0.1, gt=0, lt=1)
    holdouts: int = Field(10, ge=1)
    out: str | None = None


class InductiveResponse(BaseModel):
    trials: list[dict]
    transductive_mean: float
    inductive_mean: float
    transductive_std: float
    abs_gap: float
    results_path: str | None


class DmgrlRequest(Strict):
    dataset: str
    arch: Literal["sage", "appnp"] = "sage"
    dim: int = Field(16, ge=1)
    combine: Literal["mean", "weighted", "concat"] = "mean"
    include_features: bool = False
    bottom_partition: str | None = None
    seed: int = 0
    train: TrainOptions = Field(default_factory=TrainOptions)
    out: str | None = None


class DmgrlResponse(BaseModel):
    scores: dict
    report: dict
    frozen_subgraphs: list[list[int]]
    max_nodes_materialized: int
    report_path: str | None


class ErrorBody(BaseModel):
    error: str
    detail: str

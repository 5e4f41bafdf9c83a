"""Request/response models for the pipeline service.

The same models back the config file: a PipelineConfig section supplies
defaults for the matching request, and unknown keys are rejected
everywhere.
"""

from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SynthRequest(StrictModel):
    out: str
    spec: Union[str, dict[str, int]] = "6x100"
    image_size: int = 16
    seed: Optional[int] = None


class SynthResponse(StrictModel):
    path: str
    count: int
    image_size: int
    combos: list[str]
    label_histogram: list[int]


class FeaturesRequest(StrictModel):
    input: str = Field(description="XIM1 images or externally produced XFV1 features")
    out: str
    downsample: int = 4
    pca_dim: int = 256


class FeaturesResponse(StrictModel):
    path: str
    n: int
    d_in: int
    d_out: int
    clamped: bool


class ClusterRequest(StrictModel):
    features: str
    out: str
    k: int = 50
    init: str = "kmeanspp"
    restarts: int = 20
    max_iters: int = 300
    tol: float = 1e-10
    seed: Optional[int] = None
    images: Optional[str] = Field(default=None,
                                  description="XIM1 with truth labels for NMI/ARI")


class ClusterResponse(StrictModel):
    path: str
    k: int
    inertia: float
    sizes: list[int]
    nmi: Optional[float] = None
    ari: Optional[float] = None


class InspectRequest(StrictModel):
    images: str
    model: str
    out_dir: str
    max_per_cluster: int = 16


class ClusterInfo(StrictModel):
    id: int
    size: int
    sigma_mean: float
    montage: str


class InspectResponse(StrictModel):
    table: str
    clusters: list[ClusterInfo]


class TrainRequest(StrictModel):
    images: str
    model: str
    out_checkpoint: str
    metrics: str
    preset: str = "desk"
    cond_mode: str = "mu_sigma"
    seed: Optional[int] = None
    resume_from: Optional[str] = None
    total_steps: Optional[int] = None
    batch_size: Optional[int] = None
    n_critic: Optional[int] = None
    checkpoint_every: Optional[int] = None
    lr: Optional[float] = None
    base_width: Optional[int] = None
    image_size: Optional[int] = None
    lambda_cls: Optional[float] = None
    lambda_rec: Optional[float] = None
    lambda_lnt: Optional[float] = None
    lambda_gp: Optional[float] = None


class TrainResponse(StrictModel):
    checkpoint: str
    metrics: str
    steps: int
    config_hash: str
    final: dict[str, float]


class TranslateRequest(StrictModel):
    checkpoint: str
    images: str
    cluster: int
    out: str
    noise_seed: Optional[int] = None
    montage: Optional[str] = None


class TranslateResponse(StrictModel):
    path: str
    count: int
    cluster: int
    montage: Optional[str] = None


class ReportRequest(StrictModel):
    metrics: str
    out: str


class ReportResponse(StrictModel):
    path: str
    rows: int
    components: dict[str, dict[str, float]]


class SuiteResult(StrictModel):
    ok: bool
    detail: str


class SelftestResponse(StrictModel):
    ok: bool
    suites: dict[str, SuiteResult]


class ErrorBody(StrictModel):
    kind: str  # "validation" | "runtime"
    message: str


class HealthResponse(StrictModel):
    status: str
    version: str


class PipelineConfig(StrictModel):
    """Defaults file: per-stage sections merged under explicit CLI flags."""

    seed: Optional[int] = None
    synth: dict = Field(default_factory=dict)
    features: dict = Field(default_factory=dict)
    cluster: dict = Field(default_factory=dict)
    inspect_clusters: dict = Field(default_factory=dict)
    train: dict = Field(default_factory=dict)
    translate: dict = Field(default_factory=dict)
    report: dict = Field(default_factory=dict)

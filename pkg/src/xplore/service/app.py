"""FastAPI service exposing every pipeline stage.

Handlers are plain functions over pydantic models, so the CLI can invoke
them in-process (embedded mode) or over HTTP against `xplore serve`; both
paths share validation and error mapping. Stage work runs synchronously:
the service is a local pipeline engine, not a job queue.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..fileio import FormatError
from ..optim import NonFiniteGradError
from ..train import TrainingDiverged
from .schemas import (ClusterRequest, ClusterResponse, ErrorBody, FeaturesRequest,
                      FeaturesResponse, HealthResponse, InspectRequest,
                      InspectResponse, ReportRequest, ReportResponse,
                      SelftestResponse, SynthRequest, SynthResponse,
                      TrainRequest, TrainResponse, TranslateRequest,
                      TranslateResponse)

VALIDATION_ERRORS = (pipeline.PipelineValidationError, FormatError, ValueError,
                     FileNotFoundError)
RUNTIME_ERRORS = (TrainingDiverged, NonFiniteGradError, FloatingPointError)


def do_synth(req: SynthRequest) -> SynthResponse:
    return SynthResponse(**pipeline.synth_stage(
        out=req.out, spec=req.spec, image_size=req.image_size, seed=req.seed))


def do_features(req: FeaturesRequest) -> FeaturesResponse:
    return FeaturesResponse(**pipeline.features_stage(
        input_path=req.input, out=req.out, downsample=req.downsample,
        pca_dim=req.pca_dim))


def do_cluster(req: ClusterRequest) -> ClusterResponse:
    return ClusterResponse(**pipeline.cluster_stage(
        features=req.features, out=req.out, k=req.k, init=req.init,
        restarts=req.restarts, max_iters=req.max_iters, tol=req.tol,
        seed=req.seed, images=req.images))


def do_inspect(req: InspectRequest) -> InspectResponse:
    return InspectResponse(**pipeline.inspect_stage(
        images=req.images, model=req.model, out_dir=req.out_dir,
        max_per_cluster=req.max_per_cluster))


def do_train(req: TrainRequest) -> TrainResponse:
    overrides = {k: getattr(req, k) for k in (
        "total_steps", "batch_size", "n_critic", "checkpoint_every", "lr",
        "base_width", "image_size", "lambda_cls", "lambda_rec", "lambda_lnt",
        "lambda_gp")}
    return TrainResponse(**pipeline.train_stage(
        images=req.images, model=req.model, out_checkpoint=req.out_checkpoint,
        metrics=req.metrics, preset=req.preset, cond_mode=req.cond_mode,
        seed=req.seed, resume_from=req.resume_from, **overrides))


def do_translate(req: TranslateRequest) -> TranslateResponse:
    return TranslateResponse(**pipeline.translate_stage(
        checkpoint=req.checkpoint, images=req.images, cluster=req.cluster,
        out=req.out, noise_seed=req.noise_seed, montage=req.montage))


def do_report(req: ReportRequest) -> ReportResponse:
    return ReportResponse(**pipeline.report_stage(metrics=req.metrics, out=req.out))


def do_selftest() -> SelftestResponse:
    return SelftestResponse(**pipeline.selftest_stage())


def create_app() -> FastAPI:
    app = FastAPI(title="xplore pipeline service", version=__version__)

    @app.exception_handler(Exception)
    async def _handle(request, exc):
        if isinstance(exc, VALIDATION_ERRORS):
            body = ErrorBody(kind="validation", message=str(exc))
            return JSONResponse(status_code=422, content=body.model_dump())
        if isinstance(exc, RUNTIME_ERRORS):
            body = ErrorBody(kind="runtime", message=str(exc))
            return JSONResponse(status_code=500, content=body.model_dump())
        raise exc

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        return do_synth(req)

    @app.post("/v1/features", response_model=FeaturesResponse)
    def features(req: FeaturesRequest):
        return do_features(req)

    @app.post("/v1/cluster", response_model=ClusterResponse)
    def cluster(req: ClusterRequest):
        return do_cluster(req)

    @app.post("/v1/inspect-clusters", response_model=InspectResponse)
    def inspect_clusters(req: InspectRequest):
        return do_inspect(req)

    @app.post("/v1/train", response_model=TrainResponse)
    def train(req: TrainRequest):
        return do_train(req)

    @app.post("/v1/translate", response_model=TranslateResponse)
    def translate(req: TranslateRequest):
        return do_translate(req)

    @app.post("/v1/report", response_model=ReportResponse)
    def report(req: ReportRequest):
        return do_report(req)

    @app.post("/v1/selftest", response_model=SelftestResponse)
    def selftest():
        return do_selftest()

    return app

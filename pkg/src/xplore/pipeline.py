"""Stage functions behind both the service endpoints and the CLI.

Stages communicate only through the documented file formats, so any stage
can be replaced by an external producer (e.g. real CNN features written
as XFV1). Each function returns a JSON-able summary dict.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .cluster import ClusteringOptions, ClusterModel, clustering_metrics, kmeans_fit
from .data import (clamp_pca_dim, default_spec, extract_trivial_features, fit_pca,
                   generate_synthetic_dataset, l2_normalize_rows, parse_combo,
                   project_pca)
from .fileio import (FEATURE_MAGIC, IMAGE_MAGIC, read_cluster_model, read_features,
                     read_images, write_cluster_model, write_features, write_images)
from .losses import LossWeights
from .montage import emit_montage, square_grid
from .norm import CONDITION_MODES, condition_length
from .optim import AdamHyper
from .train import (TrainConfig, config_hash, desk_preset, load_train_state,
                    paper_preset, train, translate)
from .nets import NetConfig

METRICS_HEADER = ("step", "adv_d", "gp", "cls_real", "adv_g", "cls_fake", "rec",
                  "lnt", "total_d", "total_g")


class PipelineValidationError(ValueError):
    """Bad request or bad input artifact; maps to CLI exit 1 / HTTP 422."""


def resolve_seed(value) -> int:
    """XPLORE_SEED wins over any configured seed; default 0."""
    env = os.environ.get("XPLORE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise PipelineValidationError(f"XPLORE_SEED={env!r} is not an integer")
    return 0 if value is None else int(value)


def parse_spec(spec) -> dict:
    """Accept {"red-circle": 2, ...} or compact "6x100" / "name:count,..." text."""
    if isinstance(spec, dict):
        out = {str(k): int(v) for k, v in spec.items()}
    elif isinstance(spec, str):
        text = spec.strip()
        if "x" in text and ":" not in text:
            combos, _, per = text.partition("x")
            try:
                return default_spec(int(combos), int(per))
            except ValueError as e:
                raise PipelineValidationError(str(e))
        out = {}
        for part in text.split(","):
            name, _, count = part.strip().partition(":")
            if not count:
                raise PipelineValidationError(f"bad spec entry {part!r}; "
                                              "expected name:count")
            out[name] = int(count)
    else:
        raise PipelineValidationError(f"unsupported spec {spec!r}")
    for name in out:
        try:
            parse_combo(name)
        except ValueError as e:
            raise PipelineValidationError(str(e))
    return out


def _require_file(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise PipelineValidationError(f"{what} not found: {p}")
    return p


def _require_parent(path, what) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise PipelineValidationError(f"directory for {what} does not exist: {p.parent}")
    return p


def _magic_of(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


# -- stages -------------------------------------------------------------------

def synth_stage(out, spec="6x100", image_size: int = 16, seed=None) -> dict:
    out = _require_parent(out, "synth output")
    parsed = parse_spec(spec)
    try:
        images = generate_synthetic_dataset(parsed, image_size=image_size,
                                            seed=resolve_seed(seed))
    except ValueError as e:
        raise PipelineValidationError(str(e))
    write_images(out, images)
    hist = np.bincount(images.truth_labels, minlength=len(parsed)).tolist()
    return {"path": str(out), "count": images.count, "image_size": image_size,
            "combos": list(parsed), "label_histogram": hist}


def features_stage(input_path, out, downsample: int = 4, pca_dim: int = 256) -> dict:
    """Trivial extraction (XIM1 input) or passthrough (XFV1), then L2 + PCA."""
    input_path = _require_file(input_path, "feature-stage input")
    out = _require_parent(out, "feature output")
    magic = _magic_of(input_path)
    if magic == IMAGE_MAGIC:
        images = read_images(input_path)
        try:
            feats = extract_trivial_features(images, downsample=downsample)
        except ValueError as e:
            raise PipelineValidationError(str(e))
    elif magic == FEATURE_MAGIC:
        feats = read_features(input_path)
    else:
        raise PipelineValidationError(f"input {input_path} is neither XIM1 nor XFV1")
    d_in = feats.cols
    try:
        feats = l2_normalize_rows(feats)
        r = clamp_pca_dim(int(pca_dim), feats.rows, feats.cols)
        model = fit_pca(feats, r)
        reduced = project_pca(model, feats)
    except ValueError as e:
        raise PipelineValidationError(str(e))
    write_features(out, reduced)
    return {"path": str(out), "n": reduced.rows, "d_in": d_in, "d_out": reduced.cols,
            "clamped": r != int(pca_dim)}


def cluster_stage(features, out, k: int = 50, init: str = "kmeanspp",
                  restarts: int = 20, max_iters: int = 300, tol: float = 1e-10,
                  seed=None, images=None) -> dict:
    features_path = _require_file(features, "feature file")
    out = _require_parent(out, "cluster model output")
    feats = read_features(features_path)
    try:
        opts = ClusteringOptions(init=init, restarts=restarts, max_iters=max_iters,
                                 tol=tol, seed=resolve_seed(seed))
        model = kmeans_fit(feats, int(k), opts)
    except ValueError as e:
        raise PipelineValidationError(str(e))
    write_cluster_model(out, model)
    summary = {"path": str(out), "k": model.k, "inertia": model.inertia,
               "sizes": np.bincount(model.assignments, minlength=model.k).tolist()}
    if images is not None:
        truth = read_images(_require_file(images, "image file")).truth_labels
        if truth is not None:
            summary.update(clustering_metrics(model.assignments, truth))
    return summary


def inspect_stage(images, model, out_dir, max_per_cluster: int = 16) -> dict:
    """Per-cluster montages plus a text table of sizes and sigma magnitudes."""
    images_path = _require_file(images, "image file")
    model_path = _require_file(model, "cluster model")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    imgs = read_images(images_path)
    cm = read_cluster_model(model_path)
    if cm.assignments.shape[0] != imgs.count:
        raise PipelineValidationError(
            f"cluster model covers {cm.assignments.shape[0]} images, file has {imgs.count}")
    clusters = []
    lines = ["cluster\tsize\tmean_sigma\tmontage"]
    for j in range(cm.k):
        member_idx = np.where(cm.assignments == j)[0][:max_per_cluster]
        sigma_mean = float(np.mean(cm.stds[j]))
        montage_path = ""
        if member_idx.size:
            montage_path = str(out_dir / f"cluster_{j:03d}.ppm")
            emit_montage(imgs.pixels[member_idx], square_grid(member_idx.size),
                         montage_path)
        size = int(np.sum(cm.assignments == j))
        clusters.append({"id": j, "size": size, "sigma_mean": sigma_mean,
                         "montage": montage_path})
        lines.append(f"{j}\t{size}\t{sigma_mean:.6e}\t{montage_path}")
    table_path = out_dir / "clusters.tsv"
    table_path.write_text("\n".join(lines) + "\n")
    return {"table": str(table_path), "clusters": clusters}


def _build_configs(cm: ClusterModel, preset: str, cond_mode: str, seed,
                   overrides: dict):
    if cond_mode not in CONDITION_MODES:
        raise PipelineValidationError(f"unknown conditioning mode {cond_mode!r}")
    cond_len = condition_length(cond_mode, cm.k, cm.dim)
    if preset == "desk":
        net, cfg = desk_preset(k=cm.k, cond_len=cond_len, cond_mode=cond_mode,
                               seed=resolve_seed(seed))
    elif preset == "paper":
        net, cfg = paper_preset(k=cm.k, cond_len=cond_len, seed=resolve_seed(seed))
        cfg.cond_mode = cond_mode
    else:
        raise PipelineValidationError(f"unknown preset {preset!r}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("image_size", "base_width", "dtype"):
            setattr(net, key, value)
        elif key == "lr":
            cfg.adam = AdamHyper(lr=float(value), beta1=cfg.adam.beta1,
                                 beta2=cfg.adam.beta2, eps=cfg.adam.eps)
        elif key in ("lambda_cls", "lambda_rec", "lambda_lnt", "lambda_gp"):
            weights = cfg.weights.to_dict()
            weights[key] = float(value)
            cfg.weights = LossWeights(**weights)
        elif key in ("total_steps", "batch_size", "n_critic", "checkpoint_every"):
            setattr(cfg, key, int(value))
        else:
            raise PipelineValidationError(f"unknown train override {key!r}")
    try:
        net = NetConfig(**net.to_dict())
        cfg = TrainConfig.from_dict(cfg.to_dict())
    except ValueError as e:
        raise PipelineValidationError(str(e))
    return net, cfg


def train_stage(images, model, out_checkpoint, metrics, preset: str = "desk",
                cond_mode: str = "mu_sigma", seed=None, resume_from=None,
                **overrides) -> dict:
    images_path = _require_file(images, "image file")
    model_path = _require_file(model, "cluster model")
    out_checkpoint = _require_parent(out_checkpoint, "checkpoint")
    metrics = _require_parent(metrics, "metrics log")
    imgs = read_images(images_path)
    cm = read_cluster_model(model_path)
    net, cfg = _build_configs(cm, preset, cond_mode, seed, overrides)
    if resume_from is not None:
        resume_from = _require_file(resume_from, "resume checkpoint")
    try:
        state, lines = train(imgs, cm, net, cfg, checkpoint_path=out_checkpoint,
                             metrics_path=metrics, resume_from=resume_from)
    except ValueError as e:
        raise PipelineValidationError(str(e))
    final = {}
    if lines:
        last = lines[-1].split("\t")
        final = {name: float(v) for name, v in zip(METRICS_HEADER[1:], last[1:])}
    return {"checkpoint": str(out_checkpoint), "metrics": str(metrics),
            "steps": state.step, "config_hash": config_hash(net, cfg),
            "final": final}


def translate_stage(checkpoint, images, cluster: int, out, noise_seed=None,
                    montage=None) -> dict:
    checkpoint = _require_file(checkpoint, "checkpoint")
    images_path = _require_file(images, "image file")
    out = _require_parent(out, "translated output")
    imgs = read_images(images_path)
    state = load_train_state(checkpoint)
    try:
        result = translate(state, imgs, int(cluster),
                           noise_mode="off" if noise_seed is None else int(noise_seed))
    except ValueError as e:
        raise PipelineValidationError(str(e))
    write_images(out, result)
    summary = {"path": str(out), "count": result.count, "cluster": int(cluster)}
    if montage is not None:
        montage = _require_parent(montage, "montage")
        n = min(result.count, 64)
        emit_montage(result.pixels[:n], square_grid(n), montage)
        summary["montage"] = str(montage)
    return summary


def report_stage(metrics, out) -> dict:
    """Digest a metrics log into first/last/min/max per component."""
    metrics_path = _require_file(metrics, "metrics log")
    out = _require_parent(out, "report")
    rows = []
    for line in Path(metrics_path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(METRICS_HEADER):
            raise PipelineValidationError(
                f"metrics line has {len(parts)} fields, expected {len(METRICS_HEADER)}")
        rows.append([float(v) for v in parts])
    if not rows:
        raise PipelineValidationError("metrics log is empty")
    arr = np.asarray(rows)
    lines = [f"steps: {int(arr[0, 0])}..{int(arr[-1, 0])} ({arr.shape[0]} rows)"]
    components = {}
    for i, name in enumerate(METRICS_HEADER[1:], start=1):
        col = arr[:, i]
        components[name] = {"first": float(col[0]), "last": float(col[-1]),
                            "min": float(col.min()), "max": float(col.max())}
        lines.append(f"{name:>9}: first {col[0]:+.4e}  last {col[-1]:+.4e}  "
                     f"min {col.min():+.4e}  max {col.max():+.4e}")
    Path(out).write_text("\n".join(lines) + "\n")
    return {"path": str(out), "rows": arr.shape[0], "components": components}


def selftest_stage() -> dict:
    from .selftest import run_selftest

    suites = run_selftest()
    return {"ok": all(ok for ok, _ in suites.values()),
            "suites": {name: {"ok": ok, "detail": detail}
                       for name, (ok, detail) in suites.items()}}

"""Two-stage training orchestration and inference-time translation.

Consumes a fitted cluster model (pseudo-labels plus per-cluster stats),
alternates critic and generator updates, and serializes resumable
checkpoints. Fixed seed plus single-threaded batch preparation gives
bit-reproducible metrics logs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cluster import ClusterModel
from .data import ImageSet
from .fileio import ConfigMismatchError, canonical_json, read_checkpoint, write_checkpoint
from .losses import (LossReport, LossWeights, adversarial_losses, cls_loss_fake,
                     cls_loss_real, cycle_reconstruction_loss, latent_loss)
from .nets import (DiscriminatorBundle, GeneratorBundle, NetConfig,
                   build_discriminator, build_generator, discriminator_forward,
                   generator_forward)
from .norm import build_condition_batch, condition_length
from .optim import AdamHyper, AdamState, adam_update
from .tensor import Tensor

METRICS_COLUMNS = ("step", "adv_d", "gp", "cls_real", "adv_g", "cls_fake",
                   "rec", "lnt", "total_d", "total_g")


class TrainingDiverged(RuntimeError):
    """A loss component went non-finite; aborting beats silent corruption."""


@dataclass
class TrainConfig:
    batch_size: int = 8
    total_steps: int = 200
    n_critic: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    adam: AdamHyper = field(default_factory=AdamHyper)
    cond_mode: str = "mu_sigma"
    seed: int = 0
    checkpoint_every: int = 0  # 0: only the final checkpoint
    preset: str = "desk"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")

    def to_dict(self):
        return {
            "batch_size": self.batch_size, "total_steps": self.total_steps,
            "n_critic": self.n_critic, "weights": self.weights.to_dict(),
            "adam": {"lr": self.adam.lr, "beta1": self.adam.beta1,
                     "beta2": self.adam.beta2, "eps": self.adam.eps},
            "cond_mode": self.cond_mode, "seed": self.seed,
            "checkpoint_every": self.checkpoint_every, "preset": self.preset,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["weights"] = LossWeights(**d["weights"])
        d["adam"] = AdamHyper(**d["adam"])
        return cls(**d)


def desk_preset(k: int, image_size: int = 16, cond_mode: str = "mu_sigma",
                cond_len: int = 4, seed: int = 0, total_steps: int = 800,
                n_critic: int = 2, lr: float = 1e-3):
    """CPU-feasible configuration pair (NetConfig, TrainConfig)."""
    net = NetConfig(channels=3, image_size=image_size, base_width=16, k=k,
                    cond_len=cond_len, mlp_depth=3, mlp_hidden=64,
                    dtype="float32")
    cfg = TrainConfig(batch_size=8, total_steps=total_steps, n_critic=n_critic,
                      adam=AdamHyper(lr=lr), seed=seed, cond_mode=cond_mode,
                      preset="desk")
    return net, cfg


def paper_preset(k: int = 50, cond_len: int = 512, seed: int = 0,
                 total_steps: int = 200000):
    """Published training setting: batch 32, Adam(1e-4, 0.5, 0.999)."""
    from .nets import paper_scale_config

    net = paper_scale_config(k=k)
    net.cond_len = cond_len
    cfg = TrainConfig(batch_size=32, total_steps=total_steps, n_critic=5,
                      adam=AdamHyper(lr=1e-4, beta1=0.5, beta2=0.999),
                      seed=seed, preset="paper")
    return net, cfg


def config_hash(net_cfg: NetConfig, train_cfg: TrainConfig) -> str:
    """Architecture/optimizer identity; total_steps and cadence excluded so a
    resumed run may extend the step budget."""
    t = train_cfg.to_dict()
    t.pop("total_steps")
    t.pop("checkpoint_every")
    return hashlib.sha256(canonical_json({"net": net_cfg.to_dict(), "train": t})).hexdigest()


@dataclass
class TrainState:
    net_cfg: NetConfig
    train_cfg: TrainConfig
    g: GeneratorBundle
    d: DiscriminatorBundle
    opt_g: AdamState
    opt_d: AdamState
    rng: np.random.Generator
    cluster_mu: np.ndarray
    cluster_sigma: np.ndarray
    step: int = 0
    running: dict = field(default_factory=dict)

    def g_params(self):
        return self.g.parameters()

    def d_params(self):
        return self.d.parameters()


def init_state(net_cfg: NetConfig, train_cfg: TrainConfig,
               cluster_model: ClusterModel) -> TrainState:
    expected = condition_length(train_cfg.cond_mode, cluster_model.k, cluster_model.dim)
    if net_cfg.cond_len != expected:
        raise ValueError(f"net cond_len {net_cfg.cond_len} does not match mode "
                         f"{train_cfg.cond_mode!r} with k={cluster_model.k}, "
                         f"r={cluster_model.dim} (expected {expected})")
    if net_cfg.k != cluster_model.k:
        raise ValueError(f"net k={net_cfg.k} != cluster model k={cluster_model.k}")
    master = np.random.default_rng(train_cfg.seed)
    g = build_generator(net_cfg, seed=int(master.integers(2 ** 31)))
    d = build_discriminator(net_cfg, seed=int(master.integers(2 ** 31)))
    rng = np.random.default_rng(int(master.integers(2 ** 31)))
    return TrainState(
        net_cfg=net_cfg, train_cfg=train_cfg, g=g, d=d,
        opt_g=AdamState.for_params(g.parameters()),
        opt_d=AdamState.for_params(d.parameters()),
        rng=rng,
        cluster_mu=cluster_model.centroids.copy(),
        cluster_sigma=cluster_model.stds.copy(),
    )


def _cluster_view(state: TrainState) -> ClusterModel:
    """Stats-only view used for building condition vectors."""
    k = state.cluster_mu.shape[0]
    return ClusterModel(centroids=state.cluster_mu, stds=state.cluster_sigma,
                        assignments=np.zeros(k, dtype=np.int64), inertia=0.0,
                        check=False)


def sample_batch(images: ImageSet, pseudo_labels, cluster_model, batch: int,
                 rng, cond_mode: str = "mu_sigma") -> dict:
    """Uniform image draw plus uniform target clusters, with condition rows."""
    labels = np.asarray(pseudo_labels)
    n = images.count
    if labels.shape[0] != n or np.any(labels < 0):
        raise ValueError("every image needs a pseudo-label from the clustering stage")
    k = cluster_model.k
    if labels.max(initial=0) >= k:
        raise ValueError("pseudo-label outside cluster range")
    idx = rng.integers(0, n, size=batch)
    k_src = labels[idx]
    k_tgt = rng.integers(0, k, size=batch)
    return {
        "x": images.pixels[idx].copy(),
        "k_src": k_src.astype(np.int64),
        "cond_src": build_condition_batch(cluster_model, k_src, cond_mode),
        "k_tgt": k_tgt.astype(np.int64),
        "cond_target": build_condition_batch(cluster_model, k_tgt, cond_mode),
        "indices": idx,
    }


def _check_finite(name: str, value: float, step: int) -> float:
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss component {name!r} at step {step}")
    return float(value)


def train_step(state: TrainState, batches, config: TrainConfig | None = None):
    """n_critic critic updates followed by one generator update.

    `batches` is a sample_batch dict or a list of them; the last one feeds
    the generator update. Returns (state, LossReport).
    """
    config = config or state.train_cfg
    if isinstance(batches, dict):
        batches = [batches]
    if len(batches) < config.n_critic:
        batches = batches * config.n_critic
    w = config.weights
    dt = state.net_cfg.np_dtype
    report = LossReport()

    for b in batches[:config.n_critic]:
        x = Tensor(np.ascontiguousarray(b["x"], dtype=dt))
        cond_tgt = np.ascontiguousarray(b["cond_target"], dtype=dt)
        with T.no_grad():
            fake, _ = generator_forward(state.g, x, cond_tgt,
                                        noise_mode=state.rng, update_sn=True)
        fake = fake.detach()
        adv = adversarial_losses(state.d, x, fake, lambda_gp=w.lambda_gp,
                                 rng=state.rng)
        _, cls_logits = discriminator_forward(state.d, x)
        cls_real = cls_loss_real(cls_logits, b["k_src"])
        l_d = T.add(adv["d_loss_part"], T.mul_scalar(cls_real, w.lambda_cls))
        report.adv_d = _check_finite("adv_d", adv["adv_value"].item(), state.step)
        report.gp = _check_finite("gp", adv["gp_value"].item(), state.step)
        report.cls_real = _check_finite("cls_real", cls_real.item(), state.step)
        report.total_d = _check_finite("total_d", l_d.item(), state.step)
        params = state.d_params()
        grads = T.grad_of(l_d, params)
        adam_update(params, grads, state.opt_d, config.adam)

    b = batches[config.n_critic - 1]
    x = Tensor(np.ascontiguousarray(b["x"], dtype=dt))
    cond_tgt = np.ascontiguousarray(b["cond_target"], dtype=dt)
    cond_src = np.ascontiguousarray(b["cond_src"], dtype=dt)
    fake, h_x = generator_forward(state.g, x, cond_tgt,
                                  noise_mode=state.rng, update_sn=True)
    adv_map, cls_logits_fake = discriminator_forward(state.d, fake)
    n = adv_map.data.shape[0]
    adv_g = T.neg(T.mean(adv_map))
    cls_fake = cls_loss_fake(cls_logits_fake, b["k_tgt"])
    x_cyc, h_fake = generator_forward(state.g, fake, cond_src,
                                      noise_mode=state.rng, update_sn=True)
    rec = cycle_reconstruction_loss(x, x_cyc)
    lnt = latent_loss(h_x, h_fake)
    l_g = adv_g + w.lambda_cls * cls_fake + w.lambda_rec * rec + w.lambda_lnt * lnt
    report.adv_g = _check_finite("adv_g", adv_g.item(), state.step)
    report.cls_fake = _check_finite("cls_fake", cls_fake.item(), state.step)
    report.rec = _check_finite("rec", rec.item(), state.step)
    report.lnt = _check_finite("lnt", lnt.item(), state.step)
    report.total_g = _check_finite("total_g", l_g.item(), state.step)
    params = state.g_params()
    grads = T.grad_of(l_g, params)
    adam_update(params, grads, state.opt_g, config.adam)

    state.step += 1
    for name in ("rec", "cls_real", "total_g"):
        prev = state.running.get(name, getattr(report, name))
        state.running[name] = 0.9 * prev + 0.1 * getattr(report, name)
    return state, report


def format_metrics_line(step: int, report: LossReport) -> str:
    vals = "\t".join(f"{v:.10e}" for v in report.values())
    return f"{step}\t{vals}"


def train(images: ImageSet, cluster_model: ClusterModel, net_cfg: NetConfig,
          train_cfg: TrainConfig, checkpoint_path=None, metrics_path=None,
          resume_from=None, progress=None):
    """Run the full loop; returns (state, metrics_lines).

    With `resume_from`, the loaded state continues to train_cfg.total_steps
    and must match the current configuration hash.
    """
    if images.count == 0:
        raise ValueError("empty dataset")
    if cluster_model.k < 2:
        raise ValueError("need k >= 2 clusters to translate between")
    if resume_from is not None:
        state = load_train_state(resume_from, expected_hash=config_hash(net_cfg, train_cfg))
        state.train_cfg.total_steps = train_cfg.total_steps
    else:
        state = init_state(net_cfg, train_cfg, cluster_model)
    pseudo = cluster_model.assignments
    lines = []
    mfh = open(metrics_path, "w") if metrics_path else None
    try:
        while state.step < train_cfg.total_steps:
            batches = [sample_batch(images, pseudo, cluster_model,
                                    train_cfg.batch_size, state.rng,
                                    train_cfg.cond_mode)
                       for _ in range(train_cfg.n_critic)]
            state, report = train_step(state, batches, train_cfg)
            line = format_metrics_line(state.step, report)
            lines.append(line)
            if mfh:
                mfh.write(line + "\n")
                mfh.flush()
            if progress:
                progress(state.step, report)
            if (checkpoint_path and train_cfg.checkpoint_every
                    and state.step % train_cfg.checkpoint_every == 0
                    and state.step < train_cfg.total_steps):
                save_train_state(checkpoint_path, state)
    finally:
        if mfh:
            mfh.close()
    if checkpoint_path:
        save_train_state(checkpoint_path, state)
    return state, lines


# -- checkpointing -------------------------------------------------------------

def _state_tensors(state: TrainState) -> dict:
    tensors = {}
    named_g = state.g.named_parameters()
    named_d = state.d.named_parameters()
    for name, p in named_g + named_d:
        tensors[name] = p.data
    for (name, p), m, v in zip(named_g, state.opt_g.m, state.opt_g.v):
        tensors[f"opt_g.m.{name}"] = m
        tensors[f"opt_g.v.{name}"] = v
    for (name, p), m, v in zip(named_d, state.opt_d.m, state.opt_d.v):
        tensors[f"opt_d.m.{name}"] = m
        tensors[f"opt_d.v.{name}"] = v
    for name, u in state.g.sn_states():
        tensors[name] = u
    tensors["cluster.mu"] = state.cluster_mu
    tensors["cluster.sigma"] = state.cluster_sigma
    return tensors


def save_train_state(path, state: TrainState) -> None:
    header = {
        "config_hash": config_hash(state.net_cfg, state.train_cfg),
        "net": state.net_cfg.to_dict(),
        "train": state.train_cfg.to_dict(),
        "step": state.step,
        "opt_g_t": state.opt_g.t,
        "opt_d_t": state.opt_d.t,
        "rng": state.rng.bit_generator.state,
    }
    write_checkpoint(path, header, _state_tensors(state))


def load_train_state(path, expected_hash: str | None = None) -> TrainState:
    header, tensors = read_checkpoint(path)
    if expected_hash is not None and header["config_hash"] != expected_hash:
        raise ConfigMismatchError(
            "checkpoint was written with a different configuration "
            f"({header['config_hash'][:12]}... != {expected_hash[:12]}...)")
    net_cfg = NetConfig(**header["net"])
    train_cfg = TrainConfig.from_dict(header["train"])
    dt = net_cfg.np_dtype
    master = np.random.default_rng(train_cfg.seed)
    g = build_generator(net_cfg, seed=int(master.integers(2 ** 31)))
    d = build_discriminator(net_cfg, seed=int(master.integers(2 ** 31)))
    rng = np.random.default_rng(int(master.integers(2 ** 31)))
    rng.bit_generator.state = header["rng"]

    named_g = g.named_parameters()
    named_d = d.named_parameters()
    opt_g = AdamState.for_params([p for _, p in named_g])
    opt_d = AdamState.for_params([p for _, p in named_d])
    try:
        for name, p in named_g + named_d:
            p.data = np.ascontiguousarray(tensors[name], dtype=dt).reshape(p.data.shape)
        for i, (name, _) in enumerate(named_g):
            opt_g.m[i] = np.ascontiguousarray(tensors[f"opt_g.m.{name}"], dtype=dt)
            opt_g.v[i] = np.ascontiguousarray(tensors[f"opt_g.v.{name}"], dtype=dt)
        for i, (name, _) in enumerate(named_d):
            opt_d.m[i] = np.ascontiguousarray(tensors[f"opt_d.m.{name}"], dtype=dt)
            opt_d.v[i] = np.ascontiguousarray(tensors[f"opt_d.v.{name}"], dtype=dt)
        for name, u in g.sn_states():
            u[...] = tensors[name].astype(u.dtype)
        cluster_mu = tensors["cluster.mu"].astype(np.float64)
        cluster_sigma = tensors["cluster.sigma"].astype(np.float64)
    except KeyError as e:
        raise ConfigMismatchError(f"checkpoint is missing tensor {e}") from None
    opt_g.t = int(header["opt_g_t"])
    opt_d.t = int(header["opt_d_t"])
    return TrainState(net_cfg=net_cfg, train_cfg=train_cfg, g=g, d=d,
                      opt_g=opt_g, opt_d=opt_d, rng=rng,
                      cluster_mu=cluster_mu, cluster_sigma=cluster_sigma,
                      step=int(header["step"]))


def checkpoint_io(path, mode: str, state: TrainState | None = None):
    """File-level entry point: mode 'write' stores `state`, 'read' loads one."""
    if mode == "write":
        if state is None:
            raise ValueError("checkpoint_io: write needs a state")
        save_train_state(path, state)
        return None
    if mode == "read":
        return load_train_state(path)
    raise ValueError(f"checkpoint_io: unknown mode {mode!r}")


def translate(state_or_path, images: ImageSet, target_cluster: int,
              cond_mode: str | None = None, noise_mode="off",
              batch: int = 64) -> ImageSet:
    """Translate every image toward one target cluster's attribute."""
    state = state_or_path
    if not isinstance(state, TrainState):
        state = load_train_state(state_or_path)
    k = state.cluster_mu.shape[0]
    if not 0 <= int(target_cluster) < k:
        raise ValueError(f"cluster {target_cluster} out of range [0, {k})")
    mode = state.train_cfg.cond_mode
    if cond_mode is not None and cond_mode != mode:
        raise ValueError(f"checkpoint was trained with conditioning {mode!r}, "
                         f"cannot translate with {cond_mode!r}")
    cond = build_condition_batch(_cluster_view(state), [int(target_cluster)], mode)[0]
    dt = state.net_cfg.np_dtype
    rng = None if noise_mode in (None, "off") else np.random.default_rng(int(noise_mode))
    outs = []
    with T.no_grad():
        for start in range(0, images.count, batch):
            x = np.ascontiguousarray(images.pixels[start:start + batch], dtype=dt)
            y, _ = generator_forward(state.g, Tensor(x),
                                     np.ascontiguousarray(cond, dtype=dt),
                                     noise_mode=rng, update_sn=False)
            outs.append(y.data.astype(np.float32))
    return ImageSet(pixels=np.concatenate(outs, axis=0))

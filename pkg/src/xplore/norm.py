"""Attribute Summary Instance Normalization and its comparison baselines.

ASIN normalizes each feature-map channel by its own spatial statistics,
then applies an affine transform predicted by a perceptron from *cluster*
statistics. The affine parameters therefore summarize a whole group of
images; plain IN learns them, and AdaIN takes them from a single style
image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cluster import ClusterModel
from .tensor import Tensor

CONDITION_MODES = ("mu_sigma", "mu_only", "label_embed")


@dataclass
class ConditionVector:
    """Conditioning input for one target cluster."""

    mode: str
    values: np.ndarray
    source_cluster: int

    def __post_init__(self):
        if self.mode not in CONDITION_MODES:
            raise ValueError(f"unknown conditioning mode {self.mode!r}")
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("condition vector contains non-finite values")


def condition_length(mode: str, k: int, r: int) -> int:
    if mode == "mu_sigma":
        return 2 * r
    if mode == "mu_only":
        return r
    if mode == "label_embed":
        return k
    raise ValueError(f"unknown conditioning mode {mode!r}")


def build_condition(model: ClusterModel, cluster_id: int, mode: str = "mu_sigma") -> ConditionVector:
    """Condition on (centroid, std), centroid only, or the one-hot pseudo-label."""
    if not 0 <= cluster_id < model.k:
        raise ValueError(f"cluster {cluster_id} out of range [0, {model.k})")
    if mode == "mu_sigma":
        values = np.concatenate([model.centroids[cluster_id], model.stds[cluster_id]])
    elif mode == "mu_only":
        values = model.centroids[cluster_id]
    elif mode == "label_embed":
        values = np.eye(model.k)[cluster_id]
    else:
        raise ValueError(f"unknown conditioning mode {mode!r}")
    return ConditionVector(mode=mode, values=values, source_cluster=cluster_id)


def build_condition_batch(model: ClusterModel, cluster_ids, mode: str = "mu_sigma") -> np.ndarray:
    return np.stack([build_condition(model, int(c), mode).values for c in cluster_ids])


@dataclass
class ConditioningMLP:
    """Shared trunk with one output head per normalization site.

    Each head emits 2*C values for its site: the first C are the per-channel
    scale, the last C the shift. Head weights start at zero with bias
    (1, ..., 1, 0, ..., 0) so every site begins as identity scaling.
    """

    trunk: list = field(default_factory=list)  # [(w, b)] with relu between
    heads: list = field(default_factory=list)  # [(w, b)] one per site
    site_channels: list = field(default_factory=list)

    @property
    def input_dim(self):
        return self.trunk[0][0].data.shape[0] if self.trunk else self.heads[0][0].data.shape[0]

    @property
    def n_sites(self):
        return len(self.heads)

    def parameters(self):
        out = []
        for w, b in self.trunk:
            out.extend([w, b])
        for w, b in self.heads:
            out.extend([w, b])
        return out

    def named_parameters(self, prefix="mlp"):
        out = []
        for i, (w, b) in enumerate(self.trunk):
            out.extend([(f"{prefix}.trunk{i}.w", w), (f"{prefix}.trunk{i}.b", b)])
        for i, (w, b) in enumerate(self.heads):
            out.extend([(f"{prefix}.head{i}.w", w), (f"{prefix}.head{i}.b", b)])
        return out


def build_conditioning_mlp(cond_len: int, site_channels, depth: int = 7,
                           hidden: int = 256, seed: int = 0,
                           dtype=np.float64) -> ConditioningMLP:
    """`depth` counts linear layers along any input-to-site path (>= 2)."""
    if depth < 2:
        raise ValueError("conditioning MLP needs depth >= 2")
    if cond_len < 1 or hidden < 1 or not site_channels:
        raise ValueError("invalid conditioning MLP configuration")
    rng = np.random.default_rng(seed)
    trunk = []
    din = cond_len
    for _ in range(depth - 1):
        std = np.sqrt(2.0 / din)
        w = Tensor(rng.normal(0.0, std, size=(din, hidden)).astype(dtype), requires_grad=True)
        b = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
        trunk.append((w, b))
        din = hidden
    heads = []
    for c in site_channels:
        w = Tensor(np.zeros((din, 2 * c), dtype=dtype), requires_grad=True)
        b = Tensor(np.concatenate([np.ones(c), np.zeros(c)]).astype(dtype), requires_grad=True)
        heads.append((w, b))
    return ConditioningMLP(trunk=trunk, heads=heads, site_channels=list(site_channels))


def _cond_to_tensor(cond, batch: int, dtype) -> Tensor:
    if isinstance(cond, ConditionVector):
        arr = cond.values
    elif isinstance(cond, Tensor):
        return cond
    else:
        arr = np.asarray(cond, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("condition values contain non-finite entries")
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (batch, arr.shape[0]))
    return Tensor(np.ascontiguousarray(arr, dtype=dtype))


def mlp_affine(mlp: ConditioningMLP, cond: Tensor, site: int = 0):
    """(scale, shift) halves of the site head, each (N, C_site)."""
    h = cond
    for w, b in mlp.trunk:
        h = T.relu(T.dense(h, w, b))
    w, b = mlp.heads[site]
    out = T.dense(h, w, b)
    c = mlp.site_channels[site]
    scale = T.slice_(out, (slice(None), slice(0, c)))
    shift = T.slice_(out, (slice(None), slice(c, 2 * c)))
    return scale, shift


def asin_apply(x, cond, mlp: ConditioningMLP, eps: float = 1e-5, site: int = 0) -> Tensor:
    """Instance-normalize x, then scale/shift with the perceptron's output.

    The affine parameters depend only on (cond, mlp); the content enters
    only through its own normalization.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if mlp.site_channels[site] != x.data.shape[1]:
        raise T.ShapeError(f"asin_apply: site {site} expects "
                           f"{mlp.site_channels[site]} channels, input has "
                           f"{x.data.shape[1]}")
    cond_t = _cond_to_tensor(cond, x.data.shape[0], x.data.dtype)
    if cond_t.data.shape[1] != mlp.input_dim:
        raise T.ShapeError(f"asin_apply: condition length {cond_t.data.shape[1]} "
                           f"!= mlp input {mlp.input_dim}")
    xn = T.spatial_normalize(x, eps)
    scale, shift = mlp_affine(mlp, cond_t, site)
    return T.affine_per_channel(xn, scale, shift)


def adain_apply(content, style, eps: float = 1e-5) -> Tensor:
    """Classic adaptive IN: style's per-channel spatial stats as the affine."""
    content = content if isinstance(content, Tensor) else Tensor(content)
    style = style if isinstance(style, Tensor) else Tensor(style)
    if content.data.shape[1] != style.data.shape[1]:
        raise T.ShapeError(f"adain_apply: channel mismatch {content.data.shape} vs "
                           f"{style.data.shape}")
    m = T.mean(style, axis=(2, 3), keepdims=True)
    var = T.mean(T.pow_const(T.sub(style, m), 2.0), axis=(2, 3), keepdims=True)
    std = T.sqrt(T.add_scalar(var, eps))
    xn = T.spatial_normalize(content, eps)
    return T.add(T.mul(xn, std), m)


def in_apply(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Instance normalization with learned per-channel affine."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    gamma = gamma if isinstance(gamma, Tensor) else Tensor(gamma)
    beta = beta if isinstance(beta, Tensor) else Tensor(beta)
    return T.affine_per_channel(T.spatial_normalize(x, eps), gamma, beta)

"""Scalar training objectives: classification, cycle, latent, adversarial.

All functions return graph tensors so the harness can compose and
differentiate them; the gradient penalty builds a differentiable gradient
internally (second-order path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nets import DiscriminatorBundle, discriminator_forward
from .tensor import Tensor


@dataclass
class LossWeights:
    lambda_cls: float = 1.0
    lambda_rec: float = 10.0
    lambda_lnt: float = 10.0
    lambda_gp: float = 10.0

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_rec", "lambda_lnt", "lambda_gp"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            setattr(self, name, v)

    def to_dict(self):
        return {"lambda_cls": self.lambda_cls, "lambda_rec": self.lambda_rec,
                "lambda_lnt": self.lambda_lnt, "lambda_gp": self.lambda_gp}


@dataclass
class LossReport:
    adv_d: float = 0.0      # E[D(real)] - E[D(fake)] seen by the critic
    gp: float = 0.0
    cls_real: float = 0.0
    adv_g: float = 0.0      # -E[D(fake)] seen by the generator
    cls_fake: float = 0.0
    rec: float = 0.0
    lnt: float = 0.0
    total_d: float = 0.0
    total_g: float = 0.0

    FIELDS = ("adv_d", "gp", "cls_real", "adv_g", "cls_fake", "rec", "lnt",
              "total_d", "total_g")

    def values(self):
        return [getattr(self, f) for f in self.FIELDS]


def cls_loss_real(cls_logits, targets) -> Tensor:
    """Mean -log softmax probability of each real image's own cluster."""
    return T.softmax_xent(cls_logits, targets)


def cls_loss_fake(cls_logits_of_fake, targets) -> Tensor:
    """Same functional form, applied to logits of translated images."""
    return T.softmax_xent(cls_logits_of_fake, targets)


def cycle_reconstruction_loss(x, x_cycled) -> Tensor:
    """Mean absolute error between an input and its round-trip translation."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_cycled = x_cycled if isinstance(x_cycled, Tensor) else Tensor(x_cycled)
    return T.l1_mean(x, x_cycled)


def latent_loss(h_x, h_fake) -> Tensor:
    """Batch-mean Euclidean distance between encoder features (not squared)."""
    h_x = h_x if isinstance(h_x, Tensor) else Tensor(h_x)
    h_fake = h_fake if isinstance(h_fake, Tensor) else Tensor(h_fake)
    return T.l2_norm_mean(h_x, h_fake)


def _adv_fn(d_or_fn):
    """Per-sample critic scores (N,): mean of the patch map for a bundle."""
    if isinstance(d_or_fn, DiscriminatorBundle):
        def fn(x):
            adv_map, _ = discriminator_forward(d_or_fn, x)
            n = adv_map.data.shape[0]
            flat = T.reshape(adv_map, (n, int(np.prod(adv_map.data.shape[1:]))))
            return T.mean(flat, axis=1)
        return fn
    return d_or_fn


def gradient_penalty(d_adv, x_real, x_fake, rng) -> Tensor:
    """E[(||grad_xhat D(xhat)||_2 - 1)^2] on per-pair uniform interpolates.

    `d_adv` maps a batch tensor to per-sample scores. Inputs are detached;
    the returned scalar carries a second-order graph through the critic's
    parameters.
    """
    fn = _adv_fn(d_adv)
    xr = x_real.data if isinstance(x_real, Tensor) else np.asarray(x_real)
    xf = x_fake.data if isinstance(x_fake, Tensor) else np.asarray(x_fake)
    if xr.shape != xf.shape:
        raise T.ShapeError(f"gradient_penalty: shapes {xr.shape} vs {xf.shape}")
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    u = rng.uniform(size=xr.shape[0]).astype(xr.dtype)
    u_b = u.reshape((-1,) + (1,) * (xr.ndim - 1))
    x_hat = Tensor(u_b * xr + (1.0 - u_b) * xf, requires_grad=True)
    scores = fn(x_hat)
    if not np.all(np.isfinite(scores.data)):
        raise FloatingPointError("gradient_penalty: non-finite critic scores")
    grad = T.grad_of(T.tsum(scores), [x_hat], create_graph=True)[0]
    flat = T.reshape(grad, (xr.shape[0], int(np.prod(xr.shape[1:]))))
    norms = T.sqrt(T.tsum(T.pow_const(flat, 2.0), axis=1))
    return T.mean(T.pow_const(T.add_scalar(norms, -1.0), 2.0))


def adversarial_losses(d_adv, x_real, x_fake, lambda_gp: float = 10.0, rng=0) -> dict:
    """Wasserstein pieces: critic gap, gradient penalty, and both loss parts.

    `x_fake` is used as given: pass a detached tensor for critic updates,
    a graph-connected one for generator updates.
    """
    fn = _adv_fn(d_adv)
    x_real = x_real if isinstance(x_real, Tensor) else Tensor(x_real)
    x_fake = x_fake if isinstance(x_fake, Tensor) else Tensor(x_fake)
    score_real = T.mean(fn(x_real))
    score_fake = T.mean(fn(x_fake))
    for name, s in (("real", score_real), ("fake", score_fake)):
        if not np.isfinite(s.data):
            raise FloatingPointError(f"adversarial_losses: non-finite critic output on {name}")
    adv_value = T.sub(score_real, score_fake)
    gp_value = gradient_penalty(fn, x_real.detach(), x_fake.detach(), rng)
    d_loss_part = T.add(T.neg(adv_value), T.mul_scalar(gp_value, lambda_gp))
    g_loss_part = T.neg(score_fake)
    return {"adv_value": adv_value, "gp_value": gp_value,
            "d_loss_part": d_loss_part, "g_loss_part": g_loss_part}


def total_objectives(components: dict, weights: LossWeights):
    """Compose (L_D, L_G); works on floats and on graph tensors alike.

    L_D = -adv_value + lambda_gp*gp + lambda_cls*cls_real
    L_G = adv_g + lambda_cls*cls_fake + lambda_rec*rec + lambda_lnt*lnt
    where adv_g = -E[D(fake)]; both totals are minimized.
    """
    c = components
    l_d = -1.0 * c["adv_value"] + weights.lambda_gp * c["gp"] \
        + weights.lambda_cls * c["cls_real"]
    l_g = c["adv_g"] + weights.lambda_cls * c["cls_fake"] \
        + weights.lambda_rec * c["rec"] + weights.lambda_lnt * c["lnt"]
    return l_d, l_g

"""Generator and discriminator assemblies for the translation stage.

Generator: encoder of two stride-2 downsampling convs plus six residual
blocks (spectrally normalized), decoder of six ASIN residual blocks with
per-channel noise injection, then two transposed convs back to image size.
Discriminator: PatchGAN conv stack with an adversarial patch map and a
global cluster-classification head; no normalization layers (the gradient
penalty assumes a per-sample critic).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .norm import ConditioningMLP, asin_apply, build_conditioning_mlp, in_apply, _cond_to_tensor
from .tensor import Tensor


@dataclass
class NetConfig:
    channels: int = 3
    image_size: int = 16
    base_width: int = 16
    n_down: int = 2
    n_res_enc: int = 6
    n_res_dec: int = 6
    k: int = 2
    cond_len: int = 4
    mlp_depth: int = 3
    mlp_hidden: int = 64
    noise_init: float = 0.0
    sn_power_iters: int = 1
    dtype: str = "float64"

    def __post_init__(self):
        if self.image_size % (2 ** self.n_down):
            raise ValueError(f"image_size {self.image_size} not divisible by "
                             f"2^{self.n_down}")
        if min(self.channels, self.base_width, self.k, self.cond_len) < 1:
            raise ValueError("channels, base_width, k and cond_len must be positive")
        if self.image_size < 2 ** (self.n_down + 1):
            raise ValueError("image_size too small for the downsampling stack")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def bottleneck_width(self):
        return self.base_width * (2 ** self.n_down)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def paper_scale_config(k: int = 50) -> NetConfig:
    """Full-scale preset mirroring the published training setting."""
    return NetConfig(channels=3, image_size=256, base_width=64, n_down=2,
                     n_res_enc=6, n_res_dec=6, k=k, cond_len=512,
                     mlp_depth=7, mlp_hidden=256, dtype="float32")


@dataclass
class Conv:
    w: Tensor
    b: Tensor
    stride: int = 1
    pad: int = 1


@dataclass
class Affine:
    gamma: Tensor
    beta: Tensor


@dataclass
class EncBlock:
    conv1: Conv
    norm1: Affine
    conv2: Conv
    norm2: Affine
    sn_u1: np.ndarray = None
    sn_u2: np.ndarray = None


@dataclass
class DecBlock:
    conv1: Conv
    noise1: Tensor
    conv2: Conv
    noise2: Tensor


@dataclass
class UpLayer:
    conv: Conv  # transposed
    norm: Affine
    noise: Tensor


@dataclass
class GeneratorBundle:
    cfg: NetConfig
    conv_in: Conv = None
    norm_in: Affine = None
    downs: list = field(default_factory=list)
    enc_blocks: list = field(default_factory=list)
    dec_blocks: list = field(default_factory=list)
    ups: list = field(default_factory=list)
    conv_out: Conv = None
    mlp: ConditioningMLP = None

    def named_parameters(self):
        out = [("g.conv_in.w", self.conv_in.w), ("g.conv_in.b", self.conv_in.b),
               ("g.norm_in.gamma", self.norm_in.gamma), ("g.norm_in.beta", self.norm_in.beta)]
        for i, (conv, norm) in enumerate(self.downs):
            out += [(f"g.down{i}.w", conv.w), (f"g.down{i}.b", conv.b),
                    (f"g.down{i}.gamma", norm.gamma), (f"g.down{i}.beta", norm.beta)]
        for i, blk in enumerate(self.enc_blocks):
            out += [(f"g.enc{i}.conv1.w", blk.conv1.w), (f"g.enc{i}.conv1.b", blk.conv1.b),
                    (f"g.enc{i}.norm1.gamma", blk.norm1.gamma), (f"g.enc{i}.norm1.beta", blk.norm1.beta),
                    (f"g.enc{i}.conv2.w", blk.conv2.w), (f"g.enc{i}.conv2.b", blk.conv2.b),
                    (f"g.enc{i}.norm2.gamma", blk.norm2.gamma), (f"g.enc{i}.norm2.beta", blk.norm2.beta)]
        for i, blk in enumerate(self.dec_blocks):
            out += [(f"g.dec{i}.conv1.w", blk.conv1.w), (f"g.dec{i}.conv1.b", blk.conv1.b),
                    (f"g.dec{i}.noise1", blk.noise1),
                    (f"g.dec{i}.conv2.w", blk.conv2.w), (f"g.dec{i}.conv2.b", blk.conv2.b),
                    (f"g.dec{i}.noise2", blk.noise2)]
        for i, up in enumerate(self.ups):
            out += [(f"g.up{i}.w", up.conv.w), (f"g.up{i}.b", up.conv.b),
                    (f"g.up{i}.gamma", up.norm.gamma), (f"g.up{i}.beta", up.norm.beta),
                    (f"g.up{i}.noise", up.noise)]
        out += [("g.conv_out.w", self.conv_out.w), ("g.conv_out.b", self.conv_out.b)]
        out += self.mlp.named_parameters("g.mlp")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def sn_states(self):
        out = []
        for i, blk in enumerate(self.enc_blocks):
            out += [(f"g.enc{i}.sn_u1", blk.sn_u1), (f"g.enc{i}.sn_u2", blk.sn_u2)]
        return out


@dataclass
class DiscriminatorBundle:
    cfg: NetConfig
    convs: list = field(default_factory=list)
    adv_head: Conv = None
    cls_w: Tensor = None
    cls_b: Tensor = None

    def named_parameters(self):
        out = []
        for i, conv in enumerate(self.convs):
            out += [(f"d.conv{i}.w", conv.w), (f"d.conv{i}.b", conv.b)]
        out += [("d.adv.w", self.adv_head.w), ("d.adv.b", self.adv_head.b),
                ("d.cls.w", self.cls_w), ("d.cls.b", self.cls_b)]
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def _he_conv(rng, cout, cin, kh, kw, dtype):
    std = np.sqrt(2.0 / (cin * kh * kw))
    w = Tensor(rng.normal(0.0, std, size=(cout, cin, kh, kw)).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
    return w, b


def _affine(c, dtype):
    return Affine(gamma=Tensor(np.ones(c, dtype=dtype), requires_grad=True),
                  beta=Tensor(np.zeros(c, dtype=dtype), requires_grad=True))


def build_generator(cfg: NetConfig, seed: int = 0) -> GeneratorBundle:
    """He-initialized generator; noise scales start at zero."""
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    g = GeneratorBundle(cfg=cfg)

    w, b = _he_conv(rng, cfg.base_width, cfg.channels, 3, 3, dt)
    g.conv_in = Conv(w, b, stride=1, pad=1)
    g.norm_in = _affine(cfg.base_width, dt)

    width = cfg.base_width
    for _ in range(cfg.n_down):
        w, b = _he_conv(rng, width * 2, width, 4, 4, dt)
        g.downs.append((Conv(w, b, stride=2, pad=1), _affine(width * 2, dt)))
        width *= 2

    for _ in range(cfg.n_res_enc):
        w1, b1 = _he_conv(rng, width, width, 3, 3, dt)
        w2, b2 = _he_conv(rng, width, width, 3, 3, dt)
        # u kept in the net dtype so checkpoints round-trip bit-exactly
        g.enc_blocks.append(EncBlock(
            conv1=Conv(w1, b1), norm1=_affine(width, dt),
            conv2=Conv(w2, b2), norm2=_affine(width, dt),
            sn_u1=rng.normal(size=width).astype(dt),
            sn_u2=rng.normal(size=width).astype(dt),
        ))

    site_channels = []
    for _ in range(cfg.n_res_dec):
        w1, b1 = _he_conv(rng, width, width, 3, 3, dt)
        w2, b2 = _he_conv(rng, width, width, 3, 3, dt)
        g.dec_blocks.append(DecBlock(
            conv1=Conv(w1, b1),
            noise1=Tensor(np.full(width, cfg.noise_init, dtype=dt), requires_grad=True),
            conv2=Conv(w2, b2),
            noise2=Tensor(np.full(width, cfg.noise_init, dtype=dt), requires_grad=True),
        ))
        site_channels += [width, width]

    for _ in range(cfg.n_down):
        # transposed conv kernel is (Cin, Cout, kh, kw)
        std = np.sqrt(2.0 / (width * 4 * 4))
        w = Tensor(rng.normal(0.0, std, size=(width, width // 2, 4, 4)).astype(dt),
                   requires_grad=True)
        g.ups.append(UpLayer(
            conv=Conv(w, Tensor(np.zeros(width // 2, dtype=dt), requires_grad=True),
                      stride=2, pad=1),
            norm=_affine(width // 2, dt),
            noise=Tensor(np.full(width // 2, cfg.noise_init, dtype=dt), requires_grad=True),
        ))
        width //= 2

    w, b = _he_conv(rng, cfg.channels, width, 3, 3, dt)
    g.conv_out = Conv(w, b, stride=1, pad=1)

    g.mlp = build_conditioning_mlp(cfg.cond_len, site_channels, depth=cfg.mlp_depth,
                                   hidden=cfg.mlp_hidden,
                                   seed=int(rng.integers(2 ** 31)), dtype=dt)
    return g


def discriminator_depth(image_size: int) -> int:
    """Stride-2 layers until the patch map reaches 2x2."""
    return int(np.log2(image_size)) - 1


def build_discriminator(cfg: NetConfig, seed: int = 0) -> DiscriminatorBundle:
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    d = DiscriminatorBundle(cfg=cfg)
    depth = discriminator_depth(cfg.image_size)
    cin = cfg.channels
    width = cfg.base_width
    for i in range(depth):
        w, b = _he_conv(rng, width, cin, 4, 4, dt)
        d.convs.append(Conv(w, b, stride=2, pad=1))
        cin = width
        if i < depth - 1:
            width = min(width * 2, cfg.base_width * 8)
    w, b = _he_conv(rng, 1, cin, 3, 3, dt)
    d.adv_head = Conv(w, b, stride=1, pad=1)
    std = np.sqrt(2.0 / cin)
    d.cls_w = Tensor(rng.normal(0.0, std, size=(cin, cfg.k)).astype(dt), requires_grad=True)
    d.cls_b = Tensor(np.zeros(cfg.k, dtype=dt), requires_grad=True)
    return d


def spectral_normalize(w: Tensor, power_iters: int, u: np.ndarray, update_u: bool = True):
    """Divide a weight by its power-iteration largest singular value.

    Kernels are flattened to (out, rest). `u` is persistent state, updated
    in place when `update_u`; the returned tensor keeps the graph through
    both the numerator and the sigma estimate.
    """
    if power_iters < 1:
        raise ValueError("power_iters must be >= 1")
    out_dim = w.data.shape[0]
    w2 = w.data.reshape(out_dim, -1)
    if not np.any(w2):
        warnings.warn("spectral_normalize: zero weight left unchanged")
        return w, u
    uu = u.astype(np.float64, copy=True)
    for _ in range(power_iters):
        v = w2.T @ uu
        v /= max(np.linalg.norm(v), 1e-12)
        uu = w2 @ v
        uu /= max(np.linalg.norm(uu), 1e-12)
    if update_u:
        u[...] = uu
    wmat = T.reshape(w, (out_dim, w2.shape[1]))
    sigma = T.matmul(T.matmul(Tensor(uu[None, :].astype(w.data.dtype)), wmat),
                     Tensor(v[:, None].astype(w.data.dtype)))
    inv = T.pow_const(T.reshape(sigma, ()), -1.0)
    return T.mul(w, T.broadcast_to(T.reshape(inv, (1, 1, 1, 1) if w.data.ndim == 4 else (1, 1)),
                                   w.data.shape)), u


def _apply_conv(x, conv: Conv):
    return T.conv2d(x, conv.w, conv.b, stride=conv.stride, pad=conv.pad)


def _apply_noise(x, scale: Tensor, rng):
    if rng is None:
        return x
    noise = Tensor(rng.standard_normal(x.data.shape).astype(x.data.dtype))
    c = scale.data.shape[0]
    return T.add(x, T.mul(noise, T.reshape(scale, (1, c, 1, 1))))


def _noise_rng(noise_mode):
    if noise_mode is None or noise_mode == "off":
        return None
    if isinstance(noise_mode, np.random.Generator):
        return noise_mode
    return np.random.default_rng(int(noise_mode))


def encoder_forward(g: GeneratorBundle, x, update_sn: bool = False) -> Tensor:
    """Content features h(x); independent of any conditioning."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.shape[1:] != (g.cfg.channels, g.cfg.image_size, g.cfg.image_size):
        raise T.ShapeError(f"generator input {x.data.shape} does not match config "
                           f"({g.cfg.channels}, {g.cfg.image_size}, {g.cfg.image_size})")
    t = T.relu(in_apply(_apply_conv(x, g.conv_in), g.norm_in.gamma, g.norm_in.beta))
    for conv, norm in g.downs:
        t = T.relu(in_apply(_apply_conv(t, conv), norm.gamma, norm.beta))
    for blk in g.enc_blocks:
        w1, _ = spectral_normalize(blk.conv1.w, g.cfg.sn_power_iters, blk.sn_u1, update_sn)
        h = T.conv2d(t, w1, blk.conv1.b, stride=1, pad=1)
        h = T.relu(in_apply(h, blk.norm1.gamma, blk.norm1.beta))
        w2, _ = spectral_normalize(blk.conv2.w, g.cfg.sn_power_iters, blk.sn_u2, update_sn)
        h = T.conv2d(h, w2, blk.conv2.b, stride=1, pad=1)
        h = in_apply(h, blk.norm2.gamma, blk.norm2.beta)
        t = T.add(t, h)
    return t


def decoder_forward(g: GeneratorBundle, h: Tensor, cond, noise_mode="off") -> Tensor:
    rng = _noise_rng(noise_mode)
    cond_t = _cond_to_tensor(cond, h.data.shape[0], h.data.dtype)
    t = h
    for i, blk in enumerate(g.dec_blocks):
        a = _apply_noise(_apply_conv(t, blk.conv1), blk.noise1, rng)
        a = T.relu(asin_apply(a, cond_t, g.mlp, site=2 * i))
        a = _apply_noise(_apply_conv(a, blk.conv2), blk.noise2, rng)
        a = asin_apply(a, cond_t, g.mlp, site=2 * i + 1)
        t = T.add(t, a)
    for up in g.ups:
        t = T.conv_transpose2d(t, up.conv.w, up.conv.b, stride=up.conv.stride,
                               pad=up.conv.pad)
        t = _apply_noise(t, up.noise, rng)
        t = T.relu(in_apply(t, up.norm.gamma, up.norm.beta))
    return T.tanh(_apply_conv(t, g.conv_out))


def generator_forward(g: GeneratorBundle, x, cond, noise_mode="off",
                      update_sn: bool = False):
    """Translate x under `cond`; returns (image in [-1,1], encoder features)."""
    h = encoder_forward(g, x, update_sn=update_sn)
    y = decoder_forward(g, h, cond, noise_mode=noise_mode)
    return y, h


def discriminator_forward(d: DiscriminatorBundle, x):
    """Returns (adversarial patch map (N,1,h,w), cluster logits (N,k))."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.shape[1:] != (d.cfg.channels, d.cfg.image_size, d.cfg.image_size):
        raise T.ShapeError(f"discriminator input {x.data.shape} does not match config "
                           f"({d.cfg.channels}, {d.cfg.image_size}, {d.cfg.image_size})")
    t = x
    for conv in d.convs:
        t = T.leaky_relu(_apply_conv(t, conv), 0.01)
    adv = _apply_conv(t, d.adv_head)
    pooled = T.mean(t, axis=(2, 3))
    logits = T.dense(pooled, d.cls_w, d.cls_b)
    return adv, logits

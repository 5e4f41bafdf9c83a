"""Quick invariant suites across every module, callable without pytest.

Each suite returns (ok, detail); the CLI `selftest` subcommand exits 0 iff
all pass. These are smoke-depth versions of the full test suite.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import tensor as T
from .cluster import ClusteringOptions, brute_force_kmeans, kmeans_fit
from .data import FeatureMatrix, ImageSet, fit_pca, l2_normalize_rows
from .fileio import read_features, read_images, write_features, write_images
from .gradcheck import finite_diff_grad_check
from .losses import LossWeights, gradient_penalty, total_objectives
from .norm import asin_apply, build_conditioning_mlp
from .nets import spectral_normalize
from .optim import AdamHyper, AdamState, adam_update
from .tensor import Tensor


def _suite_tensor_ops():
    rng = np.random.default_rng(11)
    checks = [
        ("dense", lambda ins: T.mean(T.tanh(T.dense(ins[0], ins[1], ins[2]))),
         [(3, 4), (4, 5), (5,)]),
        ("conv2d", lambda ins: T.mean(T.tanh(T.conv2d(ins[0], ins[1], None, stride=1, pad=1))),
         [(2, 2, 4, 4), (3, 2, 3, 3)]),
        ("conv_transpose2d",
         lambda ins: T.mean(T.tanh(T.conv_transpose2d(ins[0], ins[1], None, stride=2, pad=1))),
         [(1, 2, 3, 3), (2, 2, 4, 4)]),
        ("instance_stats", lambda ins: T.mean(T.mul(*T.instance_stats(ins[0]))),
         [(2, 3, 4, 4)]),
    ]
    worst = 0.0
    for name, fn, shapes in checks:
        ins = [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]
        rep = finite_diff_grad_check(fn, ins, tol=1e-5)
        worst = max(worst, rep.max_rel_error)
        if not rep.passed:
            return False, f"{name}: {rep}"
    return True, f"max rel error {worst:.2e}"


def _suite_adam():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_update([p], [np.array([1.0, 1.0])], state, AdamHyper(lr=0.25))
    delta = p.data - np.array([1.0, -2.0])
    if not np.allclose(delta, -0.25, atol=1e-6 * 0.25):
        return False, f"first-step delta {delta}"
    return True, "first step = -lr"


def _suite_kmeans():
    rng = np.random.default_rng(5)
    hits, total = 0, 10
    for i in range(total):
        n, d, k = int(rng.integers(4, 9)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        x = rng.normal(size=(n, d))
        fit = kmeans_fit(x, k, ClusteringOptions(restarts=20, seed=i))
        oracle = brute_force_kmeans(x, k)
        if fit.inertia < oracle.inertia - 1e-9:
            return False, f"inertia below global optimum on instance {i}"
        hits += fit.inertia <= oracle.inertia + 1e-9
    if hits < 8:
        return False, f"restart search hit the optimum on only {hits}/{total}"
    return True, f"optimum reached on {hits}/{total} instances"


def _suite_features():
    rng = np.random.default_rng(7)
    fm = FeatureMatrix(rng.normal(size=(12, 6)))
    once = l2_normalize_rows(fm)
    twice = l2_normalize_rows(once)
    if np.max(np.abs(once.values - twice.values)) > 1e-12:
        return False, "l2 normalization not idempotent"
    pca = fit_pca(fm, 4)
    gram = pca.components.T @ pca.components
    if np.max(np.abs(gram - np.eye(4))) > 1e-6:
        return False, "PCA components not orthonormal"
    return True, "normalization idempotent, PCA orthonormal"


def _suite_asin():
    rng = np.random.default_rng(3)
    mlp = build_conditioning_mlp(4, [3], depth=3, hidden=16, seed=1)
    x = Tensor(rng.normal(size=(2, 3, 5, 5)))
    cond = rng.normal(size=4)
    out = asin_apply(x, cond, mlp)
    out2 = asin_apply(Tensor(x.data * 2.0 + 0.3), cond, mlp)
    if np.max(np.abs(out.data - out2.data)) > 1e-4:
        return False, "content affine invariance violated"
    return True, "affine invariance holds"


def _suite_spectral():
    rng = np.random.default_rng(9)
    w = Tensor(rng.normal(size=(8, 8)), requires_grad=True)
    u = rng.normal(size=8)
    wn, _ = spectral_normalize(w, 30, u)
    sigma = np.linalg.svd(wn.data, compute_uv=False)[0]
    if abs(sigma - 1.0) > 1e-3:
        return False, f"normalized spectral norm {sigma}"
    return True, f"spectral norm {sigma:.6f}"


def _suite_gradient_penalty():
    rng = np.random.default_rng(13)
    d = 12
    w_unit = Tensor(np.full((d, 1), 1.0 / np.sqrt(d)))
    w_two = Tensor(np.full((d, 1), 2.0 / np.sqrt(d)))

    def critic(w):
        return lambda x: T.reshape(T.matmul(T.reshape(x, (x.data.shape[0], d)), w),
                                   (x.data.shape[0],))

    xr, xf = rng.normal(size=(4, d)), rng.normal(size=(4, d))
    gp0 = gradient_penalty(critic(w_unit), xr, xf, np.random.default_rng(0)).item()
    gp1 = gradient_penalty(critic(w_two), xr, xf, np.random.default_rng(0)).item()
    if abs(gp0) > 1e-10 or abs(gp1 - 1.0) > 1e-10:
        return False, f"gp values {gp0}, {gp1}"
    return True, "unit-slope 0, slope-2 1"


def _suite_losses():
    comp = {"adv_value": 1.0, "gp": 0.1, "cls_real": 0.5, "adv_g": -0.2,
            "cls_fake": 0.3, "rec": 0.4, "lnt": 0.6}
    l_d, l_g = total_objectives(comp, LossWeights())
    if abs(l_d - (-1.0 + 1.0 + 0.5)) > 1e-12:
        return False, f"L_D composition {l_d}"
    l_d2, _ = total_objectives(comp, LossWeights(lambda_gp=20.0))
    if abs((l_d2 - l_d) - 0.1 * 10.0) > 1e-12:
        return False, "not linear in lambda_gp"
    return True, "compositions linear in weights"


def _suite_formats():
    rng = np.random.default_rng(17)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        fm = FeatureMatrix(rng.normal(size=(5, 4)).astype(np.float32).astype(np.float64))
        write_features(tmp / "f.xfv", fm)
        back = read_features(tmp / "f.xfv")
        if not np.array_equal(back.values, fm.values):
            return False, "feature round trip not bit-exact"
        imgs = ImageSet(np.clip(rng.normal(size=(3, 3, 8, 8)), -1, 1).astype(np.float32),
                        truth_labels=np.array([0, 1, 1]))
        write_images(tmp / "i.xim", imgs)
        back_i = read_images(tmp / "i.xim")
        if not np.array_equal(back_i.pixels, imgs.pixels):
            return False, "image round trip not bit-exact"
    return True, "round trips bit-exact"


SUITES = {
    "tensor_ops": _suite_tensor_ops,
    "adam": _suite_adam,
    "kmeans": _suite_kmeans,
    "features": _suite_features,
    "asin": _suite_asin,
    "spectral_norm": _suite_spectral,
    "gradient_penalty": _suite_gradient_penalty,
    "losses": _suite_losses,
    "formats": _suite_formats,
}


def run_selftest() -> dict:
    results = {}
    for name, fn in SUITES.items():
        try:
            results[name] = fn()
        except Exception as e:  # a crashed suite is a failed suite
            results[name] = (False, f"{type(e).__name__}: {e}")
    return results

"""Finite-difference validation of every registered op and composed losses.

Kink exclusions: relu/leaky_relu inputs are kept away from 0, l1 pairs
away from equality, and l2 pairs distinct, per the checker's contract.
"""

import numpy as np
import pytest

from xplore import tensor as T
from xplore.gradcheck import finite_diff_grad_check
from xplore.tensor import Tensor

N_POINTS = 10


def _away_from_zero(rng, shape, margin=0.25):
    x = rng.normal(size=shape)
    return x + margin * np.sign(x) + (x == 0) * margin


def _case(kind, rng):
    """(fn, inputs) scalarizing each registered op for the checker."""
    if kind == "conv2d":
        ins = [Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True),
               Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.5, requires_grad=True),
               Tensor(rng.normal(size=(3,)), requires_grad=True)]
        return lambda i: T.mean(T.conv2d(i[0], i[1], i[2], stride=2, pad=1)), ins
    if kind == "conv_transpose2d":
        ins = [Tensor(rng.normal(size=(2, 3, 3, 3)), requires_grad=True),
               Tensor(rng.normal(size=(3, 2, 4, 4)) * 0.5, requires_grad=True),
               Tensor(rng.normal(size=(2,)), requires_grad=True)]
        return lambda i: T.mean(T.conv_transpose2d(i[0], i[1], i[2], stride=2, pad=1)), ins
    if kind == "dense":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True),
               Tensor(rng.normal(size=(4, 2)), requires_grad=True),
               Tensor(rng.normal(size=(2,)), requires_grad=True)]
        return lambda i: T.mean(T.tanh(T.dense(i[0], i[1], i[2]))), ins
    if kind == "relu":
        ins = [Tensor(_away_from_zero(rng, (4, 5)), requires_grad=True)]
        return lambda i: T.mean(T.relu(i[0])), ins
    if kind == "leaky_relu":
        ins = [Tensor(_away_from_zero(rng, (4, 5)), requires_grad=True)]
        return lambda i: T.mean(T.leaky_relu(i[0], 0.01)), ins
    if kind == "tanh":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True)]
        return lambda i: T.mean(T.tanh(i[0])), ins
    if kind == "add":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True),
               Tensor(rng.normal(size=(3, 4)), requires_grad=True)]
        return lambda i: T.mean(T.mul(T.add(i[0], i[1]), i[0])), ins
    if kind == "mul_scalar":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True)]
        return lambda i: T.mean(T.mul_scalar(i[0], -1.7)), ins
    if kind == "concat":
        ins = [Tensor(rng.normal(size=(2, 3)), requires_grad=True),
               Tensor(rng.normal(size=(2, 2)), requires_grad=True)]
        return lambda i: T.mean(T.tanh(T.concat(i, axis=1))), ins
    if kind == "instance_stats":
        ins = [Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)]

        def fn(i):
            m, s = T.instance_stats(i[0])
            return T.add(T.mean(m), T.mean(s))
        return fn, ins
    if kind == "affine_per_channel":
        ins = [Tensor(rng.normal(size=(2, 3, 3, 3)), requires_grad=True),
               Tensor(rng.normal(size=(2, 3)), requires_grad=True),
               Tensor(rng.normal(size=(2, 3)), requires_grad=True)]
        return lambda i: T.mean(T.tanh(T.affine_per_channel(*i))), ins
    if kind == "l1_mean":
        a = rng.normal(size=(2, 6))
        b = a + _away_from_zero(rng, (2, 6), margin=0.3)
        ins = [Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)]
        return lambda i: T.l1_mean(i[0], i[1]), ins
    if kind == "l2_norm_mean":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True),
               Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)]
        return lambda i: T.l2_norm_mean(i[0], i[1]), ins
    if kind == "softmax_xent":
        targets = rng.integers(0, 3, size=4)
        ins = [Tensor(rng.normal(size=(4, 3)), requires_grad=True)]
        return lambda i: T.softmax_xent(i[0], targets), ins
    if kind == "mean":
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True)]
        return lambda i: T.tsum(T.mean(i[0], axis=1)), ins
    if kind == "interpolate_pair":
        u = rng.uniform(size=3)
        ins = [Tensor(rng.normal(size=(3, 4)), requires_grad=True),
               Tensor(rng.normal(size=(3, 4)), requires_grad=True)]
        return lambda i: T.mean(T.tanh(T.interpolate_pair(i[0], i[1], u))), ins
    raise AssertionError(kind)


@pytest.mark.parametrize("kind", T.OP_KINDS)
def test_registered_op_gradients(kind):
    worst = 0.0
    for point in range(N_POINTS):
        rng = np.random.default_rng(1000 * point + hash(kind) % 1000)
        fn, ins = _case(kind, rng)
        report = finite_diff_grad_check(fn, ins, tol=1e-5)
        worst = max(worst, report.max_rel_error)
        assert report.passed, f"{kind} point {point}: {report}"
    assert worst < 1e-5


def test_gradient_penalty_second_order_path():
    # through a 2-layer critic: dense -> leaky_relu -> dense
    rng = np.random.default_rng(7)
    w1 = Tensor(rng.normal(size=(6, 5)), requires_grad=True)
    b1 = Tensor(rng.normal(size=(5,)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(5, 1)), requires_grad=True)
    xr = rng.normal(size=(3, 6))
    xf = rng.normal(size=(3, 6)) + 1.0
    u = rng.uniform(size=3)

    def gp(ins):
        ww1, bb1, ww2 = ins
        x_hat = Tensor(u[:, None] * xr + (1 - u[:, None]) * xf, requires_grad=True)
        score = T.matmul(T.leaky_relu(T.dense(x_hat, ww1, bb1), 0.01), ww2)
        g = T.grad_of(T.tsum(score), [x_hat], create_graph=True)[0]
        norms = T.sqrt(T.tsum(T.pow_const(g, 2.0), axis=1))
        return T.mean(T.pow_const(T.add_scalar(norms, -1.0), 2.0))

    report = finite_diff_grad_check(gp, [w1, b1, w2], tol=1e-5)
    assert report.passed, str(report)


class TestComposedObjectives:
    """Eqs. 3-9 glued over a tiny two-layer generator/critic pair."""

    D_IN = 8
    HID = 5

    @staticmethod
    def _tiny_params(rng):
        gw1 = Tensor(rng.normal(size=(TestComposedObjectives.D_IN + 2, TestComposedObjectives.HID)) * 0.7,
                     requires_grad=True)
        gw2 = Tensor(rng.normal(size=(TestComposedObjectives.HID, TestComposedObjectives.D_IN)) * 0.7,
                     requires_grad=True)
        dw1 = Tensor(rng.normal(size=(TestComposedObjectives.D_IN, TestComposedObjectives.HID)) * 0.7,
                     requires_grad=True)
        dw_adv = Tensor(rng.normal(size=(TestComposedObjectives.HID, 1)), requires_grad=True)
        dw_cls = Tensor(rng.normal(size=(TestComposedObjectives.HID, 3)), requires_grad=True)
        return gw1, gw2, dw1, dw_adv, dw_cls

    @staticmethod
    def _gen(x, cond, gw1, gw2):
        inp = T.concat([x, cond], axis=1)
        h = T.tanh(T.dense(inp, gw1))
        return T.tanh(T.dense(h, gw2)), h

    @staticmethod
    def _disc(x, dw1, dw_adv, dw_cls):
        h = T.leaky_relu(T.dense(x, dw1), 0.01)
        return T.matmul(h, dw_adv), T.dense(h, dw_cls)

    def _build_losses(self, params, consts):
        gw1, gw2, dw1, dw_adv, dw_cls = params
        x, cond_t, cond_s, u, k_src, k_tgt = consts
        lam = dict(gp=10.0, cls=1.0, rec=10.0, lnt=10.0)

        fake, h_x = self._gen(x, cond_t, gw1, gw2)
        adv_fake, cls_fake_logits = self._disc(fake, dw1, dw_adv, dw_cls)
        adv_real, cls_real_logits = self._disc(x, dw1, dw_adv, dw_cls)
        adv_value = T.sub(T.mean(adv_real), T.mean(adv_fake))

        x_hat = Tensor(u[:, None] * x.data + (1 - u[:, None]) * fake.data,
                       requires_grad=True)
        score_hat, _ = self._disc(x_hat, dw1, dw_adv, dw_cls)
        g = T.grad_of(T.tsum(score_hat), [x_hat], create_graph=True)[0]
        norms = T.sqrt(T.tsum(T.pow_const(g, 2.0), axis=1))
        gp = T.mean(T.pow_const(T.add_scalar(norms, -1.0), 2.0))

        cls_real = T.softmax_xent(cls_real_logits, k_src)
        l_d = T.add(T.add(T.neg(adv_value), T.mul_scalar(gp, lam["gp"])),
                    T.mul_scalar(cls_real, lam["cls"]))

        cyc, h_fake = self._gen(fake, cond_s, gw1, gw2)
        rec = T.l1_mean(x, cyc)
        lnt = T.l2_norm_mean(h_x, h_fake)
        cls_fake = T.softmax_xent(cls_fake_logits, k_tgt)
        l_g = T.add(T.add(T.neg(T.mean(adv_fake)), T.mul_scalar(cls_fake, lam["cls"])),
                    T.add(T.mul_scalar(rec, lam["rec"]), T.mul_scalar(lnt, lam["lnt"])))
        return l_d, l_g

    def _consts(self, rng):
        x = Tensor(rng.normal(size=(3, self.D_IN)))
        cond_t = Tensor(rng.normal(size=(3, 2)))
        cond_s = Tensor(rng.normal(size=(3, 2)))
        u = rng.uniform(0.1, 0.9, size=3)
        return x, cond_t, cond_s, u, np.array([0, 1, 2]), np.array([2, 0, 1])

    def test_full_critic_objective_gradients(self):
        rng = np.random.default_rng(21)
        params = self._tiny_params(rng)
        consts = self._consts(rng)
        report = finite_diff_grad_check(
            lambda ins: self._build_losses(ins, consts)[0], list(params), tol=1e-4)
        assert report.passed, str(report)

    def test_full_generator_objective_gradients(self):
        rng = np.random.default_rng(22)
        params = self._tiny_params(rng)
        consts = self._consts(rng)
        report = finite_diff_grad_check(
            lambda ins: self._build_losses(ins, consts)[1], list(params), tol=1e-4)
        assert report.passed, str(report)


def test_real_bundle_loss_gradients_on_subset():
    """Spot-check train-time L_G gradients on the actual network bundles."""
    from xplore.nets import NetConfig, build_discriminator, build_generator, \
        discriminator_forward, generator_forward

    rng = np.random.default_rng(5)
    cfg = NetConfig(channels=1, image_size=8, base_width=2, n_res_enc=1,
                    n_res_dec=1, k=2, cond_len=3, mlp_depth=2, mlp_hidden=4)
    g = build_generator(cfg, seed=1)
    d = build_discriminator(cfg, seed=2)
    x = Tensor(rng.normal(size=(2, 1, 8, 8)).clip(-1, 1))
    cond_t = rng.normal(size=3)
    cond_s = rng.normal(size=3)

    def l_g():
        fake, h_x = generator_forward(g, x, cond_t)
        adv_map, cls_logits = discriminator_forward(d, fake)
        cyc, h_fake = generator_forward(g, fake, cond_s)
        return T.add(T.add(T.neg(T.mean(adv_map)), T.softmax_xent(cls_logits, [1, 0])),
                     T.add(T.mul_scalar(T.l1_mean(x, cyc), 10.0),
                           T.mul_scalar(T.l2_norm_mean(h_x, h_fake), 10.0)))

    params = g.parameters()
    analytic = T.grad_of(l_g(), params)
    picks = [(0, 0), (2, 1), (8, 0)]  # (param index, flat coordinate)
    h = 1e-5
    for pi, ci in picks:
        p = params[pi]
        flat = p.data.reshape(-1)
        orig = flat[ci]
        flat[ci] = orig + h
        up = l_g().item()
        flat[ci] = orig - h
        down = l_g().item()
        flat[ci] = orig
        numeric = (up - down) / (2 * h)
        a = analytic[pi].data.reshape(-1)[ci]
        assert abs(a - numeric) / max(1.0, abs(a), abs(numeric)) < 1e-4

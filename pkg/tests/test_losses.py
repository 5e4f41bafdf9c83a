"""Hand-verified values and structural properties of every objective."""

import numpy as np
import pytest

from xplore import tensor as T
from xplore.losses import (LossWeights, adversarial_losses, cls_loss_fake,
                           cls_loss_real, cycle_reconstruction_loss,
                           gradient_penalty, latent_loss, total_objectives)
from xplore.nets import NetConfig, build_discriminator, build_generator, \
    discriminator_forward, generator_forward
from xplore.tensor import Tensor


class TestClsLosses:
    def test_two_way_uniform_logits(self):
        loss = cls_loss_real(Tensor(np.array([[0.0, 0.0]])), [0])
        assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)

    def test_dominant_target_logit(self):
        loss = cls_loss_real(Tensor(np.array([[20.0, 0.0]])), [0])
        assert loss.item() == pytest.approx(np.log(1 + np.exp(-20.0)), rel=1e-9)
        assert loss.item() < 3e-9

    def test_uniform_logits_log_k(self):
        for k in (2, 5, 9):
            loss = cls_loss_real(Tensor(np.zeros((3, k))), [0, 1, k - 1])
            assert loss.item() == pytest.approx(np.log(k), abs=1e-12)

    def test_fake_form_identical(self):
        rng = np.random.default_rng(0)
        logits = Tensor(rng.normal(size=(4, 3)))
        targets = [0, 2, 1, 1]
        assert cls_loss_fake(logits, targets).item() == \
            cls_loss_real(logits, targets).item()

    def test_fake_loss_reaches_generator_parameters(self):
        cfg = NetConfig(channels=1, image_size=8, base_width=2, n_res_enc=1,
                        n_res_dec=1, k=2, cond_len=3, mlp_depth=2, mlp_hidden=4)
        g = build_generator(cfg, seed=0)
        d = build_discriminator(cfg, seed=1)
        x = Tensor(np.random.default_rng(2).uniform(-1, 1, size=(2, 1, 8, 8)))
        fake, _ = generator_forward(g, x, np.zeros(3))
        _, logits = discriminator_forward(d, fake)
        loss = cls_loss_fake(logits, [1, 0])
        grads = T.grad_of(loss, g.parameters())
        assert any(np.any(gr.data != 0.0) for gr in grads)

    def test_out_of_range_target_rejected(self):
        with pytest.raises(IndexError):
            cls_loss_real(Tensor(np.zeros((1, 2))), [2])


class TestCycleLoss:
    def test_identity_zero(self):
        x = np.random.default_rng(1).normal(size=(2, 3, 4, 4))
        assert cycle_reconstruction_loss(Tensor(x), Tensor(x.copy())).item() == 0.0

    def test_constant_difference(self):
        x = np.zeros((2, 3, 4, 4))
        assert cycle_reconstruction_loss(Tensor(x), Tensor(x + 0.25)).item() == \
            pytest.approx(0.25, abs=1e-12)

    def test_matches_direct_mean_abs(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(3, 2, 5, 5)), rng.normal(size=(3, 2, 5, 5))
        direct = float(np.mean(np.abs(a - b)))
        assert abs(cycle_reconstruction_loss(Tensor(a), Tensor(b)).item() - direct) < 1e-12

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(1, 2, 3, 3))
        assert cycle_reconstruction_loss(Tensor(a), Tensor(a + 1e-9)).item() > 0.0


class TestLatentLoss:
    def test_identical_zero(self):
        h = np.random.default_rng(4).normal(size=(2, 8))
        assert latent_loss(Tensor(h), Tensor(h.copy())).item() == 0.0

    def test_three_four_five(self):
        a = Tensor(np.array([[3.0, 4.0]]))
        assert latent_loss(a, Tensor(np.zeros((1, 2)))).item() == pytest.approx(5.0)

    def test_homogeneous_in_difference(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
        one = latent_loss(Tensor(a), Tensor(b)).item()
        two = latent_loss(Tensor(b + 2 * (a - b)), Tensor(b)).item()  # diff doubled
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_batch_mean_of_norms(self):
        a = Tensor(np.array([[3.0, 4.0], [0.0, 0.0]]))
        b = Tensor(np.zeros((2, 2)))
        assert latent_loss(a, b).item() == pytest.approx(2.5)


class TestGradientPenalty:
    def _linear_critic(self, w):
        wt = Tensor(w)

        def fn(x):
            flat = T.reshape(x, (x.data.shape[0], w.shape[0]))
            return T.reshape(T.matmul(flat, wt), (x.data.shape[0],))
        return fn

    def test_unit_norm_critic_zero_penalty(self):
        rng = np.random.default_rng(6)
        d = 10
        w = np.full((d, 1), 1.0 / np.sqrt(d))
        gp = gradient_penalty(self._linear_critic(w), rng.normal(size=(4, d)),
                              rng.normal(size=(4, d)), np.random.default_rng(0))
        assert abs(gp.item()) < 1e-10

    def test_slope_two_critic_unit_penalty(self):
        rng = np.random.default_rng(7)
        d = 10
        w = np.full((d, 1), 2.0 / np.sqrt(d))
        gp = gradient_penalty(self._linear_critic(w), rng.normal(size=(4, d)),
                              rng.normal(size=(4, d)), np.random.default_rng(0))
        assert gp.item() == pytest.approx(1.0, abs=1e-10)

    def test_penalty_nonnegative_on_real_discriminator(self):
        cfg = NetConfig(channels=1, image_size=8, base_width=4, k=2, cond_len=3,
                        mlp_depth=2, mlp_hidden=4)
        d = build_discriminator(cfg, seed=3)
        rng = np.random.default_rng(8)
        gp = gradient_penalty(d, rng.uniform(-1, 1, size=(2, 1, 8, 8)),
                              rng.uniform(-1, 1, size=(2, 1, 8, 8)),
                              np.random.default_rng(1))
        assert gp.item() >= 0.0

    def test_weights_default_ten(self):
        w = LossWeights()
        assert w.lambda_gp == 10.0
        assert w.lambda_rec == 10.0
        assert w.lambda_lnt == 10.0


class TestAdversarialLosses:
    def test_parts_consistent(self):
        cfg = NetConfig(channels=1, image_size=8, base_width=4, k=2, cond_len=3,
                        mlp_depth=2, mlp_hidden=4)
        d = build_discriminator(cfg, seed=4)
        rng = np.random.default_rng(9)
        xr = rng.uniform(-1, 1, size=(3, 1, 8, 8))
        xf = rng.uniform(-1, 1, size=(3, 1, 8, 8))
        out = adversarial_losses(d, xr, xf, lambda_gp=10.0, rng=np.random.default_rng(2))
        assert out["d_loss_part"].item() == pytest.approx(
            -out["adv_value"].item() + 10.0 * out["gp_value"].item(), abs=1e-9)
        # generator part is -E[D(fake)]
        adv_fake_mean = out["adv_value"].item()  # E[D(real)] - E[D(fake)]
        scores_real, _ = discriminator_forward(d, xr)
        e_real = float(np.mean(scores_real.data))
        assert out["g_loss_part"].item() == pytest.approx(
            adv_fake_mean - e_real, abs=1e-9)

    def test_gradient_penalty_touches_only_adv_head(self):
        cfg = NetConfig(channels=1, image_size=8, base_width=4, k=3, cond_len=3,
                        mlp_depth=2, mlp_hidden=4)
        d = build_discriminator(cfg, seed=5)
        rng = np.random.default_rng(10)
        gp = gradient_penalty(d, rng.uniform(-1, 1, size=(2, 1, 8, 8)),
                              rng.uniform(-1, 1, size=(2, 1, 8, 8)),
                              np.random.default_rng(3))
        grads = T.grad_of(gp, [d.cls_w, d.cls_b, d.adv_head.w])
        assert np.all(grads[0].data == 0.0)  # penalty is defined on the adv head only
        assert np.all(grads[1].data == 0.0)
        assert np.any(grads[2].data != 0.0)


class TestTotals:
    def test_all_zero_components(self):
        comp = dict(adv_value=0.0, gp=0.0, cls_real=0.0, adv_g=0.0,
                    cls_fake=0.0, rec=0.0, lnt=0.0)
        l_d, l_g = total_objectives(comp, LossWeights())
        assert l_d == 0.0 and l_g == 0.0

    def test_hand_composition(self):
        comp = dict(adv_value=1.0, gp=0.1, cls_real=0.5, adv_g=0.0,
                    cls_fake=0.0, rec=0.0, lnt=0.0)
        l_d, _ = total_objectives(comp, LossWeights(lambda_cls=1.0, lambda_gp=10.0))
        assert l_d == pytest.approx(0.5, abs=1e-12)  # -1 + 1 + 0.5

    def test_linear_in_each_weight(self):
        rng = np.random.default_rng(11)
        comp = {k: float(v) for k, v in zip(
            ("adv_value", "gp", "cls_real", "adv_g", "cls_fake", "rec", "lnt"),
            rng.uniform(0.1, 1.0, size=7))}
        base = LossWeights()
        l_d0, l_g0 = total_objectives(comp, base)
        for name, affects_d, comp_key in (("lambda_gp", True, "gp"),
                                          ("lambda_cls", None, None),
                                          ("lambda_rec", False, "rec"),
                                          ("lambda_lnt", False, "lnt")):
            kw = base.to_dict()
            kw[name] += 2.0
            l_d1, l_g1 = total_objectives(comp, LossWeights(**kw))
            if name == "lambda_cls":
                assert l_d1 - l_d0 == pytest.approx(2.0 * comp["cls_real"], abs=1e-12)
                assert l_g1 - l_g0 == pytest.approx(2.0 * comp["cls_fake"], abs=1e-12)
            elif affects_d:
                assert l_d1 - l_d0 == pytest.approx(2.0 * comp[comp_key], abs=1e-12)
                assert l_g1 == l_g0
            else:
                assert l_d1 == l_d0
                assert l_g1 - l_g0 == pytest.approx(2.0 * comp[comp_key], abs=1e-12)

    def test_tensor_components_compose(self):
        comp = dict(adv_value=Tensor(np.array(1.0)), gp=Tensor(np.array(0.1)),
                    cls_real=Tensor(np.array(0.5)), adv_g=Tensor(np.array(-0.3)),
                    cls_fake=Tensor(np.array(0.2)), rec=Tensor(np.array(0.4)),
                    lnt=Tensor(np.array(0.6)))
        l_d, l_g = total_objectives(comp, LossWeights())
        assert l_d.item() == pytest.approx(0.5)
        assert l_g.item() == pytest.approx(-0.3 + 0.2 + 4.0 + 6.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_rec=-1.0)

    def test_component_nonnegativity(self):
        # cls, rec, lnt, gp are nonnegative by construction
        rng = np.random.default_rng(12)
        logits = Tensor(rng.normal(size=(4, 3)))
        assert cls_loss_real(logits, [0, 1, 2, 0]).item() >= 0.0
        a, b = rng.normal(size=(2, 6)), rng.normal(size=(2, 6))
        assert cycle_reconstruction_loss(Tensor(a), Tensor(b)).item() >= 0.0
        assert latent_loss(Tensor(a), Tensor(b)).item() >= 0.0

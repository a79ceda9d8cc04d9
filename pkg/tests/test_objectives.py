"""Distillation losses: frozen oracle values, gradients, routing, identities."""

from __future__ import annotations

import numpy as np
import pytest

from bdkd.models import Mlp, MlpSpec
from bdkd.objectives import (
    DistillConfig,
    LossBreakdown,
    bdkd_student_loss,
    bdkd_teacher_loss,
    cross_entropy,
    dml_pair_losses,
    multinet_losses_1t2s,
    multinet_losses_2t1s,
    net_distillation_loss,
    vanilla_kd_loss,
)
from bdkd.divergence import forward_kl, softmax_tau
from bdkd.tensor import Tensor, zero_grad

from helpers import assert_gradients_match

LN4 = 1.3862943611198906

# Fixed two-sample, three-class batch used across the frozen-value tests.
ZS = np.array([[1.0, 0.0, 0.5], [0.2, 0.1, -0.3]])
ZT = np.array([[2.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
Z3 = np.array([[0.3, 0.3, -0.6], [1.5, -0.5, 0.0]])
LABELS = np.array([0, 2])

# 50-digit oracle values for the batch above (see oracles.py; defaults
# alpha=beta=1, tau=2, v=2, student balanced, teacher reverse).
STUDENT_TOTAL = 1.6437954676167871
STUDENT_CE = 1.0505486630974970
STUDENT_FKL = 0.2054155298791610
STUDENT_RKL = 0.3878312746401292
TEACHER_TOTAL = 0.8282439129668112
TEACHER_CE = 0.6342291541121977
TEACHER_RKL = 0.1940147588546135
VANILLA_TOTAL = 0.4509749301274786   # alpha=0.3, tau=2
VANILLA_CE = 0.3151645989292491
VANILLA_KL = 0.1358103311982295
DML_A = 1.2445634219521105
DML_B = 0.8337048504671073
T1T2S_TEACHER = 1.3534276790847863
T1T2S_S1 = 2.3531436456082282
T1T2S_S2 = 3.7431925759119885
T2T1S_T2 = 1.5759418003384041
CE_CONFIDENT = 2.0611536203143807e-09


def _check_breakdown(loss: LossBreakdown):
    total = loss.value
    parts = loss.ce_term + loss.forward_kl_term + loss.reverse_kl_term
    assert abs(total - parts) < 1e-9, f"decomposition broken: {total} vs {parts}"


class TestCrossEntropy:
    def test_confident_correct_is_near_zero(self):
        value = cross_entropy(Tensor([[10.0, -10.0]]), np.array([0])).item()
        assert value < 1e-4
        # log(1 + tiny) carries absolute (not relative) float64 precision.
        np.testing.assert_allclose(value, CE_CONFIDENT, atol=1e-12)

    def test_uniform_logits(self):
        value = cross_entropy(Tensor([[0.0] * 4]), np.array([2])).item()
        np.testing.assert_allclose(value, LN4, atol=1e-12)

    def test_two_class_frozen_value(self):
        value = cross_entropy(Tensor([[1.0, 0.0]]), np.array([1])).item()
        np.testing.assert_allclose(value, 1.3132616875182228, atol=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match="labels"):
            cross_entropy(Tensor([[0.0, 0.0]]), np.array([2]))


class TestVanillaKd:
    def test_alpha_one_is_pure_ce(self):
        loss = vanilla_kd_loss(Tensor(ZS), Tensor(ZT), LABELS, alpha=1.0, tau=2.0)
        ce = cross_entropy(Tensor(ZS), LABELS).item()
        np.testing.assert_allclose(loss.value, ce, rtol=1e-12)
        assert loss.forward_kl_term == 0.0
        _check_breakdown(loss)

    def test_identical_logits_alpha_zero_is_zero(self):
        loss = vanilla_kd_loss(Tensor(ZS), Tensor(ZS), LABELS, alpha=0.0, tau=2.0)
        np.testing.assert_allclose(loss.value, 0.0, atol=1e-12)

    def test_frozen_batch_value(self):
        loss = vanilla_kd_loss(Tensor(ZS), Tensor(ZT), LABELS, alpha=0.3, tau=2.0)
        np.testing.assert_allclose(loss.value, VANILLA_TOTAL, rtol=1e-12)
        np.testing.assert_allclose(loss.ce_term, VANILLA_CE, rtol=1e-12)
        np.testing.assert_allclose(loss.forward_kl_term, VANILLA_KL, rtol=1e-12)
        _check_breakdown(loss)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError, match="alpha"):
            vanilla_kd_loss(Tensor(ZS), Tensor(ZT), LABELS, alpha=1.5, tau=2.0)


class TestTeacherLoss:
    def test_identical_logits_reduce_to_ce(self):
        cfg = DistillConfig()
        loss = bdkd_teacher_loss(Tensor(ZT), Tensor(ZT), LABELS, cfg)
        np.testing.assert_allclose(loss.value, cfg.alpha_t * TEACHER_CE, rtol=1e-12)
        np.testing.assert_allclose(loss.reverse_kl_term, 0.0, atol=1e-12)

    def test_beta_zero_is_plain_ce(self):
        cfg = DistillConfig(beta_t=0.0)
        loss = bdkd_teacher_loss(Tensor(ZT), Tensor(ZS), LABELS, cfg)
        np.testing.assert_allclose(loss.value, TEACHER_CE, rtol=1e-12)
        assert loss.forward_kl_term == 0.0 and loss.reverse_kl_term == 0.0

    def test_frozen_batch_value(self):
        loss = bdkd_teacher_loss(Tensor(ZT), Tensor(ZS), LABELS, DistillConfig())
        np.testing.assert_allclose(loss.value, TEACHER_TOTAL, rtol=1e-12)
        np.testing.assert_allclose(loss.ce_term, TEACHER_CE, rtol=1e-12)
        np.testing.assert_allclose(loss.reverse_kl_term, TEACHER_RKL, rtol=1e-12)
        assert loss.forward_kl_term == 0.0
        _check_breakdown(loss)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            bdkd_teacher_loss(Tensor(ZT), Tensor(ZT[:, :2]), LABELS, DistillConfig())


class TestStudentLoss:
    def test_identical_logits_ce_and_tie_deltas(self):
        cfg = DistillConfig()
        loss = bdkd_student_loss(Tensor(ZS), Tensor(ZS), LABELS, cfg)
        np.testing.assert_allclose(loss.value, STUDENT_CE, rtol=1e-12)
        np.testing.assert_array_equal(loss.per_sample_deltas.delta_f, [1.0, 1.0])
        np.testing.assert_array_equal(loss.per_sample_deltas.delta_r, [cfg.v, cfg.v])

    def test_v_one_equals_symmetric_bit_exactly(self):
        balanced = DistillConfig(v=1.0, student_kl="balanced")
        symmetric = DistillConfig(v=1.0, student_kl="symmetric")
        zs_a = Tensor(ZS, requires_grad=True)
        zs_b = Tensor(ZS, requires_grad=True)
        loss_a = bdkd_student_loss(zs_a, Tensor(ZT), LABELS, balanced)
        loss_b = bdkd_student_loss(zs_b, Tensor(ZT), LABELS, symmetric)
        assert loss_a.value == loss_b.value
        loss_a.total.backward()
        loss_b.total.backward()
        np.testing.assert_array_equal(zs_a.grad, zs_b.grad)

    def test_frozen_batch_value(self):
        loss = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, DistillConfig())
        np.testing.assert_allclose(loss.value, STUDENT_TOTAL, rtol=1e-12)
        np.testing.assert_allclose(loss.ce_term, STUDENT_CE, rtol=1e-12)
        np.testing.assert_allclose(loss.forward_kl_term, STUDENT_FKL, rtol=1e-12)
        np.testing.assert_allclose(loss.reverse_kl_term, STUDENT_RKL, rtol=1e-12)
        np.testing.assert_array_equal(loss.per_sample_deltas.delta_f, [1.0, 2.0])
        np.testing.assert_array_equal(loss.per_sample_deltas.delta_r, [2.0, 1.0])
        _check_breakdown(loss)

    def test_forward_selector_formula(self):
        cfg = DistillConfig(student_kl="forward", alpha_s=0.7, beta_s=1.3, tau=2.0)
        loss = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, cfg)
        p_t = softmax_tau(Tensor(ZT), 2.0)
        p_s = softmax_tau(Tensor(ZS), 2.0)
        expected = (
            0.7 * cross_entropy(Tensor(ZS), LABELS).item()
            + 4.0 * 1.3 * forward_kl(p_t, p_s).mean().item()
        )
        np.testing.assert_allclose(loss.value, expected, rtol=1e-12)
        assert loss.reverse_kl_term == 0.0

    def test_unknown_selector_rejected(self):
        with pytest.raises(ValueError, match="student_kl"):
            DistillConfig(student_kl="sideways")


class TestDmlPair:
    def test_identical_logits_are_ce_only(self):
        la, lb = dml_pair_losses(Tensor(ZS), Tensor(ZS), LABELS, DistillConfig())
        np.testing.assert_allclose(la.value, STUDENT_CE, rtol=1e-12)
        np.testing.assert_allclose(lb.value, STUDENT_CE, rtol=1e-12)

    def test_swapping_inputs_swaps_losses(self):
        la, lb = dml_pair_losses(Tensor(ZS), Tensor(ZT), LABELS, DistillConfig())
        lb2, la2 = dml_pair_losses(Tensor(ZT), Tensor(ZS), LABELS, DistillConfig())
        assert la.value == la2.value
        assert lb.value == lb2.value

    def test_frozen_batch_values(self):
        la, lb = dml_pair_losses(Tensor(ZS), Tensor(ZT), LABELS, DistillConfig())
        np.testing.assert_allclose(la.value, DML_A, rtol=1e-12)
        np.testing.assert_allclose(lb.value, DML_B, rtol=1e-12)
        _check_breakdown(la)
        _check_breakdown(lb)


class TestMultinet1T2S:
    def test_identical_logits_are_ce_only(self):
        z = Tensor(ZS)
        lt, l1, l2 = multinet_losses_1t2s(z, Tensor(ZS), Tensor(ZS), LABELS, DistillConfig())
        for loss in (lt, l1, l2):
            np.testing.assert_allclose(loss.value, STUDENT_CE, rtol=1e-12)

    def test_zero_betas_decouple(self):
        cfg = DistillConfig(beta_t=0.0, beta_s=0.0)
        lt, l1, l2 = multinet_losses_1t2s(Tensor(ZT), Tensor(ZS), Tensor(Z3), LABELS, cfg)
        np.testing.assert_allclose(lt.value, cross_entropy(Tensor(ZT), LABELS).item(), rtol=1e-12)
        np.testing.assert_allclose(l1.value, cross_entropy(Tensor(ZS), LABELS).item(), rtol=1e-12)
        np.testing.assert_allclose(l2.value, cross_entropy(Tensor(Z3), LABELS).item(), rtol=1e-12)

    def test_frozen_batch_values(self):
        lt, l1, l2 = multinet_losses_1t2s(Tensor(ZT), Tensor(ZS), Tensor(Z3), LABELS, DistillConfig())
        np.testing.assert_allclose(lt.value, T1T2S_TEACHER, rtol=1e-12)
        np.testing.assert_allclose(l1.value, T1T2S_S1, rtol=1e-12)
        np.testing.assert_allclose(l2.value, T1T2S_S2, rtol=1e-12)
        for loss in (lt, l1, l2):
            _check_breakdown(loss)

    def test_duplicate_sibling_degenerates_to_pair_loss(self):
        # With s2 == s1 the sibling pair contributes exactly zero, so the
        # s1 objective collapses onto the two-network student loss.
        cfg = DistillConfig()
        _, l1, _ = multinet_losses_1t2s(Tensor(ZT), Tensor(ZS), Tensor(ZS.copy()), LABELS, cfg)
        pair = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, cfg)
        assert l1.value == pair.value


class TestMultinet2T1S:
    def test_identical_logits_are_ce_only(self):
        lt1, lt2, ls = multinet_losses_2t1s(Tensor(ZS), Tensor(ZS), Tensor(ZS), LABELS, DistillConfig())
        for loss in (lt1, lt2, ls):
            np.testing.assert_allclose(loss.value, STUDENT_CE, rtol=1e-12)

    def test_frozen_batch_values(self):
        lt1, lt2, ls = multinet_losses_2t1s(Tensor(ZT), Tensor(Z3), Tensor(ZS), LABELS, DistillConfig())
        np.testing.assert_allclose(lt1.value, TEACHER_TOTAL, rtol=1e-12)
        np.testing.assert_allclose(lt2.value, T2T1S_T2, rtol=1e-12)
        np.testing.assert_allclose(ls.value, T1T2S_S1, rtol=1e-12)  # same peer set as 1T2S s1
        for loss in (lt1, lt2, ls):
            _check_breakdown(loss)

    def test_zeroing_one_teachers_beta_keeps_student_terms(self):
        cfg = DistillConfig()
        # Teacher 2 trained CE-only; the student objective keeps both pairs.
        t2_plain = net_distillation_loss(
            Tensor(Z3), [Tensor(ZS)], LABELS, alpha=1.0, beta=0.0, selector=cfg.teacher_kl, cfg=cfg
        )
        np.testing.assert_allclose(t2_plain.value, cross_entropy(Tensor(Z3), LABELS).item(), rtol=1e-12)
        _, _, ls = multinet_losses_2t1s(Tensor(ZT), Tensor(Z3), Tensor(ZS), LABELS, cfg)
        assert ls.forward_kl_term > 0.0 and ls.reverse_kl_term > 0.0


class TestGradientRouting:
    def test_peer_parameters_never_receive_gradient(self):
        rng = np.random.default_rng(31)
        for trial in range(10):
            teacher = Mlp(MlpSpec(3, (6,), 4, seed=100 + trial))
            student = Mlp(MlpSpec(3, (4,), 4, seed=200 + trial))
            x = Tensor(rng.uniform(-2.0, 2.0, size=(5, 3)))
            y = rng.integers(0, 4, size=5)
            cfg = DistillConfig()

            z_t, z_s = teacher.forward(x), student.forward(x)
            bdkd_student_loss(z_s, z_t, y, cfg).total.backward()
            assert all(p.grad is None for p in teacher.parameters())
            assert all(p.grad is not None for p in student.parameters())
            zero_grad(student.parameters())

            z_t, z_s = teacher.forward(x), student.forward(x)
            bdkd_teacher_loss(z_t, z_s, y, cfg).total.backward()
            assert all(p.grad is None for p in student.parameters())
            assert all(p.grad is not None for p in teacher.parameters())
            zero_grad(teacher.parameters())


class TestTauParity:
    def test_tau_one_has_unit_factor(self):
        cfg = DistillConfig(tau=1.0, student_kl="symmetric")
        loss = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, cfg)
        p_t, p_s = softmax_tau(Tensor(ZT), 1.0), softmax_tau(Tensor(ZS), 1.0)
        from bdkd.divergence import reverse_kl

        raw = forward_kl(p_t, p_s).mean().item() + reverse_kl(p_t, p_s).mean().item()
        np.testing.assert_allclose(loss.forward_kl_term + loss.reverse_kl_term, raw, rtol=1e-12)

    def test_tau_two_scales_kl_term_by_four(self):
        cfg = DistillConfig(tau=2.0, student_kl="forward")
        loss = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, cfg)
        raw = forward_kl(softmax_tau(Tensor(ZT), 2.0), softmax_tau(Tensor(ZS), 2.0)).mean().item()
        np.testing.assert_allclose(loss.forward_kl_term, 4.0 * raw, rtol=1e-12)


class TestSumReduction:
    def test_sum_is_n_times_mean(self):
        mean_cfg = DistillConfig(reduction="mean")
        sum_cfg = DistillConfig(reduction="sum")
        lm = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, mean_cfg)
        ls = bdkd_student_loss(Tensor(ZS), Tensor(ZT), LABELS, sum_cfg)
        np.testing.assert_allclose(ls.value, 2.0 * lm.value, rtol=1e-12)


class TestLossGradients:
    """Finite-difference checks for every loss family (full sweep in acceptance)."""

    def _safe_logit_pair(self, rng, n=4, c=3, margin=1e-3):
        # Keep entropy gaps away from the delta switching boundary so
        # finite differences see a smooth function.
        from bdkd.training import _softened_entropy

        while True:
            zs = rng.uniform(-2.0, 2.0, size=(n, c))
            zt = rng.uniform(-2.0, 2.0, size=(n, c))
            gap = _softened_entropy(zs, 2.0) - _softened_entropy(zt, 2.0)
            if np.abs(gap).min() > margin:
                return zs, zt

    def test_all_losses_match_finite_differences(self):
        rng = np.random.default_rng(77)
        cfg = DistillConfig()
        for _ in range(5):
            zs_data, zt_data = self._safe_logit_pair(rng)
            _, z3_data = self._safe_logit_pair(rng)
            y = rng.integers(0, 3, size=4)
            zs = Tensor(zs_data, requires_grad=True)
            zt = Tensor(zt_data, requires_grad=True)
            z3 = Tensor(z3_data, requires_grad=True)

            assert_gradients_match(lambda: vanilla_kd_loss(zs, zt.detach(), y, 0.3, 2.0).total, [zs])
            assert_gradients_match(lambda: bdkd_student_loss(zs, zt, y, cfg).total, [zs])
            assert_gradients_match(lambda: bdkd_teacher_loss(zt, zs, y, cfg).total, [zt])
            assert_gradients_match(lambda: dml_pair_losses(zs, zt, y, cfg)[0].total, [zs])
            assert_gradients_match(
                lambda: multinet_losses_1t2s(zt, zs, z3, y, cfg)[1].total, [zs]
            )
            assert_gradients_match(
                lambda: multinet_losses_2t1s(zt, z3, zs, y, cfg)[2].total, [zs]
            )

"""Fine-tuning losses, stop-gradient contract, and the stage-3 loop."""

import math

import numpy as np
import pytest

from _oracles import (
    consistency_scalar,
    fd_param_gradients,
    max_rel_grad_err,
    xent_probs_scalar,
)
from protoclass.augment import AugmentConfig
from protoclass.clustering import kmeans
from protoclass.data import SynthConfig, generate
from protoclass.finetune import (
    SftConfig,
    confidence_masked_batch,
    consistency_loss,
    predict,
    proto_loss,
    run_sft,
    sft_step_losses,
)
from protoclass.metrics import hungarian_accuracy
from protoclass.net import (
    ema_update,
    forward_classifier,
    forward_encoder,
    init_params,
    named_tensors,
)
from protoclass.pretrain import CptConfig, run_cpt
from protoclass.prototypes import PrototypeSet, embed_all, sample_prototypes
from protoclass.reduction import DRConfig, project


def rand_probs(rng, n, k):
    q = rng.uniform(0.05, 1.0, size=(n, k))
    return q / q.sum(axis=1, keepdims=True)


def small_params(seed=0, in_dim=4, n_classes=3):
    return init_params(
        in_dim=in_dim, encoder_widths=[8], proj_hidden=6, proj_dim=4,
        cls_hidden=6, n_classes=n_classes, seed=seed,
    )


class TestProtoLoss:
    def test_one_hot_rows_give_zero(self):
        q = np.eye(3)[[0, 2, 1]]
        loss, _ = proto_loss(q, np.array([0, 2, 1]))
        assert loss == 0.0

    def test_uniform_ten_classes(self):
        q = np.full((5, 10), 0.1)
        loss, _ = proto_loss(q, np.arange(5))
        assert abs(loss - math.log(10)) < 1e-9

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = rand_probs(rng, 4, 3)
            y = rng.integers(0, 3, size=4)
            loss, _ = proto_loss(q, y)
            assert abs(loss - xent_probs_scalar(q, y)) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        q = rand_probs(rng, 3, 4)
        y = np.array([1, 3, 0])
        _, grad = proto_loss(q, y)
        eps = 1e-7
        for i in range(3):
            for j in range(4):
                up, down = q.copy(), q.copy()
                up[i, j] += eps
                down[i, j] -= eps
                num = (proto_loss(up, y)[0] - proto_loss(down, y)[0]) / (2 * eps)
                assert abs(num - grad[i, j]) < 1e-5

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="range"):
            proto_loss(np.full((2, 3), 1 / 3), np.array([0, 3]))


class TestConsistencyLoss:
    def test_fully_masked_batch_is_zero(self):
        rng = np.random.default_rng(2)
        q_w = rand_probs(rng, 6, 4) * 0.0 + 0.25  # uniform: max conf 0.25
        q_s = rand_probs(rng, 6, 4)
        out = confidence_masked_batch(q_w, q_s, threshold=0.95)
        loss, grad = consistency_loss(out)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_confident_agreement_is_zero(self):
        q_w = np.array([[0.01, 0.01, 0.97, 0.01]])
        q_s = np.eye(4)[[2]]
        out = confidence_masked_batch(q_w, q_s, threshold=0.95)
        loss, _ = consistency_loss(out)
        assert loss == 0.0

    def test_single_unmasked_uniform_strong_row(self):
        # confidences {0.96, 0.40}: one active row, strong uniform over 4
        q_w = np.array([[0.96, 0.02, 0.01, 0.01], [0.40, 0.30, 0.20, 0.10]])
        q_s = np.full((2, 4), 0.25)
        out = confidence_masked_batch(q_w, q_s, threshold=0.95)
        loss, _ = consistency_loss(out)
        assert abs(loss - math.log(4) / 2) < 1e-9

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            q_w = rand_probs(rng, 5, 3)
            q_s = rand_probs(rng, 5, 3)
            c = float(rng.uniform(0.3, 0.9))
            out = confidence_masked_batch(q_w, q_s, c)
            loss, _ = consistency_loss(out)
            assert abs(loss - consistency_scalar(q_w, q_s, c)) < 1e-9

    def test_mask_matches_threshold_rule(self):
        q_w = np.array([[0.5, 0.5], [0.96, 0.04], [0.94, 0.06]])
        out = confidence_masked_batch(q_w, q_w, threshold=0.95)
        np.testing.assert_array_equal(out.mask, [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(out.hard_targets, [0, 0, 0])

    def test_grad_is_masked_softmax_difference(self):
        rng = np.random.default_rng(4)
        q_w = np.array([[0.97, 0.01, 0.02], [0.4, 0.3, 0.3]])
        q_s = rand_probs(rng, 2, 3)
        out = confidence_masked_batch(q_w, q_s, 0.95)
        _, grad = consistency_loss(out)
        onehot = np.zeros((2, 3))
        onehot[0, 0] = 1.0
        expected = (q_s - onehot) * np.array([[1.0], [0.0]]) / 2
        np.testing.assert_allclose(grad, expected, atol=1e-12)


def step_inputs(seed=0, n_classes=3):
    rng = np.random.default_rng(seed)
    proto_views = rng.standard_normal((4, 4))
    proto_labels = rng.integers(0, n_classes, size=4)
    weak = rng.standard_normal((6, 4))
    strong = rng.standard_normal((6, 4))
    return proto_views, proto_labels, weak, strong


class TestSftStep:
    def test_total_is_exact_weighted_sum(self):
        params = small_params(seed=5)
        pv, py, wv, sv = step_inputs(1)
        cfg = SftConfig(unlabeled_weight=0.7, confidence_threshold=0.5)
        (lp, lc, total), _, _ = sft_step_losses(params, pv, py, wv, sv, cfg)
        assert total == lp + 0.7 * lc

    def test_zero_weight_reduces_to_supervised_gradients(self):
        params = small_params(seed=6)
        pv, py, wv, sv = step_inputs(2)
        cfg0 = SftConfig(unlabeled_weight=0.0)
        (_, _, _), grads0, _ = sft_step_losses(params, pv, py, wv, sv, cfg0, seeds=(7, 8, 9))

        from protoclass.net import (
            classifier_backward,
            encoder_backward,
            softmax,
            softmax_backward,
        )

        h, ecache = forward_encoder(params, pv, True, 7)
        logits, ccache = forward_classifier(params, h, True, 7)
        q = softmax(logits)
        _, gq = proto_loss(q, py)
        glogits = softmax_backward(q, gq)
        cgrads, gh = classifier_backward(params, ccache, glogits)
        egrads, _ = encoder_backward(params, ecache, gh)
        for name, g in {**cgrads, **egrads}.items():
            np.testing.assert_allclose(grads0[name], g, atol=1e-12)

    def test_masked_rows_contribute_zero_gradient(self):
        params = small_params(seed=7)
        pv, py, wv, sv = step_inputs(3)
        cfg = SftConfig(confidence_threshold=0.5)
        seeds = (11, 12, 13)
        (_, _, _), grads, out = sft_step_losses(params, pv, py, wv, sv, cfg, seeds=seeds)
        masked = out.mask == 0.0
        assert masked.any(), "fixture needs at least one masked row"
        sv_zeroed = sv.copy()
        sv_zeroed[masked] = 0.0
        (_, _, _), grads2, _ = sft_step_losses(params, pv, py, wv, sv_zeroed, cfg, seeds=seeds)
        for name in grads:
            np.testing.assert_allclose(grads[name], grads2[name], atol=1e-12)

    def test_weak_branch_carries_no_gradient(self):
        # perturbing weak inputs without changing targets or mask leaves
        # every parameter gradient bit-identical (stop-gradient contract)
        params = small_params(seed=8)
        pv, py, wv, sv = step_inputs(4)
        cfg = SftConfig(confidence_threshold=0.0001)
        seeds = (21, 22, 23)
        (_, _, _), grads, out = sft_step_losses(params, pv, py, wv, sv, cfg, seeds=seeds)
        wv2 = wv + 1e-9
        (_, _, _), grads2, out2 = sft_step_losses(params, pv, py, wv2, sv, cfg, seeds=seeds)
        np.testing.assert_array_equal(out.hard_targets, out2.hard_targets)
        np.testing.assert_array_equal(out.mask, out2.mask)
        for name in grads:
            assert (grads[name] == grads2[name]).all()

    def test_projection_head_receives_no_gradient(self):
        params = small_params(seed=9)
        pv, py, wv, sv = step_inputs(5)
        (_, _, _), grads, _ = sft_step_losses(params, pv, py, wv, sv, SftConfig())
        assert not any(name.startswith("proj") for name in grads)

    def test_end_to_end_gradient_matches_finite_differences(self):
        params = small_params(seed=10, in_dim=4)
        rng = np.random.default_rng(11)
        pv = rng.standard_normal((3, 4))
        py = np.array([0, 2, 1])
        wv = rng.standard_normal((4, 4))
        sv = rng.standard_normal((4, 4))
        cfg = SftConfig(unlabeled_weight=0.8, confidence_threshold=0.3)
        seeds = (31, 32, 33)
        (_, _, _), grads, _ = sft_step_losses(params, pv, py, wv, sv, cfg, seeds=seeds)

        def loss_fn():
            (_, _, total), _, _ = sft_step_losses(params, pv, py, wv, sv, cfg, seeds=seeds)
            return total

        numeric = fd_param_gradients(loss_fn, params)
        numeric = {k: v for k, v in numeric.items() if not k.startswith("proj")}
        assert max_rel_grad_err(grads, numeric) < 1e-4


class TestRunSft:
    def make_setup(self, seed=0):
        store = generate(SynthConfig(
            classes=3, per_class=24, latent_dim=2, ambient_dim=6,
            warp_strength=0.5, noise_sigma=0.1, seed=seed,
        ))
        params = init_params(
            in_dim=6, encoder_widths=[12, 8], proj_hidden=8, proj_dim=4,
            cls_hidden=8, n_classes=3, seed=seed,
        )
        return store, params

    def test_empty_prototype_set_rejected(self):
        store, params = self.make_setup()
        protos = PrototypeSet(np.array([], dtype=int), np.array([], dtype=int), 0)
        with pytest.raises(ValueError, match="empty"):
            run_sft(store.train_view(), protos, params, SftConfig(), AugmentConfig())

    def test_published_defaults(self):
        cfg = SftConfig()
        assert cfg.unlabeled_ratio == 7
        assert cfg.unlabeled_weight == 1.0
        assert cfg.confidence_threshold == 0.95

    def test_traces_recorded_per_epoch(self):
        store, params = self.make_setup(1)
        protos = PrototypeSet(np.arange(9), store.hidden_labels[:9].copy(), 9)
        cfg = SftConfig(batch_size=8, unlabeled_ratio=2, epochs=3, seed=4)
        _, traces = run_sft(store.train_view(), protos, params, cfg, AugmentConfig())
        assert len(traces) == 3
        assert all(len(row) == 3 for row in traces)

    def test_improves_over_noisy_cluster_assignments(self):
        # 5%-noisy prototypes: fine-tuned predictions should do at least as
        # well as the raw cluster assignments, median over 3 seeds
        deltas = []
        for seed in range(3):
            store = generate(SynthConfig(
                classes=3, per_class=50, latent_dim=2, ambient_dim=8,
                warp_strength=1.0, noise_sigma=0.15, seed=100 + seed,
            ))
            params = init_params(
                in_dim=8, encoder_widths=[16, 8], proj_hidden=8, proj_dim=4,
                cls_hidden=8, n_classes=3, seed=seed,
            )
            aug = AugmentConfig(
                jitter_sigma_contrastive=0.3, jitter_sigma_weak=0.05,
                dropout_frac_contrastive=0.125,
            )
            run_cpt(store.train_view(), params,
                    CptConfig(temperature=0.2, batch_size=50, epochs=40,
                              learning_rate=0.2, seed=seed), aug)
            emb = embed_all(store.train_view(), params)
            proj = project(emb, DRConfig(method="spectral", n_neighbors=10, out_dim=2))
            model = kmeans(proj.z_low, 3, restarts=5, seed=seed)
            pre_acc, _ = hungarian_accuracy(model.assignments, store.hidden_labels, 3)
            protos = sample_prototypes(proj.z_low, model, 15)
            labels = protos.pseudo_labels.copy()
            flip = np.random.default_rng(seed).integers(0, len(labels))
            labels[flip] = (labels[flip] + 1) % 3  # inject label noise
            noisy = PrototypeSet(protos.indices, labels, protos.n_total)
            cfg = SftConfig(batch_size=15, unlabeled_ratio=4, epochs=20,
                            learning_rate=0.05, ema_decay=0.9, seed=seed)
            run_sft(store.train_view(), noisy, params, cfg, aug)
            pred = predict(store.train_view(), params, use_ema=True)
            post_acc, _ = hungarian_accuracy(pred, store.hidden_labels, 3)
            deltas.append(post_acc - pre_acc)
        assert np.median(deltas) >= 0.0


class TestPredict:
    def test_equal_logits_tie_toward_class_zero(self):
        params = small_params(seed=12)
        for layer in params.cls_head:
            layer.weight[:] = 0.0
            layer.bias[:] = 0.0
        x = np.random.default_rng(13).standard_normal((5, 4))
        np.testing.assert_array_equal(predict(x, params), 0)

    def test_identical_samples_get_identical_predictions(self):
        params = small_params(seed=14)
        x = np.tile(np.random.default_rng(15).standard_normal(4), (6, 1))
        preds = predict(x, params)
        assert len(set(preds.tolist())) == 1

    def test_batch_equals_one_at_a_time(self):
        params = small_params(seed=16)
        x = np.random.default_rng(17).standard_normal((7, 4))
        batch = predict(x, params)
        singles = np.array([predict(x[i : i + 1], params)[0] for i in range(7)])
        np.testing.assert_array_equal(batch, singles)

    def test_ema_prediction_invariant_under_decay_one_updates(self):
        params = small_params(seed=18)
        x = np.random.default_rng(19).standard_normal((6, 4))
        params.ema_decay = 1.0
        base = predict(x, params, use_ema=True)
        params.encoder[0].weight += 0.5  # live moves, shadow must not
        ema_update(params)
        np.testing.assert_array_equal(predict(x, params, use_ema=True), base)

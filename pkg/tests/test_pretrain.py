"""Contrastive loss oracles and the stage-1 training loop."""

import math

import numpy as np
import pytest

from _oracles import max_rel_grad_err, ntxent_scalar
from protoclass.augment import AugmentConfig
from protoclass.data import SynthConfig, generate
from protoclass.net import init_params, named_tensors
from protoclass.pretrain import CptConfig, interleave_views, ntxent_loss, run_cpt


def unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestNtxentClosedForms:
    def test_single_pair_no_negatives_gives_zero(self):
        z = np.array([[1.0, 0.0], [0.6, 0.8]])
        loss, grad = ntxent_loss(z, 0.5)
        assert abs(loss) < 1e-12
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_all_identical_rows_b2(self):
        z = np.tile([[0.6, 0.8]], (4, 1))
        loss, _ = ntxent_loss(z, 0.1)
        assert abs(loss - math.log(3)) < 1e-9

    def test_two_axis_pairs_tau_one(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        loss, _ = ntxent_loss(z, 1.0)
        assert abs(loss - math.log(1 + 2 * math.exp(-1))) < 1e-9


class TestNtxentProperties:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            b = int(rng.integers(2, 6))
            z = unit_rows(rng, 2 * b, int(rng.integers(2, 5)))
            tau = float(rng.uniform(0.1, 1.5))
            loss, _ = ntxent_loss(z, tau)
            assert abs(loss - ntxent_scalar(z, tau)) < 1e-9

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = unit_rows(rng, 8, 3)
            assert ntxent_loss(z, 0.3)[0] >= 0.0

    def test_pair_permutation_invariance(self):
        rng = np.random.default_rng(2)
        z = unit_rows(rng, 10, 4)
        base, _ = ntxent_loss(z, 0.4)
        perm = rng.permutation(5)
        rows = np.empty(10, dtype=int)
        rows[0::2] = 2 * perm
        rows[1::2] = 2 * perm + 1
        permuted, _ = ntxent_loss(z[rows], 0.4)
        assert abs(base - permuted) < 1e-12

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        z = unit_rows(rng, 8, 3)
        theta = 0.7
        rot = np.array([
            [math.cos(theta), -math.sin(theta), 0.0],
            [math.sin(theta), math.cos(theta), 0.0],
            [0.0, 0.0, 1.0],
        ])
        base, _ = ntxent_loss(z, 0.25)
        rotated, _ = ntxent_loss(z @ rot.T, 0.25)
        assert abs(base - rotated) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        z = unit_rows(rng, 8, 4)
        tau = 0.6
        _, grad = ntxent_loss(z, tau)
        eps = 1e-7
        numeric = np.zeros_like(z)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                up, down = z.copy(), z.copy()
                up[i, j] += eps
                down[i, j] -= eps
                numeric[i, j] = (ntxent_loss(up, tau)[0] - ntxent_loss(down, tau)[0]) / (2 * eps)
        assert max_rel_grad_err({"z": grad}, {"z": numeric}) < 1e-4

    def test_non_unit_rows_rejected(self):
        z = np.array([[1.0, 0.0], [0.9, 0.0], [0.0, 1.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="unit"):
            ntxent_loss(z, 0.5)

    def test_odd_row_count_rejected(self):
        with pytest.raises(ValueError, match="even"):
            ntxent_loss(np.eye(3), 0.5)


class TestInterleave:
    def test_row_layout(self):
        a = np.array([[1.0], [2.0]])
        b = np.array([[10.0], [20.0]])
        np.testing.assert_array_equal(
            interleave_views(a, b), [[1.0], [10.0], [2.0], [20.0]]
        )


def tiny_store(seed):
    return generate(SynthConfig(
        classes=3, per_class=32, latent_dim=2, ambient_dim=8,
        warp_strength=1.0, noise_sigma=0.1, seed=seed,
    ))


def tiny_net(store, seed=0):
    return init_params(
        in_dim=store.dim, encoder_widths=[16, 8], proj_hidden=8, proj_dim=4,
        cls_hidden=8, n_classes=3, seed=seed,
    )


class TestRunCpt:
    def test_zero_epochs_leave_params_unchanged(self):
        store = tiny_store(0)
        params = tiny_net(store)
        snapshot = {n: t.copy() for n, t in named_tensors(params)}
        run_cpt(store.train_view(), params, CptConfig(epochs=0, batch_size=16), AugmentConfig())
        for name, t in named_tensors(params):
            assert (t == snapshot[name]).all()

    def test_default_temperature_is_published_value(self):
        assert CptConfig().temperature == 0.1

    def test_batch_larger_than_dataset_is_config_error(self):
        store = tiny_store(1)
        params = tiny_net(store)
        with pytest.raises(ValueError, match="exceeds"):
            run_cpt(store.train_view(), params, CptConfig(batch_size=5000), AugmentConfig())

    def test_loss_decreases_over_training(self):
        # statistical check over 3 seeds: 200-epoch run, final mean < first mean
        wins = 0
        for seed in range(3):
            store = generate(SynthConfig(
                classes=3, per_class=32, latent_dim=2, ambient_dim=8,
                warp_strength=1.0, noise_sigma=0.1, seed=seed,
            ))
            params = tiny_net(store, seed=seed)
            cfg = CptConfig(
                temperature=0.2, batch_size=32, epochs=200,
                learning_rate=0.2, seed=seed,
            )
            aug = AugmentConfig(jitter_sigma_contrastive=0.3, dropout_frac_contrastive=0.125)
            _, trace = run_cpt(store.train_view(), params, cfg, aug)
            if trace[-1] < trace[0]:
                wins += 1
        assert wins == 3

    def test_same_seed_reproduces_trace(self):
        store = tiny_store(4)
        cfg = CptConfig(batch_size=24, epochs=3, seed=9)
        aug = AugmentConfig()
        _, t1 = run_cpt(store.train_view(), tiny_net(store, 1), cfg, aug)
        _, t2 = run_cpt(store.train_view(), tiny_net(store, 1), cfg, aug)
        assert t1 == t2

"""Embedding, silhouette sweep, and centroid-neighbor prototype sampling."""

import numpy as np
import pytest

from protoclass.clustering import ClusterModel, kmeans
from protoclass.data import SynthConfig, generate
from protoclass.metrics import purity
from protoclass.net import forward_encoder, init_params
from protoclass.prototypes import (
    _cluster_quotas,
    embed_all,
    sample_prototypes,
    sweep_silhouette,
)
from protoclass.reduction import DRConfig, EmbeddingSet


def make_params(in_dim, seed=0):
    return init_params(
        in_dim=in_dim, encoder_widths=[8, 6], proj_hidden=6, proj_dim=4,
        cls_hidden=6, n_classes=3, seed=seed,
    )


class TestEmbedAll:
    def test_identity_encoder_returns_raw_samples(self):
        store = generate(SynthConfig(
            classes=2, per_class=10, latent_dim=2, ambient_dim=2,
            warp_strength=0.0, noise_sigma=0.0, seed=1,
        ))
        emb = embed_all(store.train_view(), None)
        np.testing.assert_array_equal(emb.h_high, store.samples)

    def test_identical_samples_have_identical_rows(self):
        params = make_params(4)
        x = np.tile([[0.3, -1.2, 0.7, 2.0]], (3, 1))

        class View:
            samples = x
        emb = embed_all(View(), params)
        assert (emb.h_high[0] == emb.h_high[1]).all()
        assert (emb.h_high[0] == emb.h_high[2]).all()

    def test_matches_one_sample_at_a_time(self):
        rng = np.random.default_rng(2)
        params = make_params(5, seed=3)
        x = rng.standard_normal((5, 5))

        class View:
            samples = x
        emb = embed_all(View(), params)
        for i in range(5):
            single, _ = forward_encoder(params, x[i : i + 1])
            np.testing.assert_allclose(emb.h_high[i], single[0], atol=0)


class TestSweep:
    def test_singleton_grid_returned(self):
        rng = np.random.default_rng(3)
        emb = EmbeddingSet(h_high=rng.standard_normal((30, 4)))
        cfg = DRConfig(method="pca", out_dim=2)
        best, table = sweep_silhouette(emb, [cfg], k_part=2, seed=0, restarts=3)
        assert best is cfg
        assert len(table) == 1
        assert set(table[0]) == {
            "method", "n_neighbors", "out_dim", "min_dist", "metric", "silhouette"
        }

    def test_published_image_benchmark_grid_entry_is_valid(self):
        cfg = DRConfig(method="spectral", n_neighbors=20, out_dim=2, min_dist=0.5,
                       metric="correlation")
        assert cfg.n_neighbors == 20 and cfg.out_dim == 2

    def test_spectral_beats_identity_on_warped_data(self):
        store = generate(SynthConfig(
            classes=3, per_class=60, latent_dim=2, ambient_dim=12,
            warp_strength=2.0, noise_sigma=0.1, seed=5,
        ))
        emb = EmbeddingSet(h_high=store.samples)
        grid = [
            DRConfig(method="identity", out_dim=12),
            DRConfig(method="spectral", n_neighbors=12, out_dim=2),
        ]
        best, table = sweep_silhouette(emb, grid, k_part=3, seed=1, restarts=5)
        assert best.method == "spectral"
        assert table[1]["silhouette"] > table[0]["silhouette"]

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError, match="grid"):
            sweep_silhouette(EmbeddingSet(h_high=np.ones((5, 2))), [], 2)


class TestQuotas:
    def test_even_split(self):
        np.testing.assert_array_equal(_cluster_quotas(np.array([10, 10]), 6), [3, 3])

    def test_remainder_to_largest_first(self):
        quotas = _cluster_quotas(np.array([5, 9, 7]), 7)
        np.testing.assert_array_equal(quotas, [2, 3, 2])

    def test_remainder_tie_goes_to_lower_id(self):
        quotas = _cluster_quotas(np.array([6, 6, 6]), 7)
        np.testing.assert_array_equal(quotas, [3, 2, 2])

    def test_capped_quota_redistributes(self):
        quotas = _cluster_quotas(np.array([2, 8]), 6)
        np.testing.assert_array_equal(quotas, [2, 4])

    def test_total_is_min_of_request_and_population(self):
        quotas = _cluster_quotas(np.array([2, 3]), 50)
        assert quotas.sum() == 5


class TestSamplePrototypes:
    def centroid_model(self):
        z = np.array([[-3.0], [-1.0], [2.0], [5.0], [100.0], [101.0]])
        model = ClusterModel(
            centroids=np.array([[0.0], [100.5]]),
            assignments=np.array([0, 0, 0, 0, 1, 1]),
            inertia=float(39.0 + 0.5),
        )
        return z, model

    def test_nearest_to_centroid_selected(self):
        z, model = self.centroid_model()
        protos = sample_prototypes(z, model, 4)
        chosen = {int(i) for i in protos.indices}
        assert chosen == {1, 2, 4, 5}  # -1 and 2 beat -3 and 5

    def test_pseudo_labels_equal_assignments(self):
        z, model = self.centroid_model()
        protos = sample_prototypes(z, model, 4)
        for idx, label in zip(protos.indices, protos.pseudo_labels):
            assert model.assignments[idx] == label

    def test_request_all_selects_everything(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal((20, 2))
        model = kmeans(z, 3, restarts=3, seed=2)
        protos = sample_prototypes(z, model, 20)
        assert sorted(protos.indices) == list(range(20))

    def test_fewer_than_clusters_rejected(self):
        z, model = self.centroid_model()
        with pytest.raises(ValueError, match="n_proto"):
            sample_prototypes(z, model, 1)

    def test_distance_tie_breaks_toward_lower_index(self):
        z = np.array([[1.0], [-1.0], [9.0], [11.0]])
        model = ClusterModel(
            centroids=np.array([[0.0], [10.0]]),
            assignments=np.array([0, 0, 1, 1]),
            inertia=4.0,
        )
        protos = sample_prototypes(z, model, 2)
        np.testing.assert_array_equal(sorted(protos.indices), [0, 2])

    def test_quota_nearest_matches_brute_force(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((40, 2))
        model = kmeans(z, 4, restarts=3, seed=3)
        protos = sample_prototypes(z, model, 12)
        sizes = np.bincount(model.assignments, minlength=4)
        quotas = _cluster_quotas(sizes, 12)
        selected = set(map(int, protos.indices))
        for c in range(4):
            members = np.nonzero(model.assignments == c)[0]
            dist = np.linalg.norm(z[members] - model.centroids[c], axis=1)
            expect = set(map(int, members[np.lexsort((members, dist))][: quotas[c]]))
            assert expect <= selected
        assert len(selected) == quotas.sum()

    def test_indices_unique(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((30, 2))
        model = kmeans(z, 3, restarts=3, seed=4)
        protos = sample_prototypes(z, model, 15)
        assert len(set(map(int, protos.indices))) == len(protos.indices)


class TestPurityTrend:
    def test_prototype_purity_non_increasing_in_count(self):
        # latent-space analog: overlapping blobs, purity of quota-nearest
        # prototype sets shrinks toward overall clustering purity as the
        # prototype count grows
        k = 4
        wins = 0
        for seed in range(3):
            rng = np.random.default_rng(seed)
            centers = np.array([[0, 0], [4.0, 0], [0, 4.0], [4.0, 4.0]])
            labels = np.repeat(np.arange(k), 60)
            z = centers[labels] + rng.standard_normal((240, 2)) * 1.1
            model = kmeans(z, k, restarts=5, seed=seed)
            purities = []
            for n_proto in (k, 2 * k, 10 * k, 240):
                protos = sample_prototypes(z, model, n_proto)
                purities.append(purity(protos.pseudo_labels, labels[protos.indices]))
            if all(a >= b - 1e-4 for a, b in zip(purities, purities[1:])):
                wins += 1
        assert wins >= 2

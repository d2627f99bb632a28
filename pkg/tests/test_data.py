"""Synthetic generation, CSV ingestion, and the label-hiding contract."""

import dataclasses

import numpy as np
import pytest

from protoclass.data import (
    SampleStore,
    SynthConfig,
    TrainView,
    export_csv,
    generate,
    ingest_csv,
)


class TestGenerate:
    def test_identity_warp_keeps_latent_blobs(self):
        # same seed: the latent draws happen before the warp draws, so the
        # ambient=latent dataset must equal the first columns of a padded one
        base = generate(SynthConfig(
            classes=3, per_class=20, latent_dim=2, ambient_dim=2,
            warp_strength=0.0, noise_sigma=0.0, seed=5,
        ))
        padded = generate(SynthConfig(
            classes=3, per_class=20, latent_dim=2, ambient_dim=6,
            warp_strength=0.0, noise_sigma=0.0, seed=5,
        ))
        np.testing.assert_array_equal(padded.samples[:, :2], base.samples)
        np.testing.assert_array_equal(padded.samples[:, 2:], 0.0)
        np.testing.assert_array_equal(padded.hidden_labels, base.hidden_labels)

    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(classes=4, per_class=25, seed=11)
        a, b = generate(cfg), generate(cfg)
        assert (a.samples == b.samples).all()
        assert (a.hidden_labels == b.hidden_labels).all()

    def test_row_count_and_exact_class_balance(self):
        store = generate(SynthConfig(classes=4, per_class=250, seed=0))
        assert store.samples.shape == (1000, 16)
        counts = np.bincount(store.hidden_labels, minlength=4)
        np.testing.assert_array_equal(counts, [250, 250, 250, 250])

    def test_rings_are_radially_ordered(self):
        store = generate(SynthConfig(
            kind="rings", classes=3, per_class=40, latent_dim=2, ambient_dim=2,
            warp_strength=0.0, noise_sigma=0.0, seed=2,
        ))
        radii = [
            np.linalg.norm(store.samples[store.hidden_labels == c], axis=1).mean()
            for c in range(3)
        ]
        assert radii[0] < radii[1] < radii[2]

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(classes=1)
        with pytest.raises(ValueError):
            SynthConfig(latent_dim=8, ambient_dim=4)
        with pytest.raises(ValueError):
            SynthConfig(kind="moons")


class TestCsvRoundTrip:
    def test_small_labeled_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1.5,2.5,0\n3.5,4.5,1\n5.5,6.5,1\n")
        store = ingest_csv(path, has_labels=True)
        assert store.n == 3 and store.dim == 2
        np.testing.assert_array_equal(store.hidden_labels, [0, 1, 1])

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="no samples"):
            ingest_csv(path)

    def test_ragged_row_reports_line_number(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2\n3,4\n5,6,7\n")
        with pytest.raises(ValueError, match="r.csv:3"):
            ingest_csv(path)

    def test_parse_failure_reports_line_number(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("1,2\nx,4\n")
        with pytest.raises(ValueError, match="p.csv:2"):
            ingest_csv(path)

    def test_export_ingest_round_trip_exact(self, tmp_path):
        store = generate(SynthConfig(classes=3, per_class=10, seed=7))
        path = tmp_path / "x.csv"
        export_csv(store, path, include_labels=True)
        back = ingest_csv(path, has_labels=True)
        np.testing.assert_allclose(back.samples, store.samples, atol=1e-12)
        np.testing.assert_array_equal(back.hidden_labels, store.hidden_labels)


class TestLabelHiding:
    def test_train_view_has_no_label_surface(self):
        store = generate(SynthConfig(classes=2, per_class=5, seed=1))
        view = store.train_view()
        assert isinstance(view, TrainView)
        field_names = {f.name for f in dataclasses.fields(view)}
        assert field_names == {"samples", "name", "seed"}
        assert not hasattr(view, "hidden_labels")
        label_like = [a for a in dir(view) if "label" in a.lower()]
        assert label_like == []

    def test_training_entry_points_take_views_not_stores(self):
        import inspect

        from protoclass.finetune import run_sft
        from protoclass.pretrain import run_cpt
        from protoclass.prototypes import embed_all

        for fn in (run_cpt, run_sft, embed_all):
            first = next(iter(inspect.signature(fn).parameters.values()))
            assert first.annotation in ("TrainView", TrainView)


class TestStoreValidation:
    def test_non_finite_samples_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            SampleStore(np.array([[1.0, np.nan]]))

    def test_label_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            SampleStore(np.ones((3, 2)), hidden_labels=np.array([0, 1]))

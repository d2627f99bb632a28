"""Shipped configuration presets.

``warped_blobs_preset`` is the desk-scale preset the test suite exercises
end to end.  ``cifar10_paper_preset`` documents the published image-benchmark
hyperparameters for users who prepare their own CSV feature dumps; it is not
runnable out of the box (no bundled image data) and is shipped for reference.
"""

from __future__ import annotations


def warped_blobs_preset(seed: int = 0, output_dir: str = "runs/warped_blobs") -> dict:
    return {
        "seed": seed,
        "dataset": {
            "kind": "warped_blobs",
            "classes": 4,
            "per_class": 250,
            "latent_dim": 2,
            "ambient_dim": 16,
            "warp_strength": 2.0,
            "noise_sigma": 0.1,
            "seed": None,
        },
        "cpt": {
            "temperature": 0.2,
            "batch_size": 128,
            "epochs": 60,
            "learning_rate": 0.3,
            "momentum": 0.9,
            "schedule": "constant",
            "seed": None,
            "encoder_widths": [32, 16],
            "proj_hidden": 16,
            "proj_dim": 8,
            "dropout": 0.1,
            "encoder_dropout": 0.0,
            "augment": {
                "mode": "vector",
                "jitter_sigma_contrastive": 0.4,
                "jitter_sigma_weak": 0.05,
                "dropout_frac_contrastive": 0.125,
                "dropout_frac_strong": 0.25,
                "scale_range_strong": [0.6, 1.4],
                "shift_max": 2,
                "cutout_size": 4,
            },
        },
        "cps": {
            "k_part": 4,
            "n_proto": 40,
            "restarts": 10,
            "seed": None,
            "grid": [
                {
                    "method": "spectral",
                    "n_neighbors": 15,
                    "out_dim": 2,
                    "min_dist": 0.0,
                    "metric": "euclidean",
                },
                {
                    "method": "identity",
                    "n_neighbors": 15,
                    "out_dim": 16,
                    "min_dist": 0.0,
                    "metric": "euclidean",
                },
            ],
        },
        "sft": {
            "batch_size": 32,
            "unlabeled_ratio": 7,
            "unlabeled_weight": 1.0,
            "confidence_threshold": 0.95,
            "epochs": 30,
            "learning_rate": 0.03,
            "momentum": 0.9,
            "ema_decay": 0.95,
            "cosine_schedule": True,
            "cls_hidden": 16,
            "seed": None,
        },
        "output": {
            "dir": output_dir,
            "figures": True,
            "embedding_dump": False,
        },
        "ablation": {"skip_cpt": False, "skip_dr": False, "skip_sft": False},
    }


def cifar10_paper_preset(
    csv_path: str = "cifar10_features.csv", output_dir: str = "runs/cifar10"
) -> dict:
    """Published CIFAR-10 hyperparameters, mapped onto this artifact's config."""
    return {
        "seed": 0,
        "dataset": {"csv_path": csv_path, "has_labels": True},
        "cpt": {
            "temperature": 0.1,
            "batch_size": 512,
            "epochs": 1024,
            "learning_rate": 0.6,
            "momentum": 0.9,
            "schedule": "constant",
            "seed": None,
            "encoder_widths": [256, 128],
            "proj_hidden": 128,
            "proj_dim": 64,
            "dropout": 0.1,
            "encoder_dropout": 0.0,
            "augment": {
                "mode": "tiny_image",
                "jitter_sigma_contrastive": 0.1,
                "jitter_sigma_weak": 0.0,
                "dropout_frac_contrastive": 0.1,
                "dropout_frac_strong": 0.2,
                "scale_range_strong": [0.8, 1.2],
                "shift_max": 2,
                "cutout_size": 8,
            },
        },
        "cps": {
            "k_part": 10,
            "n_proto": 250,
            "restarts": 10,
            "seed": None,
            "grid": [
                {
                    "method": "spectral",
                    "n_neighbors": 20,
                    "out_dim": 2,
                    "min_dist": 0.5,
                    "metric": "correlation",
                }
            ],
        },
        "sft": {
            "batch_size": 64,
            "unlabeled_ratio": 7,
            "unlabeled_weight": 1.0,
            "confidence_threshold": 0.95,
            "epochs": 400,
            "learning_rate": 0.03,
            "momentum": 0.9,
            "ema_decay": 0.999,
            "cosine_schedule": True,
            "cls_hidden": 128,
            "seed": None,
        },
        "output": {"dir": output_dir, "figures": True, "embedding_dump": False},
        "ablation": {"skip_cpt": False, "skip_dr": False, "skip_sft": False},
    }

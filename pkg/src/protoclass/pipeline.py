"""Stage orchestration and artifact IO.

Each stage reads its upstream artifacts from the output directory and writes
its own, so chaining the per-stage commands reproduces ``run_pipeline``
exactly: the checkpoint format round-trips bit-exactly and index artifacts
are integers.  All stage seeds derive from the config, so identical
(config, seed) pairs give identical artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .clustering import ClusterModel, kmeans
from .config import CpsSection, CsvDatasetConfig, PipelineConfig
from .data import SampleStore, generate, ingest_csv
from .finetune import predict, run_sft
from .metrics import MetricsReport, report
from .net import ParamSet, init_params
from .prototypes import PrototypeSet, embed_all, sample_prototypes, sweep_silhouette
from .pretrain import run_cpt
from .reduction import DRConfig, EmbeddingSet, project
from .seeding import derive_seed

_INIT_TAG = 51

ARTIFACTS = {
    "checkpoint_cpt": "checkpoint_cpt.cckp",
    "checkpoint_sft": "checkpoint_sft.cckp",
    "prototypes": "prototypes.csv",
    "silhouette_table": "silhouette_table.csv",
    "cluster_assignments": "cluster_assignments.csv",
    "assignments": "assignments.csv",
    "metrics": "metrics.json",
    "loss_cpt": "loss_cpt.csv",
    "loss_sft": "loss_sft.csv",
    "embedding": "embedding.csv",
}


class MissingArtifactError(FileNotFoundError):
    """Required upstream artifact is absent (CLI exit code 1)."""

    def __init__(self, path: Path, hint: str):
        super().__init__(f"missing upstream artifact: {path} ({hint})")
        self.path = path


def artifact_path(cfg: PipelineConfig, key: str) -> Path:
    return Path(cfg.output.dir) / ARTIFACTS[key]


def _ensure_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.output.figures:
        (out / "figures").mkdir(exist_ok=True)
    return out


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg, flush=True)


def build_store(cfg: PipelineConfig) -> SampleStore:
    if isinstance(cfg.dataset, CsvDatasetConfig):
        path = Path(cfg.dataset.csv_path)
        if not path.exists():
            raise MissingArtifactError(path, "dataset CSV")
        return ingest_csv(path, has_labels=cfg.dataset.has_labels)
    return generate(cfg.dataset)


def _init_net(cfg: PipelineConfig, in_dim: int) -> ParamSet:
    return init_params(
        in_dim=in_dim,
        encoder_widths=cfg.cpt.encoder_widths,
        proj_hidden=cfg.cpt.proj_hidden,
        proj_dim=cfg.cpt.proj_dim,
        cls_hidden=cfg.sft.cls_hidden,
        n_classes=cfg.cps.k_part,
        seed=derive_seed(cfg.cpt.train.seed, _INIT_TAG),
        ema_decay=cfg.sft.train.ema_decay,
        encoder_dropout=cfg.cpt.encoder_dropout,
        head_dropout=cfg.cpt.dropout,
    )


def _write_rows(path: Path, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _write_index_csv(path: Path, header: str, pairs) -> None:
    _write_rows(path, header, [f"{int(a)},{int(b)}" for a, b in pairs])


def _read_index_csv(path: Path, header: str) -> np.ndarray:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0] != header:
        raise ValueError(f"{path}: expected header '{header}'")
    return np.array(
        [[int(v) for v in line.split(",")] for line in lines[1:]], dtype=np.int64
    )


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_pretrain(cfg: PipelineConfig, quiet: bool = False) -> None:
    """Stage 1: train encoder + projection head, emit checkpoint and loss trace."""
    out = _ensure_dir(cfg)
    store = build_store(cfg)
    params = _init_net(cfg, store.dim)
    _say(quiet, f"[cpt] training on {store.n} samples for {cfg.cpt.train.epochs} epochs")
    params, trace = run_cpt(store.train_view(), params, cfg.cpt.train, cfg.cpt.augment)
    save_checkpoint(params, artifact_path(cfg, "checkpoint_cpt"))
    _write_rows(
        artifact_path(cfg, "loss_cpt"),
        "epoch,loss",
        [f"{e + 1},{'%.17g' % v}" for e, v in enumerate(trace)],
    )
    if cfg.output.figures and trace:
        from .figures import save_cpt_loss_figure

        save_cpt_loss_figure(trace, out / "figures" / "loss_cpt.png")
    if trace:
        _say(quiet, f"[cpt] loss {trace[0]:.4f} -> {trace[-1]:.4f}")


def _load_encoder_params(cfg: PipelineConfig, hint: str) -> ParamSet:
    path = artifact_path(cfg, "checkpoint_cpt")
    if not path.exists():
        raise MissingArtifactError(path, hint)
    return load_checkpoint(path)


def _stage2_embedding(cfg: PipelineConfig, store: SampleStore) -> EmbeddingSet:
    if cfg.ablation.skip_cpt:
        return embed_all(store.train_view(), None)  # raw sample space
    params = _load_encoder_params(cfg, "run the pretrain stage first")
    return embed_all(store.train_view(), params)


def _stage2_grid(cfg: PipelineConfig, emb: EmbeddingSet) -> list[DRConfig]:
    if cfg.ablation.skip_dr:
        # pass-through: cluster directly in the high-dimensional space
        return [
            DRConfig(
                method="identity",
                n_neighbors=2,
                out_dim=emb.h_high.shape[1],
                metric="euclidean",
                seed=derive_seed(cfg.cps.seed, 7, 0),
            )
        ]
    return cfg.cps.grid


def _run_stage2(
    cfg: PipelineConfig, store: SampleStore
) -> tuple[DRConfig, list[dict], EmbeddingSet, ClusterModel, PrototypeSet]:
    emb = _stage2_embedding(cfg, store)
    grid = _stage2_grid(cfg, emb)
    best, table = sweep_silhouette(
        emb, grid, cfg.cps.k_part, seed=cfg.cps.seed, restarts=cfg.cps.restarts
    )
    best_index = grid.index(best)
    projected = project(emb, best)
    model = kmeans(
        projected.z_low,
        cfg.cps.k_part,
        restarts=cfg.cps.restarts,
        seed=derive_seed(cfg.cps.seed, 31, best_index),
    )
    protos = sample_prototypes(projected.z_low, model, cfg.cps.n_proto)
    return best, table, projected, model, protos


def stage_prototypes(cfg: PipelineConfig, quiet: bool = False) -> None:
    """Stage 2: sweep reductions, cluster, and sample centroid prototypes."""
    out = _ensure_dir(cfg)
    store = build_store(cfg)
    best, table, projected, model, protos = _run_stage2(cfg, store)
    _say(
        quiet,
        f"[cps] best reduction: {best.method} (silhouette "
        f"{max(r['silhouette'] for r in table):.4f}), "
        f"{len(protos.indices)} prototypes",
    )
    _write_rows(
        artifact_path(cfg, "silhouette_table"),
        "method,n_neighbors,out_dim,min_dist,metric,silhouette",
        [
            "%s,%d,%d,%s,%s,%s"
            % (
                r["method"], r["n_neighbors"], r["out_dim"],
                "%.17g" % r["min_dist"], r["metric"], "%.17g" % r["silhouette"],
            )
            for r in table
        ],
    )
    _write_index_csv(
        artifact_path(cfg, "prototypes"),
        "sample_index,cluster_id",
        zip(protos.indices, protos.pseudo_labels),
    )
    _write_index_csv(
        artifact_path(cfg, "cluster_assignments"),
        "sample_index,predicted_cluster",
        enumerate(model.assignments),
    )
    if cfg.output.embedding_dump:
        _write_rows(
            artifact_path(cfg, "embedding"),
            ",".join(f"z{j}" for j in range(projected.z_low.shape[1])),
            [",".join("%.17g" % v for v in row) for row in projected.z_low],
        )
    if cfg.output.figures:
        from .figures import save_embedding_figure, save_silhouette_figure

        save_silhouette_figure(table, out / "figures" / "silhouette.png")
        save_embedding_figure(
            projected.z_low,
            model.assignments,
            model.centroids,
            protos.indices,
            out / "figures" / "embedding.png",
        )


def _load_prototypes(cfg: PipelineConfig) -> PrototypeSet:
    path = artifact_path(cfg, "prototypes")
    if not path.exists():
        raise MissingArtifactError(path, "run the sample-prototypes stage first")
    rows = _read_index_csv(path, "sample_index,cluster_id")
    return PrototypeSet(
        indices=rows[:, 0], pseudo_labels=rows[:, 1], n_total=rows.shape[0]
    )


def stage_finetune(cfg: PipelineConfig, quiet: bool = False) -> None:
    """Stage 3: semi-supervised fine-tuning from the sampled prototypes."""
    out = _ensure_dir(cfg)
    store = build_store(cfg)
    protos = _load_prototypes(cfg)
    if cfg.ablation.skip_cpt:
        params = _init_net(cfg, store.dim)
    else:
        params = _load_encoder_params(cfg, "run the pretrain stage first")
    _say(
        quiet,
        f"[sft] fine-tuning with {len(protos.indices)} prototypes for "
        f"{cfg.sft.train.epochs} epochs",
    )
    params, traces = run_sft(
        store.train_view(), protos, params, cfg.sft.train, cfg.cpt.augment
    )
    save_checkpoint(params, artifact_path(cfg, "checkpoint_sft"))
    _write_rows(
        artifact_path(cfg, "loss_sft"),
        "epoch,proto_loss,consi_loss,total",
        [
            "%d,%s,%s,%s" % (e + 1, "%.17g" % p, "%.17g" % c, "%.17g" % t)
            for e, (p, c, t) in enumerate(traces)
        ],
    )
    if cfg.output.figures and traces:
        from .figures import save_sft_loss_figure

        save_sft_loss_figure(traces, out / "figures" / "loss_sft.png")
    if traces:
        _say(quiet, f"[sft] total loss {traces[0][2]:.4f} -> {traces[-1][2]:.4f}")


def _derive_assignments(cfg: PipelineConfig, store: SampleStore) -> np.ndarray:
    if not cfg.ablation.skip_sft:
        ckpt = artifact_path(cfg, "checkpoint_sft")
        if ckpt.exists():
            params = load_checkpoint(ckpt)
            return predict(store.train_view(), params, use_ema=True)
        raise MissingArtifactError(ckpt, "run the finetune stage first")
    clusters = artifact_path(cfg, "cluster_assignments")
    if clusters.exists():
        rows = _read_index_csv(clusters, "sample_index,predicted_cluster")
        assignments = np.empty(rows.shape[0], dtype=np.int64)
        assignments[rows[:, 0]] = rows[:, 1]
        return assignments
    raise MissingArtifactError(clusters, "run the sample-prototypes stage first")


def stage_evaluate(
    cfg: PipelineConfig, quiet: bool = False, reuse_assignments: bool = True
) -> MetricsReport:
    """Score final assignments against hidden labels; emit metrics.json.

    When ``reuse_assignments`` is set and assignments.csv already exists it
    is scored as-is; otherwise assignments derive from the fine-tuned
    checkpoint (or the stage-2 clusters when sft is skipped).
    """
    out = _ensure_dir(cfg)
    store = build_store(cfg)
    apath = artifact_path(cfg, "assignments")
    if reuse_assignments and apath.exists():
        rows = _read_index_csv(apath, "sample_index,predicted_cluster")
        assignments = np.empty(rows.shape[0], dtype=np.int64)
        assignments[rows[:, 0]] = rows[:, 1]
    else:
        assignments = _derive_assignments(cfg, store)
        _write_index_csv(
            apath, "sample_index,predicted_cluster", enumerate(assignments)
        )
    if store.hidden_labels is None:
        raise ValueError("evaluation requires a dataset with labels")
    result = report(assignments, store.hidden_labels, cfg.cps.k_part)
    artifact_path(cfg, "metrics").write_text(result.to_json(), encoding="utf-8")
    if cfg.output.figures:
        from .figures import save_confusion_figure

        save_confusion_figure(result.confusion, out / "figures" / "confusion.png")
    _say(quiet, f"[eval] accuracy {result.accuracy:.4f}, nmi {result.nmi:.4f}")
    return result


def stage_sweep(cfg: PipelineConfig, quiet: bool = False) -> list[dict]:
    """Standalone silhouette sweep; writes the score table only."""
    out = _ensure_dir(cfg)
    store = build_store(cfg)
    emb = _stage2_embedding(cfg, store)
    best, table = sweep_silhouette(
        emb, _stage2_grid(cfg, emb), cfg.cps.k_part,
        seed=cfg.cps.seed, restarts=cfg.cps.restarts,
    )
    _write_rows(
        artifact_path(cfg, "silhouette_table"),
        "method,n_neighbors,out_dim,min_dist,metric,silhouette",
        [
            "%s,%d,%d,%s,%s,%s"
            % (
                r["method"], r["n_neighbors"], r["out_dim"],
                "%.17g" % r["min_dist"], r["metric"], "%.17g" % r["silhouette"],
            )
            for r in table
        ],
    )
    if cfg.output.figures:
        from .figures import save_silhouette_figure

        save_silhouette_figure(table, out / "figures" / "silhouette.png")
    _say(quiet, f"[sweep] best reduction: {best.method}")
    return table


def run_pipeline(cfg: PipelineConfig, quiet: bool = False) -> MetricsReport:
    """Stage 1 -> Stage 2 -> Stage 3 -> predict -> report, honoring ablations."""
    _ensure_dir(cfg)
    if not cfg.ablation.skip_cpt:
        stage_pretrain(cfg, quiet)
    stage_prototypes(cfg, quiet)
    if not cfg.ablation.skip_sft:
        stage_finetune(cfg, quiet)
    return stage_evaluate(cfg, quiet, reuse_assignments=False)

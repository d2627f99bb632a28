"""Pipeline configuration: a strict JSON document.

Top-level keys: ``dataset``, ``cpt``, ``cps``, ``sft``, ``output`` (all
required), plus optional ``seed`` and ``ablation``.  Unknown keys anywhere
are errors so hyperparameter typos cannot pass silently.  Per-stage seeds
left null derive deterministically from the global seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .data import SynthConfig
from .finetune import SftConfig
from .pretrain import CptConfig
from .reduction import DRConfig
from .seeding import derive_seed

# global-seed derivation tags per stage
_TAGS = {"dataset": 1, "cpt": 2, "cps": 3, "sft": 4}


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 1)."""


@dataclass
class CsvDatasetConfig:
    csv_path: str
    has_labels: bool = False


@dataclass
class CptSection:
    train: CptConfig
    augment: AugmentConfig
    encoder_widths: list[int] = field(default_factory=lambda: [32, 16])
    proj_hidden: int = 16
    proj_dim: int = 8
    dropout: float = 0.1
    encoder_dropout: float = 0.0


@dataclass
class CpsSection:
    grid: list[DRConfig]
    k_part: int = 4
    n_proto: int = 40
    restarts: int = 10
    seed: int = 0


@dataclass
class SftSection:
    train: SftConfig
    cls_hidden: int = 16


@dataclass
class OutputSection:
    dir: str = "run"
    figures: bool = True
    embedding_dump: bool = False


@dataclass
class AblationFlags:
    skip_cpt: bool = False
    skip_dr: bool = False
    skip_sft: bool = False


@dataclass
class PipelineConfig:
    dataset: SynthConfig | CsvDatasetConfig
    cpt: CptSection
    cps: CpsSection
    sft: SftSection
    output: OutputSection
    seed: int = 0
    ablation: AblationFlags = field(default_factory=AblationFlags)


def _take(section: dict, name: str, allowed: set[str]) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{name}' section: {', '.join(sorted(unknown))}"
        )
    return dict(section)


def _require_section(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ConfigError(f"missing required section '{name}'")
    if not isinstance(doc[name], dict):
        raise ConfigError(f"section '{name}' must be an object")
    return doc[name]


def _seeded(value, global_seed: int, stage: str) -> int:
    if value is None:
        return derive_seed(global_seed, _TAGS[stage])
    return int(value)


_DATASET_SYNTH_KEYS = {
    "kind", "classes", "per_class", "latent_dim", "ambient_dim",
    "warp_strength", "noise_sigma", "seed",
}
_DATASET_CSV_KEYS = {"csv_path", "has_labels"}
_AUGMENT_KEYS = {
    "mode", "jitter_sigma_contrastive", "jitter_sigma_weak",
    "dropout_frac_contrastive", "dropout_frac_strong", "scale_range_strong",
    "shift_max", "cutout_size",
}
_CPT_KEYS = {
    "temperature", "batch_size", "epochs", "learning_rate", "momentum",
    "schedule", "seed", "encoder_widths", "proj_hidden", "proj_dim",
    "dropout", "encoder_dropout", "augment",
}
_GRID_KEYS = {"method", "n_neighbors", "out_dim", "min_dist", "metric", "seed"}
_CPS_KEYS = {"k_part", "n_proto", "restarts", "seed", "grid"}
_SFT_KEYS = {
    "batch_size", "unlabeled_ratio", "unlabeled_weight",
    "confidence_threshold", "epochs", "learning_rate", "momentum",
    "ema_decay", "cosine_schedule", "cls_hidden", "seed",
}
_OUTPUT_KEYS = {"dir", "figures", "embedding_dump"}
_ABLATION_KEYS = {"skip_cpt", "skip_dr", "skip_sft"}
_TOP_KEYS = {"dataset", "cpt", "cps", "sft", "output", "seed", "ablation"}


def _parse_dataset(section: dict, global_seed: int):
    if "csv_path" in section:
        fields = _take(section, "dataset", _DATASET_CSV_KEYS)
        return CsvDatasetConfig(**fields)
    fields = _take(section, "dataset", _DATASET_SYNTH_KEYS)
    fields["seed"] = _seeded(fields.get("seed"), global_seed, "dataset")
    try:
        return SynthConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dataset section: {exc}") from None


def _parse_augment(section: dict) -> AugmentConfig:
    fields = _take(section, "cpt.augment", _AUGMENT_KEYS)
    if "scale_range_strong" in fields:
        fields["scale_range_strong"] = tuple(fields["scale_range_strong"])
    try:
        return AugmentConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cpt.augment section: {exc}") from None


def _parse_cpt(section: dict, global_seed: int) -> CptSection:
    fields = _take(section, "cpt", _CPT_KEYS)
    augment = _parse_augment(fields.pop("augment", {}))
    extras = {
        "encoder_widths": list(fields.pop("encoder_widths", [32, 16])),
        "proj_hidden": int(fields.pop("proj_hidden", 16)),
        "proj_dim": int(fields.pop("proj_dim", 8)),
        "dropout": float(fields.pop("dropout", 0.1)),
        "encoder_dropout": float(fields.pop("encoder_dropout", 0.0)),
    }
    fields["seed"] = _seeded(fields.get("seed"), global_seed, "cpt")
    try:
        train = CptConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cpt section: {exc}") from None
    return CptSection(train=train, augment=augment, **extras)


def _parse_cps(section: dict, global_seed: int) -> CpsSection:
    fields = _take(section, "cps", _CPS_KEYS)
    seed = _seeded(fields.get("seed"), global_seed, "cps")
    grid_specs = fields.get("grid")
    if not grid_specs:
        raise ConfigError("cps section needs a non-empty 'grid' list")
    grid = []
    for i, spec in enumerate(grid_specs):
        entry = _take(spec, f"cps.grid[{i}]", _GRID_KEYS)
        entry.setdefault("seed", derive_seed(seed, 7, i))
        try:
            grid.append(DRConfig(**entry))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cps.grid[{i}]: {exc}") from None
    try:
        return CpsSection(
            grid=grid,
            k_part=int(fields.get("k_part", 4)),
            n_proto=int(fields.get("n_proto", 40)),
            restarts=int(fields.get("restarts", 10)),
            seed=seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cps section: {exc}") from None


def _parse_sft(section: dict, global_seed: int) -> SftSection:
    fields = _take(section, "sft", _SFT_KEYS)
    cls_hidden = int(fields.pop("cls_hidden", 16))
    fields["seed"] = _seeded(fields.get("seed"), global_seed, "sft")
    try:
        train = SftConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sft section: {exc}") from None
    return SftSection(train=train, cls_hidden=cls_hidden)


def parse_config(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    for name in ("dataset", "cpt", "cps", "sft", "output"):
        _require_section(doc, name)
    global_seed = int(doc.get("seed", 0))
    output_fields = _take(doc["output"], "output", _OUTPUT_KEYS)
    if "dir" not in output_fields:
        raise ConfigError("output section needs a 'dir' key")
    ablation_fields = _take(doc.get("ablation", {}), "ablation", _ABLATION_KEYS)
    return PipelineConfig(
        dataset=_parse_dataset(doc["dataset"], global_seed),
        cpt=_parse_cpt(doc["cpt"], global_seed),
        cps=_parse_cps(doc["cps"], global_seed),
        sft=_parse_sft(doc["sft"], global_seed),
        output=OutputSection(**output_fields),
        seed=global_seed,
        ablation=AblationFlags(**ablation_fields),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def apply_overrides(
    doc: dict,
    output_dir: str | None = None,
    seed: int | None = None,
    skip_cpt: bool = False,
    skip_dr: bool = False,
    skip_sft: bool = False,
) -> dict:
    """Fold CLI flags into a raw config document (before parsing)."""
    doc = json.loads(json.dumps(doc))  # deep copy
    if output_dir is not None:
        doc.setdefault("output", {})["dir"] = output_dir
    if seed is not None:
        doc["seed"] = seed
    ablation = doc.setdefault("ablation", {})
    if skip_cpt:
        ablation["skip_cpt"] = True
    if skip_dr:
        ablation["skip_dr"] = True
    if skip_sft:
        ablation["skip_sft"] = True
    return doc

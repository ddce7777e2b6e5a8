"""File-to-file pipeline stages used by the CLI.

Every stage reads its inputs from the run directory and writes its products
back there, so any stage can be rerun from the intermediates of the previous
one.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import gen
from .cluster import ClusterAssignment, assign_records, cluster_profiles, profiles_markdown, som_ward_cluster
from .errors import DataError, InvalidConfig, MissingFile, ZeroVariance
from .lexicon import compile_lexicon, load_demo_lexicon, score_work_item, zero_profile
from .model import (
    FeatureMatrix,
    build_feature_matrix,
    denormalize_column,
    ingest_dataset,
    normalization_from_json,
    normalization_to_json,
    write_messages,
    write_work_items,
    zscore_normalize,
)
from .som import SomConfig, SomMap, default_map_shape, init_map, project_attribute, quantization_error, topographic_error, train_batch
from .stats import correlation_matrix, ks_table_markdown, ks_test
from .viz import render_cluster_map, render_component_map, write_svg

log = logging.getLogger(__name__)

DATA_DIR = "data"
WORK_ITEMS_JSON = "work_items.json"
MESSAGES_JSON = "messages.json"
DIAGNOSTICS = "ingest_diagnostics.json"
BEHAVIORS = "behaviors.csv"
SCORING = "scoring.json"
FEATURES = "features.csv"
FEATURES_NORM = "features_normalized.csv"
NORMALIZATION = "normalization.json"
SOM_TASK = "som_task.json"
SOM_BEHAVIOR = "som_behavior.json"
BEHAVIORS_NORM = "behaviors_normalized.csv"
TRAINING = "training.json"
CLUSTERS = "clusters.json"
RECORD_CLUSTERS = "record_clusters.csv"
PROFILES_MD = "cluster_profiles.md"
PROFILES_JSON = "cluster_profiles.json"
KS_JSON = "ks.json"
KS_MD = "ks.md"
CORR_JSON = "correlations.json"
CORR_MD = "correlations.md"
REPORT = "report.md"
MANIFEST = "manifest.json"
CLUSTER_MAP = "cluster_map.svg"


@dataclass
class RunConfig:
    work_items: str | None = None
    messages: str | None = None
    items: int = gen.GenConfig.n_items
    iterations: int = gen.GenConfig.n_iterations
    latent_clusters: int = gen.GenConfig.n_latent_clusters
    words_per_message: int = gen.GenConfig.words_per_message
    lexicon: str | None = None
    rows: int | None = None
    cols: int | None = None
    lattice: str = "hexagonal"
    epochs: int = 50
    sigma0: float | None = None
    sigma_final: float = 0.5
    init: str = "pca_plane"
    k: int | None = None
    weighted: bool = False
    alpha: float = 0.05
    noteworthy_tau: float = 0.30
    ks_mc: int = 0
    behavior_map: str = "overlay"
    strict: bool = False
    reconcile: bool = False
    seed: int = 0

    def __post_init__(self):
        choices = {
            "lattice": ("hexagonal", "rectangular"),
            "init": ("pca_plane", "random"),
            "behavior_map": ("overlay", "separate"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise InvalidConfig(f"{name} must be one of {', '.join(allowed)}")
        if not 0 < self.alpha < 1:
            raise InvalidConfig("alpha must lie in (0, 1)")

    def record(self) -> dict:
        return dataclasses.asdict(self)

    def som_config(self, data: FeatureMatrix) -> SomConfig:
        rows, cols = self.rows, self.cols
        if rows is None or cols is None:
            auto_rows, auto_cols = default_map_shape(data)
            rows = rows or auto_rows
            cols = cols or auto_cols
        return SomConfig(rows, cols, self.lattice, self.epochs, self.sigma0, self.sigma_final, self.init, self.seed)


def _coerce(name: str, raw: str):
    field = next((f for f in fields(RunConfig) if f.name == name), None)
    if field is None:
        raise DataError(f"unknown config key {name!r}")
    text = raw.strip()
    if text.lower() in ("", "none", "null", "auto"):
        return None
    kind = str(field.type)
    if "bool" in kind:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise DataError(f"config key {name!r}: expected a boolean, got {raw!r}")
    try:
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise DataError(f"config key {name!r}: cannot parse {raw!r}") from None
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys are allowed."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(path)
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path.name} line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value)
    return out


# ---------------------------------------------------------------- stages


def stage_generate(cfg: RunConfig, out_dir: Path) -> list[Path]:
    gcfg = gen.GenConfig(
        n_items=cfg.items,
        n_iterations=cfg.iterations,
        n_latent_clusters=cfg.latent_clusters,
        words_per_message=cfg.words_per_message,
        seed=cfg.seed,
    )
    dataset, truth = gen.generate(gcfg)
    return gen.write_generated(dataset, truth, out_dir)


def stage_ingest(cfg: RunConfig, run: Path) -> None:
    if not cfg.work_items:
        raise DataError("no work-item file given (use --work-items)")
    ds = ingest_dataset(
        cfg.work_items,
        cfg.messages,
        n_iterations=cfg.iterations,
        strict=cfg.strict,
        messages_authoritative=cfg.reconcile,
    )
    write_work_items(ds.work_items, run / WORK_ITEMS_JSON)
    write_messages(ds.messages, run / MESSAGES_JSON)
    diag = {
        "n_iterations": ds.n_iterations,
        "accepted_work_items": len(ds.work_items),
        "accepted_messages": len(ds.messages),
        "rejected": [str(d) for d in ds.diagnostics],
        "reconciled_comment_counts": list(ds.reconciled),
    }
    (run / DIAGNOSTICS).write_text(json.dumps(diag, indent=1) + "\n", encoding="utf-8")
    for d in ds.diagnostics:
        log.warning("rejected: %s", d)


def _load_dataset(cfg: RunConfig, run: Path):
    diag_path = run / DIAGNOSTICS
    if not diag_path.exists():
        raise MissingFile(diag_path)
    n_iterations = json.loads(diag_path.read_text(encoding="utf-8"))["n_iterations"]
    return ingest_dataset(
        run / WORK_ITEMS_JSON, run / MESSAGES_JSON, n_iterations=n_iterations, strict=True,
        messages_authoritative=True,
    )


def _lexicon(cfg: RunConfig):
    return compile_lexicon(Path(cfg.lexicon)) if cfg.lexicon else load_demo_lexicon()


def stage_score(cfg: RunConfig, run: Path) -> None:
    ds = _load_dataset(cfg, run)
    lex = _lexicon(cfg)
    by_item = ds.messages_by_item()
    rows = []
    words = []
    unscorable = []
    for item in ds.work_items:
        msgs = [m for m in by_item[item.id] if not m.degenerate]
        try:
            prof = score_work_item(msgs, lex, item.id)
        except DataError:
            prof = zero_profile(item.id, lex)
            unscorable.append(item.id)
        rows.append([prof.percentages[c] for c in lex.categories])
        words.append(prof.word_count)
    matrix = FeatureMatrix(tuple(w.id for w in ds.work_items), lex.categories, np.array(rows, dtype=float).reshape(len(rows), len(lex.categories)))
    matrix.write_csv(run / BEHAVIORS)
    record = {"categories": list(lex.categories), "unscorable": unscorable, "word_counts": words}
    (run / SCORING).write_text(json.dumps(record) + "\n", encoding="utf-8")


def _write_normalized(matrix: FeatureMatrix, csv_path: Path, scaling_path: Path) -> FeatureMatrix:
    norm = zscore_normalize(matrix)
    norm.write_csv(csv_path)
    scaling_path.write_text(json.dumps(normalization_to_json(norm), indent=1) + "\n", encoding="utf-8")
    return norm


def _read_normalized(csv_path: Path, scaling_path: Path) -> FeatureMatrix:
    m = FeatureMatrix.read_csv(csv_path)
    scaling = normalization_from_json(json.loads(scaling_path.read_text(encoding="utf-8")))
    return FeatureMatrix(m.row_ids, m.column_names, m.values, scaling)


def _train(cfg: RunConfig, data: FeatureMatrix) -> tuple[SomMap, dict]:
    som_cfg = cfg.som_config(data)
    initial = init_map(som_cfg, data)
    trained = train_batch(initial, data)
    metrics = {
        "rows": som_cfg.rows,
        "cols": som_cfg.cols,
        "qe_initial": quantization_error(initial, data),
        "qe_final": quantization_error(trained, data),
        "topographic_error": topographic_error(trained, data) if trained.n_nodes > 1 else 0.0,
    }
    return trained, metrics


def stage_train(cfg: RunConfig, run: Path) -> None:
    ds = _load_dataset(cfg, run)
    raw = build_feature_matrix(ds)
    raw.write_csv(run / FEATURES)
    norm = _write_normalized(raw, run / FEATURES_NORM, run / NORMALIZATION)
    som, metrics = _train(cfg, norm)
    som.save(run / SOM_TASK)
    record = {"task": metrics}
    if cfg.behavior_map == "separate":
        behav = FeatureMatrix.read_csv(run / BEHAVIORS)
        bnorm = _write_normalized(behav, run / BEHAVIORS_NORM, run / "behavior_normalization.json")
        bsom, bmetrics = _train(cfg, bnorm)
        bsom.save(run / SOM_BEHAVIOR)
        record["behavior"] = bmetrics
    (run / TRAINING).write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")


def stage_cluster(cfg: RunConfig, run: Path) -> None:
    som = SomMap.load(run / SOM_TASK)
    norm = _read_normalized(run / FEATURES_NORM, run / NORMALIZATION)
    weights = None
    if cfg.weighted:
        from .som import bmu_indices

        weights = np.bincount(bmu_indices(som, norm), minlength=som.n_nodes).astype(float)
    clusters = som_ward_cluster(som, cfg.k, weights=weights)
    clusters.save(run / CLUSTERS)
    labels = assign_records(som, clusters, norm)
    lines = ["row_id,cluster"] + [f"{rid},{lab}" for rid, lab in zip(norm.row_ids, labels)]
    (run / RECORD_CLUSTERS).write_text("\n".join(lines) + "\n", encoding="utf-8")
    raw = FeatureMatrix.read_csv(run / FEATURES)
    behav = _read_behaviors(run)
    extra = {c: behav.column(c) for c in behav.column_names}
    profiles = cluster_profiles(labels, raw, extra)
    (run / PROFILES_MD).write_text(profiles_markdown(profiles), encoding="utf-8")
    (run / PROFILES_JSON).write_text(
        json.dumps([dataclasses.asdict(p) for p in profiles], indent=1) + "\n", encoding="utf-8"
    )


def _read_behaviors(run: Path) -> FeatureMatrix:
    return FeatureMatrix.read_csv(run / BEHAVIORS)


def map_file_names(cfg: RunConfig, run: Path) -> list[str]:
    raw_cols = FeatureMatrix.read_csv(run / FEATURES).column_names
    behav_cols = _read_behaviors(run).column_names
    return [CLUSTER_MAP] + [f"component_{c}.svg" for c in raw_cols] + [f"behavior_{c}.svg" for c in behav_cols]


def stage_render(cfg: RunConfig, run: Path) -> list[Path]:
    som = SomMap.load(run / SOM_TASK)
    clusters = ClusterAssignment.load(run / CLUSTERS)
    norm = _read_normalized(run / FEATURES_NORM, run / NORMALIZATION)
    written = [write_svg(run / CLUSTER_MAP, render_cluster_map(som, clusters, f"Cluster map ({clusters.k} clusters)"))]
    for j, name in enumerate(norm.column_names):
        values = denormalize_column(som.prototypes[:, j], norm.normalization[j])
        doc = render_component_map(som, values, clusters, name)
        written.append(write_svg(run / f"component_{name}.svg", doc))
    behav = _read_behaviors(run)
    if cfg.behavior_map == "separate":
        bsom = SomMap.load(run / SOM_BEHAVIOR)
        bnorm = _read_normalized(run / BEHAVIORS_NORM, run / "behavior_normalization.json")
        for j, name in enumerate(bnorm.column_names):
            values = denormalize_column(bsom.prototypes[:, j], bnorm.normalization[j])
            written.append(write_svg(run / f"behavior_{name}.svg", render_component_map(bsom, values, None, f"{name} (%)")))
    else:
        if behav.row_ids != norm.row_ids:
            raise DataError("behavior rows are not aligned with feature rows")
        for name in behav.column_names:
            values = project_attribute(som, norm, behav.column(name))
            written.append(write_svg(run / f"behavior_{name}.svg", render_component_map(som, values, clusters, f"{name} (%)")))
    return written


def stage_stats(cfg: RunConfig, run: Path) -> None:
    raw = FeatureMatrix.read_csv(run / FEATURES)
    behav = _read_behaviors(run)
    ks_rows: dict = {}
    ks_records = []
    for name in raw.column_names:
        try:
            res = ks_test(raw.column(name), "normal-fitted", mc_replicates=cfg.ks_mc, seed=cfg.seed)
        except (ZeroVariance, DataError) as exc:
            ks_rows[name] = f"not tested: {exc}"
            ks_records.append({"attribute": name, "error": str(exc)})
            continue
        ks_rows[name] = res
        ks_records.append({"attribute": name, **dataclasses.asdict(res)})
    (run / KS_MD).write_text(ks_table_markdown(ks_rows, cfg.alpha), encoding="utf-8")
    (run / KS_JSON).write_text(json.dumps(ks_records, indent=1) + "\n", encoding="utf-8")

    columns = {c: raw.column(c) for c in raw.column_names}
    columns.update({c: behav.column(c) for c in behav.column_names})
    matrix = correlation_matrix(columns, cfg.alpha, cfg.noteworthy_tau)
    (run / CORR_MD).write_text(matrix.markdown, encoding="utf-8")
    (run / CORR_JSON).write_text(matrix.to_json(), encoding="utf-8")


def stage_report(cfg: RunConfig, run: Path) -> None:
    training = json.loads((run / TRAINING).read_text(encoding="utf-8"))
    scoring = json.loads((run / SCORING).read_text(encoding="utf-8"))
    diag = json.loads((run / DIAGNOSTICS).read_text(encoding="utf-8"))
    clusters = ClusterAssignment.load(run / CLUSTERS)
    maps = map_file_names(cfg, run)
    task = training["task"]
    lines = [
        "# Task and behavior map report",
        "",
        f"Work items: {diag['accepted_work_items']} accepted, {len(diag['rejected'])} rejected; "
        f"messages: {diag['accepted_messages']}.",
        "",
        "## Map",
        "",
        f"{task['rows']}x{task['cols']} {cfg.lattice} lattice, {cfg.epochs} epochs, seed {cfg.seed}. "
        f"Quantization error {task['qe_initial']:.4f} -> {task['qe_final']:.4f}; "
        f"topographic error {task['topographic_error']:.4f}.",
        "",
        f"SOM-Ward clusters: k = {clusters.k}" + (" (chosen automatically)" if clusters.auto_k else "") + ".",
        "",
        f"![cluster map]({CLUSTER_MAP})",
        "",
        "## Task attribute component maps",
        "",
    ]
    lines += [f"![{m}]({m})" for m in maps if m.startswith("component_")]
    lines += ["", "## Behavior maps", ""]
    lines += [f"![{m}]({m})" for m in maps if m.startswith("behavior_")]
    if scoring["unscorable"]:
        lines += [
            "",
            f"Note: {len(scoring['unscorable'])} work item(s) had no scorable message text and were "
            "given all-zero behavior percentages.",
        ]
    lines += ["", "## Cluster profiles", "", (run / PROFILES_MD).read_text(encoding="utf-8")]
    lines += ["## Normality (Kolmogorov-Smirnov, fitted normal)", "", (run / KS_MD).read_text(encoding="utf-8")]
    lines += [
        "Parameters are estimated from each sample, so these p-values are anti-conservative.",
        "",
        "## Kendall tau-b correlations",
        "",
        (run / CORR_MD).read_text(encoding="utf-8"),
    ]
    (run / REPORT).write_text("\n".join(lines), encoding="utf-8")


# ---------------------------------------------------------------- manifest


def file_hashes(run: Path) -> dict[str, str]:
    out = {}
    for path in sorted(p for p in run.rglob("*") if p.is_file()):
        rel = path.relative_to(run).as_posix()
        if rel == MANIFEST:
            continue
        out[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def input_hashes(cfg: RunConfig) -> dict[str, str]:
    out = {}
    for path in (cfg.work_items, cfg.messages, cfg.lexicon):
        if path and Path(path).is_file():
            out[Path(path).name] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return out


def write_manifest(
    cfg: RunConfig, run: Path, complete: bool, failed_stage: str | None = None, inputs: dict | None = None
) -> dict:
    files = file_hashes(run)
    digest = hashlib.sha256("".join(f"{k}\t{v}\n" for k, v in files.items()).encode()).hexdigest()
    record = {
        "complete": complete,
        "failed_stage": failed_stage,
        "seed": cfg.seed,
        "config": cfg.record(),
        "inputs": inputs or {},
        "files": files,
        "digest": digest,
    }
    (run / MANIFEST).write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    return record


class StageFailed(Exception):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


REPORT_STAGES = (
    ("ingest", stage_ingest),
    ("score", stage_score),
    ("train", stage_train),
    ("cluster", stage_cluster),
    ("render", stage_render),
    ("stats", stage_stats),
    ("report", stage_report),
)


def run_report(cfg: RunConfig, run: Path) -> dict:
    """Full pipeline into ``run``; generates data first when no input is given."""
    run.mkdir(parents=True, exist_ok=True)
    if not cfg.work_items:
        try:
            stage_generate(cfg, run / DATA_DIR)
        except Exception as exc:
            write_manifest(cfg, run, False, "generate")
            raise StageFailed("generate", exc) from exc
        cfg = dataclasses.replace(
            cfg,
            work_items=f"{run / DATA_DIR / gen.WORK_ITEMS_FILE}",
            messages=f"{run / DATA_DIR / gen.MESSAGES_FILE}",
        )
        recorded = dataclasses.replace(cfg, work_items=None, messages=None)
    else:
        # file names only, so the manifest does not depend on where the inputs live
        recorded = dataclasses.replace(
            cfg,
            work_items=Path(cfg.work_items).name,
            messages=Path(cfg.messages).name if cfg.messages else None,
            lexicon=Path(cfg.lexicon).name if cfg.lexicon else None,
        )
    inputs = input_hashes(cfg) if recorded.work_items else {}
    for name, stage in REPORT_STAGES:
        try:
            stage(cfg, run)
        except Exception as exc:
            write_manifest(recorded, run, False, name, inputs)
            raise StageFailed(name, exc) from exc
    return write_manifest(recorded, run, True, inputs=inputs)

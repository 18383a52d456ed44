"""Cross-validated experiment runner.

For every (input mask, fold) cell: preprocess (or load cached keyframes),
extract HOG features, compress with zero-drop + PCA, drive the reservoir,
concatenate the Timesteps Of Interest, train the ridge readout on the train
split and classify the test split. Aggregates mean/std accuracy over the
mask x fold grid, a pooled confusion matrix, and inference throughput.

baseline_mode removes the reservoir: TOI concatenation is applied directly
to the compressed feature vectors, everything else unchanged.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import ACTIONS, DatasetManifest, FoldSplit, kfold_splits, scenario_subset
from .errors import ConfigError, DataError
from .features import (FeatureMatrix, HogParams, PcaModel, drop_zero_features,
                       hog, pca_fit, pca_transform)
from .preprocess import PreprocessParams, load_or_preprocess
from .readout import (DesignMatrix, ReadoutModel, ToiSet, classify_batch,
                      concat_toi, one_hot, train_ridge)
from .reservoir import ReservoirConfig, generate_mask, run_dataset


@dataclass
class ExperimentConfig:
    manifest: DatasetManifest
    reservoir: ReservoirConfig
    toi: ToiSet
    lam: float
    scenario: str = "full"          # one of s1..s4 or "full"
    variability: float = 0.75
    k_folds: int = 4
    mask_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    reset: bool = True
    baseline_mode: bool = False
    split_seed: int = 0
    subject_folds: bool = False
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    hog: HogParams = field(default_factory=HogParams)
    fit_scope: str = "all"          # "all" (paper-faithful) or "train" (leakage-safe)
    cache_dir: Path | None = None
    measure_fps: bool = True

    def __post_init__(self):
        if not self.mask_seeds:
            raise ConfigError("at least one mask seed is required")
        if self.fit_scope not in ("all", "train"):
            raise ConfigError(f"unknown fit_scope {self.fit_scope!r}")


@dataclass
class CellResult:
    mask_seed: int | None   # None in baseline mode
    fold: int
    test_indices: np.ndarray
    predictions: np.ndarray
    train_seconds: float

    def accuracy(self, labels: np.ndarray) -> float:
        return float(np.mean(self.predictions == labels[self.test_indices]))


@dataclass
class ExperimentReport:
    mean_accuracy: float
    std_accuracy: float            # over the mask x fold grid
    std_over_masks: float          # std of per-mask mean accuracies
    std_over_folds: float          # std of per-fold mean accuracies
    confusion: np.ndarray          # pooled over all cells, counts[true][pred]
    per_cell: list[tuple[int | None, int, float]]  # (mask_seed, fold, accuracy)
    train_seconds: float
    n_sequences: int
    fps_inference: float | None = None
    fps_amortized: float | None = None
    config_hash: str = ""

    @property
    def accuracy_from_confusion(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())


def confusion_matrix(predictions, labels, n_classes: int = len(ACTIONS)) -> np.ndarray:
    """Counts[true][pred] over paired predictions and labels."""
    predictions = np.asarray(predictions, dtype=np.intp)
    labels = np.asarray(labels, dtype=np.intp)
    if predictions.shape != labels.shape:
        raise DataError(f"{predictions.shape} predictions vs {labels.shape} labels")
    for name, arr in (("prediction", predictions), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise DataError(f"{name} outside 0..{n_classes - 1}")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (labels, predictions), 1)
    return out


def evaluate_cells(inputs: np.ndarray, labels: np.ndarray, splits: list[FoldSplit],
                   rc_cfg: ReservoirConfig, toi: ToiSet, lam: float,
                   mask_seeds: tuple[int, ...] = (1, 2, 3, 4, 5),
                   reset: bool = True, baseline_mode: bool = False,
                   class_names: tuple[str, ...] = ACTIONS,
                   done: dict | None = None,
                   on_cell=None) -> list[CellResult]:
    """Run the (mask x fold) grid on ready-made per-sequence inputs (S, T, K).

    In baseline mode the grid collapses to folds only (no mask is involved)
    and the TOI concatenation reads the inputs themselves. ``done`` maps
    (mask_seed, fold) to precomputed CellResult for resumption.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise DataError(f"expected (S, T, K) inputs, got {inputs.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    n_classes = len(class_names)
    targets_all = one_hot(labels, n_classes)
    cells: list[CellResult] = []
    seeds: tuple[int | None, ...] = (None,) if baseline_mode else mask_seeds
    for seed in seeds:
        if baseline_mode:
            states = inputs
        else:
            cfg = replace(rc_cfg, mask_seed=seed)
            mask = generate_mask(cfg.n, inputs.shape[2], seed)
            states = run_dataset(cfg, mask, inputs, reset=reset)
        concatenated = concat_toi(states, toi)
        for split in splits:
            key = (seed, split.fold_index)
            if done is not None and key in done:
                cells.append(done[key])
                continue
            start = time.perf_counter()
            design = DesignMatrix(concatenated[split.train_indices],
                                  targets_all[split.train_indices])
            model = train_ridge(design, lam, toi=toi, class_names=class_names)
            train_s = time.perf_counter() - start
            preds = classify_batch(model, concatenated[split.test_indices])
            cell = CellResult(seed, split.fold_index, split.test_indices,
                              preds, train_s)
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells


def summarize_cells(cells: list[CellResult], labels: np.ndarray,
                    n_classes: int = len(ACTIONS),
                    config_hash: str = "") -> ExperimentReport:
    labels = np.asarray(labels, dtype=np.intp)
    if np.unique(labels).size < 2:
        warnings.warn("degenerate confusion matrix: fewer than two classes present")
    accs = np.array([c.accuracy(labels) for c in cells])
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for c in cells:
        confusion += confusion_matrix(c.predictions, labels[c.test_indices], n_classes)
    mask_ids = sorted({c.mask_seed for c in cells}, key=lambda s: (s is None, s))
    fold_ids = sorted({c.fold for c in cells})
    by_mask = [np.mean([c.accuracy(labels) for c in cells if c.mask_seed == m])
               for m in mask_ids]
    by_fold = [np.mean([c.accuracy(labels) for c in cells if c.fold == f])
               for f in fold_ids]
    return ExperimentReport(
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
        std_over_masks=float(np.std(by_mask)),
        std_over_folds=float(np.std(by_fold)),
        confusion=confusion,
        per_cell=[(c.mask_seed, c.fold, c.accuracy(labels)) for c in cells],
        train_seconds=float(sum(c.train_seconds for c in cells)),
        n_sequences=int(len(labels)),
        config_hash=config_hash,
    )


# --- full pipeline ------------------------------------------------------------


def sequence_hog_matrix(manifest: DatasetManifest, pre_params: PreprocessParams,
                        hog_params: HogParams,
                        cache_dir: Path | None = None) -> FeatureMatrix:
    """HOG rows for every (sequence, keyframe) of the manifest, in manifest
    order with keyframes contiguous per sequence."""
    by_key = manifest.by_key()
    rows = []
    row_index = []
    for rec in manifest.records:
        ks = load_or_preprocess(rec, pre_params, by_key, cache_dir)
        for i, frame in enumerate(ks.frames):
            rows.append(hog(frame, hog_params))
            row_index.append((rec.key, i))
    return FeatureMatrix(np.array(rows), row_index)


def compress_features(featmat: FeatureMatrix, variability: float,
                      fit_rows: np.ndarray | None = None
                      ) -> tuple[PcaModel, np.ndarray]:
    """Zero-drop + PCA. ``fit_rows`` restricts the PCA fit (leakage-safe
    mode); the transform is always applied to all rows."""
    reduced, kept = drop_zero_features(featmat)
    fit_values = reduced.values if fit_rows is None else reduced.values[fit_rows]
    model = pca_fit(fit_values, variability, kept_indices=kept)
    compressed = pca_transform(model, reduced.values)
    return model, compressed


def run_experiment(cfg: ExperimentConfig,
                   cells_cache: Path | None = None) -> ExperimentReport:
    """Full cross-validated experiment per the configuration."""
    manifest = cfg.manifest
    if cfg.scenario != "full":
        manifest = scenario_subset(manifest, cfg.scenario)
    if len(manifest) == 0:
        raise DataError("empty manifest")
    labels = manifest.labels()
    n_seq = len(manifest)
    featmat = sequence_hog_matrix(manifest, cfg.preprocess, cfg.hog, cfg.cache_dir)
    n_steps = featmat.values.shape[0] // n_seq
    splits = kfold_splits(manifest, cfg.k_folds, cfg.split_seed,
                          by_subject=cfg.subject_folds)
    done = _load_cells(cells_cache) if cells_cache else None
    writer = _cell_writer(cells_cache) if cells_cache else None
    pca_model: PcaModel | None = None
    if cfg.fit_scope == "all":
        pca_model, compressed = compress_features(featmat, cfg.variability)
        inputs = compressed.reshape(n_seq, n_steps, -1)
        cells = evaluate_cells(inputs, labels, splits, cfg.reservoir, cfg.toi,
                               cfg.lam, cfg.mask_seeds, cfg.reset,
                               cfg.baseline_mode, manifest.class_names,
                               done=done, on_cell=writer)
    else:
        cells = []
        for split in splits:
            fit_rows = (split.train_indices[:, None] * n_steps
                        + np.arange(n_steps)).ravel()
            pca_model, compressed = compress_features(featmat, cfg.variability,
                                                      fit_rows=fit_rows)
            inputs = compressed.reshape(n_seq, n_steps, -1)
            cells.extend(evaluate_cells(inputs, labels, [split], cfg.reservoir,
                                        cfg.toi, cfg.lam, cfg.mask_seeds,
                                        cfg.reset, cfg.baseline_mode,
                                        manifest.class_names,
                                        done=done, on_cell=writer))
    report = summarize_cells(cells, labels, len(manifest.class_names))
    if cfg.measure_fps:
        if cfg.fit_scope != "all":
            pca_model = None  # deployment model fits PCA on everything
        pipeline = build_pipeline(cfg, featmat, labels, pca_model)
        result = measure_throughput(pipeline, featmat.values.reshape(n_seq, n_steps, -1))
        report.fps_inference = result.fps
        report.fps_amortized = result.fps_amortized
    return report


def baseline_linear(cfg: ExperimentConfig,
                    cells_cache: Path | None = None) -> ExperimentReport:
    """The no-reservoir control: same pipeline, TOI concatenation applied
    directly to the compressed feature vectors."""
    return run_experiment(replace(cfg, baseline_mode=True, measure_fps=False),
                          cells_cache=cells_cache)


# --- inference pipeline and throughput ----------------------------------------


@dataclass
class InferencePipeline:
    pca: PcaModel
    readout: ReadoutModel
    reservoir_cfg: ReservoirConfig | None = None  # None: linear baseline
    mask: np.ndarray | None = None

    def predict_sequence(self, raw_hog_block: np.ndarray) -> int:
        compressed = self.pca.transform_raw(raw_hog_block)
        if self.reservoir_cfg is None:
            states = compressed[None, :, :]
        else:
            states = run_dataset(self.reservoir_cfg, self.mask,
                                 compressed[None, :, :], reset=True)
        vec = concat_toi(states, self.readout.toi)
        return int(classify_batch(self.readout, vec)[0])


@dataclass
class ThroughputResult:
    fps: float                 # median over runs
    fps_amortized: float       # with the per-frame preprocessing charge added
    per_run: list[float]
    n_frames: int


def build_pipeline(cfg: ExperimentConfig, featmat: FeatureMatrix,
                   labels: np.ndarray, pca_model: PcaModel | None = None
                   ) -> InferencePipeline:
    """Deployment model: PCA on everything, readout trained on everything."""
    n_seq = len(labels)
    n_steps = featmat.values.shape[0] // n_seq
    if pca_model is None:
        pca_model, compressed = compress_features(featmat, cfg.variability)
    else:
        compressed = pca_model.transform_raw(featmat.values)
    inputs = compressed.reshape(n_seq, n_steps, -1)
    if cfg.baseline_mode:
        states = inputs
        rc_cfg = mask = None
    else:
        rc_cfg = replace(cfg.reservoir, mask_seed=cfg.mask_seeds[0])
        mask = generate_mask(rc_cfg.n, inputs.shape[2], rc_cfg.mask_seed)
        states = run_dataset(rc_cfg, mask, inputs, reset=cfg.reset)
    design = DesignMatrix(concat_toi(states, cfg.toi), one_hot(labels, len(ACTIONS)))
    model = train_ridge(design, cfg.lam, toi=cfg.toi)
    return InferencePipeline(pca_model, model, rc_cfg, mask)


def measure_throughput(pipeline: InferencePipeline, raw_hog_sequences: np.ndarray,
                       runs: int = 5, min_frames: int = 1000,
                       preprocess_s_per_frame: float = 0.0) -> ThroughputResult:
    """Frames per second of the trained pipeline: feature transform +
    reservoir + readout, median over ``runs`` passes of at least
    ``min_frames`` frames. Training is excluded; ``preprocess_s_per_frame``
    adds an amortized preprocessing charge for the end-to-end figure."""
    raw_hog_sequences = np.asarray(raw_hog_sequences, dtype=np.float64)
    if raw_hog_sequences.ndim != 3:
        raise DataError(f"expected (S, T, D) sequences, got {raw_hog_sequences.shape}")
    n_seq, n_steps, _ = raw_hog_sequences.shape
    needed = max(1, -(-min_frames // n_steps))
    order = [s % n_seq for s in range(needed)]
    n_frames = needed * n_steps
    per_run = []
    for _ in range(runs):
        start = time.perf_counter()
        for s in order:
            pipeline.predict_sequence(raw_hog_sequences[s])
        elapsed = time.perf_counter() - start
        per_run.append(n_frames / elapsed)
    fps = float(np.median(per_run))
    amortized = 1.0 / (1.0 / fps + preprocess_s_per_frame)
    return ThroughputResult(fps, float(amortized), per_run, n_frames)


# --- cell cache and report files -----------------------------------------------


def _load_cells(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            seed = rec["mask_seed"]
            cell = CellResult(seed, rec["fold"],
                              np.asarray(rec["test_indices"], dtype=np.intp),
                              np.asarray(rec["predictions"], dtype=np.intp),
                              rec["train_seconds"])
            done[(seed, rec["fold"])] = cell
    return done


def _cell_writer(path: Path):
    def write(cell: CellResult) -> None:
        rec = {"mask_seed": cell.mask_seed, "fold": cell.fold,
               "test_indices": [int(i) for i in cell.test_indices],
               "predictions": [int(p) for p in cell.predictions],
               "train_seconds": cell.train_seconds}
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec) + "\n")
    return write


def format_report(report: ExperimentReport, class_names=ACTIONS) -> str:
    """Human-readable experiment summary."""
    lines = [
        f"sequences:        {report.n_sequences}",
        f"mean accuracy:    {report.mean_accuracy * 100:.2f}%",
        f"std (mask,fold):  {report.std_accuracy * 100:.2f}",
        f"std over masks:   {report.std_over_masks * 100:.2f}",
        f"std over folds:   {report.std_over_folds * 100:.2f}",
        f"train seconds:    {report.train_seconds:.3f}",
    ]
    if report.fps_inference is not None:
        lines.append(f"inference fps:    {report.fps_inference:.1f}")
        lines.append(f"amortized fps:    {report.fps_amortized:.1f}")
    lines.append("confusion (rows=true, cols=pred):")
    width = max(len(name) for name in class_names)
    for i, name in enumerate(class_names):
        row = " ".join(f"{v:5d}" for v in report.confusion[i])
        lines.append(f"  {name:<{width}} {row}")
    lines.append("per-cell accuracy (mask_seed, fold, accuracy):")
    for seed, fold, acc in report.per_cell:
        lines.append(f"  {seed} {fold} {acc:.4f}")
    return "\n".join(lines) + "\n"


def machine_report(report: ExperimentReport) -> str:
    """Key-value report: mean_acc, std_acc, fps, train_s, confusion, hash."""
    confusion = " ".join(str(int(v)) for v in report.confusion.ravel())
    fps = report.fps_inference if report.fps_inference is not None else 0.0
    return (f"mean_acc={report.mean_accuracy!r}\n"
            f"std_acc={report.std_accuracy!r}\n"
            f"fps={fps!r}\n"
            f"train_s={report.train_seconds!r}\n"
            f"confusion={confusion}\n"
            f"config_hash={report.config_hash}\n")

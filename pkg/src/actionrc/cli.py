"""Command-line front end.

Subcommands: preprocess, features, train, eval, hyperopt, baseline,
toi-search. Each run resolves a config (file + --set overrides), logs it
with its hash, and writes artifacts under runs/<hash>/. Exit codes:
0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import dataset as ds
from . import experiment as ex
from . import features as ft
from . import hyperopt as ho
from . import preprocess as pp
from . import readout as ro
from . import reservoir as rv
from .config import RunConfig, load_config
from .errors import ActionRCError, CacheError, ConfigError, DataError, NumericError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are exit code 1, not argparse's 2
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="actionrc",
                     description="Reservoir-computing human action recognition")
    parser.add_argument("command",
                        choices=["preprocess", "features", "train", "eval",
                                 "hyperopt", "baseline", "toi-search"])
    parser.add_argument("--config", type=Path, default=None, help="config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--scenario", choices=["s1", "s2", "s3", "s4", "full"],
                        default=None)
    parser.add_argument("--seed", type=int, default=None, help="global seed")
    parser.add_argument("--cache", type=Path, default=None, help="cache directory")
    return parser


def _resolve(args) -> RunConfig:
    overrides = list(args.set)
    if args.scenario is not None:
        overrides.append(f"dataset.scenario={args.scenario}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.cache is not None:
        overrides.append(f"run.cache_dir={args.cache}")
    return load_config(args.config, overrides)


# --- config to component parameters -----------------------------------------


def _pre_params(cfg: RunConfig) -> pp.PreprocessParams:
    return pp.PreprocessParams(sigma=cfg["preprocess.sigma"],
                               threshold=cfg["preprocess.threshold"],
                               min_blob=cfg["preprocess.min_blob"],
                               connectivity=cfg["preprocess.connectivity"])


def _hog_params(cfg: RunConfig) -> ft.HogParams:
    return ft.HogParams(cell=cfg["features.cell"], block=cfg["features.block"],
                        bins=cfg["features.bins"], voting=cfg["features.voting"])


def _rc_config(cfg: RunConfig) -> rv.ReservoirConfig:
    return rv.ReservoirConfig(n=cfg["reservoir.n"], alpha=cfg["reservoir.alpha"],
                              beta=cfg["reservoir.beta"],
                              mask_seed=cfg["eval.mask_seeds"][0],
                              reset_mode=cfg["reservoir.reset_mode"],
                              washout_steps=cfg["reservoir.washout_steps"],
                              strict_ring=cfg["reservoir.strict_ring"])


def _manifest(cfg: RunConfig) -> ds.DatasetManifest:
    path = cfg["dataset.manifest"]
    if not path:
        raise ConfigError("dataset.manifest is required for this command")
    manifest = ds.load_manifest(path, frame_size=None)
    if cfg["dataset.complete"]:
        manifest = ds.complete_dataset(manifest, cfg["dataset.completion_seed"])
    if cfg["dataset.scenario"] != "full":
        manifest = ds.scenario_subset(manifest, cfg["dataset.scenario"])
    return manifest


def _experiment_config(cfg: RunConfig, manifest: ds.DatasetManifest,
                       baseline: bool = False) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(
        manifest=manifest,
        reservoir=_rc_config(cfg),
        toi=ro.ToiSet.of(cfg["readout.toi"]),
        lam=cfg["readout.lambda"],
        scenario="full",  # subsetting already applied by _manifest
        variability=cfg["features.variability"],
        k_folds=cfg["dataset.k_folds"],
        mask_seeds=cfg["eval.mask_seeds"],
        reset=cfg["reservoir.reset"],
        baseline_mode=baseline,
        split_seed=cfg["dataset.split_seed"],
        subject_folds=cfg["dataset.subject_folds"],
        preprocess=_pre_params(cfg),
        hog=_hog_params(cfg),
        fit_scope=cfg["features.fit_scope"],
        cache_dir=Path(cfg["run.cache_dir"]),
        measure_fps=cfg["eval.throughput"],
    )


def _feature_stage_hash(cfg: RunConfig) -> str:
    keys = sorted(("dataset.manifest", "dataset.scenario", "dataset.complete",
                   "dataset.completion_seed"))
    keys += [k for k in sorted(cfg.keys()) if k.startswith(("preprocess.", "features."))]
    text = "".join(f"{k}={cfg.text(k)}\n" for k in keys)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _run_dir(cfg: RunConfig) -> Path:
    run_dir = Path(cfg["run.out_dir"]) / cfg.hash
    run_dir.mkdir(parents=True, exist_ok=True)
    config_path = run_dir / "config.txt"
    text = cfg.resolved_text()
    if config_path.exists():
        if config_path.read_text(encoding="utf-8") != text:
            raise CacheError(f"{config_path} does not match the current config "
                             f"for hash {cfg.hash}; refusing to reuse the run dir")
    else:
        config_path.write_text(text, encoding="utf-8")
    return run_dir


# --- commands ----------------------------------------------------------------


def cmd_preprocess(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    params = _pre_params(cfg)
    cache_dir = Path(cfg["run.cache_dir"])
    cache_dir.mkdir(parents=True, exist_ok=True)
    by_key = manifest.by_key()
    computed = hits = 0
    failures = []
    with FileLock(cache_dir / ".lock"):
        for rec in manifest.records:
            path = pp.keyframe_cache_path(cache_dir, rec, params)
            if path.exists():
                hits += 1
                continue
            try:
                ks = pp.preprocess_sequence(rec, params, by_key)
            except ActionRCError as exc:
                failures.append(f"{rec.key}: {exc}")
                continue
            pp.save_keyframes(path, ks)
            computed += 1
    print(f"preprocess: {computed} computed, {hits} cache hits, "
          f"{len(manifest)} records (cache {cache_dir}, params {params.hash})")
    if failures:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
        raise DataError(f"{len(failures)} records failed preprocessing")
    return 0


def _load_keyframes_or_die(cfg: RunConfig, manifest: ds.DatasetManifest,
                           params: pp.PreprocessParams) -> list[pp.KeyframeSet]:
    cache_dir = Path(cfg["run.cache_dir"])
    sets = []
    for rec in manifest.records:
        path = pp.keyframe_cache_path(cache_dir, rec, params)
        if not path.exists():
            raise DataError(f"keyframe cache missing for {rec.key} "
                            f"(params {params.hash}); run `actionrc preprocess` first")
        sets.append(pp.load_keyframes(path))
    return sets


def cmd_features(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    pre_params = _pre_params(cfg)
    hog_params = _hog_params(cfg)
    variability = cfg["features.variability"]
    keyframe_sets = _load_keyframes_or_die(cfg, manifest, pre_params)
    rows, row_index = [], []
    for rec, ks in zip(manifest.records, keyframe_sets):
        for i, frame in enumerate(ks.frames):
            rows.append(ft.hog(frame, hog_params))
            row_index.append((rec.key, i))
    featmat = ft.FeatureMatrix(np.array(rows), row_index)
    d_raw = featmat.values.shape[1]
    model, compressed = ex.compress_features(featmat, variability)
    stage_hash = _feature_stage_hash(cfg)
    cache_dir = Path(cfg["run.cache_dir"])
    with FileLock(cache_dir / ".lock"):
        ft.save_features(cache_dir / f"features_{stage_hash}.fc", compressed,
                         variability, stage_hash, row_index)
        ft.save_pca(cache_dir / f"pca_{stage_hash}.npz", model)
    print(f"features: {featmat.values.shape[0]} rows, {d_raw} raw dims, "
          f"{model.kept_indices.size} nonzero, {model.n_components} components "
          f"at {variability:.2f} variability (cache key {stage_hash})")
    return 0


def _load_compressed_or_die(cfg: RunConfig) -> tuple[ft.PcaModel, np.ndarray]:
    stage_hash = _feature_stage_hash(cfg)
    cache_dir = Path(cfg["run.cache_dir"])
    fc = cache_dir / f"features_{stage_hash}.fc"
    pc = cache_dir / f"pca_{stage_hash}.npz"
    if not fc.exists() or not pc.exists():
        raise DataError(f"feature cache missing for key {stage_hash}; "
                        "run `actionrc features` first")
    values, _, _, _ = ft.load_features(fc, expect_params_hash=stage_hash)
    return ft.load_pca(pc), values


def cmd_train(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    pca_model, compressed = _load_compressed_or_die(cfg)
    labels = manifest.labels()
    n_seq = len(manifest)
    if compressed.shape[0] % n_seq:
        raise CacheError("feature cache rows do not divide into manifest sequences")
    inputs = compressed.reshape(n_seq, compressed.shape[0] // n_seq, -1)
    toi = ro.ToiSet.of(cfg["readout.toi"])
    rc_cfg = _rc_config(cfg)
    mask = rv.generate_mask(rc_cfg.n, inputs.shape[2], rc_cfg.mask_seed)
    start = time.perf_counter()
    states = rv.run_dataset(rc_cfg, mask, inputs, reset=cfg["reservoir.reset"])
    design = ro.DesignMatrix(ro.concat_toi(states, toi),
                             ro.one_hot(labels, len(manifest.class_names)))
    model = ro.train_ridge(design, cfg["readout.lambda"], toi=toi,
                           class_names=manifest.class_names)
    train_s = time.perf_counter() - start
    run_dir = _run_dir(cfg)
    ro.save_model(run_dir / "model.bin", model, config_hash=cfg.hash)
    train_acc = float(np.mean(ro.classify_batch(model, design.X) == labels))
    print(f"train: {n_seq} sequences, {train_s:.2f} s, train accuracy "
          f"{train_acc * 100:.2f}%, model {run_dir / 'model.bin'}")
    return 0


def _write_report(run_dir: Path, prefix: str, report: ex.ExperimentReport) -> None:
    (run_dir / f"{prefix}report.txt").write_text(ex.format_report(report),
                                                 encoding="utf-8")
    (run_dir / f"{prefix}report.kv").write_text(ex.machine_report(report),
                                                encoding="utf-8")
    confusion = "\n".join(" ".join(str(v) for v in row) for row in report.confusion)
    (run_dir / f"{prefix}confusion.txt").write_text(confusion + "\n", encoding="utf-8")


def _eval_command(cfg: RunConfig, baseline: bool) -> int:
    prefix = "baseline-" if baseline else ""
    run_dir = _run_dir(cfg)
    report_kv = run_dir / f"{prefix}report.kv"
    if report_kv.exists():
        print((run_dir / f"{prefix}report.txt").read_text(encoding="utf-8"), end="")
        print(f"(reused existing report {report_kv})")
        return 0
    manifest = _manifest(cfg)
    exp_cfg = _experiment_config(cfg, manifest, baseline=baseline)
    cells_cache = run_dir / f"{prefix}cells.jsonl"
    if baseline:
        report = ex.baseline_linear(exp_cfg, cells_cache=cells_cache)
    else:
        report = ex.run_experiment(exp_cfg, cells_cache=cells_cache)
    report.config_hash = cfg.hash
    _write_report(run_dir, prefix, report)
    print(ex.format_report(report), end="")
    print(f"report written to {run_dir}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    return _eval_command(cfg, baseline=False)


def cmd_baseline(cfg: RunConfig) -> int:
    return _eval_command(cfg, baseline=True)


def _compressed_inputs(cfg: RunConfig, manifest: ds.DatasetManifest
                       ) -> tuple[np.ndarray, np.ndarray]:
    exp_cfg = _experiment_config(cfg, manifest)
    featmat = ex.sequence_hog_matrix(manifest, exp_cfg.preprocess, exp_cfg.hog,
                                     exp_cfg.cache_dir)
    _, compressed = ex.compress_features(featmat, exp_cfg.variability)
    n_seq = len(manifest)
    return compressed.reshape(n_seq, compressed.shape[0] // n_seq, -1), manifest.labels()


def cmd_hyperopt(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    inputs, labels = _compressed_inputs(cfg, manifest)
    splits = ds.kfold_splits(manifest, cfg["dataset.k_folds"],
                             cfg["dataset.split_seed"],
                             by_subject=cfg["dataset.subject_folds"])
    toi = ro.ToiSet.of(cfg["readout.toi"])
    base_rc = _rc_config(cfg)
    seed0 = cfg["eval.mask_seeds"][0]
    mask = rv.generate_mask(base_rc.n, inputs.shape[2], seed0)

    # Bounds: beta spans the target injected-signal std, lambda the target
    # lambda/VAR(x), both calibrated on a probe run at mid-bounds.
    sigma_mu = float((inputs.reshape(-1, inputs.shape[2]) @ mask.T).std())
    alpha_lo, alpha_hi = cfg["hyperopt.alpha_min"], cfg["hyperopt.alpha_max"]
    beta_lo = cfg["hyperopt.sigma_input_min"] / sigma_mu
    beta_hi = cfg["hyperopt.sigma_input_max"] / sigma_mu
    probe_cfg = replace(base_rc, alpha=0.5 * (alpha_lo + alpha_hi),
                        beta=float(np.sqrt(beta_lo * beta_hi)))
    probe_states = rv.run_dataset(probe_cfg, mask, inputs, reset=True)
    state_var = float(probe_states.var())
    if state_var == 0.0:
        raise NumericError("probe run produced constant states; cannot scale "
                           "lambda bounds")
    bounds = ho.HyperBounds(alpha=(alpha_lo, alpha_hi), beta=(beta_lo, beta_hi),
                            lam=(cfg["hyperopt.lambda_rescaled_min"] * state_var,
                                 cfg["hyperopt.lambda_rescaled_max"] * state_var))

    def objective(point: np.ndarray) -> float:
        alpha, beta, lam = (float(v) for v in point)
        rc = replace(base_rc, alpha=alpha, beta=beta)
        cells = ex.evaluate_cells(inputs, labels, splits, rc, toi, lam,
                                  mask_seeds=(seed0,), reset=cfg["reservoir.reset"])
        return float(np.mean([c.accuracy(labels) for c in cells]))

    run_dir = _run_dir(cfg)
    trace_path = run_dir / "trace.txt"
    initial = ho.load_trace(trace_path) if trace_path.exists() else []
    if initial:
        print(f"resuming from {len(initial)} recorded evaluations in {trace_path}")
    best_point, best_score, trace = ho.bayes_optimize(
        objective, bounds, seed=cfg["hyperopt.seed"], budget=cfg["hyperopt.budget"],
        fit_starts=cfg["hyperopt.fit_starts"], initial=initial,
        on_evaluation=lambda i, obs: ho.append_trace(trace_path, i, obs))
    alpha, beta, lam = best_point
    rc = replace(base_rc, alpha=float(alpha), beta=float(beta))
    states = rv.run_dataset(rc, mask, inputs, reset=cfg["reservoir.reset"])
    diag = ho.rescaled_diagnostics(float(beta), mask, inputs, states, float(lam))
    summary = (f"best alpha={alpha:.6g} beta={beta:.6g} lambda={lam:.6g} "
               f"accuracy={best_score:.4f}\n"
               f"sigma_input={diag.sigma_input:.6g} "
               f"lambda_rescaled={diag.lambda_rescaled:.6g}\n"
               f"evaluations={len(trace)}\n")
    (run_dir / "best.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    print(f"trace written to {trace_path}")
    return 0


def cmd_toi_search(cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    inputs, labels = _compressed_inputs(cfg, manifest)
    splits = ds.kfold_splits(manifest, cfg["dataset.k_folds"],
                             cfg["dataset.split_seed"],
                             by_subject=cfg["dataset.subject_folds"])
    rc_cfg = _rc_config(cfg)
    seed0 = cfg["eval.mask_seeds"][0]
    mask = rv.generate_mask(rc_cfg.n, inputs.shape[2], seed0)
    states = rv.run_dataset(rc_cfg, mask, inputs, reset=cfg["reservoir.reset"])
    lam = cfg["readout.lambda"]
    targets = ro.one_hot(labels, len(manifest.class_names))

    def eval_fn(toi: ro.ToiSet) -> float:
        concatenated = ro.concat_toi(states, toi)
        accs = []
        for split in splits:
            design = ro.DesignMatrix(concatenated[split.train_indices],
                                     targets[split.train_indices])
            model = ro.train_ridge(design, lam, toi=toi)
            preds = ro.classify_batch(model, concatenated[split.test_indices])
            accs.append(np.mean(preds == labels[split.test_indices]))
        return float(np.mean(accs))

    ranked = ro.toi_search(eval_fn, cfg["toi_search.size"], cfg["toi_search.mode"])
    run_dir = _run_dir(cfg)
    lines = [f"{'_'.join(str(i) for i in toi)} {acc:.4f}" for toi, acc in ranked]
    (run_dir / "toi_search.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines[:20]:
        print(line)
    print(f"{len(ranked)} subsets evaluated; results in {run_dir / 'toi_search.txt'}")
    return 0


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "hyperopt": cmd_hyperopt,
    "baseline": cmd_baseline,
    "toi-search": cmd_toi_search,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        print(f"config hash {cfg.hash}")
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""KTH-style manifest handling: loading, completion to the full grid,
scenario subsets, and stratified K-fold splits.

A manifest is a UTF-8 text file, one record per line, tab-separated:

    subject  action  scenario  repetition  frame_dir  background_ref

``background_ref`` is the key of another record (see :func:`record_key`)
whose first frame supplies the background image, or ``-`` when the record's
own first frame is the background. Lines starting with ``#`` are ignored.
``frame_dir`` is resolved relative to the manifest location and must contain
lexicographically ordered 8-bit binary PGM frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ManifestError, UnrecoverableGapError
from .pgm import read_pgm_header

ACTIONS = ("boxing", "handclapping", "handwaving", "jogging", "running", "walking")
SCENARIOS = ("s1", "s2", "s3", "s4")
SUBJECTS = range(1, 26)
REPETITIONS = range(1, 5)
FRAME_SIZE = (160, 120)  # (width, height)

# Actions performed in place; their background comes from another sequence.
INPLACE_ACTIONS = ("boxing", "handclapping", "handwaving")


@dataclass(frozen=True)
class VideoRecord:
    subject: int
    action: str
    scenario: str
    repetition: int
    frame_dir: Path
    background_ref: str | None = None
    synthetic: bool = False

    @property
    def key(self) -> str:
        return record_key(self.subject, self.action, self.scenario, self.repetition)

    @property
    def label(self) -> int:
        return ACTIONS.index(self.action)

    def sort_key(self) -> tuple:
        return (self.scenario, self.subject, self.action, self.repetition)


def record_key(subject: int, action: str, scenario: str, repetition: int) -> str:
    """Canonical record identity, also used as cache filename stem."""
    return f"p{subject:02d}_{action}_{scenario}_r{repetition}"


@dataclass
class DatasetManifest:
    records: list[VideoRecord]
    class_names: tuple[str, ...] = ACTIONS

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.intp)

    def by_key(self) -> dict[str, VideoRecord]:
        return {r.key: r for r in self.records}


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_indices: np.ndarray
    test_indices: np.ndarray


def _parse_row(line_no: int, line: str, root: Path, frame_size) -> VideoRecord:
    ident = f"manifest line {line_no}"
    fields = line.split("\t")
    if len(fields) != 6:
        raise ManifestError(f"{ident}: expected 6 tab-separated fields, got {len(fields)}")
    subj_s, action, scenario, rep_s, frame_dir, bg_ref = (f.strip() for f in fields)
    try:
        subject = int(subj_s)
        repetition = int(rep_s)
    except ValueError as exc:
        raise ManifestError(f"{ident}: non-integer subject or repetition ({exc})") from None
    if subject not in SUBJECTS:
        raise ManifestError(f"{ident}: subject {subject} outside 1..25")
    if action not in ACTIONS:
        raise ManifestError(f"{ident}: unknown action {action!r}")
    if scenario not in SCENARIOS:
        raise ManifestError(f"{ident}: unknown scenario {scenario!r}")
    if repetition not in REPETITIONS:
        raise ManifestError(f"{ident}: repetition {repetition} outside 1..4")
    path = Path(frame_dir)
    if not path.is_absolute():
        path = root / path
    rec = VideoRecord(subject, action, scenario, repetition, path,
                      None if bg_ref == "-" else bg_ref)
    if not path.is_dir():
        raise ManifestError(f"{rec.key} ({ident}): frame_dir {path} does not exist")
    frames = list_frames(path)
    if not frames:
        raise ManifestError(f"{rec.key} ({ident}): frame_dir {path} has no frames")
    if frame_size is not None:
        w, h = read_pgm_header(frames[0])
        if (w, h) != tuple(frame_size):
            raise ManifestError(
                f"{rec.key} ({ident}): frame size {w}x{h}, expected "
                f"{frame_size[0]}x{frame_size[1]}")
    return rec


def list_frames(frame_dir: Path) -> list[Path]:
    return sorted(p for p in Path(frame_dir).iterdir() if p.suffix == ".pgm")


def load_manifest(path: str | Path,
                  frame_size: tuple[int, int] | None = FRAME_SIZE) -> DatasetManifest:
    """Load and validate a manifest file.

    Records come back sorted by (scenario, subject, action, repetition).
    Every frame directory must exist and contain at least one PGM whose
    header matches ``frame_size`` (pass None to skip the size check).
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file {path} not found")
    root = path.parent
    records = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        records.append(_parse_row(line_no, raw, root, frame_size))
    if not records:
        raise ManifestError(f"manifest {path}: no records")
    seen: dict[str, VideoRecord] = {}
    for rec in records:
        if rec.key in seen:
            raise ManifestError(f"duplicate record {rec.key}")
        seen[rec.key] = rec
    for rec in records:
        if rec.background_ref is not None and rec.background_ref not in seen:
            raise ManifestError(f"{rec.key}: background_ref {rec.background_ref!r} "
                                "names no record in this manifest")
    records.sort(key=VideoRecord.sort_key)
    return DatasetManifest(records)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = []
    for r in manifest.records:
        bg = r.background_ref if r.background_ref is not None else "-"
        lines.append(f"{r.subject}\t{r.action}\t{r.scenario}\t{r.repetition}"
                     f"\t{r.frame_dir}\t{bg}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def infer_background_refs(manifest: DatasetManifest) -> DatasetManifest:
    """Point every in-place action at the running sequence of the same
    subject and scenario (first existing repetition). Moving actions keep
    their own first frame as background."""
    by_key = manifest.by_key()
    records = []
    for rec in manifest.records:
        if rec.action in INPLACE_ACTIONS and rec.background_ref is None:
            ref = None
            for rep in REPETITIONS:
                cand = record_key(rec.subject, "running", rec.scenario, rep)
                if cand in by_key:
                    ref = cand
                    break
            if ref is None:
                raise ManifestError(f"{rec.key}: no running sequence of subject "
                                    f"{rec.subject} in {rec.scenario} to use as background")
            rec = replace(rec, background_ref=ref)
        records.append(rec)
    return DatasetManifest(records, manifest.class_names)


def complete_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Fill the 25x6x4x4 grid by copying existing records.

    Each missing (subject, action, scenario, repetition) is filled with a
    copy of an existing record of the same subject, action, and scenario;
    the source repetition is a seeded draw. Copies carry synthetic=True.
    """
    if len(manifest) > len(SUBJECTS) * len(ACTIONS) * len(SCENARIOS) * len(REPETITIONS):
        raise ManifestError(f"manifest has {len(manifest)} records, more than the "
                            "full 2400-record grid")
    existing = manifest.by_key()
    cells: dict[tuple, list[VideoRecord]] = {}
    for rec in manifest.records:
        cells.setdefault((rec.subject, rec.action, rec.scenario), []).append(rec)
    rng = np.random.Generator(np.random.Philox(seed))
    out = list(manifest.records)
    for scenario in SCENARIOS:
        for subject in SUBJECTS:
            for action in ACTIONS:
                for rep in REPETITIONS:
                    if record_key(subject, action, scenario, rep) in existing:
                        continue
                    pool = cells.get((subject, action, scenario))
                    if not pool:
                        raise UnrecoverableGapError(
                            f"no existing repetition of subject {subject} "
                            f"{action} {scenario} to copy for repetition {rep}")
                    src = pool[rng.integers(len(pool))]
                    out.append(replace(src, repetition=rep, synthetic=True))
    out.sort(key=VideoRecord.sort_key)
    return DatasetManifest(out, manifest.class_names)


def scenario_subset(manifest: DatasetManifest, scenario: str) -> DatasetManifest:
    if scenario not in SCENARIOS:
        raise ManifestError(f"unknown scenario {scenario!r}")
    records = [r for r in manifest.records if r.scenario == scenario]
    return DatasetManifest(records, manifest.class_names)


def kfold_splits(manifest: DatasetManifest, k: int, seed: int,
                 by_subject: bool = False) -> list[FoldSplit]:
    """Stratified K-fold splits, deterministic for a given seed.

    Default assignment is stratified-random by action class: per-fold class
    counts and per-fold totals each differ by at most one. With
    by_subject=True, whole subjects are dealt to folds instead (no
    stratification guarantee); this mode is provided for leakage studies.
    """
    n = len(manifest)
    if k < 2 or k > n:
        raise ManifestError(f"k={k} outside 2..{n}")
    rng = np.random.Generator(np.random.Philox(seed))
    fold_of = np.empty(n, dtype=np.intp)
    if by_subject:
        subjects = sorted({r.subject for r in manifest.records})
        order = rng.permutation(len(subjects))
        fold_of_subject = {subjects[j]: i % k for i, j in enumerate(order)}
        for idx, rec in enumerate(manifest.records):
            fold_of[idx] = fold_of_subject[rec.subject]
    else:
        counter = 0
        labels = manifest.labels()
        for cls in range(len(manifest.class_names)):
            idx = np.flatnonzero(labels == cls)
            idx = idx[rng.permutation(len(idx))]
            for i in idx:
                fold_of[i] = counter % k
                counter += 1
    splits = []
    all_idx = np.arange(n)
    for f in range(k):
        test = all_idx[fold_of == f]
        train = all_idx[fold_of != f]
        splits.append(FoldSplit(f, train, test))
    return splits

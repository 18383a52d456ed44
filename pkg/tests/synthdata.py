"""Synthetic data for tests and for the no-KTH acceptance gates.

Two levels:

* make_feature_sequences: feature-space sequences with six classes whose
  identity lives in class-specific temporal dynamics (a phase-randomized
  oscillation linear snapshot readouts cannot see, plus a weak mean
  pattern). Used to exercise the reservoir/readout/eval machinery where the
  reservoir has a genuine edge over snapshot linear regression.

* render_video_dataset: tiny on-disk KTH-shaped datasets of PGM frame
  directories with a manifest, for dataset/preprocess/CLI tests. Six blob
  "actions": three translate across the frame at different speeds and
  sizes, three are performed in place (so their background comes from the
  running record of the same subject).
"""

from pathlib import Path

import numpy as np

from actionrc.dataset import (ACTIONS, INPLACE_ACTIONS, DatasetManifest,
                              VideoRecord, record_key, save_manifest)
from actionrc.pgm import write_pgm

FRAME_W, FRAME_H = 160, 120


# --- feature-space sequences --------------------------------------------------


def make_feature_sequences(n_per_class=24, n_dims=24, n_steps=10, seed=0,
                           noise=0.3, mean_scale=0.2, osc_scale=1.0, dc=0.6):
    """Six-class feature sequences (S, T, K) in shuffled order.

    Each class c combines a weak smooth mean pattern with an oscillation
    cos(w_c t + phi) along a class direction, phi drawn per sequence, plus
    i.i.d. noise. The oscillation carries most of the class identity but
    has zero mean over phases, so linear readouts of a few snapshots are at
    a structural disadvantage.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    n_classes = len(ACTIONS)
    freqs = np.array([0.35, 0.75, 1.15, 1.55, 1.95, 2.35])
    directions = rng.normal(size=(n_classes, n_dims))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    protos = rng.normal(size=(n_classes, n_steps, n_dims)) * mean_scale
    for c in range(n_classes):
        for _ in range(2):  # mild temporal smoothing
            protos[c] = (0.5 * protos[c] + 0.25 * np.roll(protos[c], 1, axis=0)
                         + 0.25 * np.roll(protos[c], -1, axis=0))
    t = np.arange(n_steps)
    sequences, labels = [], []
    for c in range(n_classes):
        for _ in range(n_per_class):
            phi = rng.uniform(0.0, 2.0 * np.pi)
            osc = osc_scale * np.cos(freqs[c] * t + phi)[:, None] * directions[c]
            sequences.append(dc + osc + protos[c]
                             + noise * rng.normal(size=(n_steps, n_dims)))
            labels.append(c)
    sequences = np.array(sequences)
    labels = np.array(labels, dtype=np.intp)
    order = rng.permutation(len(labels))
    return sequences[order], labels[order]


# --- rendered blob videos ------------------------------------------------------

_BG = 0.45
_FG = 0.95

# frames per action; running stays under 30 to exercise keyframe padding
_LENGTHS = {"walking": 36, "jogging": 33, "running": 24,
            "boxing": 36, "handwaving": 34, "handclapping": 35}


def _blank(rng):
    frame = np.full((FRAME_H, FRAME_W), _BG)
    frame += rng.normal(0.0, 0.01, size=frame.shape)
    return np.clip(frame, 0.0, 1.0)


def _draw(frame, x0, y0, w, h):
    x0, y0, w, h = (int(round(v)) for v in (x0, y0, w, h))
    frame[max(y0, 0):max(y0 + h, 0), max(x0, 0):max(x0 + w, 0)] = _FG


def _render_action(action, n_frames, rng):
    """Frame list for one record; translating actions start off-screen so
    their own first frame is a clean background."""
    frames = []
    body_w = 14 + int(rng.integers(0, 4))
    body_h = 40 + int(rng.integers(0, 6))
    y_base = 50 + int(rng.integers(0, 8))
    phase = int(rng.integers(0, 4))
    speed = {"walking": 3.0, "jogging": 4.5, "running": 7.0}.get(action, 0.0)
    for i in range(n_frames):
        frame = _blank(rng)
        if action in ("walking", "jogging", "running"):
            x = -body_w - 2 + speed * i
            if x < FRAME_W:
                _draw(frame, x, y_base, body_w, body_h)
                stride = ((i + phase) % 4) - 1.5
                _draw(frame, x + 2, y_base + body_h, body_w // 2, 10 + 2 * abs(stride))
        elif action == "boxing":
            x = 60
            _draw(frame, x, y_base, body_w, body_h)
            punch = 12 * (((i + phase) % 6) < 3)
            _draw(frame, x + body_w, y_base + 8, 6 + punch, 6)
        elif action == "handwaving":
            x = 70
            _draw(frame, x, y_base, body_w, body_h)
            lift = 10 * (((i + phase) % 8) < 4)
            _draw(frame, x - 8, y_base - lift, 6, 18)
            _draw(frame, x + body_w + 2, y_base - (10 - lift), 6, 18)
        else:  # handclapping
            x = 70
            _draw(frame, x, y_base, body_w, body_h)
            gap = 4 + 8 * (((i + phase) % 6) < 3)
            _draw(frame, x - gap - 6, y_base + 12, 6, 8)
            _draw(frame, x + body_w + gap, y_base + 12, 6, 8)
        frames.append(frame)
    return frames


def render_video_dataset(root: Path, subjects=(1, 2), scenario="s1",
                         repetitions=(1, 2), seed=0,
                         actions=ACTIONS) -> Path:
    """Write a tiny PGM dataset plus manifest under ``root``; returns the
    manifest path."""
    root = Path(root)
    records = []
    for subject in subjects:
        for action in actions:
            for rep in repetitions:
                rng = np.random.Generator(
                    np.random.Philox([seed, subject, ACTIONS.index(action), rep]))
                key = record_key(subject, action, scenario, rep)
                frame_dir = root / "frames" / key
                frame_dir.mkdir(parents=True, exist_ok=True)
                length = _LENGTHS[action] + int(rng.integers(0, 3))
                for i, frame in enumerate(_render_action(action, length, rng)):
                    write_pgm(frame_dir / f"{i:05d}.pgm", frame)
                bg_ref = None
                if action in INPLACE_ACTIONS:
                    bg_ref = record_key(subject, "running", scenario, repetitions[0])
                records.append(VideoRecord(subject, action, scenario, rep,
                                           frame_dir, bg_ref))
    records.sort(key=VideoRecord.sort_key)
    manifest_path = root / "manifest.tsv"
    save_manifest(DatasetManifest(records), manifest_path)
    return manifest_path


def grid_manifest(missing: int = 9, seed: int = 7) -> DatasetManifest:
    """In-memory full KTH grid (2400 records, no frames on disk) minus
    ``missing`` seeded drops; for completion logic tests."""
    records = []
    for scenario in ("s1", "s2", "s3", "s4"):
        for subject in range(1, 26):
            for action in ACTIONS:
                for rep in range(1, 5):
                    records.append(VideoRecord(
                        subject, action, scenario, rep,
                        Path(f"/nonexistent/{record_key(subject, action, scenario, rep)}")))
    rng = np.random.Generator(np.random.Philox(seed))
    drop = set()
    while len(drop) < missing:
        idx = int(rng.integers(len(records)))
        # never drop a whole (subject, action, scenario) cell
        rec = records[idx]
        siblings = [i for i, r in enumerate(records)
                    if (r.subject, r.action, r.scenario) ==
                       (rec.subject, rec.action, rec.scenario)]
        if sum(1 for i in siblings if i in drop) < 3:
            drop.add(idx)
    kept = [r for i, r in enumerate(records) if i not in drop]
    return DatasetManifest(kept)

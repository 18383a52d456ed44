"""Raw frame sequences to centered binary silhouette keyframes.

Pipeline per sequence: subsample by 3 and keep the 10 middle survivors,
Gaussian-smooth frame and background, threshold the absolute difference,
drop small blobs, and center the silhouette on its column-histogram peak.
Sequences too short to supply 10 survivors are padded in front with empty
frames; padded positions yield all-background masks.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import ndimage

from .dataset import VideoRecord, list_frames
from .errors import CacheError, ConfigError, DataError
from .pgm import read_pgm

KEYFRAME_COUNT = 10
SUBSAMPLE_FACTOR = 3

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PreprocessParams:
    sigma: float = 2.0
    threshold: float = 0.15
    min_blob: int = 10
    connectivity: int = 4

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")

    @property
    def hash(self) -> str:
        text = repr(sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass
class KeyframeSet:
    """Exactly 10 binary silhouette frames in temporal order."""

    frames: np.ndarray  # (10, height, width) bool
    pad_count: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=bool)
        if self.frames.ndim != 3 or self.frames.shape[0] != KEYFRAME_COUNT:
            raise DataError(f"keyframe set must hold {KEYFRAME_COUNT} frames, "
                            f"got shape {self.frames.shape}")
        if not 0 <= self.pad_count <= KEYFRAME_COUNT:
            raise DataError(f"pad_count {self.pad_count} outside 0..{KEYFRAME_COUNT}")


def read_sequence(frame_dir: str | Path) -> np.ndarray:
    """Load all PGM frames of a directory into a (T, height, width) array."""
    paths = list_frames(Path(frame_dir))
    if not paths:
        raise DataError(f"{frame_dir}: no frames")
    frames = [read_pgm(p) for p in paths]
    shape = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != shape:
            raise DataError(f"{p}: frame shape {f.shape} differs from first frame {shape}")
    return np.stack(frames)


def subsample_keyframes(seq: np.ndarray, count: int = KEYFRAME_COUNT,
                        factor: int = SUBSAMPLE_FACTOR) -> np.ndarray:
    """Keep every ``factor``-th frame from index 0, then the ``count`` frames
    centered on the middle of the survivors. Short sequences are padded in
    front with all-black frames."""
    seq = np.asarray(seq)
    if len(seq) == 0:
        raise DataError("empty sequence")
    survivors = seq[::factor]
    n = len(survivors)
    if n >= count:
        start = (n - count) // 2
        return survivors[start:start + count]
    pad = np.zeros((count - n,) + survivors.shape[1:], dtype=survivors.dtype)
    return np.concatenate([pad, survivors])


def subsample_pad_count(n_frames: int, count: int = KEYFRAME_COUNT,
                        factor: int = SUBSAMPLE_FACTOR) -> int:
    """Number of leading black frames subsample_keyframes will prepend."""
    survivors = -(-n_frames // factor)  # ceil division
    return max(0, count - survivors)


def gaussian_smooth(frame: np.ndarray, sigma: float) -> np.ndarray:
    """2-D Gaussian blur with replicate borders and kernel radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    out = ndimage.gaussian_filter(np.asarray(frame, dtype=np.float64), sigma,
                                  mode="nearest", radius=radius)
    return np.clip(out, 0.0, 1.0)


def segment_silhouette(frame: np.ndarray, background: np.ndarray,
                       threshold: float = 0.15, min_blob: int = 10,
                       connectivity: int = 4) -> np.ndarray:
    """Foreground where |frame - background| exceeds the threshold, with
    connected components of min_blob pixels or fewer removed."""
    frame = np.asarray(frame)
    background = np.asarray(background)
    if frame.shape != background.shape:
        raise DataError(f"frame {frame.shape} vs background {background.shape}")
    mask = np.abs(frame - background) > threshold
    if min_blob <= 0 or not mask.any():
        return mask
    structure = _STRUCTURE_4 if connectivity == 4 else _STRUCTURE_8
    labels, n = ndimage.label(mask, structure=structure)
    if n == 0:
        return mask
    sizes = np.bincount(labels.ravel())
    keep = sizes > min_blob
    keep[0] = False
    return keep[labels]


def center_silhouette(mask: np.ndarray) -> np.ndarray:
    """Shift the silhouette so the peak of its column histogram lands at
    floor(width/2); vacated columns are background. All-background frames
    pass through unchanged."""
    mask = np.asarray(mask, dtype=bool)
    column_counts = mask.sum(axis=0)
    if column_counts.max(initial=0) == 0:
        return mask.copy()
    width = mask.shape[1]
    peak = int(np.argmax(column_counts))  # first column on ties
    shift = width // 2 - peak
    out = np.zeros_like(mask)
    if shift >= 0:
        out[:, shift:] = mask[:, :width - shift]
    else:
        out[:, :width + shift] = mask[:, -shift:]
    return out


def preprocess_sequence(rec: VideoRecord, params: PreprocessParams,
                        by_key: Mapping[str, VideoRecord] | None = None) -> KeyframeSet:
    """Full preprocessing of one record: subsample, smooth, segment, center.

    The background is the first frame of the record named by
    ``rec.background_ref`` (resolved through ``by_key``), or the record's own
    first frame when no reference is set. Padded keyframes come out as
    all-background masks.
    """
    seq = read_sequence(rec.frame_dir)
    if rec.background_ref is None:
        background = seq[0]
    else:
        if by_key is None or rec.background_ref not in by_key:
            raise DataError(f"{rec.key}: cannot resolve background_ref "
                            f"{rec.background_ref!r}")
        bg_rec = by_key[rec.background_ref]
        bg_paths = list_frames(bg_rec.frame_dir)
        if not bg_paths:
            raise DataError(f"{rec.key}: background record {bg_rec.key} has no frames")
        background = read_pgm(bg_paths[0])
        if background.shape != seq.shape[1:]:
            raise DataError(f"{rec.key}: background frame shape {background.shape} "
                            f"differs from sequence {seq.shape[1:]}")
    keyframes = subsample_keyframes(seq)
    pad_count = subsample_pad_count(len(seq))
    background = gaussian_smooth(background, params.sigma)
    masks = np.zeros(keyframes.shape, dtype=bool)
    for i in range(pad_count, KEYFRAME_COUNT):
        smoothed = gaussian_smooth(keyframes[i], params.sigma)
        mask = segment_silhouette(smoothed, background, params.threshold,
                                  params.min_blob, params.connectivity)
        masks[i] = center_silhouette(mask)
    return KeyframeSet(masks, pad_count)


# --- keyframe cache --------------------------------------------------------
#
# One file per record: ASCII header line "width height count pad_count",
# then `count` bitmaps, each packed to ceil(width*height/8) bytes.
# Files are keyed by (record identity, params hash) through their name.


def keyframe_cache_path(cache_dir: str | Path, rec: VideoRecord,
                        params: PreprocessParams) -> Path:
    return Path(cache_dir) / f"{rec.key}__{params.hash}.kfc"


def save_keyframes(path: str | Path, ks: KeyframeSet) -> None:
    count, height, width = ks.frames.shape
    with open(path, "wb") as fh:
        fh.write(f"{width} {height} {count} {ks.pad_count}\n".encode())
        for frame in ks.frames:
            fh.write(np.packbits(frame).tobytes())


def load_keyframes(path: str | Path) -> KeyframeSet:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise CacheError(f"{path}: malformed keyframe cache header")
        width, height, count, pad_count = (int(v) for v in header)
        per_frame = -(-width * height // 8)
        frames = np.empty((count, height, width), dtype=bool)
        for i in range(count):
            packed = fh.read(per_frame)
            if len(packed) != per_frame:
                raise CacheError(f"{path}: truncated keyframe cache")
            bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8),
                                 count=width * height)
            frames[i] = bits.reshape(height, width).astype(bool)
    return KeyframeSet(frames, pad_count)


def load_or_preprocess(rec: VideoRecord, params: PreprocessParams,
                       by_key: Mapping[str, VideoRecord] | None = None,
                       cache_dir: str | Path | None = None) -> KeyframeSet:
    """Preprocess one record, going through the keyframe cache when given."""
    if cache_dir is None:
        return preprocess_sequence(rec, params, by_key)
    path = keyframe_cache_path(cache_dir, rec, params)
    if path.exists():
        return load_keyframes(path)
    ks = preprocess_sequence(rec, params, by_key)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_keyframes(path, ks)
    return ks

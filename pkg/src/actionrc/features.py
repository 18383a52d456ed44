"""HOG descriptors for binary keyframes plus dimensionality reduction.

The descriptor follows the classic recipe: (-1, 0, 1) gradient kernels with
replicate borders, unsigned orientations in [0, 180) split over 9 bins with
linear votes between the two nearest bin centers, 8x8-pixel cells, 2x2-cell
blocks sliding by one cell, and per-block L2 normalization. A 160x120 frame
yields 19 * 14 * 4 * 9 = 9576 features.

Compression is two-stage: columns that are identically zero across the
dataset are dropped, then a covariance-method PCA keeps the smallest number
of leading components reaching the requested variability.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import CacheError, ConfigError, DataError, NumericError


@dataclass(frozen=True)
class HogParams:
    cell: int = 8          # cell side in pixels
    block: int = 2         # block side in cells
    bins: int = 9          # orientation bins over [0, 180)
    block_stride: int = 1  # block step in cells
    eps: float = 1e-6      # block normalization guard
    voting: str = "bilinear"  # "bilinear" or "nearest"

    def __post_init__(self):
        if self.bins < 2 or self.block < 1 or self.cell < 1 or self.block_stride < 1:
            raise ConfigError(f"invalid HOG parameters {self}")
        if self.voting not in ("bilinear", "nearest"):
            raise ConfigError(f"unknown voting mode {self.voting!r}")

    @property
    def hash(self) -> str:
        text = repr(sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def feature_length(self, width: int, height: int) -> int:
        cells_x, cells_y = width // self.cell, height // self.cell
        blocks_x = (cells_x - self.block) // self.block_stride + 1
        blocks_y = (cells_y - self.block) // self.block_stride + 1
        return blocks_x * blocks_y * self.block * self.block * self.bins


def hog(frame: np.ndarray, params: HogParams = HogParams()) -> np.ndarray:
    """HOG descriptor of one frame (binary masks are taken as 0/1 images).

    Concatenation order is blocks row-major, cells within a block row-major,
    bins ascending.
    """
    img = np.asarray(frame, dtype=np.float64)
    if img.ndim != 2:
        raise DataError(f"expected a 2-D frame, got shape {img.shape}")
    height, width = img.shape
    cell, block, bins, stride = params.cell, params.block, params.bins, params.block_stride
    if height % cell or width % cell:
        raise DataError(f"frame {width}x{height} not divisible into {cell}x{cell} cells")
    cells_y, cells_x = height // cell, width // cell
    if cells_y < block or cells_x < block:
        raise DataError(f"frame {width}x{height} smaller than one {block}x{block} block")

    # Correlation with (-1, 0, 1): D(x) = I(x+1) - I(x-1), replicate borders.
    padded = np.pad(img, 1, mode="edge")
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    magnitude = np.hypot(dx, dy)
    theta = np.degrees(np.arctan2(dy, dx)) % 180.0

    bin_width = 180.0 / bins
    pos = theta / bin_width
    cell_of = (np.arange(height)[:, None] // cell) * cells_x + np.arange(width)[None, :] // cell
    n_hist = cells_y * cells_x * bins
    if params.voting == "bilinear":
        low = np.floor(pos).astype(np.intp)
        frac = pos - low
        low %= bins
        high = (low + 1) % bins
        hist = np.bincount((cell_of * bins + low).ravel(),
                           (magnitude * (1.0 - frac)).ravel(), minlength=n_hist)
        hist += np.bincount((cell_of * bins + high).ravel(),
                            (magnitude * frac).ravel(), minlength=n_hist)
    else:
        nearest = np.rint(pos).astype(np.intp) % bins
        hist = np.bincount((cell_of * bins + nearest).ravel(),
                           magnitude.ravel(), minlength=n_hist)
    cells = hist.reshape(cells_y, cells_x, bins)

    blocks_y = (cells_y - block) // stride + 1
    blocks_x = (cells_x - block) // stride + 1
    blocks = np.empty((blocks_y, blocks_x, block, block, bins))
    for by in range(block):
        for bx in range(block):
            blocks[:, :, by, bx, :] = cells[by:by + blocks_y * stride:stride,
                                            bx:bx + blocks_x * stride:stride, :]
    flat = blocks.reshape(blocks_y, blocks_x, -1)
    norms = np.sqrt(np.sum(flat * flat, axis=-1) + params.eps ** 2)
    return (flat / norms[..., None]).reshape(-1)


@dataclass
class FeatureMatrix:
    """One row per (sequence, keyframe); columns are feature dimensions."""

    values: np.ndarray
    row_index: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise NumericError("feature matrix contains non-finite values")
        if self.row_index and len(self.row_index) != self.values.shape[0]:
            raise DataError("row_index length does not match row count")


def drop_zero_features(X: FeatureMatrix) -> tuple[FeatureMatrix, np.ndarray]:
    """Remove columns that are identically zero across all rows.

    Returns the reduced matrix and the kept original column indices.
    """
    nonzero = np.any(X.values != 0.0, axis=0)
    kept = np.flatnonzero(nonzero)
    if kept.size == 0:
        raise NumericError("all feature columns are zero: degenerate dataset")
    return FeatureMatrix(X.values[:, kept], X.row_index), kept


@dataclass
class PcaModel:
    mean: np.ndarray          # (D,)
    components: np.ndarray    # (q, D), orthonormal rows
    eigenvalues: np.ndarray   # (q,), descending
    kept_indices: np.ndarray  # compressed column -> original HOG column
    variability: float
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return pca_transform(self, x)

    def transform_raw(self, raw: np.ndarray) -> np.ndarray:
        """Transform full-length HOG vectors (zero-drop applied first)."""
        raw = np.asarray(raw, dtype=np.float64)
        return pca_transform(self, raw[..., self.kept_indices])


def pca_fit(X: FeatureMatrix | np.ndarray, variability: float,
            kept_indices: np.ndarray | None = None) -> PcaModel:
    """Covariance-method PCA keeping the smallest component count whose
    cumulative explained variance reaches ``variability``.

    Works on the D x D covariance when rows exceed the dimension, otherwise
    on the rows x rows Gram matrix with back-projection. Component signs are
    fixed so each row's largest-magnitude entry is positive.
    """
    if not 0.0 < variability <= 1.0:
        raise ConfigError(f"variability must be in (0, 1], got {variability}")
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    rows, dim = values.shape
    if rows < 2:
        raise DataError(f"PCA needs at least 2 rows, got {rows}")
    mean = values.mean(axis=0)
    centered = values - mean
    if rows > dim:
        cov = centered.T @ centered / (rows - 1)
        eigvals, eigvecs = linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        axes = eigvecs[:, order].T
    else:
        gram = centered @ centered.T / (rows - 1)
        eigvals, eigvecs = linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        u = eigvecs[:, order]
        scale = np.sqrt(np.maximum(eigvals, 0.0) * (rows - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            axes = (centered.T @ u / scale).T
    eigvals = np.maximum(eigvals, 0.0)
    total = float(eigvals.sum())
    if total <= 0.0:
        raise NumericError("rank-0 data: total variance is zero")
    positive = eigvals > max(rows, dim) * np.finfo(np.float64).eps * eigvals[0]
    eigvals = eigvals[positive]
    axes = axes[positive]
    ratios = np.cumsum(eigvals) / total
    reachable = np.flatnonzero(ratios >= variability)
    q = int(reachable[0]) + 1 if reachable.size else len(eigvals)
    components = axes[:q].copy()
    flip = components[np.arange(q), np.argmax(np.abs(components), axis=1)] < 0
    components[flip] *= -1.0
    if kept_indices is None:
        kept_indices = np.arange(dim)
    return PcaModel(mean, components, eigvals[:q].copy(),
                    np.asarray(kept_indices), variability, total)


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project vectors onto the principal axes: components @ (x - mean)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise DataError(f"vector length {x.shape[-1]} does not match model "
                        f"dimension {model.mean.shape[0]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, z: np.ndarray) -> np.ndarray:
    """Map reduced vectors back: mean + components^T @ z."""
    z = np.asarray(z, dtype=np.float64)
    return model.mean + z @ model.components


# --- caches ----------------------------------------------------------------
#
# Feature cache: ASCII header "rows cols variability params_hash", then
# row-major little-endian float64. A companion ".idx" file maps each row to
# "record_key keyframe_index".


def save_features(path: str | Path, values: np.ndarray, variability: float,
                  params_hash: str, row_index: list[tuple[str, int]] | None = None) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(f"{rows} {cols} {variability!r} {params_hash}\n".encode())
        fh.write(values.tobytes())
    if row_index is not None:
        lines = [f"{key} {kf}" for key, kf in row_index]
        Path(str(path) + ".idx").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path: str | Path, expect_params_hash: str | None = None
                  ) -> tuple[np.ndarray, float, str, list[tuple[str, int]]]:
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise CacheError(f"{path}: malformed feature cache header")
        rows, cols = int(header[0]), int(header[1])
        variability = float(header[2])
        params_hash = header[3].decode()
        if expect_params_hash is not None and params_hash != expect_params_hash:
            raise CacheError(f"{path}: cache was built with params {params_hash}, "
                             f"expected {expect_params_hash}; refusing to reuse")
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
        if data.size != rows * cols:
            raise CacheError(f"{path}: truncated feature cache")
    row_index = []
    idx_path = Path(str(path) + ".idx")
    if idx_path.exists():
        for line in idx_path.read_text(encoding="utf-8").splitlines():
            key, kf = line.split()
            row_index.append((key, int(kf)))
    return data.reshape(rows, cols).copy(), variability, params_hash, row_index


def save_pca(path: str | Path, model: PcaModel) -> None:
    np.savez(path, mean=model.mean, components=model.components,
             eigenvalues=model.eigenvalues, kept_indices=model.kept_indices,
             variability=model.variability, total_variance=model.total_variance)


def load_pca(path: str | Path) -> PcaModel:
    with np.load(path) as data:
        return PcaModel(data["mean"], data["components"], data["eigenvalues"],
                        data["kept_indices"], float(data["variability"]),
                        float(data["total_variance"]))

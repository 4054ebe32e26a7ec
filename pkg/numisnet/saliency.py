"""
Occlusion saliency heatmaps

A uniform square patch slides over the input; each window position scores the
drop of the positive-class probability, and every pixel averages the scores
of the windows that covered it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .errors import ConfigError

logger = logging.getLogger(__name__)

# (N, H, W, C) inputs -> (N,) positive-class probabilities
PositiveScorer = Callable[[np.ndarray], np.ndarray]
Fill = Union[float, Sequence[float], np.ndarray]

PathLike = Union[str, Path]


@dataclass
class OcclusionConfig:
    kernel_sizes: Tuple[int, ...] = (32, 48, 64)
    strides: Optional[Tuple[int, ...]] = None
    fill: str = "dataset-mean"
    fill_value: float = 0.5
    batch_size: int = 64
    reference_side: int = 300

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        if not self.kernel_sizes or min(self.kernel_sizes) < 1:
            raise ConfigError(f"occlusion kernel sizes must be positive, got {self.kernel_sizes}")
        if self.strides is not None:
            self.strides = tuple(int(s) for s in self.strides)
            if len(self.strides) != len(self.kernel_sizes) or min(self.strides) < 1:
                raise ConfigError("occlusion strides must be positive, one per kernel size")
        if self.fill not in ("dataset-mean", "constant"):
            raise ConfigError(
                f"occlusion fill must be 'dataset-mean' or 'constant', got {self.fill}")
        if self.batch_size < 1 or self.reference_side < 1:
            raise ConfigError("occlusion batch_size and reference_side must be positive")

    def stride_for(self, k: int) -> int:
        if self.strides is not None:
            return self.strides[self.kernel_sizes.index(k)]
        return max(1, k // 4)

    def scaled(self, side: int) -> "OcclusionConfig":
        """Kernel sizes and strides rescaled from reference_side to the given input side

        Kernels that round to the same size collapse into one, keeping the
        first kernel's stride.
        """
        if side == self.reference_side:
            return self
        ratio = side / self.reference_side
        pairs: Dict[int, Optional[int]] = {}
        for i, k in enumerate(self.kernel_sizes):
            size = max(1, int(round(k * ratio)))
            stride = None if self.strides is None else max(1, int(round(self.strides[i] * ratio)))
            if size in pairs:
                logger.warning("occlusion kernel %d collapses to %d px at input side %d, "
                               "already covered", k, size, side)
                continue
            pairs[size] = stride
        strides = None if self.strides is None else tuple(pairs.values())
        return OcclusionConfig(kernel_sizes=tuple(pairs), strides=strides, fill=self.fill,
                               fill_value=self.fill_value, batch_size=self.batch_size,
                               reference_side=side)


@dataclass
class Heatmap:
    values: np.ndarray
    scale: Union[int, str]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def argmax(self) -> Tuple[int, int]:
        """(x, y) of the highest value, first in row-major order"""
        y, x = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(x), int(y)

    def normalized(self) -> "Heatmap":
        """Min-max scaling to [0, 1]; a flat map becomes all zeros"""
        low, high = float(self.values.min()), float(self.values.max())
        if high - low <= 0:
            return Heatmap(np.zeros_like(self.values, dtype=np.float64), self.scale)
        return Heatmap((self.values - low) / (high - low), self.scale)


def occlude(x: np.ndarray, x0: int, y0: int, k: int, fill: Fill) -> np.ndarray:
    """Copy of an H x W x C input with the clipped k x k window at (x0, y0) filled"""
    h, w = x.shape[:2]
    if k > min(h, w):
        raise ConfigError(f"occlusion kernel {k} exceeds image side {min(h, w)}")
    out = x.copy()
    out[max(0, y0):max(0, y0 + k), max(0, x0):max(0, x0 + k)] = fill
    return out


def window_positions(side: int, k: int, stride: int) -> List[int]:
    """Stride grid plus an edge-snapped last position"""
    positions = list(range(0, side - k + 1, stride))
    if positions[-1] != side - k:
        positions.append(side - k)
    return positions


def occlusion_map(model: PositiveScorer, x: np.ndarray, k: int, config: OcclusionConfig,
                  fill: Fill = 0.5, jobs: int = 1) -> Heatmap:
    """Raw per-scale map: mean probability drop over the windows covering each pixel"""
    h, w = x.shape[:2]
    if k > min(h, w):
        raise ConfigError(f"occlusion kernel {k} exceeds image side {min(h, w)}")
    stride = config.stride_for(k)
    p_clean = float(model(x[np.newaxis])[0])
    windows = [(x0, y0) for y0 in window_positions(h, k, stride)
               for x0 in window_positions(w, k, stride)]
    chunks = [windows[i:i + config.batch_size]
              for i in range(0, len(windows), config.batch_size)]

    def score(chunk):
        occluded = np.stack([occlude(x, x0, y0, k, fill) for x0, y0 in chunk])
        drops = p_clean - np.asarray(model(occluded), dtype=np.float64)
        # an unchanged window scores exactly zero, whatever the batch rounding
        unchanged = np.array([np.array_equal(o, x) for o in occluded])
        drops[unchanged] = 0.0
        return drops

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(score, chunks))
    else:
        scores = [score(chunk) for chunk in chunks]

    total = np.zeros((h, w), dtype=np.float64)
    coverage = np.zeros((h, w), dtype=np.float64)
    for chunk, chunk_scores in zip(chunks, scores):
        for (x0, y0), s in zip(chunk, chunk_scores):
            total[y0:y0 + k, x0:x0 + k] += s
            coverage[y0:y0 + k, x0:x0 + k] += 1
    logger.debug("occlusion k=%d stride=%d: %d windows", k, stride, len(windows))
    return Heatmap(total / coverage, k)


def merge_heatmaps(maps: Sequence[Heatmap]) -> Heatmap:
    if not maps:
        raise ConfigError("at least one kernel size is required")
    normalized = [m.normalized().values for m in maps]
    return Heatmap(np.mean(normalized, axis=0), "merged")


def multiscale_map(model: PositiveScorer, x: np.ndarray, config: OcclusionConfig,
                   fill: Fill = 0.5, jobs: int = 1) -> Tuple[Heatmap, Dict[int, Heatmap]]:
    """Merged map (mean of normalized per-scale maps) plus the raw maps, one per distinct kernel"""
    raw = {k: occlusion_map(model, x, k, config, fill=fill, jobs=jobs)
           for k in dict.fromkeys(config.kernel_sizes)}
    return merge_heatmaps(list(raw.values())), raw


def write_csv(heatmap: Heatmap, path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, heatmap.values, delimiter=",", fmt="%.9g")


def write_pgm(heatmap: Heatmap, path: PathLike):
    """8-bit grayscale, value = round(255 * v)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint(255.0 * heatmap.values), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def write_overlay(heatmap: Heatmap, x: np.ndarray, path: PathLike, alpha: float = 0.5):
    """Merged map blended in red over the network input"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = np.clip(x, 0.0, 1.0).astype(np.float64)
    red = np.zeros_like(base)
    red[..., 0] = 1.0
    weight = alpha * np.clip(heatmap.values, 0.0, 1.0)[..., np.newaxis]
    blended = (1.0 - weight) * base + weight * red
    Image.fromarray(np.rint(blended * 255.0).astype(np.uint8)).save(path, format="PNG")


def write_outputs(merged: Heatmap, raw: Dict[int, Heatmap], x: np.ndarray,
                  out_dir: PathLike) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    for k, heatmap in raw.items():
        target = out_dir / f"heatmap_k{k}.csv"
        write_csv(heatmap, target)
        written.append(target)
    for name, writer in (("heatmap_merged.csv", write_csv), ("heatmap_merged.pgm", write_pgm)):
        writer(merged, out_dir / name)
        written.append(out_dir / name)
    write_overlay(merged, x, out_dir / "heatmap_overlay.png")
    written.append(out_dir / "heatmap_overlay.png")
    return written

"""
Affordance label generation: sweep the pitch/yaw grid and keep the best
(F, beta, gamma) per pixel.

Each angle pair is an independent work unit. Results are folded into the
running best with a total order (higher F wins; on equal F the pair with the
smaller ``|beta| + |gamma|``, then smaller beta, then smaller gamma wins), so
the output does not depend on the order in which angle pairs finish.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .camera import (CameraIntrinsics, PointCloud, approach_rotation, backproject_depth,
                     estimate_normals)
from .errors import DomainError
from .scoring import ScoreConfig, rasterize_orthographic, score_points


@dataclass(frozen=True)
class AngleGrid:
    min: float = -30.0
    max: float = 30.0
    step: float = 5.0

    def __post_init__(self):
        if not (self.min <= 0 <= self.max):
            raise DomainError("angle grid must contain 0")
        if not self.step > 0:
            raise DomainError("angle step must be positive")
        n = (self.max - self.min) / self.step
        if abs(n - round(n)) > 1e-9:
            raise DomainError("angle range must be a multiple of the step")
        if self.min < -30 or self.max > 30:
            raise DomainError("angle grid must stay within [-30, 30] degrees")

    @property
    def values(self) -> np.ndarray:
        n = int(round((self.max - self.min) / self.step))
        return np.round(self.min + self.step * np.arange(n + 1), 9)

    @property
    def pairs(self) -> list[tuple[float, float]]:
        v = self.values
        return [(float(b), float(g)) for b in v for g in v]

    def __str__(self):
        return f"{self.min:g}:{self.max:g}:{self.step:g}"

    @classmethod
    def parse(cls, text: str) -> "AngleGrid":
        m = re.fullmatch(r"\s*(-?[\d.]+):(-?[\d.]+):([\d.]+)\s*", text)
        if not m:
            raise DomainError(f"bad angle grid {text!r}; expected MIN:MAX:STEP")
        return cls(float(m.group(1)), float(m.group(2)), float(m.group(3)))


def tie_order(pairs) -> dict[tuple[float, float], int]:
    """Rank of every angle pair under the tie-break order (lower rank wins ties)."""
    ranked = sorted(pairs, key=lambda p: (abs(p[0]) + abs(p[1]), p[0], p[1]))
    return {p: i for i, p in enumerate(ranked)}


@dataclass(eq=False)
class AffordanceLabels:
    """Dense score / pitch / yaw maps; NaN (and ``valid == False``) off the labelled set."""

    f_map: np.ndarray
    beta_map: np.ndarray
    gamma_map: np.ndarray
    valid: np.ndarray
    per_angle: dict | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.f_map.shape

    def planes(self) -> np.ndarray:
        return np.stack([self.f_map, self.beta_map, self.gamma_map])

    @classmethod
    def from_planes(cls, planes) -> "AffordanceLabels":
        planes = np.asarray(planes)
        valid = np.all(np.isfinite(planes), axis=0)
        return cls(planes[0], planes[1], planes[2], valid)

    def with_angles_zeroed(self) -> "AffordanceLabels":
        z = np.where(self.valid, 0.0, np.nan)
        return AffordanceLabels(self.f_map.copy(), z, z.copy(), self.valid.copy())


@dataclass(eq=False)
class LabelInput:
    """A back-projected scene with per-point normals and the set of points to label."""

    cloud: PointCloud
    normals: np.ndarray
    normal_valid: np.ndarray
    targets: np.ndarray  # indices into cloud.points
    resolution: float

    @property
    def shape(self):
        return (self.cloud.height, self.cloud.width)


def mask_from_seg(seg, mask_ids=None) -> np.ndarray:
    seg = np.asarray(seg)
    if mask_ids is None:
        return seg != 0
    ids = np.asarray(list(mask_ids), dtype=seg.dtype)
    return np.isin(seg, ids) & (seg != 0)


def grid_resolution_for(depth, K: CameraIntrinsics, config: ScoreConfig) -> float:
    """Ortho-grid cell size: the configured floor, grown to the pixel footprint if adaptive."""
    res = config.grid_resolution
    if config.adaptive_grid:
        d = np.asarray(depth, dtype=float)
        d = d[np.isfinite(d)]
        if d.size:
            res = max(res, config.grid_oversize * float(np.median(d)) / min(K.fx, K.fy))
    return float(res)


def prepare_cloud(cloud: PointCloud, mask: np.ndarray, resolution: float) -> LabelInput:
    """Attach normals and target indices to an already back-projected cloud."""
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cloud.height, cloud.width):
        raise DomainError("mask shape does not match the cloud grid")
    nm = estimate_normals(cloud)
    normals = nm.normals.reshape(-1, 3)[cloud.pixel_index]
    nvalid = nm.valid.ravel()[cloud.pixel_index]
    targets = np.flatnonzero(mask.ravel()[cloud.pixel_index])
    return LabelInput(cloud, normals, nvalid, targets, float(resolution))


def prepare(depth, seg, mask_ids, K: CameraIntrinsics, config: ScoreConfig,
            resolution: float | None = None) -> LabelInput:
    depth = np.asarray(depth, dtype=float)
    seg = np.asarray(seg)
    if depth.shape != seg.shape:
        raise DomainError("depth and segmentation are not aligned")
    cloud = backproject_depth(depth, K)
    if resolution is None:
        resolution = grid_resolution_for(depth, K, config)
    return prepare_cloud(cloud, mask_from_seg(seg, mask_ids), resolution)


def _rotated(inp: LabelInput, beta: float, gamma: float):
    R = approach_rotation(beta, gamma)
    pts = inp.cloud.points @ R
    nrm = inp.normals @ R
    nrm = np.where((nrm[:, 2] > 0)[:, None], -nrm, nrm)
    return np.ascontiguousarray(pts), np.ascontiguousarray(nrm)


def score_targets(inp: LabelInput, beta: float, gamma: float, config: ScoreConfig,
                  engine: str = "compiled"):
    """F for every target point under one approach angle; NaN where the center is not visible.

    ``engine="numpy"`` runs the reference path through :func:`score_points`.
    """
    if len(inp.targets) == 0 or len(inp.cloud) == 0:
        return np.full(len(inp.targets), np.nan)
    pts, nrm = _rotated(inp, beta, gamma)
    t = inp.targets
    if engine == "numpy":
        grid = rasterize_orthographic(pts, inp.resolution)
        br, occ = score_points(grid, nrm, inp.normal_valid, pts[t], nrm[t], inp.normal_valid[t], config)
        return np.where(occ, br.F, np.nan)
    if engine != "compiled":
        raise DomainError(f"unknown engine {engine!r}")
    cup = config.cup
    th = cup.ring_angles
    return _kernels.score_targets(pts, nrm, np.ascontiguousarray(inp.normal_valid), t.astype(np.int64),
                                  inp.resolution, np.cos(th), np.sin(th), cup.radius,
                                  cup.compliance_depth, config.theta_thresh, config.theta_max,
                                  *config.weights.as_tuple())


def _to_image(inp: LabelInput, values) -> np.ndarray:
    H, W = inp.shape
    img = np.full(H * W, np.nan)
    img[inp.cloud.pixel_index[inp.targets]] = values
    return img.reshape(H, W)


def score_map_for_angles(depth, seg, mask_ids, K: CameraIntrinsics, beta: float, gamma: float,
                         config: ScoreConfig | None = None, resolution: float | None = None) -> np.ndarray:
    """Per-pixel F map (H, W) for one approach angle; NaN off the mask."""
    config = config or ScoreConfig()
    inp = prepare(depth, seg, mask_ids, K, config, resolution)
    return _to_image(inp, score_targets(inp, beta, gamma, config))


def label_prepared(inp: LabelInput, grid: AngleGrid | None = None, config: ScoreConfig | None = None,
                   workers: int = 1, keep_maps: bool = False) -> AffordanceLabels:
    """Sweep all angle pairs over a prepared input and reduce to the per-pixel best."""
    grid = grid or AngleGrid()
    config = config or ScoreConfig()
    pairs = grid.pairs
    rank = tie_order(pairs)
    m = len(inp.targets)
    best_f = np.full(m, -np.inf)
    best_rank = np.full(m, len(pairs), dtype=np.int64)
    best_b = np.full(m, np.nan)
    best_g = np.full(m, np.nan)
    kept = {} if keep_maps else None

    def fold(pair, F):
        r = rank[pair]
        ok = np.isfinite(F)
        better = ok & ((F > best_f) | ((F == best_f) & (r < best_rank)))
        best_f[better] = F[better]
        best_rank[better] = r
        best_b[better] = pair[0]
        best_g[better] = pair[1]
        if kept is not None:
            kept[pair] = _to_image(inp, F)

    if workers <= 1:
        for pair in pairs:
            fold(pair, score_targets(inp, pair[0], pair[1], config))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(score_targets, inp, b, g, config): (b, g) for b, g in pairs}
            for fut in as_completed(futures):
                fold(futures[fut], fut.result())

    found = np.isfinite(best_f)
    f_img = _to_image(inp, np.where(found, best_f, np.nan))
    b_img = _to_image(inp, np.where(found, best_b, np.nan))
    g_img = _to_image(inp, np.where(found, best_g, np.nan))
    valid = np.isfinite(f_img)
    return AffordanceLabels(f_img, b_img, g_img, valid, per_angle=kept)


def generate_labels(depth, seg, mask_ids, K: CameraIntrinsics, grid: AngleGrid | None = None,
                    config: ScoreConfig | None = None, workers: int = 1, keep_maps: bool = False,
                    resolution: float | None = None) -> AffordanceLabels:
    """Best (F, beta, gamma) per masked pixel over every angle pair of ``grid``.

    ``mask_ids=None`` labels every non-background pixel. With ``keep_maps``
    the per-angle F maps are retained in ``labels.per_angle`` (debug only;
    169 full maps).
    """
    config = config or ScoreConfig()
    inp = prepare(depth, seg, mask_ids, K, config, resolution)
    return label_prepared(inp, grid, config, workers=workers, keep_maps=keep_maps)

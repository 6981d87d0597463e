"""
Analytic suction affordance score for a contact point under one approach angle.

All geometry here lives in the approach-aligned frame: the cloud has already
been rotated so that the cup travels along +z, and "depth" means z in that
frame. The cup lip is modelled as a ring of ``N`` samples of radius ``r``
around the contact point.

The grasp score combines five terms::

    F = k1*S_a - k2*C_d_norm - k3*V_d_norm + k4*S_n + k5*S_c

    S_a   anomaly score        1 - sum_i(D_max - D_i) / A_max,  A_max = N*d_comp
    C_d   depth consistency    dtheta * sum_i |D_i - D_{i+1}|  (closed ring)
    V_d   depth variability    population std of the ring depths
    S_n   normal consistency   mean_i clamp((th_thresh - th_i) / th_thresh)
    S_c   inclination          clamp((th_max - th_center) / th_max)

The two costs are normalized to [0, 1] by ``2*pi*d_comp`` and ``d_comp``.
Every function below is vectorized over leading axes; the ring is the last
axis.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, DomainError

FACING_REFERENCE = np.array([0.0, 0.0, -1.0])

# The ortho grid starts this many cells below the cloud's xy minimum. A
# fractional part far from simple ratios keeps regularly spaced points (a
# frontal surface is sampled every pixel footprint) off cell boundaries,
# where floating-point rounding would make cell membership depend on where
# the cloud sits.
GRID_ANCHOR = 1.381966011250105


@dataclass(frozen=True)
class SuctionCupModel:
    radius: float = 0.015
    ring_samples: int = 36
    compliance_depth: float = 0.005

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("cup radius must be positive")
        if self.ring_samples < 8:
            raise ConfigError("need at least 8 ring samples")
        if not self.compliance_depth > 0:
            raise ConfigError("compliance depth must be positive")

    @property
    def ring_angles(self) -> np.ndarray:
        return np.arange(self.ring_samples) * (2.0 * np.pi / self.ring_samples)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.ring_samples


@dataclass(frozen=True)
class ScoreWeights:
    k1: float = 0.4
    k2: float = 0.1
    k3: float = 0.1
    k4: float = 0.2
    k5: float = 0.3

    def __post_init__(self):
        ks = self.as_tuple()
        if any(not np.isfinite(k) or k < 0 for k in ks):
            raise ConfigError("weights must be finite and nonnegative")
        if not any(k > 0 for k in ks):
            raise ConfigError("at least one weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.k1, self.k2, self.k3, self.k4, self.k5)

    def scaled(self, lam: float) -> "ScoreWeights":
        return ScoreWeights(*(lam * k for k in self.as_tuple()))

    @property
    def f_min(self) -> float:
        return -(self.k2 + self.k3)

    @property
    def f_max(self) -> float:
        return self.k1 + self.k4 + self.k5


@dataclass(frozen=True)
class ScoreConfig:
    """Everything the labeler needs besides the scene itself.

    ``grid_resolution`` is the minimum ortho-grid cell size; with
    ``adaptive_grid`` the cell grows to ``grid_oversize`` times the pixel
    footprint so the rasterized cloud has no systematic holes.
    """

    cup: SuctionCupModel = field(default_factory=SuctionCupModel)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    theta_thresh: float = 30.0
    theta_max: float = 45.0
    grid_resolution: float = 0.001
    adaptive_grid: bool = True
    grid_oversize: float = 1.25

    def __post_init__(self):
        if not (0 < self.theta_thresh <= 90 and 0 < self.theta_max <= 90):
            raise ConfigError("angle thresholds must lie in (0, 90] degrees")
        if not self.grid_resolution > 0:
            raise ConfigError("grid resolution must be positive")
        if not self.grid_oversize > 0:
            raise ConfigError("grid oversize factor must be positive")

    def to_dict(self) -> dict:
        return {
            "cup": asdict(self.cup),
            "weights": asdict(self.weights),
            "theta_thresh": self.theta_thresh,
            "theta_max": self.theta_max,
            "grid_resolution": self.grid_resolution,
            "adaptive_grid": self.adaptive_grid,
            "grid_oversize": self.grid_oversize,
        }

    def to_ini(self) -> str:
        lines = ["[cup]"]
        lines += [f"{k} = {v!r}" for k, v in asdict(self.cup).items()]
        lines += ["", "[weights]"]
        lines += [f"{k} = {v!r}" for k, v in asdict(self.weights).items()]
        lines += ["", "[thresholds]",
                  f"theta_thresh = {self.theta_thresh!r}",
                  f"theta_max = {self.theta_max!r}",
                  "", "[grid]",
                  f"grid_resolution = {self.grid_resolution!r}",
                  f"adaptive_grid = {str(self.adaptive_grid).lower()}",
                  f"grid_oversize = {self.grid_oversize!r}", ""]
        return "\n".join(lines)


def load_score_config(text: str) -> ScoreConfig:
    """Parse an INI-style config; missing keys keep their defaults.

    Sections: ``[cup]`` (radius, ring_samples, compliance_depth),
    ``[weights]`` (k1..k5), ``[thresholds]`` (theta_thresh, theta_max) and
    ``[grid]`` (grid_resolution, adaptive_grid, grid_oversize).
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc

    def section(name, cls):
        kwargs = {}
        if cp.has_section(name):
            known = {f.name: f.type for f in fields(cls)}
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key [{name}] {key}")
                kwargs[key] = int(raw) if key == "ring_samples" else float(raw)
        return cls(**kwargs)

    try:
        cup = section("cup", SuctionCupModel)
        weights = section("weights", ScoreWeights)
        kw = {}
        for sec in ("thresholds", "grid"):
            if cp.has_section(sec):
                for key, raw in cp.items(sec):
                    if key == "adaptive_grid":
                        kw[key] = cp.getboolean(sec, key)
                    elif key in ("theta_thresh", "theta_max", "grid_resolution", "grid_oversize"):
                        kw[key] = float(raw)
                    else:
                        raise ConfigError(f"unknown key [{sec}] {key}")
        extra = set(cp.sections()) - {"cup", "weights", "thresholds", "grid"}
        if extra:
            raise ConfigError(f"unknown sections: {sorted(extra)}")
        return ScoreConfig(cup=cup, weights=weights, **kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


@dataclass(eq=False)
class ScoreBreakdown:
    S_a: np.ndarray | float
    C_d_raw: np.ndarray | float
    V_d_raw: np.ndarray | float
    S_n: np.ndarray | float
    S_c: np.ndarray | float
    C_d_norm: np.ndarray | float
    V_d_norm: np.ndarray | float
    F: np.ndarray | float

    def item(self, i) -> "ScoreBreakdown":
        return ScoreBreakdown(*(float(np.asarray(getattr(self, f.name))[i]) for f in fields(self)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# ---------------------------------------------------------------------------
# ring sub-scores
# ---------------------------------------------------------------------------

def impute_ring(depths, misses, d_comp: float):
    """Replace missed samples by ``D_max + d_comp``.

    Returns ``(imputed, D_max)``; ``D_max`` is NaN for rings with no valid sample.
    """
    depths = np.asarray(depths, dtype=float)
    misses = np.asarray(misses, dtype=bool)
    masked = np.where(misses, -np.inf, depths)
    d_max = masked.max(axis=-1)
    d_max = np.where(np.isfinite(d_max), d_max, np.nan)
    imputed = np.where(misses, (d_max + d_comp)[..., None], depths)
    return imputed, d_max


def anomaly_score(depths, misses, d_comp: float):
    """Normalized anomaly score S_a in [0, 1]; 0 when every sample missed."""
    depths = np.asarray(depths, dtype=float)
    misses = np.asarray(misses, dtype=bool)
    n = depths.shape[-1]
    _, d_max = impute_ring(depths, misses, d_comp)
    gaps = np.where(misses, d_comp, d_max[..., None] - depths)
    s = 1.0 - gaps.sum(axis=-1) / (n * d_comp)
    s = np.clip(s, 0.0, 1.0)
    return np.where(np.isnan(d_max), 0.0, s)


def depth_consistency_cost(depths, misses, d_comp: float):
    """Raw depth consistency cost: dtheta times the total variation around the ring."""
    depths = np.asarray(depths, dtype=float)
    n = depths.shape[-1]
    imputed, d_max = impute_ring(depths, misses, d_comp)
    tv = np.abs(imputed - np.roll(imputed, -1, axis=-1)).sum(axis=-1)
    cost = (2.0 * np.pi / n) * tv
    return np.where(np.isnan(d_max), 2.0 * np.pi * d_comp, cost)


def depth_variability_cost(depths, misses, d_comp: float):
    """Population std of the imputed ring; ``d_comp`` when fewer than 2 samples are valid."""
    imputed, _ = impute_ring(depths, misses, d_comp)
    n_valid = (~np.asarray(misses, dtype=bool)).sum(axis=-1)
    std = imputed.std(axis=-1) if imputed.shape[-1] else np.zeros(imputed.shape[:-1])
    return np.where(n_valid >= 2, std, d_comp)


def angle_to_reference(normals, reference=FACING_REFERENCE):
    """Angle in degrees between unit normals and a unit reference direction."""
    c = np.tensordot(np.asarray(normals, dtype=float), np.asarray(reference, dtype=float), axes=([-1], [0]))
    return np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))


def normal_consistency_score(normals, valid, theta_thresh: float, reference=FACING_REFERENCE):
    """S_n: mean over the ring of the clamped normal-alignment score; invalid samples count 0."""
    valid = np.asarray(valid, dtype=bool)
    th = angle_to_reference(normals, reference)
    per = np.clip((theta_thresh - th) / theta_thresh, 0.0, 1.0)
    per = np.where(valid, per, 0.0)
    return per.sum(axis=-1) / valid.shape[-1]


def inclination_score(normal, valid, theta_max: float, reference=FACING_REFERENCE):
    """S_c from the contact-point normal; 0 for an invalid normal."""
    th = angle_to_reference(normal, reference)
    s = np.clip((theta_max - th) / theta_max, 0.0, 1.0)
    return np.where(np.asarray(valid, dtype=bool), s, 0.0)


def combine_F(S_a, C_d_raw, V_d_raw, S_n, S_c, weights: ScoreWeights, d_comp: float):
    """Weighted grasp score. Returns ``(F, C_d_norm, V_d_norm)``."""
    k1, k2, k3, k4, k5 = weights.as_tuple()
    cd = np.clip(np.asarray(C_d_raw, dtype=float) / (2.0 * np.pi * d_comp), 0.0, 1.0)
    vd = np.clip(np.asarray(V_d_raw, dtype=float) / d_comp, 0.0, 1.0)
    F = k1 * np.asarray(S_a) - k2 * cd - k3 * vd + k4 * np.asarray(S_n) + k5 * np.asarray(S_c)
    return F, cd, vd


# ---------------------------------------------------------------------------
# orthographic depth grid
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class OrthoDepthGrid:
    """Z-buffer of a rotated cloud on a regular xy grid.

    Cell (iy, ix) covers ``origin + [ix, ix+1) * resolution`` in x (same for
    y). ``z`` is +inf and ``winner`` is -1 in empty cells; ``winner`` indexes
    the cloud point that owns the cell's minimum z.
    """

    resolution: float
    origin: np.ndarray
    z: np.ndarray
    winner: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return self.winner >= 0

    def cell_of(self, xy) -> tuple[np.ndarray, np.ndarray]:
        g = np.floor((np.asarray(xy, dtype=float) - self.origin) / self.resolution).astype(np.int64)
        return g[..., 1], g[..., 0]


def rasterize_orthographic(points, resolution: float) -> OrthoDepthGrid:
    """Min-z rasterization of ``points`` (P, 3) onto an xy grid.

    The grid is anchored ``GRID_ANCHOR`` cells below the cloud's xy minimum,
    so it moves with the cloud under translation. Equal-z ties keep the lower point index.
    """
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    if len(pts) == 0:
        raise DomainError("cannot rasterize an empty cloud")
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    origin = pts[:, :2].min(axis=0) - GRID_ANCHOR * resolution
    ij = np.floor((pts[:, :2] - origin) / resolution).astype(np.int64)
    nx = int(ij[:, 0].max()) + 2
    ny = int(ij[:, 1].max()) + 2
    lin = ij[:, 1] * nx + ij[:, 0]
    order = np.lexsort((pts[:, 2], lin))
    lin_sorted = lin[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = lin_sorted[1:] != lin_sorted[:-1]
    cells = lin_sorted[first]
    owners = order[first]
    z = np.full(ny * nx, np.inf)
    winner = np.full(ny * nx, -1, dtype=np.int64)
    z[cells] = pts[owners, 2]
    winner[cells] = owners
    return OrthoDepthGrid(float(resolution), origin, z.reshape(ny, nx), winner.reshape(ny, nx))


def sample_grid(grid: OrthoDepthGrid, xy):
    """Bilinear depth lookup at continuous positions ``xy`` (..., 2).

    Cell centers are the interpolation nodes. Weights are renormalized over
    the occupied nodes among the four neighbours; the sample misses when
    those carry no weight. Also returns the point index of the occupied node
    with the largest weight (for normal lookup), -1 on a miss.
    """
    xy = np.asarray(xy, dtype=float)
    g = (xy - grid.origin) / grid.resolution - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0
    ny, nx = grid.z.shape
    wsum = np.zeros(xy.shape[:-1])
    zsum = np.zeros(xy.shape[:-1])
    best_w = np.full(xy.shape[:-1], -1.0)
    best_idx = np.full(xy.shape[:-1], -1, dtype=np.int64)
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        ix = i0[..., 0] + dx
        iy = i0[..., 1] + dy
        w = (f[..., 0] if dx else 1.0 - f[..., 0]) * (f[..., 1] if dy else 1.0 - f[..., 1])
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        ixc = np.clip(ix, 0, nx - 1)
        iyc = np.clip(iy, 0, ny - 1)
        win = np.where(inside, grid.winner[iyc, ixc], -1)
        occ = win >= 0
        w = np.where(occ, w, 0.0)
        wsum += w
        zsum += np.where(occ, w * np.where(occ, grid.z[iyc, ixc], 0.0), 0.0)
        better = occ & (w > best_w)
        best_w = np.where(better, w, best_w)
        best_idx = np.where(better, win, best_idx)
    miss = ~(wsum > 0)
    z = np.where(miss, np.nan, zsum / np.where(miss, 1.0, wsum))
    best_idx = np.where(miss, -1, best_idx)
    return z, miss, best_idx


def ring_positions(center, cup: SuctionCupModel) -> np.ndarray:
    """xy positions (..., N, 2) of the ring samples around ``center`` (..., >=2)."""
    c = np.asarray(center, dtype=float)[..., None, :2]
    th = cup.ring_angles
    offs = cup.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
    return c + offs


def sample_ring_depths(grid: OrthoDepthGrid, center, cup: SuctionCupModel):
    """Ring depths and miss flags around ``center``; shape (..., N)."""
    z, miss, _ = sample_grid(grid, ring_positions(center, cup))
    return z, miss


# ---------------------------------------------------------------------------
# per-pixel composition
# ---------------------------------------------------------------------------

def minimum_breakdown(config: ScoreConfig, shape=()) -> ScoreBreakdown:
    d = config.cup.compliance_depth
    z = np.zeros(shape)
    o = np.ones(shape)
    return ScoreBreakdown(S_a=z, C_d_raw=o * 2.0 * np.pi * d, V_d_raw=o * d, S_n=z.copy(), S_c=z.copy(),
                          C_d_norm=o.copy(), V_d_norm=o.copy(), F=o * config.weights.f_min)


def center_visible(grid: OrthoDepthGrid, centers, tolerance: float) -> np.ndarray:
    """True where a center's own cell holds no surface more than ``tolerance`` in front of it."""
    centers = np.asarray(centers, dtype=float)
    iy, ix = grid.cell_of(centers[..., :2])
    ny, nx = grid.z.shape
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    cz = grid.z[np.clip(iy, 0, ny - 1), np.clip(ix, 0, nx - 1)]
    return inside & (cz >= centers[..., 2] - tolerance)


def score_points(grid: OrthoDepthGrid, normals, normal_valid, centers, center_normals, center_valid,
                 config: ScoreConfig, reference=FACING_REFERENCE):
    """Score M contact points at once.

    ``normals``/``normal_valid`` are per cloud point (aligned with
    ``grid.winner``), already in the approach frame and oriented toward -z.
    Returns ``(breakdown, occupied)``; unoccupied centers get the minimum
    breakdown.
    """
    cup = config.cup
    d = cup.compliance_depth
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    occupied = center_visible(grid, centers, d)
    depths, misses, owner = sample_grid(grid, ring_positions(centers, cup))
    ring_ok = (owner >= 0)
    ring_n = np.asarray(normals)[np.where(ring_ok, owner, 0)]
    ring_nvalid = ring_ok & np.asarray(normal_valid)[np.where(ring_ok, owner, 0)]

    S_a = anomaly_score(depths, misses, d)
    C_d = depth_consistency_cost(depths, misses, d)
    V_d = depth_variability_cost(depths, misses, d)
    S_n = normal_consistency_score(ring_n, ring_nvalid, config.theta_thresh, reference)
    S_c = inclination_score(center_normals, center_valid, config.theta_max, reference)
    F, cd, vd = combine_F(S_a, C_d, V_d, S_n, S_c, config.weights, d)

    worst = minimum_breakdown(config, occupied.shape)
    out = ScoreBreakdown(S_a, C_d, V_d, S_n, S_c, cd, vd, F)
    for f in fields(out):
        setattr(out, f.name, np.where(occupied, getattr(out, f.name), getattr(worst, f.name)))
    return out, occupied


def score_pixel(grid: OrthoDepthGrid, normals, normal_valid, center, center_normal, center_valid: bool,
                config: ScoreConfig | None = None) -> ScoreBreakdown:
    """Score breakdown for a single contact point (see :func:`score_points`)."""
    config = config or ScoreConfig()
    out, _ = score_points(grid, normals, normal_valid, np.asarray(center, dtype=float)[None],
                          np.asarray(center_normal, dtype=float)[None], np.array([bool(center_valid)]),
                          config)
    return out.item(0)

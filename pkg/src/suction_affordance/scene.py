"""
Seeded bin scenes built from analytic primitives, and their depth / segmentation renders.

World frame: the bin interior is the box ``[-w/2, w/2] x [-h/2, h/2] x [0, d]``
with its open face at ``z = 0`` and the back wall at ``z = d``. The default
camera sits on the -z side looking into the opening.

Randomness comes from numpy's PCG64 generator. Every object draws from its
own stream ``SeedSequence(seed, spawn_key=(1, i))`` and the object count
from ``spawn_key=(0,)``, so adding objects never perturbs earlier draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import CameraExtrinsics, CameraIntrinsics, pixel_rays
from .errors import ConfigError, DomainError

SHAPES = ("box", "sphere", "cylinder")
EPS = 1e-12


@dataclass(eq=False)
class PrimitiveObject:
    """A box (half extents), sphere (radius) or z-axis cylinder (radius, half height).

    ``rotation`` maps object-local coordinates to world; ``translation`` is the
    world-frame center.
    """

    id: int
    shape: str
    size: tuple
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.id <= 0 or self.id > 0xFFFF:
            raise DomainError("object id must be in 1..65535")
        expected = {"box": 3, "sphere": 1, "cylinder": 2}
        if self.shape not in expected:
            raise DomainError(f"unknown shape {self.shape!r}")
        self.size = tuple(float(s) for s in np.atleast_1d(self.size))
        if len(self.size) != expected[self.shape] or min(self.size) <= 0:
            raise DomainError(f"bad dimensions for {self.shape}: {self.size}")
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        R = self.rotation
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise DomainError("object rotation is not orthonormal")

    @property
    def volume(self) -> float:
        return primitive_volume(self.shape, self.size)

    @property
    def bounding_radius(self) -> float:
        if self.shape == "box":
            return float(np.linalg.norm(self.size))
        if self.shape == "sphere":
            return self.size[0]
        return math.hypot(self.size[0], self.size[1])

    def aabb_half_extents(self) -> np.ndarray:
        """Half extents of the world-axis-aligned bounding box."""
        R = self.rotation
        if self.shape == "box":
            return np.abs(R) @ np.asarray(self.size)
        if self.shape == "sphere":
            return np.full(3, self.size[0])
        r, hh = self.size
        axis = R[:, 2]
        return np.abs(axis) * hh + r * np.sqrt(np.clip(1.0 - axis ** 2, 0.0, 1.0))

    def to_dict(self) -> dict:
        return {"id": self.id, "shape": self.shape, "size": list(self.size),
                "rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PrimitiveObject":
        return cls(int(d["id"]), d["shape"], tuple(d["size"]),
                   np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))


def primitive_volume(shape: str, size) -> float:
    if shape == "box":
        return 8.0 * size[0] * size[1] * size[2]
    if shape == "sphere":
        return 4.0 / 3.0 * math.pi * size[0] ** 3
    return math.pi * size[0] ** 2 * 2.0 * size[1]


@dataclass(frozen=True)
class BinSpec:
    size: tuple = (0.6, 0.4, 0.3)

    def __post_init__(self):
        if len(self.size) != 3 or min(self.size) <= 0:
            raise ConfigError("bin dimensions must be three positive lengths")

    @property
    def lo(self) -> np.ndarray:
        w, h, _ = self.size
        return np.array([-w / 2, -h / 2, 0.0])

    @property
    def hi(self) -> np.ndarray:
        w, h, d = self.size
        return np.array([w / 2, h / 2, d])

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))


def default_camera(bin_size, image_size=(120, 80), standoff=0.35):
    """Camera on the bin axis, ``standoff`` in front of the opening, framing the opening."""
    w, h, _ = bin_size
    W, H = image_size
    f = min((W / 2) * standoff / (w / 2), (H / 2) * standoff / (h / 2))
    K = CameraIntrinsics(f, f, W / 2, H / 2, W, H)
    E = CameraExtrinsics(np.eye(3), np.array([0.0, 0.0, standoff]))
    return K, E


@dataclass(frozen=True)
class SceneConfig:
    bin_size: tuple = (0.6, 0.4, 0.3)
    count_range: tuple = (1, 20)
    fill_factor: float = 0.3
    count_jitter: int = 2
    shapes: tuple = SHAPES
    box_half_extent: tuple = (0.02, 0.06)
    sphere_radius: tuple = (0.025, 0.05)
    cylinder_radius: tuple = (0.02, 0.045)
    cylinder_half_height: tuple = (0.03, 0.08)
    image_size: tuple = (120, 80)
    standoff: float = 0.35
    max_tries: int = 200

    def __post_init__(self):
        lo, hi = self.count_range
        if not (1 <= lo <= hi):
            raise ConfigError("count range must satisfy 1 <= min <= max")
        for name in ("box_half_extent", "sphere_radius", "cylinder_radius", "cylinder_half_height"):
            a, b = getattr(self, name)
            if not (0 < a <= b):
                raise ConfigError(f"{name} must be a positive range")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ConfigError("shapes must be a nonempty subset of box/sphere/cylinder")
        if self.fill_factor <= 0:
            raise ConfigError("fill factor must be positive")
        BinSpec(self.bin_size)

    def size_range(self, shape):
        if shape == "box":
            return [self.box_half_extent] * 3
        if shape == "sphere":
            return [self.sphere_radius]
        return [self.cylinder_radius, self.cylinder_half_height]

    def mean_object_volume(self) -> float:
        vols = [primitive_volume(s, [(a + b) / 2 for a, b in self.size_range(s)]) for s in self.shapes]
        return float(np.mean(vols))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


@dataclass(eq=False)
class SceneSpec:
    seed: int
    bin: BinSpec
    objects: list
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    metadata: dict = field(default_factory=dict)

    def object(self, oid: int) -> PrimitiveObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "bin": {"size": list(self.bin.size)},
            "objects": [o.to_dict() for o in self.objects],
            "camera": {"intrinsics": self.intrinsics.to_dict(), "extrinsics": self.extrinsics.to_dict()},
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        cam = d["camera"]
        return cls(int(d["seed"]), BinSpec(tuple(float(x) for x in d["bin"]["size"])),
                   [PrimitiveObject.from_dict(o) for o in d["objects"]],
                   CameraIntrinsics.from_dict(cam["intrinsics"]),
                   CameraExtrinsics.from_dict(cam["extrinsics"]), dict(d.get("metadata", {})))

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def object_count(seed: int, config: SceneConfig) -> int:
    rng = _stream(seed, 0)
    bin_vol = BinSpec(config.bin_size).volume
    n = round(config.fill_factor * bin_vol / config.mean_object_volume())
    n += int(rng.integers(-config.count_jitter, config.count_jitter + 1))
    lo, hi = config.count_range
    return int(min(max(n, lo), hi))


def sample_object(seed: int, index: int, config: SceneConfig, bin: BinSpec) -> PrimitiveObject:
    rng = _stream(seed, 1, index)
    lo, hi = bin.lo, bin.hi
    for _ in range(config.max_tries):
        shape = config.shapes[int(rng.integers(len(config.shapes)))]
        size = tuple(float(rng.uniform(a, b)) for a, b in config.size_range(shape))
        R = Rotation.random(random_state=rng).as_matrix()
        center = rng.uniform(lo, hi)
        obj = PrimitiveObject(index + 1, shape, size, R, center)
        half = obj.aabb_half_extents()
        if np.all(center - half >= lo) and np.all(center + half <= hi):
            return obj
    raise ConfigError(f"could not place object {index + 1} inside the bin after {config.max_tries} tries")


def sample_scene(seed: int, config: SceneConfig | None = None) -> SceneSpec:
    """Draw a random cluttered bin; deterministic in ``seed``."""
    config = config or SceneConfig()
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    bin = BinSpec(tuple(config.bin_size))
    smallest = min(min(a for a, _ in config.size_range(s)) for s in config.shapes)
    if 2 * smallest > min(bin.size):
        raise ConfigError("objects are larger than the bin")
    n = object_count(seed, config)
    objects = [sample_object(seed, i, config, bin) for i in range(n)]
    K, E = default_camera(bin.size, config.image_size, config.standoff)
    overlaps = []
    for i, a in enumerate(objects):
        for b in objects[i + 1:]:
            if np.linalg.norm(a.translation - b.translation) < a.bounding_radius + b.bounding_radius:
                overlaps.append([a.id, b.id])
    meta = {"config": config.to_dict(), "possible_interpenetration": overlaps}
    return SceneSpec(seed, bin, objects, K, E, meta)


# ---------------------------------------------------------------------------
# single-ray intersection (reference implementation, plain floats)
# ---------------------------------------------------------------------------

def _to_local(origin, direction, obj):
    R = obj.rotation.tolist()
    o = [origin[k] - obj.translation[k] for k in range(3)]
    ol = [sum(R[k][j] * o[k] for k in range(3)) for j in range(3)]
    dl = [sum(R[k][j] * direction[k] for k in range(3)) for j in range(3)]
    return ol, dl


def _smallest_positive(ts):
    good = [t for t in ts if t > EPS]
    return min(good) if good else None


def intersect_ray(origin, direction, obj: PrimitiveObject):
    """Distance along a unit ray to the nearest hit on ``obj``, or None."""
    origin = [float(x) for x in origin]
    direction = [float(x) for x in direction]
    if abs(math.sqrt(sum(d * d for d in direction)) - 1.0) > 1e-9:
        raise DomainError("ray direction must be a unit vector")
    o, d = _to_local(origin, direction, obj)
    if obj.shape == "sphere":
        r = obj.size[0]
        b = sum(o[k] * d[k] for k in range(3))
        c = sum(o[k] * o[k] for k in range(3)) - r * r
        disc = b * b - c
        if disc < 0:
            return None
        s = math.sqrt(disc)
        return _smallest_positive([-b - s, -b + s])
    if obj.shape == "box":
        tnear, tfar = -math.inf, math.inf
        for k in range(3):
            h = obj.size[k]
            if d[k] == 0.0:
                if o[k] < -h or o[k] > h:
                    return None
                continue
            t1 = (-h - o[k]) / d[k]
            t2 = (h - o[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            tnear = max(tnear, t1)
            tfar = min(tfar, t2)
        if tnear > tfar:
            return None
        return _smallest_positive([tnear, tfar])
    r, hh = obj.size
    cands = []
    a = d[0] * d[0] + d[1] * d[1]
    if a > 0:
        b = o[0] * d[0] + o[1] * d[1]
        c = o[0] * o[0] + o[1] * o[1] - r * r
        disc = b * b - a * c
        if disc >= 0:
            s = math.sqrt(disc)
            for t in ((-b - s) / a, (-b + s) / a):
                if abs(o[2] + t * d[2]) <= hh:
                    cands.append(t)
    if d[2] != 0.0:
        for zc in (-hh, hh):
            t = (zc - o[2]) / d[2]
            x, y = o[0] + t * d[0], o[1] + t * d[1]
            if x * x + y * y <= r * r:
                cands.append(t)
    return _smallest_positive(cands)


def _bin_walls(bin: BinSpec):
    """(axis, plane value, other-axis bounds) for the back wall and four side walls."""
    lo, hi = bin.lo, bin.hi
    walls = [(2, hi[2])]
    walls += [(0, lo[0]), (0, hi[0]), (1, lo[1]), (1, hi[1])]
    return walls, lo, hi


def intersect_bin(origin, direction, bin: BinSpec):
    """Nearest hit on the bin's five interior walls, or None."""
    walls, lo, hi = _bin_walls(bin)
    best = None
    for axis, value in walls:
        if direction[axis] == 0.0:
            continue
        t = (value - origin[axis]) / direction[axis]
        if t <= EPS:
            continue
        p = [origin[k] + t * direction[k] for k in range(3)]
        if all(lo[k] <= p[k] <= hi[k] for k in range(3) if k != axis):
            if best is None or t < best:
                best = t
    return best


# ---------------------------------------------------------------------------
# vectorized rendering
# ---------------------------------------------------------------------------

def _first_positive(*ts):
    out = np.full(ts[0].shape, np.inf)
    for t in ts:
        t = np.where(np.isfinite(t) & (t > EPS), t, np.inf)
        out = np.minimum(out, t)
    return out


def intersect_rays(origin, dirs, obj: PrimitiveObject) -> np.ndarray:
    """Vectorized nearest-hit distances for rays sharing one origin; inf on a miss."""
    R = obj.rotation
    o = (np.asarray(origin, dtype=float) - obj.translation) @ R
    d = np.asarray(dirs, dtype=float) @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        if obj.shape == "sphere":
            r = obj.size[0]
            b = d @ o
            c = o @ o - r * r
            disc = b * b - c
            s = np.sqrt(np.where(disc >= 0, disc, np.nan))
            return _first_positive(-b - s, -b + s)
        if obj.shape == "box":
            h = np.asarray(obj.size)
            t1 = (-h - o) / d
            t2 = (h - o) / d
            lo_t = np.minimum(t1, t2)
            hi_t = np.maximum(t1, t2)
            par = d == 0
            inside = (o >= -h) & (o <= h)
            lo_t = np.where(par, np.where(inside, -np.inf, np.inf), lo_t)
            hi_t = np.where(par, np.where(inside, np.inf, -np.inf), hi_t)
            tnear = lo_t.max(axis=1)
            tfar = hi_t.min(axis=1)
            hit = tnear <= tfar
            return np.where(hit, _first_positive(tnear, tfar), np.inf)
        r, hh = obj.size
        a = d[:, 0] ** 2 + d[:, 1] ** 2
        b = o[0] * d[:, 0] + o[1] * d[:, 1]
        c = o[0] ** 2 + o[1] ** 2 - r * r
        disc = b * b - a * c
        s = np.sqrt(np.where((disc >= 0) & (a > 0), disc, np.nan))
        side = []
        for t in ((-b - s) / a, (-b + s) / a):
            side.append(np.where(np.abs(o[2] + t * d[:, 2]) <= hh, t, np.nan))
        caps = []
        for zc in (-hh, hh):
            t = (zc - o[2]) / d[:, 2]
            x = o[0] + t * d[:, 0]
            y = o[1] + t * d[:, 1]
            caps.append(np.where((d[:, 2] != 0) & (x * x + y * y <= r * r), t, np.nan))
        return _first_positive(*side, *caps)


def intersect_bin_rays(origin, dirs, bin: BinSpec) -> np.ndarray:
    walls, lo, hi = _bin_walls(bin)
    origin = np.asarray(origin, dtype=float)
    best = np.full(len(dirs), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis, value in walls:
            t = (value - origin[axis]) / dirs[:, axis]
            p = origin + t[:, None] * dirs
            ok = (dirs[:, axis] != 0) & (t > EPS)
            for k in range(3):
                if k != axis:
                    ok &= (p[:, k] >= lo[k]) & (p[:, k] <= hi[k])
            best = np.where(ok & (t < best), t, best)
    return best


def camera_rays(scene: SceneSpec):
    """World-frame unit ray directions (H*W, 3) through pixel centers, plus their camera-z component."""
    K, E = scene.intrinsics, scene.extrinsics
    rays = pixel_rays(K).reshape(-1, 3)
    rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    return rays @ E.rotation, rays[:, 2]


def render_depth(scene: SceneSpec):
    """Ray-cast the scene. Returns ``(depth, seg)``.

    ``depth`` is float64 (H, W), the camera-frame z of the nearest hit, NaN where
    nothing is hit; ``seg`` is uint16 with the hit object's id, 0 for bin walls
    and misses.
    """
    K = scene.intrinsics
    dirs, zcomp = camera_rays(scene)
    origin = scene.extrinsics.center
    best = intersect_bin_rays(origin, dirs, scene.bin)
    seg = np.zeros(len(dirs), dtype=np.uint16)
    for obj in scene.objects:
        t = intersect_rays(origin, dirs, obj)
        closer = t < best
        best = np.where(closer, t, best)
        seg[closer] = obj.id
    depth = np.where(np.isfinite(best), best * zcomp, np.nan)
    return depth.reshape(K.height, K.width), seg.reshape(K.height, K.width)


def render_depth_reference(scene: SceneSpec):
    """Per-pixel min over :func:`intersect_ray` / :func:`intersect_bin`. Slow; for verification."""
    K = scene.intrinsics
    dirs, zcomp = camera_rays(scene)
    origin = scene.extrinsics.center.tolist()
    depth = np.full(len(dirs), np.nan)
    seg = np.zeros(len(dirs), dtype=np.uint16)
    for i, d in enumerate(dirs.tolist()):
        best = intersect_bin(origin, d, scene.bin)
        best_id = 0
        for obj in scene.objects:
            t = intersect_ray(origin, d, obj)
            if t is not None and (best is None or t < best):
                best, best_id = t, obj.id
        if best is not None:
            depth[i] = best * zcomp[i]
            seg[i] = best_id
    return depth.reshape(K.height, K.width), seg.reshape(K.height, K.width)


def plane_depth(K: CameraIntrinsics, normal, point) -> np.ndarray:
    """Depth image of the infinite plane through ``point`` with normal ``normal`` (camera frame)."""
    n = np.asarray(normal, dtype=float)
    rays = pixel_rays(K)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (n @ np.asarray(point, dtype=float)) / (rays @ n)
    return np.where(np.isfinite(z) & (z > 0), z, np.nan)

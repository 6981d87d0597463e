"""
Grasp evaluation: a geometric seal check, policy benchmarking and the masked
Huber loss between predicted and label affordance maps.

The seal check works on the depth image alone. The cloud is rotated into the
pose's approach frame and the contact is taken where the approach line
through ``p`` first meets a surface, so an imprecise ``p`` depth is harmless.
A trial fails when

    occluded     that first surface belongs to another object,
    inclination  the contact normal is tilted more than ``max_inclination``
                 from the approach axis,
    seal_gap     any ring sample misses or departs from the plane normal to
                 the approach through the contact by more than
                 ``seal_tolerance``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .camera import CameraIntrinsics, Pose6D, approach_rotation, backproject_depth, estimate_normals, project_point
from .errors import DomainError, NoGraspError
from .labels import AffordanceLabels, AngleGrid, generate_labels, grid_resolution_for
from .policy import centroid_grasp, select_grasp
from .scene import SceneConfig, SceneSpec, render_depth, sample_scene
from .scoring import ScoreConfig, SuctionCupModel, angle_to_reference, rasterize_orthographic, ring_positions, sample_grid

FAILURE_REASONS = ("seal_gap", "inclination", "occluded", "no_grasp")
STRAIGHT_ONLY = AngleGrid(0.0, 0.0, 5.0)
DIFFICULTY_LEVELS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class SealOracleConfig:
    seal_tolerance: float = 0.005
    max_inclination: float = 45.0
    approach_clearance: bool = True
    grid: ScoreConfig = field(default_factory=ScoreConfig)

    def __post_init__(self):
        if not self.seal_tolerance > 0:
            raise DomainError("seal tolerance must be positive")
        if not 0 < self.max_inclination < 90:
            raise DomainError("max inclination must lie in (0, 90) degrees")

    def to_dict(self) -> dict:
        return {"seal_tolerance": self.seal_tolerance, "max_inclination": self.max_inclination,
                "approach_clearance": self.approach_clearance,
                "grid_resolution": self.grid.grid_resolution, "adaptive_grid": self.grid.adaptive_grid,
                "grid_oversize": self.grid.grid_oversize}


@dataclass(eq=False)
class TrialResult:
    scene_id: object
    object_id: int
    policy: str
    pose: Pose6D | None
    success: bool
    reason: str | None = None

    def __post_init__(self):
        if self.success == (self.reason is not None):
            raise DomainError("failure reason must be present exactly when the trial failed")
        if self.reason is not None and self.reason not in FAILURE_REASONS:
            raise DomainError(f"unknown failure reason {self.reason!r}")


def seal_oracle(depth, seg, K: CameraIntrinsics, pose: Pose6D, cup: SuctionCupModel | None = None,
                config: SealOracleConfig | None = None, target_id: int | None = None,
                scene_id=None, policy: str = "") -> TrialResult:
    """Geometric stand-in for "the suction cup sealed on the target"."""
    cup = cup or SuctionCupModel()
    config = config or SealOracleConfig()
    depth = np.asarray(depth, dtype=float)
    seg = np.asarray(seg)
    H, W = depth.shape

    def result(reason):
        return TrialResult(scene_id, -1 if target_id is None else int(target_id), policy, pose,
                           reason is None, reason)

    if pose.pixel is not None:
        u, v = pose.pixel
    else:
        try:
            u, v = np.floor(project_point(pose.p, K)).astype(int)
        except DomainError:
            return result("no_grasp")
    if not (0 <= u < W and 0 <= v < H) or not np.isfinite(depth[v, u]):
        return result("no_grasp")
    if target_id is None:
        target_id = int(seg[v, u])
        if target_id == 0:
            return result("no_grasp")

    cloud = backproject_depth(depth, K)
    nm = estimate_normals(cloud)
    R = approach_rotation(pose.beta, pose.gamma)
    pts = cloud.points @ R
    grid = rasterize_orthographic(pts, grid_resolution_for(depth, K, config.grid))
    contact_xy = (np.asarray(pose.p) @ R)[:2]

    z_c, miss, owner = sample_grid(grid, contact_xy)
    if miss:
        return result("seal_gap")
    iy, ix = grid.cell_of(contact_xy)
    ny, nx = grid.z.shape
    first = grid.winner[iy, ix] if (0 <= iy < ny and 0 <= ix < nx) else -1
    if first < 0:
        first = int(owner)
    pix = cloud.pixel_index[first]
    if config.approach_clearance and int(seg.ravel()[pix]) != int(target_id):
        return result("occluded")

    n = nm.normals.reshape(-1, 3)[pix] @ R
    if not nm.valid.ravel()[pix]:
        return result("inclination")
    if n[2] > 0:
        n = -n
    if angle_to_reference(n) > config.max_inclination:
        return result("inclination")

    ring_z, ring_miss, _ = sample_grid(grid, ring_positions(np.append(contact_xy, z_c), cup))
    if ring_miss.any() or np.any(np.abs(ring_z - z_c) > config.seal_tolerance):
        return result("seal_gap")
    return result(None)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BenchmarkScene:
    scene_id: object
    depth: np.ndarray
    seg: np.ndarray
    K: CameraIntrinsics
    labels: AffordanceLabels | None = None
    difficulty: dict = field(default_factory=dict)  # object id -> easy/medium/hard
    straight_labels: AffordanceLabels | None = None  # labels over the single pair (0, 0)

    @property
    def object_ids(self) -> list[int]:
        ids = np.unique(self.seg)
        return [int(i) for i in ids if i != 0]


def _argmax_policy(scene: BenchmarkScene, mask):
    if scene.labels is None:
        raise NoGraspError("scene has no labels")
    return select_grasp(scene.labels, mask, scene.depth, scene.K)


def _no_angle_policy(scene: BenchmarkScene, mask):
    # the same labeler with the angle sweep collapsed to straight-in only
    if scene.straight_labels is None:
        raise NoGraspError("scene has no straight-approach labels")
    return select_grasp(scene.straight_labels, mask, scene.depth, scene.K)


def _centroid_policy(scene: BenchmarkScene, mask):
    return centroid_grasp(mask, scene.depth, scene.K)


POLICIES: dict[str, Callable] = {
    "argmax": _argmax_policy,
    "no-angle": _no_angle_policy,
    "centroid": _centroid_policy,
}


@dataclass(eq=False)
class BenchmarkReport:
    policies: dict
    config: dict
    trials: list = field(default_factory=list, repr=False)

    def rate(self, policy: str) -> float:
        return self.policies[policy]["success_rate"]

    def to_dict(self) -> dict:
        return {"policies": self.policies, "config": self.config}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        diffs = sorted({d for p in self.policies.values() for d in p["by_difficulty"]},
                       key=lambda d: DIFFICULTY_LEVELS.index(d) if d in DIFFICULTY_LEVELS else 9)
        head = f"{'policy':<10}" + "".join(f"{d:>10}" for d in diffs) + f"{'picked':>12}{'rate':>8}"
        lines = [head, "-" * len(head)]
        for name, p in self.policies.items():
            row = f"{name:<10}"
            for d in diffs:
                b = p["by_difficulty"].get(d)
                row += f"{100 * b['success_rate']:>9.1f}%" if b and b["attempts"] else f"{'-':>10}"
            row += f"{p['successes']:>7}/{p['attempts']:<4}{100 * p['success_rate']:>7.1f}%"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def ordering_holds(self, order=("argmax", "no-angle", "centroid"), min_gap: float = 0.0) -> bool:
        rates = [self.rate(p) for p in order]
        return all(a - b >= min_gap and a > b for a, b in zip(rates, rates[1:]))


def _tally(trials) -> dict:
    n = len(trials)
    s = sum(t.success for t in trials)
    return {"attempts": n, "successes": s, "success_rate": s / n if n else float("nan")}


def run_benchmark(scenes, policies=("argmax", "no-angle", "centroid"), config: SealOracleConfig | None = None,
                  cup: SuctionCupModel | None = None, oracle: Callable | None = None) -> BenchmarkReport:
    """Run every policy on every visible object of every scene and tally seal-oracle outcomes.

    ``policies`` holds names from :data:`POLICIES` or ``(name, callable)``
    pairs; a callable receives ``(scene, target_mask)`` and returns a pose.
    ``oracle`` replaces :func:`seal_oracle` (same signature).
    """
    config = config or SealOracleConfig()
    cup = cup or SuctionCupModel()
    oracle = oracle or seal_oracle
    named = [(p, POLICIES[p]) if isinstance(p, str) else tuple(p) for p in policies]
    trials = {name: [] for name, _ in named}
    for scene in scenes:
        for oid in scene.object_ids:
            mask = scene.seg == oid
            for name, fn in named:
                try:
                    pose = fn(scene, mask)
                except Exception:  # a crashed or empty policy is a failed attempt
                    trials[name].append(TrialResult(scene.scene_id, oid, name, None, False, "no_grasp"))
                    continue
                res = oracle(scene.depth, scene.seg, scene.K, pose, cup, config, target_id=oid,
                             scene_id=scene.scene_id, policy=name)
                res.object_id = oid
                trials[name].append(res)
    total = sum(len(t) for t in trials.values())
    if total == 0:
        raise DomainError("benchmark has no grasp attempts")
    diff_of = {}
    for scene in scenes:
        for oid in scene.object_ids:
            diff_of[(scene.scene_id, oid)] = scene.difficulty.get(oid, "unknown")
    summary = {}
    for name, ts in trials.items():
        entry = _tally(ts)
        groups = {}
        for t in ts:
            groups.setdefault(diff_of[(t.scene_id, t.object_id)], []).append(t)
        entry["by_difficulty"] = {d: _tally(g) for d, g in sorted(groups.items())}
        fails = {}
        for t in ts:
            if not t.success:
                fails[t.reason] = fails.get(t.reason, 0) + 1
        entry["failures"] = dict(sorted(fails.items()))
        summary[name] = entry
    conf = {"oracle": config.to_dict(), "cup": {"radius": cup.radius, "ring_samples": cup.ring_samples,
                                                "compliance_depth": cup.compliance_depth},
            "scenes": len(list(scenes))}
    return BenchmarkReport(summary, conf, [t for ts in trials.values() for t in ts])


def benchmark_scene_config() -> SceneConfig:
    """Scene distribution used by the default benchmark: a small bin seen at ~3 mm per pixel."""
    return SceneConfig(bin_size=(0.3, 0.2, 0.2), count_range=(3, 8), image_size=(120, 80), standoff=0.3)


def object_difficulty(depth, seg, K: CameraIntrinsics, cup: SuctionCupModel | None = None) -> dict:
    """Grade each visible object by how many cup footprints its mask holds.

    easy: >= 6 footprints, medium: >= 2, hard: fewer. The footprint is the cup
    disk projected at the object's median depth.
    """
    cup = cup or SuctionCupModel()
    out = {}
    for oid in np.unique(seg):
        if oid == 0:
            continue
        m = seg == oid
        z = float(np.median(depth[m]))
        footprint = np.pi * (cup.radius * K.fx / z) * (cup.radius * K.fy / z)
        ratio = m.sum() / footprint
        out[int(oid)] = "easy" if ratio >= 6 else "medium" if ratio >= 2 else "hard"
    return out


def prepare_benchmark_scene(spec: SceneSpec, grid: AngleGrid | None = None, config: ScoreConfig | None = None,
                            workers: int = 1, with_labels: bool = True) -> BenchmarkScene:
    depth, seg = render_depth(spec)
    labels = straight = None
    if with_labels:
        labels = generate_labels(depth, seg, None, spec.intrinsics, grid, config, workers=workers)
        straight = generate_labels(depth, seg, None, spec.intrinsics, STRAIGHT_ONLY, config)
    diff = object_difficulty(depth, seg, spec.intrinsics)
    return BenchmarkScene(spec.seed, depth, seg, spec.intrinsics, labels, diff, straight)


def default_benchmark(n_scenes: int = 200, first_seed: int = 0, workers: int = 1,
                      scene_config: SceneConfig | None = None, config: ScoreConfig | None = None,
                      oracle_config: SealOracleConfig | None = None, progress: Callable | None = None):
    """Sample, render and label ``n_scenes`` scenes, then benchmark the three built-in policies."""
    scene_config = scene_config or benchmark_scene_config()
    scenes = []
    for i in range(n_scenes):
        scenes.append(prepare_benchmark_scene(sample_scene(first_seed + i, scene_config), config=config,
                                              workers=workers))
        if progress:
            progress(i + 1, n_scenes)
    return run_benchmark(scenes, config=oracle_config)


# ---------------------------------------------------------------------------
# Huber loss
# ---------------------------------------------------------------------------

def huber_loss(pred, target, mask, delta: float = 1.0) -> float:
    """Summed Huber loss over all planes of ``pred``/``target`` (..., H, W) and all mask pixels.

    Per element, with a = target - pred: 0.5*a**2 if |a| < delta, else
    delta*(|a| - 0.5*delta).
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[-2:] != mask.shape:
        raise DomainError(f"mask shape {mask.shape} does not match maps {pred.shape[-2:]}")
    if not delta > 0:
        raise DomainError("delta must be positive")
    a = np.abs(target - pred)[..., mask]
    if not np.all(np.isfinite(a)):
        raise DomainError("non-finite map values inside the mask")
    per = np.where(a < delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return float(per.sum())


ANGLE_SCALE = 30.0


def affordance_huber_loss(pred, labels, mask, delta: float = 1.0) -> float:
    """Huber loss over the score, pitch and yaw maps; angles are divided by 30 degrees first.

    ``pred`` and ``labels`` are :class:`AffordanceLabels` or (3, H, W) plane stacks.
    Only mask pixels that carry a label contribute.
    """
    yp = pred.planes() if isinstance(pred, AffordanceLabels) else np.asarray(pred, dtype=float)
    yt = labels.planes() if isinstance(labels, AffordanceLabels) else np.asarray(labels, dtype=float)
    if yp.shape != yt.shape or yp.shape[0] != 3:
        raise DomainError("expected two (3, H, W) affordance stacks of equal shape")
    scale = np.array([1.0, ANGLE_SCALE, ANGLE_SCALE])[:, None, None]
    m = np.asarray(mask, dtype=bool) & np.all(np.isfinite(yt), axis=0)
    return huber_loss(yp / scale, yt / scale, m, delta)

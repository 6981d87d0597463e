"""Turning affordance maps or masks into 6D suction grasp poses."""

from __future__ import annotations

import re

import numpy as np

from .camera import CameraIntrinsics, Pose6D, approach_vector, backproject_pixel
from .errors import FormatError, NoGraspError
from .labels import AffordanceLabels


def select_grasp(labels: AffordanceLabels, target_mask, depth, K: CameraIntrinsics) -> Pose6D:
    """Highest-scoring labelled pixel inside ``target_mask``.

    Ties go to the lowest row, then the lowest column. The approach angles are
    read from the pitch/yaw maps at that pixel.
    """
    mask = np.asarray(target_mask, dtype=bool)
    depth = np.asarray(depth, dtype=float)
    if mask.shape != labels.shape or depth.shape != labels.shape:
        raise NoGraspError("mask, depth and labels are not aligned")
    usable = mask & labels.valid & np.isfinite(labels.f_map) & np.isfinite(depth)
    if not usable.any():
        raise NoGraspError("no labelled pixel inside the target mask")
    scores = np.where(usable, labels.f_map, -np.inf)
    flat = int(np.argmax(scores))  # first maximum in row-major order
    v, u = divmod(flat, labels.shape[1])
    beta = float(labels.beta_map[v, u])
    gamma = float(labels.gamma_map[v, u])
    p = backproject_pixel(u, v, depth[v, u], K)
    return Pose6D(p, approach_vector(beta, gamma), beta, gamma, pixel=(u, v))


def centroid_grasp(target_mask, depth, K: CameraIntrinsics) -> Pose6D:
    """Straight-in grasp at the mask centroid, using the median mask depth."""
    mask = np.asarray(target_mask, dtype=bool)
    depth = np.asarray(depth, dtype=float)
    if not mask.any():
        raise NoGraspError("empty target mask")
    d = depth[mask]
    d = d[np.isfinite(d)]
    if d.size == 0:
        raise NoGraspError("no finite depth inside the target mask")
    rows, cols = np.nonzero(mask)
    v = int(np.floor(rows.mean() + 0.5))
    u = int(np.floor(cols.mean() + 0.5))
    if not (0 <= v < mask.shape[0] and 0 <= u < mask.shape[1] and mask[v, u]):
        # nonzero() is row-major, so argmin picks the lowest row/col on ties
        d2 = (rows - v) ** 2 + (cols - u) ** 2
        i = int(np.argmin(d2))
        v, u = int(rows[i]), int(cols[i])
    p = backproject_pixel(u, v, float(np.median(d)), K)
    return Pose6D(p, approach_vector(0.0, 0.0), 0.0, 0.0, pixel=(u, v))


def format_pose(pose: Pose6D) -> str:
    """One-line plain-text pose record."""
    u, v = pose.pixel if pose.pixel is not None else (-1, -1)
    p = " ".join(f"{x:.9g}" for x in pose.p)
    a = " ".join(f"{x:.9g}" for x in pose.v)
    return f"pixel {u} {v} p {p} beta {pose.beta:g} gamma {pose.gamma:g} v {a}"


_POSE_RE = re.compile(
    r"pixel (-?\d+) (-?\d+) p (\S+) (\S+) (\S+) beta (\S+) gamma (\S+) v (\S+) (\S+) (\S+)\s*")


def parse_pose(text: str) -> Pose6D:
    m = _POSE_RE.fullmatch(text.strip())
    if not m:
        raise FormatError(f"not a pose record: {text!r}")
    g = m.groups()
    try:
        nums = [float(x) for x in g[2:]]
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    u, v = int(g[0]), int(g[1])
    pixel = None if (u, v) == (-1, -1) else (u, v)
    return Pose6D(np.array(nums[0:3]), np.array(nums[5:8]), nums[3], nums[4], pixel=pixel)

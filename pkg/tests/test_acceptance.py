"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line, and
the same lines are repeated in the pytest terminal summary."""

import math
import struct
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, ones_seg, small_camera, tilted_plane
from suction_affordance import formats
from suction_affordance.camera import backproject_depth
from suction_affordance.errors import FormatError
from suction_affordance.evaluation import affordance_huber_loss, benchmark_scene_config, default_benchmark, huber_loss
from suction_affordance.labels import (AngleGrid, generate_labels, grid_resolution_for, label_prepared, mask_from_seg,
                                       prepare_cloud)
from suction_affordance.scene import SceneConfig, render_depth, render_depth_reference, sample_scene
from suction_affordance.scoring import (ScoreConfig, ScoreWeights, anomaly_score, combine_F, depth_consistency_cost,
                                        depth_variability_cost, inclination_score, normal_consistency_score)


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ---------------------------------------------------------------------------
# 1. score formulas against a plain-Python re-derivation
# ---------------------------------------------------------------------------

def _brute_force(depths, misses, normals, nvalid, cnormal, cvalid, d=0.005, tt=30.0, tm=45.0,
                 k=(0.4, 0.1, 0.1, 0.2, 0.3)):
    n = len(depths)
    good = [x for x, m in zip(depths, misses) if not m]
    if not good:
        S_a, C, V = 0.0, 2 * math.pi * d, d
    else:
        top = max(good)
        ring = [top + d if m else x for x, m in zip(depths, misses)]
        gap = sum(d if m else top - x for x, m in zip(depths, misses))
        S_a = min(1.0, max(0.0, 1 - gap / (n * d)))
        C = (2 * math.pi / n) * sum(abs(ring[i] - ring[(i + 1) % n]) for i in range(n))
        mean = sum(ring) / n
        V = math.sqrt(sum((x - mean) ** 2 for x in ring) / n) if len(good) >= 2 else d

    def angle(nv):  # against the camera-facing axis (0, 0, -1)
        return math.degrees(math.acos(min(1.0, max(-1.0, -nv[2]))))

    S_n = sum(min(1.0, max(0.0, (tt - angle(nv)) / tt)) for nv, ok in zip(normals, nvalid) if ok) / n
    S_c = min(1.0, max(0.0, (tm - angle(cnormal)) / tm)) if cvalid else 0.0
    cd = min(1.0, max(0.0, C / (2 * math.pi * d)))
    vd = min(1.0, max(0.0, V / d))
    F = k[0] * S_a - k[1] * cd - k[2] * vd + k[3] * S_n + k[4] * S_c
    return dict(S_a=S_a, C=C, V=V, S_n=S_n, S_c=S_c, F=F)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _constructed_rings(rng):
    N = 36
    th = np.arange(N) * 2 * np.pi / N
    flat_n = np.tile([0.0, 0.0, -1.0], (N, 1))
    rings = []

    def add(depths, misses=None, normals=flat_n, nvalid=None, cn=(0, 0, -1), cv=True):
        misses = np.zeros(N, bool) if misses is None else np.asarray(misses, bool)
        nvalid = np.ones(N, bool) if nvalid is None else np.asarray(nvalid, bool)
        rings.append((np.asarray(depths, float), misses, np.asarray(normals, float), nvalid, _unit(cn), cv))

    add(np.full(N, 0.5))                                       # flat
    add(np.full(N, 0.73))                                      # flat, other depth
    for step in (0.001, 0.003, 0.005, 0.02):                   # stepped half ring
        add(0.5 + step * (th > np.pi))
    add(0.5 + 0.01 * (th < np.pi / 3))                         # stepped sixth
    for tilt in (5.0, 10.0, 25.0, 40.0):                       # tilted planes
        t = np.radians(tilt)
        nrm = np.tile([0.0, -np.sin(t), -np.cos(t)], (N, 1))
        add(0.5 + 0.015 * np.sin(th) * np.tan(t), normals=nrm, cn=nrm[0])
    for s in (0.0005, 0.002, 0.01):                            # noisy
        nrm = np.array([_unit([a, b, -1.0]) for a, b in rng.normal(0, 0.3, (N, 2))])
        add(0.5 + rng.normal(0, s, N), normals=nrm, nvalid=rng.random(N) > 0.2, cn=nrm[3])
    miss = np.zeros(N, bool)
    miss[:5] = True
    add(np.full(N, 0.5), misses=miss)                          # a few misses on a flat ring
    add(0.5 + 0.004 * np.sin(th), misses=rng.random(N) < 0.3)  # scattered misses
    add(np.full(N, np.nan), misses=np.ones(N, bool), nvalid=np.zeros(N, bool), cv=False)  # all missed
    one = np.ones(N, bool)
    one[7] = False
    add(np.full(N, 0.5), misses=one)                           # single valid sample
    add(np.full(N, 0.5), cn=(0.0, np.sin(np.radians(15)), -np.cos(np.radians(15))))  # 15 deg contact
    add(np.full(N, 0.5), cn=(1.0, 0.0, 0.0))                   # contact normal at 90 deg
    half = np.tile([0.0, 0.0, -1.0], (N, 1))
    half[N // 2:] = [0.0, np.sin(np.radians(15)), -np.cos(np.radians(15))]
    add(np.full(N, 0.5), normals=half)                         # S_n = 0.75
    add(np.full(N, 0.5), nvalid=np.zeros(N, bool), cv=False)   # no valid normals
    add(0.5 + 0.002 * rng.standard_normal(N), misses=rng.random(N) < 0.1,
        normals=np.array([_unit(v) for v in rng.normal(0, 1, (N, 3)) * [1, 1, 0.2] - [0, 0, 1]]))
    return rings


def test_criterion_1_score_formula_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    rings = _constructed_rings(rng)
    d, w = 0.005, ScoreWeights()
    worst = 0.0
    for depths, misses, normals, nvalid, cn, cv in rings:
        ref = _brute_force(depths.tolist(), misses.tolist(), normals.tolist(), nvalid.tolist(), cn.tolist(), cv)
        S_a = float(anomaly_score(depths, misses, d))
        C = float(depth_consistency_cost(depths, misses, d))
        V = float(depth_variability_cost(depths, misses, d))
        S_n = float(normal_consistency_score(normals, nvalid, 30.0))
        S_c = float(inclination_score(cn, cv, 45.0))
        F = float(combine_F(S_a, C, V, S_n, S_c, w, d)[0])
        got = dict(S_a=S_a, C=C, V=V, S_n=S_n, S_c=S_c, F=F)
        worst = max(worst, max(abs(got[key] - ref[key]) for key in ref))

    # worked values from the formula definitions
    hand = [
        (anomaly_score(np.r_[np.full(35, 0.5), 0.495], np.zeros(36, bool), d), 1 - 0.005 / 0.18),
        (depth_consistency_cost(np.array([0.5, 0.5, 0.5, 0.6]), np.zeros(4, bool), d), (np.pi / 2) * 0.2),
        (depth_variability_cost(np.array([0.5, 0.5, 0.5, 0.6]), np.zeros(4, bool), d), 0.043301270189221946),
        (inclination_score(_unit([0, np.sin(np.radians(15)), -np.cos(np.radians(15))]), True, 45.0), 2 / 3),
        (combine_F(1.0, 0.0, 0.0, 1.0, 1.0, w, d)[0], 0.9),
        (combine_F(0.0, 2 * np.pi * d, d, 0.0, 0.0, w, d)[0], -0.2),
    ]
    worst_hand = max(abs(float(a) - b) for a, b in hand)
    dt = time.perf_counter() - t0
    ok = len(rings) >= 20 and worst <= 1e-9 and worst_hand <= 1e-9 and dt < 1.0
    record(1, ok, f"{len(rings)} rings, max |err| {max(worst, worst_hand):.2e}, {dt:.3f}s")


# ---------------------------------------------------------------------------
# 2. tilted planes recover their tilt
# ---------------------------------------------------------------------------

def test_criterion_2_tilt_recovery():
    K = small_camera()
    t0 = time.perf_counter()
    inner = np.zeros((64, 64), bool)
    inner[18:46, 18:46] = True
    worst, worst_at = 2.0, None
    for b0 in (-30, -20, -10, 0, 10, 20, 30):
        for g0 in (-30, -20, -10, 0, 10, 20, 30):
            depth = tilted_plane(K, b0, g0)
            L = generate_labels(depth, ones_seg(depth), None, K, workers=4)
            hit = (np.abs(L.beta_map - b0) <= 5) & (np.abs(L.gamma_map - g0) <= 5)
            frac = hit[inner].mean()
            if frac < worst:  # first plane with the lowest recovery rate
                worst, worst_at = frac, (b0, g0)
    dt = time.perf_counter() - t0
    record(2, worst >= 0.95 and dt < 120, f"worst plane {worst_at} at {100 * worst:.1f}% of interior, {dt:.1f}s")


# ---------------------------------------------------------------------------
# 3. translating the scene along the optical axis leaves F unchanged
# ---------------------------------------------------------------------------

def test_criterion_3_shift_invariance():
    # Adding 0.1 m to a pinhole depth image is not a rigid motion (it also
    # rescales x and y), so the shift is applied to the back-projected cloud.
    cfg = benchmark_scene_config()
    config = ScoreConfig()
    worst = 0.0
    mismatched = 0
    for seed in range(1000, 1050):
        spec = sample_scene(seed, cfg)
        depth, seg = render_depth(spec)
        cloud = backproject_depth(depth, spec.intrinsics)
        mask = mask_from_seg(seg)
        res = grid_resolution_for(depth, spec.intrinsics, config)
        a = label_prepared(prepare_cloud(cloud, mask, res), config=config, workers=4)
        b = label_prepared(prepare_cloud(cloud.translated((0.0, 0.0, 0.1)), mask, res), config=config, workers=4)
        mismatched += int(np.any(a.valid != b.valid))
        if a.valid.any():
            worst = max(worst, float(np.max(np.abs(a.f_map[a.valid] - b.f_map[a.valid]))))
    record(3, worst <= 1e-6 and mismatched == 0, f"50 scenes, max |dF| {worst:.2e}, valid-set mismatches {mismatched}")


# ---------------------------------------------------------------------------
# 4. worker count never changes the output bytes
# ---------------------------------------------------------------------------

def test_criterion_4_schedule_independence():
    cfg = benchmark_scene_config()
    differing = []
    for seed in range(2000, 2020):
        spec = sample_scene(seed, cfg)
        depth, seg = render_depth(spec)
        blobs = {w: formats.encode_labels(generate_labels(depth, seg, None, spec.intrinsics, workers=w))
                 for w in (1, 4, 8)}
        if not (blobs[1] == blobs[4] == blobs[8]):
            differing.append(seed)
    record(4, not differing, f"20 scenes x workers (1, 4, 8), differing scenes: {differing or 'none'}")


# ---------------------------------------------------------------------------
# 5. the label map is the pixelwise max over all per-angle maps
# ---------------------------------------------------------------------------

def test_criterion_5_exhaustiveness():
    cfg = SceneConfig(bin_size=(0.3, 0.2, 0.2), count_range=(3, 8), image_size=(64, 64), standoff=0.3)
    grid = AngleGrid()
    bad = 0
    for seed in range(3000, 3005):
        spec = sample_scene(seed, cfg)
        depth, seg = render_depth(spec)
        L = generate_labels(depth, seg, None, spec.intrinsics, grid, workers=4, keep_maps=True)
        assert len(L.per_angle) == 169
        stack = np.stack([L.per_angle[p] for p in grid.pairs])
        with np.errstate(invalid="ignore"):
            best = np.fmax.reduce(stack, axis=0)
        same = np.array_equal(best, L.f_map, equal_nan=True)
        # the recorded angles must point at a map that attains the max
        v, u = np.nonzero(L.valid)
        picked = np.array([L.per_angle[(L.beta_map[i, j], L.gamma_map[i, j])][i, j] for i, j in zip(v, u)])
        bad += int(not same or not np.array_equal(picked, L.f_map[L.valid]))
    record(5, bad == 0, f"5 scenes at 64x64, 169 maps each, scenes violating max: {bad}")


# ---------------------------------------------------------------------------
# 6. Huber loss values
# ---------------------------------------------------------------------------

def test_criterion_6_huber_loss():
    m = np.ones((1, 1), bool)
    zero = affordance_huber_loss(np.zeros((3, 4, 4)) + 0.3, np.zeros((3, 4, 4)) + 0.3, np.ones((4, 4), bool))
    quad = huber_loss(np.zeros((1, 1)), np.full((1, 1), 0.5), m)
    lin = huber_loss(np.zeros((1, 1)), np.full((1, 1), 2.0), m)
    gaps = []
    for delta in (0.25, 1.0, 3.0):
        at = huber_loss(np.zeros((1, 1)), np.full((1, 1), delta), m, delta)
        below = huber_loss(np.zeros((1, 1)), np.full((1, 1), delta - 1e-12), m, delta)
        above = huber_loss(np.zeros((1, 1)), np.full((1, 1), delta + 1e-12), m, delta)
        gaps += [abs(at - below), abs(at - above), abs(at - 0.5 * delta * delta)]
    ok = zero == 0.0 and abs(quad - 0.125) < 1e-12 and abs(lin - 1.5) < 1e-12 and max(gaps) < 1e-9
    record(6, ok, f"identical {zero}, a=0.5 -> {quad}, a=2 -> {lin}, continuity gap {max(gaps):.1e}")


# ---------------------------------------------------------------------------
# 7. ablation ordering on the default benchmark
# ---------------------------------------------------------------------------

def test_criterion_7_ablation_ordering():
    t0 = time.perf_counter()
    report = default_benchmark(200, workers=4)
    dt = time.perf_counter() - t0
    r = {p: report.rate(p) for p in ("argmax", "no-angle", "centroid")}
    print(report.to_table())
    ok = report.ordering_holds(("argmax", "no-angle", "centroid"), 0.03) and dt < 600
    record(7, ok, "argmax {:.1%} > no-angle {:.1%} > centroid {:.1%} over {} attempts, {:.0f}s".format(
        r["argmax"], r["no-angle"], r["centroid"], report.policies["argmax"]["attempts"], dt))


# ---------------------------------------------------------------------------
# 8. vectorized renderer against the per-ray reference
# ---------------------------------------------------------------------------

def test_criterion_8_renderer_oracle():
    worst, seg_diff, nan_diff = 0.0, 0, 0
    for seed in range(4000, 4010):
        spec = sample_scene(seed)
        d1, s1 = render_depth(spec)
        d2, s2 = render_depth_reference(spec)
        nan_diff += int(np.sum(np.isfinite(d1) != np.isfinite(d2)))
        fin = np.isfinite(d1) & np.isfinite(d2)
        worst = max(worst, float(np.max(np.abs(d1[fin] - d2[fin]), initial=0.0)))
        seg_diff += int(np.sum(s1 != s2))
    record(8, worst <= 1e-9 and seg_diff == 0 and nan_diff == 0,
           f"10 scenes, max |dz| {worst:.1e}, seg mismatches {seg_diff}, hit mismatches {nan_diff}")


# ---------------------------------------------------------------------------
# 9. format fuzzing
# ---------------------------------------------------------------------------

def _sample_files(rng):
    depth = rng.uniform(0.2, 1.0, (6, 9))
    depth[rng.random(depth.shape) < 0.2] = np.nan
    seg = rng.integers(0, 5, (6, 9))
    planes = np.stack([rng.uniform(-0.2, 0.9, (6, 9)), rng.choice(np.arange(-30, 31, 5), (6, 9)),
                       rng.choice(np.arange(-30, 31, 5), (6, 9))]).astype(float)
    planes[:, rng.random((6, 9)) < 0.3] = np.nan
    return [(formats.encode_depth(depth), formats.decode_depth, "depth"),
            (formats.encode_seg(seg), formats.decode_seg, "seg"),
            (formats.encode_labels(planes), formats.decode_labels, "labels")]


def _structural_mutation(rng, data: bytes, kind: str) -> bytes:
    """A mutation that breaks a documented structural rule of the file."""
    b = bytearray(data)
    hdr = formats.HEADER.size
    choices = ["magic", "version", "width", "height", "truncate", "extend", "empty"]
    if kind == "depth":
        choices.append("nonpositive")
    if kind == "labels":
        choices += ["planes", "angle", "nan_split"]
    op = choices[rng.integers(len(choices))]
    if op == "magic":
        i = rng.integers(0, 4)
        b[i] ^= 1 << int(rng.integers(8))
    elif op in ("version", "width", "height", "planes"):
        off = {"version": 4, "width": 8, "height": 12, "planes": hdr}[op]
        (val,) = struct.unpack_from("<I", b, off)
        struct.pack_into("<I", b, off, val ^ (1 << int(rng.integers(32))))
    elif op == "truncate":
        b = b[:rng.integers(0, len(b))]
    elif op == "extend":
        b += bytes(rng.integers(0, 256, rng.integers(1, 40), dtype=np.uint8))
    elif op == "empty":
        b = bytearray()
    elif op == "nonpositive":
        arr = np.frombuffer(bytes(b), "<f4", offset=hdr).copy()
        arr[rng.integers(len(arr))] = -abs(rng.uniform(0, 5)) if rng.random() < 0.8 else 0.0
        b = b[:hdr] + arr.tobytes()
    else:
        off = hdr + 4
        arr = np.frombuffer(bytes(b), "<f4", offset=off).copy().reshape(3, -1)
        fin = np.flatnonzero(np.isfinite(arr[0]))
        j = fin[rng.integers(len(fin))]
        if op == "angle":
            arr[1 + rng.integers(2), j] = rng.choice([-1, 1]) * rng.uniform(30.01, 1e4)
        else:
            arr[rng.integers(3), j] = np.nan
        b = b[:off] + arr.astype("<f4").tobytes()
    return bytes(b)


def test_criterion_9_format_fuzzing():
    rng = np.random.default_rng(20240)
    files = _sample_files(rng)
    rejected = crashed = accepted = 0
    for i in range(10_000):
        data, decode, kind = files[i % 3]
        bad = _structural_mutation(rng, data, kind)
        try:
            decode(bad)
            accepted += 1
        except FormatError:
            rejected += 1
        except Exception:  # anything else is a crash
            crashed += 1
    # In-range payload bit flips may decode to another valid map; they must
    # still never raise anything but a format error.
    other = 0
    for i in range(2_000):
        data, decode, _ = files[i % 3]
        b = bytearray(data)
        j = int(rng.integers(formats.HEADER.size, len(b)))
        b[j] ^= 1 << int(rng.integers(8))
        try:
            decode(bytes(b))
        except FormatError:
            pass
        except Exception:
            other += 1
    ok = rejected == 10_000 and crashed == 0 and other == 0
    record(9, ok, f"10000 structural mutations: {rejected} rejected, {accepted} accepted, {crashed} crashed; "
                  f"2000 payload flips: {other} crashed")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))

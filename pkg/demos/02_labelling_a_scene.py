"""From a random bin to affordance labels and a grasp.

Samples a cluttered bin, ray-casts depth and segmentation, sweeps the 169
approach angles for every object pixel and picks a grasp for each object with
the label argmax and with the mask-centroid baseline. PNGs of the three label
planes are written next to this script.
"""

import time
from pathlib import Path

import numpy as np

from suction_affordance import formats
from suction_affordance.evaluation import benchmark_scene_config, seal_oracle
from suction_affordance.labels import generate_labels
from suction_affordance.policy import centroid_grasp, format_pose, select_grasp
from suction_affordance.scene import render_depth, sample_scene

spec = sample_scene(7, benchmark_scene_config())
print(f"scene 7: {len(spec.objects)} objects:", ", ".join(o.shape for o in spec.objects))

depth, seg = render_depth(spec)
K = spec.intrinsics
print("depth range (m):", np.nanmin(depth).round(3), "-", np.nanmax(depth).round(3))

t = time.perf_counter()
labels = generate_labels(depth, seg, None, K, workers=4)
print(f"labelled {int(labels.valid.sum())} pixels in {time.perf_counter() - t:.2f}s")

# How often is a tilted approach preferred?
tilted = (labels.beta_map != 0) | (labels.gamma_map != 0)
print(f"share of pixels preferring a tilted approach: {tilted[labels.valid].mean():.1%}")

for oid in np.unique(seg[seg > 0]):
    mask = seg == oid
    for name, pose in [("argmax", select_grasp(labels, mask, depth, K)),
                       ("centroid", centroid_grasp(mask, depth, K))]:
        r = seal_oracle(depth, seg, K, pose, target_id=int(oid))
        print(f"object {oid} {name:8s} {'ok  ' if r.success else r.reason:12s} {format_pose(pose)}")

out = Path(__file__).with_suffix("")
out.mkdir(exist_ok=True)
w = labels.planes()
(out / "score.png").write_bytes(formats.viz_png(w[0], -0.2, 0.9))
(out / "pitch.png").write_bytes(formats.viz_png(w[1], -30, 30))
(out / "yaw.png").write_bytes(formats.viz_png(w[2], -30, 30))
print("wrote", sorted(p.name for p in out.iterdir()))

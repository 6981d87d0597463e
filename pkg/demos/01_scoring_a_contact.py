"""Scoring one suction contact by hand.

Builds a small synthetic surface, rasterizes it into the orthographic depth
grid the labeler uses, and prints the per-term breakdown of the grasp score
for a flat spot, a spot on a step and a spot behind the surface.
"""

import numpy as np

from suction_affordance.scoring import ScoreConfig, rasterize_orthographic, score_pixel

# A 9 cm square patch at 0.5 m, sampled every 0.8 mm. The right half is raised
# 2 cm toward the camera to make a step edge.
xs = np.arange(-0.045, 0.045 + 1e-12, 0.0008)
X, Y = np.meshgrid(xs, xs)
Z = np.where(X > 0, 0.48, 0.5)
points = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
normals = np.tile([0.0, 0.0, -1.0], (len(points), 1))  # camera-facing
valid = np.ones(len(points), bool)

config = ScoreConfig()
grid = rasterize_orthographic(points, config.grid_resolution)
print("grid cells:", grid.z.shape, "occupied:", int(grid.occupied.sum()))

for name, center in [("flat, far from the step", [-0.02, 0.0, 0.5]),
                     ("next to the step", [-0.002, 0.0, 0.5]),
                     ("hidden under the raised half", [0.01, 0.0, 0.5])]:
    b = score_pixel(grid, normals, valid, center, [0, 0, -1.0], True, config)
    terms = ", ".join(f"{k}={v:.3f}" for k, v in b.as_dict().items())
    print(f"{name:32s} {terms}")

# The flat spot reaches the maximum k1 + k4 + k5; the hidden one gets the
# minimum -(k2 + k3).
print("score range:", config.weights.f_min, "to", config.weights.f_max)

"""A quick version of the policy benchmark.

Runs the three built-in policies on a handful of scenes and prints success
rates by difficulty plus the failure reasons. The full benchmark uses 200
scenes; 20 are enough to see the ordering.
"""

import sys
import time

from suction_affordance.evaluation import default_benchmark

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
t = time.perf_counter()
report = default_benchmark(n, workers=4, progress=lambda i, k: print(f"\rscene {i}/{k}", end=""))
print(f"\n{n} scenes in {time.perf_counter() - t:.0f}s\n")
print(report.to_table())
for name, p in report.policies.items():
    print(f"{name:10s} failures: {p['failures']}")
print("\nargmax > no-angle > centroid by 3 points:", report.ordering_holds(min_gap=0.03))

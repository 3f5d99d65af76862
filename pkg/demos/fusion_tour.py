"""Lift 2D tokens into the voxel grid and fuse them with each variant.

Run with ``python3 demos/fusion_tour.py``.
"""

import numpy as np

from vql3d.fusion import (DEMO_WORKSPACE, FUSION_VARIANTS, AttentionParams, FeatureVolume3D,
                          demo_camera, frustum_mask, fuse_demo, sttx)

camera = demo_camera()
volume = FeatureVolume3D(np.zeros((8, 8, 8, 1)), *DEMO_WORKSPACE)
mask = frustum_mask(camera, volume)
print(f"Demo camera sees {int(mask.sum())} of {mask.size} voxel centers.")

print("\nPer-variant digest (voxels outside the frustum must pass through unchanged):")
for variant in FUSION_VARIANTS:
    doc = fuse_demo(0, "desk", variant)
    print(f"  {variant:>3}: attention calls {doc['attention_calls']:>3}, "
          f"row-sum dev {doc['weight_row_sum_max_dev']:.1e}, "
          f"passthrough ok {doc['passthrough_identical']} ({doc['passthrough_voxels']} voxels)")

print("\nWindowed temporal attention only mixes nearby frames:")
rng = np.random.default_rng(0)
f = rng.normal(size=(20, 2, 8))
params = AttentionParams.random(8, 2, seed=1)
base = sttx(f, 2, params).output
poked = f.copy()
poked[10] += 1.0
changed = [t for t in range(20) if not np.array_equal(sttx(poked, 2, params).output[t], base[t])]
print(f"  perturbing frame 10 with window 2 changes frames {changed}")

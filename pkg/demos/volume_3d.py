"""
A volume from three projections
===============================

An 8x8x4 volume of 30% filled voxels is seen along its three axes.  Each
voxel lies on three rays, one per axis.
"""
import numpy as np

from v2tomo.bench import three_d_demo

result = three_d_demo((4, 8, 8), 0.3, seed=0)
original = result.original.to_array()
recon = result.reconstruction.to_array()
print(f"verified {result.verified} in {result.attempts} run(s), "
      f"{result.report.agitations_used} agitations in the last")
print(f"{recon.sum()} voxels set, {int((recon != original).sum())} differ from the original")
for z in range(original.shape[0]):
    print(f"\nlayer {z}   original   reconstruction")
    for a, b in zip(original[z], recon[z]):
        print("          " + "".join("#" if v else "." for v in a)
              + "   " + "".join("#" if v else "." for v in b))

"""Lift a 1+1 region to 1+2 and print the height profile of the lift.

Run with ``python demos/lift_demo.py``.
"""

import numpy as np

from infralab.jld import MinkowskiGrid, breve_lift, make_region

grid = MinkowskiGrid.symmetric(1, 4.0, 0.25)
# a union of translated double cones of half-height 1
prims = [{"kind": "double_cone", "a": [1.125, x + 0.125], "b": [-0.875, x + 0.125]}
         for x in np.arange(-1.0, 1.01, 0.5)]
G = make_region(grid, prims)
L = breve_lift(G, sigma_cells=8)
sigma = L.grid.axis(2)
for k, s in enumerate(sigma):
    print(f"sigma={s:+.3f}  cells={int(L.mask[..., k].sum())}")
print("max |sigma| in the lift:", np.abs(sigma[L.mask.any(axis=(0, 1))]).max())

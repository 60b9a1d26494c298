"""
Expanding glassy spheres
========================

The walk lives on B_k and the ball only grows to B_{k+1} after N(k) visits to
its rim.  In d = 3 the walk is transient exactly when sum_k N(k) k^{-2} is
finite, so the threshold for N(k) = k^alpha is alpha = 1: both 1.5 and 2.5
are on the recurrent side, and 0.5 is transient.
"""

import numpy as np

from monowalk import potential as pt
from monowalk.egs import egs_run, egs_table
from monowalk.rng import stream

# %%
for alpha in (0.5, 1.5, 2.5):
    rep = pt.egs_criterion(pt.PowerSchedule(1, alpha), 3, 10_000)
    print(f"alpha={alpha}: partial sum at 1e4 = {rep.partial_sums[-1]:.2f}, verdict {rep.verdict}")

# %%
h = 200_000
for alpha in (0.5, 1.5, 2.5):
    n0 = [egs_run(3, pt.PowerSchedule(1, alpha), h, stream(7, i), checkpoints=[h]).final_n0 for i in range(20)]
    print(f"alpha={alpha}: median returns to 0 by t={h}: {np.median(n0)}")

# %%
r = egs_run(2, 1, 20_000, stream(1))
print(egs_table(r.taus, 1, 2).splitlines()[:6])

# %%
# The recurrence/transience series from exact solves: inf and sup over the
# ring just inside the rim, scaled by k^{d-1}.
rec, tra = pt.egs_bracket(1, 3, ks=range(4, 13))
print("k^2 inf-P:", np.round(rec.extra["normalized"], 3))
print("k^2 sup-P:", np.round(tra.extra["normalized"], 3))

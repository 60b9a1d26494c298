"""
Probing walks
=============

The walker may only step on sites that have been probed.  A guided strategy
lays down lines of a stretched lattice and pays for probes only at new sites,
so its per-step cost falls like 1/L.  An unguided strategy lands probes by the
exit law of the current domain and pays a coupon-collector price per new site.
"""

import numpy as np

from monowalk.psrw import coupon_bound, coupon_run, guided_run, line_run
from monowalk.rng import stream

# %%
h = 200_000
for L in (2, 4, 8):
    vals = [guided_run(3, L, h, stream(2, i), checkpoints=[h // 2, h]).report().trailing for i in range(5)]
    print(f"L={L}: trailing mean probes per step {np.median(vals):.4f}")

# %%
r = line_run(3, 3, 1000, stream(0))
print("line strategy, M=3: mbar =", set(np.round(r.report().mbar, 12)))

# %%
for d in (2, 3):
    r = coupon_run(d, 100_000, stream(1, 0, "walk"), stream(1, 0, "aux"), checkpoints=[100_000])
    fv = r.first_visit_probes
    print(f"d={d}: {fv.size} first visits, mean probes {fv.mean():.3f}, domination bound {coupon_bound(d):.3f}")

"""
A coupling that only pushes right
=================================

E opens its right, up and down edges on a first visit and then pauses; R is a
plain planar SRW driven by the same uniforms.  Their l1 distance never
shrinks, and on an empty initial domain it grows at least like t^{1/2}.
"""

import numpy as np

from monowalk.interactions import coupled_biased_run
from monowalk.rng import domain_seed, stream

# %%
h = 1_000_000
cps = [10 ** k for k in range(2, 7)]
for p in (0.0, 0.3):
    runs = [coupled_biased_run(p, domain_seed(1, i), h, stream(1, i), checkpoints=cps) for i in range(10)]
    med = np.median([r.diff1 for r in runs], axis=0)
    print(f"p={p}: violations {sum(r.violations for r in runs)}, median |E-R|_1 at {cps}: {med}")

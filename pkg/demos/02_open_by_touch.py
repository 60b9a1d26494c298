"""
Open-by-touch walks
===================

The walker starts on B(0,1).  Whenever it stands on a site with a closed edge,
all of that site's edges open (one step later).  The domain it carves out is
close to a ball; returns to 0 behave like SRW on the full lattice.
"""

import numpy as np

from monowalk import Streams, WalkState, ball
from monowalk.interactions import OBT, POBT
from monowalk.potential import ars_check
from monowalk.walker import run

# %%
for d in (2, 3):
    res = run(WalkState.start(ball((0,) * d, 1)), OBT(), 200_000, Streams.from_seed(3))
    last = res.checkpoints[-1]
    print(f"d={d}: N0={last.N0}, last return {last.last_return}, {last.domain_sites} sites opened")

# %%
# Partial opening: each boundary visit opens one uniformly chosen closed edge with probability 1/2.
pol = POBT(0.5, "one-uniform")
res = run(WalkState.start(ball((0, 0), 1)), pol, 100_000, Streams.from_seed(4))
print("boundary visits", pol.boundary_visits, "openings", pol.openings)

# %%
# Shape of the OBT cluster: f is the radius of the largest disc inside the
# cluster, and gamma_min the in-domain distance from that disc to the farthest
# site, in units of log f.  A single unvisited site near 0 caps f, so f moves
# in jumps and differs a lot between seeds.
for seed in (5, 6, 7):
    state = WalkState.start(ball((0, 0), 1))
    streams = Streams.from_seed(seed)
    pol = OBT()
    snaps, t = {}, 0
    for k in (12, 14, 16, 18):
        run(state, pol, 2 ** k - t, streams, stopping=False)
        t = 2 ** k
        snaps[t] = set(state.domain.sites)
    checks, gamma = ars_check(snaps, gamma=3.0)
    print(f"seed {seed}: f =", [round(c.f, 2) for c in checks], " gamma_min =",
          [None if c.gamma_min is None else round(c.gamma_min, 1) for c in checks])

"""
Summing return chances along the way
====================================

Between a time eta_n when the walk is off the boundary and the next boundary
visit sigma_n, the domain is effectively frozen.  Adding up the chance p_n of
visiting 0 in each such window decides recurrence.  On the layered chain these
chances are exact gambler's-ruin values.
"""

import numpy as np

from monowalk.egs import LayeredChain, layered_chain_run, layered_resolver, return_trend
from monowalk.potential import s_estimator
from monowalk.rng import stream

# %%
h = 1_000_000
for p_plus in (0.5, 2 / 3):
    chain = LayeredChain(p_plus, 1.0, 1)
    verdicts, half, full = [], [], []
    for i in range(5):
        r = layered_chain_run(chain, h, stream(3, i), checkpoints=[h // 2, h])
        est = s_estimator(r.records, layered_resolver(chain, r.max_w + 3))
        verdicts.append(est.verdict)
        half.append(r.n0[0])
        full.append(r.n0[1])
    print(f"p+={p_plus:.3f}: S verdicts {verdicts}, returns {return_trend(np.array(half), np.array(full))}")

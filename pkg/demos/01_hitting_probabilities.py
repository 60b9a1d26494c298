"""
Hitting probabilities on finite lattice domains
===============================================

Every question about "does the walk come back" on a frozen domain reduces to a
discrete Dirichlet problem: h = 1 on the target, 0 on the killing set, and h
harmonic everywhere else.
"""

import numpy as np

from monowalk import potential as pt

# %%
# Gambler's ruin on [-n, n]: the solver reproduces 1 - |x|/n.
n = 20
sites = [(x,) for x in range(-n, n + 1)]
prob = pt.DirichletProblem.from_sites(sites, target=[(0,)], killing=[(-n,), (n,)], start=(5,))
sol = pt.solve_hit_probability(prob)
print("h(5) =", sol.value, " exact:", 1 - 5 / n)

# %%
# A planar ball: probability of reaching 0 before the rim, from every site.
sol = pt.solve_hit_probability(pt.ball_problem(2, 12, "euclidean"))
row = sol.field[sol.problem.index((0, 0))[0], :]
print("h along the x axis:", np.round(row[np.isfinite(row)], 3))
print("dense oracle agrees:", np.nanmax(np.abs(sol.field - pt.solve_dense(sol.problem).field)))

# %%
# Exit law of SRW from a two-site domain: 4/15 from each free side of the start, 1/15 elsewhere.
for site, p in sorted(pt.hitting_measure([(0, 0), (1, 0)], (0, 0)).items()):
    print(site, round(p, 6))

# %%
# In d = 3 the chance of ever hitting 0 decays like |y|^{-1}; the calibrated
# constant makes c_3 |y|_1^{-1} an upper bound.
ball = pt.solve_hit_probability(pt.ball_problem(3, 30), method="cg")
for r in (1, 2, 4, 8, 16):
    print(f"|y|_1={r:2d}  exact on B(0,30): {ball.at((r, 0, 0)):.4f}  bound: {pt.ever_hit_zero_bound((r, 0, 0)):.4f}")

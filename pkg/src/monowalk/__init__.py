"""Random walks on monotone growing subgraphs of Z^d."""

from .lattice import GrowingDomain, ModelError, ball, bernoulli_domain, box, full_lattice, induced, neighbors
from .potential import (CriterionReport, DirichletProblem, PowerSchedule, TableSchedule, egs_bracket,
                        egs_criterion, ever_hit_zero_bound, obt_box_criterion, s_estimator, s_star,
                        solve_hit_probability)
from .rng import Streams, stream
from .walker import WalkState, run, srw_step

__version__ = "0.1.0"

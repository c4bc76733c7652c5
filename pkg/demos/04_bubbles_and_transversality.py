"""
Transversality mismatches and bubble solutions
==============================================

Solving the utility recursion as a family of finite-horizon problems needs a
transversality condition e^{-nu t} E[V_t] -> 0.  With the matched rate there
are no anomalies; a too-weak rate (nu > delta) admits "bubble" solutions whose
sign is opposite to the utility flow, and a too-strong rate (nu < delta) can
exclude the optimal policy itself.
"""

import numpy as np

from ezmerton import Market, Preferences
from ezmerton.closed_form import (
    crra_bubble_quantities,
    difference_form_roots,
    max_transversal_consumption,
)
from ezmerton.experiments import transversality_sweep
from ezmerton import candidate_policy

market = Market(r=0.02, mu=0.07, sigma=0.2)
delta, R = 0.03, 2.0

# Matched rate: every admitted cell has the correct sign.
cells = transversality_sweep(delta, R, market, nu=delta,
                             xi_grid=np.linspace(0.005, 0.25, 50))
print("nu = delta: bubbles =", sum(c.bubble.is_bubble for c in cells),
      "of", len(cells), "cells")

# Weaker rate nu = delta + 0.02: the engineered consumption fraction xi_eps
# has a *positive* value while every utility flow is negative -- sustained
# purely by expectations of the far future.
xi_eps = 0.075625
bubble = crra_bubble_quantities(delta, R, market, xi_eps, nu=delta + 0.02)
print("xi_eps cell: V0 = %.2f, value sign %+d vs flow sign %+d, "
      "transversality %s" % (bubble.V0, bubble.flag.value_sign,
                             bubble.flag.aggregator_sign,
                             bubble.transversality_ok))

# The largest consumption fraction any investment can make transversal:
for nu in (delta - 0.02, delta, delta + 0.02):
    print("nu = %+.3f: xi_max = %.6f" % (nu, max_transversal_consumption(nu, market, R)))

# Recursive utility: the time-homogeneous difference-form coefficient solves
# B * H = b*theta*B^rho.  In the contractive regime there is one root; with
# theta < 0 the extra roots appear exactly where the rate H is negative,
# which is the bubble territory the sweep flags.
prefs = Preferences(b=1.0, delta=delta, R=R, S=2.5)
policy = candidate_policy(prefs, market)
print("\ncontractive roots:", difference_form_roots(prefs, market, policy.strategy))

from ezmerton.closed_form import ProportionalStrategy

mixed = Preferences(b=1.0, delta=delta, R=2.0, S=0.5)  # theta = -2
print("theta<0 roots:",
      difference_form_roots(mixed, market, ProportionalStrategy(0.625, 0.2)))

"""
Verification of the candidate policy and the edge of well-posedness
===================================================================

Three numerical witnesses that the candidate policy is optimal over all
admissible consumption streams, plus what goes wrong when eta <= 0.
"""

import numpy as np

from ezmerton import (
    AdaptedGrid,
    Market,
    Preferences,
    TailClosure,
    candidate_lattice,
    candidate_policy,
    decay_rate,
    generalized_utility,
    mc_drift_check,
)
from ezmerton.experiments import verification_check, wellposed_divergence

prefs = Preferences(b=1.0, delta=0.03, R=2.0, S=2.5)
market = Market(r=0.02, mu=0.07, sigma=0.2)
policy = candidate_policy(prefs, market)

# 1. The perturbed dynamic-programming identities: the consumption part A1 and
#    investment part A2 are never positive, vanish exactly at the candidate
#    controls, and the residual part A3 vanishes identically.
report = verification_check(prefs, market, epsilon=0.1, n_strategies=5,
                            seed=1, n_samples=5000, dt=0.01, n_steps=150)
print("max A1 = %.2e, max A2 = %.2e, max |A3| = %.2e"
      % (report.max_A1, report.max_A2, report.max_abs_A3))
print("at the optimum:", report.at_optimum)
print("random strategies classified:",
      [v["classification"] for v in report.strategy_verdicts])

# 2. Monte Carlo transversality: e^{-delta*theta*t} X_t^{1-R} decays at the
#    closed-form rate H = theta*eta under the candidate strategy.
H = decay_rate(prefs.delta * prefs.theta, prefs, market, policy.strategy)
mc = mc_drift_check(market, policy.strategy, nu=prefs.delta * prefs.theta,
                    R=prefs.R, n_paths=50_000, horizon=5.0, seed=2)
print("\nMC slope %.6f vs -H = %.6f (se %.1e)" % (mc.slope, -H, mc.stderr))

# 3. Every stream is evaluable by monotone truncation against the candidate.
#    The zero stream under R > 1 collapses to -infinity, as it should.
lat = candidate_lattice(prefs, market, dt=0.01, n_steps=500)
tail = TailClosure.proportional(policy.strategy, prefs, market)
zero = AdaptedGrid([np.zeros(k + 1) for k in range(lat.n_steps + 1)])
gen = generalized_utility(zero, prefs, market, lat, tail, n_max=8192)
print("\nzero stream truncation values (every doubling):",
      ["%.3g" % v for v in gen.values[::4]])
print("classification:", gen.classification)

# eta <= 0 in closed form: for R < 1 the supremum explodes upward; for R > 1
# shifted accounting units squeeze the value to -infinity.
low = wellposed_divergence(Preferences(b=1, delta=0.05, R=0.5, S=0.25), market)
print("\nR<1, eta<0:", low.verdict, " last probe value %.3e" % low.values[-1])
high = wellposed_divergence(Preferences(b=1, delta=-0.1, R=2.0, S=2.5), market)
print("R>1, eta<0:", high.verdict, " bound sequence head:",
      ["%.1f" % v for v in high.values[:4]])

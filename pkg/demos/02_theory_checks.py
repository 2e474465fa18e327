"""Randomised checks of the three theoretical claims, and where they break.

The magnitude claim holds exactly. The monotonicity claim does not follow
from its hypothesis once the vectors live in more than one dimension: the
slope of f has an affine numerator M(beta), and M(0) can be positive even
when the hypothesis holds.
"""

import numpy as np

from fedecgr.analysis import (
    TheoryCase,
    check_error_reduction,
    decreasing_on_unit_interval,
    lemma_condition,
    monotonicity_curve,
    run_theory_suites,
    slope_numerator,
)

for dim in (1, 2, 16):
    print(f"dim={dim}")
    for r in run_theory_suites(1000, dim=dim, seed=42):
        print(f"  {r.name:<24} {r.passed:>4}/{r.total}")

# smallest counterexample I know of
x, y, z = np.array([1.0, 0.0]), np.array([-0.1, 1.0]), np.array([1.0, 1.0])
print("\nhypothesis holds:", lemma_condition(x, y, z))
print("f on the grid:   ", np.round(monotonicity_curve(x, y, z), 4))
print("M(0), M(1):      ", slope_numerator(x, y, z, 0), slope_numerator(x, y, z, 1))
print("exact decreasing test:", decreasing_on_unit_interval(x, y, z))
ok, lhs, rhs = check_error_reduction(TheoryCase(x, y, z, 0.2))
print(f"error at beta=0.2: {lhs:.4f} vs plain {rhs:.4f} -> reduced: {ok}")

# among random triples where M stays negative, the error reduction does hold
gen = np.random.default_rng(0)
kept = fails = 0
while kept < 500:
    a, b, mu = gen.standard_normal((3, 16))
    case = TheoryCase(a, b, mu, 0.2)
    if case.assumption_holds and decreasing_on_unit_interval(a, b, mu):
        kept += 1
        fails += not check_error_reduction(case)[0]
print(f"\nwith f truly decreasing: {kept - fails}/{kept} cases reduce the error")

"""Numerical verification of the supporting inequalities.

The faithfulness analysis rests on a few operator inequalities: the
two-sided relation between fidelity and trace distance, a gentle
measurement bound, uniform continuity of local expectations, and a
finite-size bound between a permutation-invariant state's marginal and a
product mixture.  All of them are checked here on randomized instances,
then the two-way ingredients (eigenphase arc length and worst-case
overlap) are evaluated on the phase encoding itself.
"""

import numpy as np

from dqsim import metrics, qcore

print("inequality property suites (fixed seed):")
for result in metrics.run_inequality_suites():
    flag = "ok" if result.passed else "VIOLATED"
    print(f"  {result.name:28s} {result.checks:4d} checks, "
          f"{result.violations} violations [{flag}]")

print("\ntwo-way ingredients for the phase encoding:")
for n in (1, 2, 3):
    for phi in (0.1, 0.3):
        u = qcore.encoding_unitary(n, phi)
        arc = metrics.delta_arc(u)
        worst = metrics.acin_min_fidelity(u)
        print(f"  n={n} phi={phi}: arc length {arc:.6f} (= 2*n*phi), "
              f"worst-case overlap {worst:.6f}")

print("\nmarginal-versus-mixture bound on an explicit 4-party state:")
ghz = np.zeros(16, dtype=complex)
ghz[0] = ghz[-1] = 1 / np.sqrt(2)
mixture = [(0.5, qcore.DensityMatrix(np.diag([1.0, 0.0]))),
           (0.5, qcore.DensityMatrix(np.diag([0.0, 1.0])))]
rep = metrics.definetti_inequality_check(qcore.PureState(ghz), m=4, k=2,
                                         mixture=mixture)
print(f"  distance estimate {rep.lhs:.2e} <= bound {rep.rhs:.4f}: {rep.holds}")

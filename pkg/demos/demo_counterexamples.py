"""Why 4/3 and 1/2 cannot be improved: exact 2x2 iteration maps.

The bilinear toy min-max x*y turns one solver step into multiplication by a
2x2 matrix.  At stepsize product 4/3 the map has eigenvalues (-1, 1/3):
every start off the stable eigenline oscillates forever.  The quadratic toy
x^2/2 + x*y plays the same role for the strong-convexity weight 1/2.
"""

import numpy as np

import prepdhg as pd
from prepdhg.counterexamples import in_stable_line

print("bilinear toy, iteration-map eigenvalues and trajectory verdicts")
print(f"{'tau*sigma':>10} {'|mu1|':>8} {'verdict':>20} {'norm at horizon':>16}")
for product in (1.0, 1.32, 4.0 / 3.0, 1.34):
    tau = 1.2
    dyn = pd.ToyDynamics("bilinear", tau, product / tau)
    mu1, mu2 = pd.eig2(dyn.G)
    res = pd.classify(dyn, np.array([1.0, 0.0]), max_iter=100000)
    print(f"{product:10.4f} {abs(mu1):8.4f} {res.verdict:>20} "
          f"{res.final_norm:16.3e}")

print()
sigma = (4.0 / 3.0) / 1.2
dyn = pd.ToyDynamics("bilinear", 1.2, sigma)
x0 = np.array([2.0, sigma])
print(f"start on the stable eigenline (2, sigma): in line = "
      f"{in_stable_line(dyn, x0)}, verdict = "
      f"{pd.classify(dyn, x0).verdict}")

print()
print("quadratic toy: dominant |eigenvalue| as the weight crosses 1/2")
table = pd.rho2_boundary_scan(1.0, [0.3, 0.4, 0.49, 0.5, 0.51, 0.6, 0.7])
for rho3, sig, dom in table:
    marker = "<- exactly on the unit circle" if rho3 == 0.5 else ""
    print(f"  rho = {rho3:4.2f}: |mu| = {dom:.10f} {marker}")

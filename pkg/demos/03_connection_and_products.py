"""The metric connection and the symmetric product, with its independent oracle.

The coefficients come from the six-term Koszul right-hand side solved against
the metric; the symmetric product then measures whether a distribution traps
geodesics.  A second, unrelated computation -- nested brackets of vertical
lifts with the geodesic spray on the total space -- must agree.
"""

import numpy as np

from algmech import christoffel, robotic_leg, symmetric_product, symprod_via_lifts

leg = robotic_leg()
S, Gm = leg.structure, leg.metric
e1, e2, e3 = leg.basis_sections()

p = np.array([2.0, 0.3, 0.1])
gamma = christoffel(S, Gm, p).gamma
print("nonzero connection coefficients at r=2:")
for (a, b, c), value in np.ndenumerate(gamma):
    if abs(value) > 1e-9:
        print(f"  gamma^{a + 1}_{b + 1}{c + 1} = {value:.6g}")

# the antisymmetric part in the lower indices recovers the structure functions
assert np.max(np.abs(gamma - np.transpose(gamma, (0, 2, 1)) - S.structure(p))) < 1e-6

print("\nsymmetric products of the control directions at r=1:")
q = np.array([1.0, 0.0, 0.0])
print("  <Y1:Y1> =", symmetric_product(S, Gm, e1, e1, q), " (leaves the span: -2/(m r^3) Y2)")
print("  <Y1:Y2> =", symmetric_product(S, Gm, e1, e2, q))
print("  <Y2:Y2> =", symmetric_product(S, Gm, e2, e2, q))

rng = np.random.default_rng(0)
direct = symmetric_product(S, Gm, e1, e3, q)
oracle = symprod_via_lifts(S, Gm, e1, e3, q, rng.uniform(-1, 1, size=3))
print("\ndirect vs vertical-lift oracle:", direct, oracle)
assert np.max(np.abs(direct - oracle)) < 1e-3

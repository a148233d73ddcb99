"""The reduction battery: decoupling sections, kinematic reductions,
geodesic invariance, and maximal reducibility.

Three control systems, three different outcomes:
  * the robotic leg is maximally reducible -- its control span is closed
    under the symmetric product;
  * the planar body has two decoupling directions but the span is not
    geodesically invariant;
  * the snakeboard has decoupling controls whose mixed product escapes.
"""

from algmech import (
    is_decoupling,
    kinematic_reduction_check,
    maximal_reducibility_check,
    planar_body,
    robotic_leg,
    snakeboard,
    symmetric_closure,
)

for sysd in (robotic_leg(), planar_body(), snakeboard()):
    S, Gm, Dc = sysd.structure, sysd.metric, sysd.controls
    points = sysd.sample(20, seed=0)
    print(f"== {sysd.name}")
    for X in Dc.sections:
        rep = is_decoupling(S, Gm, Dc, X, points)
        print(f"   decoupling {X.label}: {rep.verdict} (worst {rep.worst_residual:.2e})")
    rep = kinematic_reduction_check(S, Gm, Dc, Dc, points)
    print(f"   control span is a kinematic reduction: {rep.verdict}")
    rep = maximal_reducibility_check(S, Gm, Dc, Dc, points)
    print(f"   maximally reducible: {rep.verdict}")
    rank, generators = symmetric_closure(S, Gm, Dc, 3, points[0])
    print(f"   symmetric closure rank: {rank} of {sysd.m} "
          f"({len(generators)} generators)")

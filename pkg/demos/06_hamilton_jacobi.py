"""Hamilton-Jacobi candidates: the differential test, its trajectory twin,
and admissible reparametrizations.

A candidate section solves the constrained Hamilton-Jacobi equation when the
differential of its energy density annihilates the control complement.  Under
the closedness hypothesis this is equivalent to every integral curve of the
anchored section lifting to a controlled trajectory.
"""

from algmech import hj_trajectory_equivalence, reparam_admissible, planar_body, robotic_leg
from algmech.report import hj_algebraic_check

for sysd, names in ((planar_body(), ("gY1", "gY2", "xY1")),
                    (robotic_leg(), ("fY1", "thetaY1"))):
    points = sysd.sample(20, seed=0)
    print(f"== {sysd.name}")
    for name in names:
        rep = hj_algebraic_check(sysd, sysd.candidates[name], points, 1e-4)
        closed = rep.details["closedness_residual"]
        print(f"   {name}: {rep.verdict} (equation {rep.worst_residual:.2e}, "
              f"closedness {closed:.2e})")
        if rep.verdict == "fail":
            print(f"      witness point: {rep.witness_point}")
        traj = hj_trajectory_equivalence(sysd.structure, sysd.metric, sysd.potential,
                                         sysd.controls, sysd.candidates[name],
                                         points[0], 2.0, 1e-3)
        print(f"   {name} along its flow: {traj.verdict} "
              f"(residual {traj.worst_residual:.2e})")
    for fname, f in sysd.reparam_candidates.items():
        rep = reparam_admissible(sysd.structure, sysd.metric, sysd.controls, f, points)
        print(f"   reparametrization {fname}: {rep.verdict}")

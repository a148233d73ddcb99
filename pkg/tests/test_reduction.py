import numpy as np
import pytest

from algmech import (
    ForceField,
    Projector,
    Section,
    Subbundle,
    VerificationReport,
    geodesic_invariance_check,
    hj_residual,
    hj_trajectory_equivalence,
    is_decoupling,
    kinematic_reduction_check,
    maximal_reducibility_check,
    project,
    recover_controls,
    reparam_admissible,
    symmetric_closure,
)
from algmech.report import hj_algebraic_check


def basis(i, m=3):
    return Section.basis(i, m)


class TestProjector:
    def test_algebra_identities(self, planar, leg, board, rng):
        """Idempotence, complementarity and metric orthogonality at random points."""
        for sysd in (planar, leg, board):
            P = Projector(sysd.controls, sysd.metric)
            for p in sysd.sample(200, seed=17):
                Pm, Qm = P.p_matrix(p), P.q_matrix(p)
                G = sysd.metric.matrix(p)
                assert np.max(np.abs(Pm @ Pm - Pm)) < 1e-9
                assert np.max(np.abs(Pm + Qm - np.eye(sysd.m))) < 1e-12
                u, v = rng.uniform(-1, 1, size=(2, sysd.m))
                assert abs((Pm @ u) @ G @ (Qm @ v)) < 1e-9

    def test_projection_fixes_members(self, planar, rng):
        P = Projector(planar.controls, planar.metric)
        p = np.array([0.4, -0.3, 1.0])
        X = basis(0).plus(basis(1))
        assert np.max(np.abs(project(P, X, p) - X(p))) < 1e-9

    def test_reconstruction_on_random_vectors(self, board, rng):
        P = Projector(board.controls, board.metric)
        p = board.sample(1, seed=8)[0]
        for _ in range(10):
            v = rng.uniform(-2, 2, size=3)
            assert np.max(np.abs(P.p_matrix(p) @ v + P.q_matrix(p) @ v - v)) < 1e-12

    def test_planar_complement_is_fixed_by_q(self, planar):
        P = Projector(planar.controls, planar.metric)
        p = np.array([0.0, 0.0, 0.4])
        e3 = basis(2)
        assert np.max(np.abs(P.q_matrix(p) @ e3(p) - e3(p))) < 1e-9

    def test_declared_complements_match_computed(self, planar, leg, board):
        for sysd in (planar, leg, board):
            P = Projector(sysd.controls, sysd.metric)
            residual = P.declared_complement_residual(sysd.declared_complement,
                                                      sysd.sample(20, seed=19))
            assert residual < 1e-8

    def test_complement_basis_is_orthonormal(self, board):
        P = Projector(board.controls, board.metric)
        p = board.sample(1, seed=23)[0]
        rows = P.complement_basis(p)
        G = board.metric.matrix(p)
        assert rows.shape == (1, 3)
        assert rows[0] @ G @ rows[0] == pytest.approx(1.0, abs=1e-12)


class TestVerificationReport:
    def test_pass_requires_residual_below_tolerance(self):
        with pytest.raises(ValueError):
            VerificationReport("x", "pass", 1.0, None, 5, 1e-3)

    def test_fail_requires_witness(self):
        with pytest.raises(ValueError):
            VerificationReport("x", "fail", 1.0, None, 5, 1e-3)

    def test_serialization_keys(self):
        rep = VerificationReport("x", "fail", 1.0, np.array([0.0, 1.0]), 5, 1e-3)
        doc = rep.to_dict()
        assert set(doc) >= {"predicate", "verdict", "worst_residual",
                            "witness_point", "samples", "tolerance"}
        assert doc["witness_point"] == [0.0, 1.0]


class TestDecoupling:
    def test_planar_controls_are_decoupling(self, planar):
        points = planar.sample(20, seed=0)
        for X in planar.controls.sections:
            rep = is_decoupling(planar.structure, planar.metric, planar.controls, X, points)
            assert rep.verdict == "pass"

    def test_planar_complement_is_not(self, planar):
        points = planar.sample(20, seed=0)
        rep = is_decoupling(planar.structure, planar.metric, planar.controls,
                            basis(2), points)
        assert rep.verdict == "fail"
        assert rep.witness_point is not None
        assert rep.worst_residual > 0.5

    def test_snakeboard_controls_are_decoupling(self, board):
        points = board.sample(20, seed=0)
        for X in board.controls.sections:
            rep = is_decoupling(board.structure, board.metric, board.controls, X, points)
            assert rep.verdict == "pass"

    def test_snakeboard_complement_fails(self, board):
        points = board.sample(10, seed=0)
        rep = is_decoupling(board.structure, board.metric, board.controls, basis(0), points)
        assert rep.verdict == "fail"

    def test_scaling_preserves_verdicts(self, planar):
        points = planar.sample(10, seed=1)
        for c in (2.0, -3.0, 0.25):
            good = is_decoupling(planar.structure, planar.metric, planar.controls,
                                 basis(0).scaled_by(c), points)
            bad = is_decoupling(planar.structure, planar.metric, planar.controls,
                                basis(2).scaled_by(c), points)
            assert good.verdict == "pass"
            assert bad.verdict == "fail"

    def test_force_outside_controls_is_inconclusive(self, planar):
        points = planar.sample(5, seed=2)
        F = ForceField.from_section(basis(2))  # pushes along the complement
        rep = is_decoupling(planar.structure, planar.metric, planar.controls,
                            basis(0), points, force=F)
        assert rep.verdict == "inconclusive"

    def test_compatible_force_keeps_verdict(self, planar):
        points = planar.sample(5, seed=2)
        F = ForceField.from_section(basis(0).scaled_by(0.3))
        rep = is_decoupling(planar.structure, planar.metric, planar.controls,
                            basis(0), points, force=F)
        assert rep.verdict == "pass"


class TestKinematicReduction:
    def test_leg_controls_form_a_reduction(self, leg):
        rep = kinematic_reduction_check(leg.structure, leg.metric, leg.controls,
                                        leg.controls, leg.sample(20, seed=0))
        assert rep.verdict == "pass"

    def test_planar_controls_do_not(self, planar):
        rep = kinematic_reduction_check(planar.structure, planar.metric, planar.controls,
                                        planar.controls, planar.sample(20, seed=0))
        assert rep.verdict == "fail"
        assert rep.worst_residual > 0.4  # the cross product leaks onto the complement

    def test_rank_one_span_agrees_with_decoupling(self, planar):
        points = planar.sample(15, seed=4)
        for X, expected in ((basis(0), "pass"), (basis(1), "pass"), (basis(2), "fail")):
            single = Subbundle((X,), label="single")
            rep = kinematic_reduction_check(planar.structure, planar.metric,
                                            planar.controls, single, points)
            assert rep.verdict == expected
            assert is_decoupling(planar.structure, planar.metric, planar.controls,
                                 X, points).verdict == expected


class TestSymmetricClosure:
    def test_planar_controls_fill_the_fiber_in_one_step(self, planar):
        p = np.array([0.5, -0.5, 0.3])
        rank, generators = symmetric_closure(planar.structure, planar.metric,
                                             planar.controls, 3, p)
        assert rank == 3
        assert len(generators) > 2

    def test_leg_controls_are_a_fixpoint(self, leg):
        p = np.array([1.5, 0.2, -0.6])
        rank, generators = symmetric_closure(leg.structure, leg.metric,
                                             leg.controls, 4, p)
        assert rank == 2

    def test_full_bundle_is_immediate(self, planar):
        full = Subbundle(tuple(planar.basis_sections()), label="full")
        rank, generators = symmetric_closure(planar.structure, planar.metric, full, 3,
                                             np.array([0.1, 0.1, 0.1]))
        assert rank == 3
        assert len(generators) == 3

    def test_rank_is_monotone_in_depth(self, planar, board):
        for sysd in (planar, board):
            p = sysd.sample(1, seed=6)[0]
            ranks = [symmetric_closure(sysd.structure, sysd.metric, sysd.controls,
                                       d, p)[0] for d in (0, 1, 2, 3)]
            assert all(a <= b for a, b in zip(ranks, ranks[1:]))


class TestGeodesicInvariance:
    def test_leg_controls_pass_both_routes(self, leg):
        rep = geodesic_invariance_check(leg.structure, leg.metric, leg.controls,
                                        leg.sample(8, seed=0), horizon=1.0, step=1e-2)
        assert rep.verdict == "pass"
        assert rep.details["algebraic_residual"] < 1e-5
        assert rep.details["trajectory_residual"] < 1e-3

    def test_planar_controls_fail_both_routes(self, planar):
        rep = geodesic_invariance_check(planar.structure, planar.metric, planar.controls,
                                        planar.sample(8, seed=0), horizon=1.0, step=1e-2)
        assert rep.verdict == "fail"
        assert rep.details["algebraic_residual"] > 1e-2
        assert rep.details["trajectory_residual"] > 1e-2

    def test_whole_bundle_is_invariant(self, planar):
        full = Subbundle(tuple(planar.basis_sections()), label="full")
        rep = geodesic_invariance_check(planar.structure, planar.metric, full,
                                        planar.sample(5, seed=0), horizon=0.5, step=1e-2)
        assert rep.verdict == "pass"


class TestMaximalReducibility:
    def test_verdict_vector(self, planar, leg, board):
        outcomes = {}
        for sysd in (planar, leg, board):
            rep = maximal_reducibility_check(sysd.structure, sysd.metric, sysd.controls,
                                             sysd.controls, sysd.sample(15, seed=0))
            outcomes[sysd.name] = rep.verdict
        assert outcomes == {"planar_body": "fail", "robotic_leg": "pass",
                            "snakeboard": "fail"}

    def test_forced_systems_rejected(self, planar):
        F = ForceField.from_section(basis(0))
        with pytest.raises(ValueError, match="force-free"):
            maximal_reducibility_check(planar.structure, planar.metric, planar.controls,
                                       planar.controls, planar.sample(3, seed=0), force=F)


class TestHamiltonJacobi:
    def test_planar_family_passes(self, planar):
        points = planar.sample(20, seed=0)
        rep = hj_algebraic_check(planar, planar.candidates["gY1"], points, 1e-4)
        assert rep.verdict == "pass"
        assert rep.details["closedness_residual"] < 1e-4

    def test_leg_family_passes(self, leg):
        points = leg.sample(20, seed=0)
        rep = hj_algebraic_check(leg, leg.candidates["fY1"], points, 1e-4)
        assert rep.verdict == "pass"

    def test_planar_perturbed_candidate_fails_with_witness(self, planar):
        points = planar.sample(20, seed=0)
        rep = hj_algebraic_check(planar, planar.candidates["xY1"], points, 1e-4)
        assert rep.verdict == "fail"
        assert rep.witness_point is not None
        assert rep.worst_residual > 0.1

    def test_pointwise_residual_pair(self, planar):
        closed, hj = hj_residual(planar.structure, planar.metric, planar.potential,
                                 planar.controls, planar.candidates["xY1"],
                                 np.array([1.0, 0.5, 1.2]))
        assert hj > 0.1
        assert closed > 0.1

    def test_unconstrained_variant_uses_all_directions(self, planar):
        # the family solves the constrained equation only: unconstrained residual
        # along control directions is generically nonzero
        closed, hj = hj_residual(planar.structure, planar.metric, planar.potential,
                                 None, planar.candidates["gY1"], np.array([0.7, 0.4, 0.2]))
        assert hj > 1e-3

    def test_unconstrained_check_reports_energy_spread(self, flat2):
        points = flat2.sample(10, seed=0)
        constant = Section.constant([0.6, -0.8])
        rep = hj_algebraic_check(flat2, constant, points, 1e-5)
        assert rep.verdict == "pass"
        assert rep.details["energy_spread"] < 1e-12
        linear = flat2.section_from_exprs(["x1", "0"], label="linear")
        rep = hj_algebraic_check(flat2, linear, points, 1e-5)
        assert rep.verdict == "fail"
        assert rep.details["energy_spread"] > 0.1

    def test_trajectory_equivalence_for_families(self, planar, leg):
        for sysd, name in ((planar, "gY1"), (leg, "fY1")):
            p0 = sysd.sample(4, seed=0)[0]
            rep = hj_trajectory_equivalence(sysd.structure, sysd.metric, sysd.potential,
                                            sysd.controls, sysd.candidates[name],
                                            p0, 2.0, 1e-3)
            assert rep.verdict == "pass"
            assert rep.worst_residual <= 1e-3

    def test_trajectory_inconclusive_when_closedness_fails(self, planar):
        """The perturbed candidate violates the closedness hypothesis, so the
        trajectory criterion cannot certify or refute the equation."""
        p0 = planar.sample(4, seed=0)[0]
        rep = hj_trajectory_equivalence(planar.structure, planar.metric, planar.potential,
                                        planar.controls, planar.candidates["xY1"],
                                        p0, 1.0, 1e-3)
        assert rep.verdict == "inconclusive"
        assert rep.details["closedness_residual"] > 1e-3

    def test_unconstrained_equivalence_with_potential(self):
        """A gradient section balancing an inverted quadratic well solves the
        unconstrained equation exactly: the lifted flow satisfies the forced
        geodesic equation with the potential gradient."""
        from algmech import Potential, euclidean

        line = euclidean(1)
        X = line.section_from_exprs(["x1"], label="X")
        V = Potential.from_expr("-0.5*x1^2", line.coords)
        closed, hj = hj_residual(line.structure, line.metric, V, None, X,
                                 np.array([0.7]))
        assert closed < 1e-8 and hj < 1e-8
        rep = hj_trajectory_equivalence(line.structure, line.metric, V, None, X,
                                        np.array([0.3]), 1.0, 1e-3)
        assert rep.verdict == "pass"
        assert rep.worst_residual < 1e-6

        quartic = Potential.from_expr("-x1^4", line.coords)
        _, hj_bad = hj_residual(line.structure, line.metric, quartic, None, X,
                                np.array([0.7]))
        assert hj_bad > 0.1
        bad = hj_trajectory_equivalence(line.structure, line.metric, quartic, None, X,
                                        np.array([0.5]), 1.0, 1e-3)
        assert bad.verdict == "fail"
        assert bad.worst_residual > 1e-2

    def test_zero_section_trajectory_residual_vanishes(self, planar):
        zero = Section.constant([0.0, 0.0, 0.0])
        rep = hj_trajectory_equivalence(planar.structure, planar.metric, None,
                                        planar.controls, zero,
                                        np.array([0.1, 0.2, 0.3]), 0.5, 1e-2)
        assert rep.verdict == "pass"
        assert rep.worst_residual == 0.0

    def test_theorem_equivalence_property(self, planar, leg):
        """Sections passing the differential test at tolerance tau also pass the
        trajectory test at 10 tau plus the integrator allowance."""
        tau = 1e-4
        for sysd, name in ((planar, "gY1"), (planar, "gY2"), (leg, "fY1")):
            points = sysd.sample(10, seed=0)
            alg = hj_algebraic_check(sysd, sysd.candidates[name], points, tau)
            assert alg.verdict == "pass"
            rep = hj_trajectory_equivalence(sysd.structure, sysd.metric, sysd.potential,
                                            sysd.controls, sysd.candidates[name],
                                            points[0], 2.0, 1e-3, tol=10 * tau + 1e-4)
            assert rep.verdict == "pass"


class TestReparametrization:
    def test_planar_family_function_passes(self, planar):
        rep = reparam_admissible(planar.structure, planar.metric, planar.controls,
                                 planar.reparam_candidates["g"], planar.sample(20, seed=0))
        assert rep.verdict == "pass"

    def test_coordinate_function_fails(self, planar):
        rep = reparam_admissible(planar.structure, planar.metric, planar.controls,
                                 planar.reparam_candidates["coord_x"],
                                 planar.sample(20, seed=0))
        assert rep.verdict == "fail"
        assert rep.witness_point is not None

    def test_constant_passes(self, planar, board):
        for sysd in (planar, board):
            rep = reparam_admissible(sysd.structure, sysd.metric, sysd.controls,
                                     "3.5", sysd.sample(10, seed=0))
            assert rep.verdict == "pass"

    def test_snakeboard_candidates(self, board):
        points = board.sample(10, seed=0)
        good = reparam_admissible(board.structure, board.metric, board.controls,
                                  board.reparam_candidates["psi_fun"], points)
        bad = reparam_admissible(board.structure, board.metric, board.controls,
                                 board.reparam_candidates["coord_x"], points)
        assert good.verdict == "pass"
        assert bad.verdict == "fail"


class TestControlRecovery:
    def test_recovers_driftless_coefficients(self, planar):
        from algmech import base_flow, lift

        X = basis(0).scaled_by(0.7).plus(basis(1).scaled_by(-0.4))
        sigma = base_flow(planar.structure, X, [0.1, 0.0, 0.2], 0.0, 1.0, 1e-2)
        traj = lift(X, sigma)
        coeffs, residuals = recover_controls(planar.structure, planar.controls, traj)
        assert np.max(np.abs(coeffs - [0.7, -0.4])) < 1e-12
        assert np.max(residuals) < 1e-12

    def test_reports_residual_outside_span(self, planar):
        from algmech import base_flow, lift

        X = basis(2)
        sigma = base_flow(planar.structure, X, [0.1, 0.0, 0.2], 0.0, 0.5, 1e-2)
        traj = lift(X, sigma)
        coeffs, residuals = recover_controls(planar.structure, planar.controls, traj)
        assert np.max(residuals) > 0.5

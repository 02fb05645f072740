import numpy as np
import pytest

from lindbloch.algebra import build_generators, structure_constants
from lindbloch.errors import DimensionMismatchError, PreconditionError
from lindbloch.propagator import (
    Channel,
    EvolutionProblem,
    GammaProfile,
    Trajectory,
    commuting_closed_form,
    default_step,
    dyson_series,
    evolve_formula,
    heisenberg_transform,
    perturbation_series,
    purity_first_order,
    qubit_second_order,
    sinc,
)

from conftest import bloch_problem, dephasing_problem, random_matrix_problem, sigma_x_problem


class TestGammaProfile:
    def test_kinds(self):
        assert GammaProfile.constant(0.3)(2.0) == 0.3
        assert np.allclose(GammaProfile.constant(0.3)(np.zeros(4)), 0.3)
        g = GammaProfile.exponential(2.0, 0.5)
        assert g(1.0) == pytest.approx(2 * np.exp(-2))
        assert g.sup(0.5, 3.0) == pytest.approx(2 * np.exp(-1))
        tab = GammaProfile.tabulated([0, 1, 2], [0.0, 4.0, 1.0])
        assert tab(0.5) == pytest.approx(2.0)
        assert tab.sup(0.0, 2.0) == 4.0
        assert tab.sup(1.5, 2.0) == pytest.approx(2.5)

    @pytest.mark.parametrize("build", [
        lambda: GammaProfile.constant(-1),
        lambda: GammaProfile.exponential(1, 0),
        lambda: GammaProfile.tabulated([0, 0], [1, 1]),
        lambda: GammaProfile.tabulated([0, 1], [1, -1]),
        lambda: GammaProfile.tabulated([0, 1], [1]),
    ])
    def test_invalid(self, build):
        with pytest.raises(ValueError):
            build()


class TestProblem:
    def test_dimension_checks(self, half_eps):
        with pytest.raises(DimensionMismatchError):
            EvolutionProblem(half_eps, np.zeros(3), ((np.zeros(2), None),), np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            EvolutionProblem(half_eps, np.zeros(4), (), np.zeros(3))
        with pytest.raises(PreconditionError):
            EvolutionProblem(half_eps, np.zeros(3), (), np.zeros(3))
        with pytest.raises(ValueError):
            dephasing_problem(half_eps, picture="interaction")

    def test_default_gamma_profile(self, half_eps):
        p = EvolutionProblem(half_eps, np.zeros(3), ((np.ones(3), None),), np.zeros(3))
        assert isinstance(p.channels[0], Channel)
        assert p.channels[0].gamma.is_constant

    def test_from_operators_drops_identity_part(self, pauli):
        basis, f = pauli
        sz = np.diag([1.0, -1.0])
        p = EvolutionProblem.from_operators(basis, 2 * sz + 3 * np.eye(2), [0.5 * sz + np.eye(2)],
                                            rho0=np.diag([1.0, 0.0]))
        assert np.allclose(p.h, [0, 0, 2]) and np.allclose(p.channels[0].l, [0, 0, 0.5])
        assert np.allclose(p.r0, [0, 0, 1])
        with pytest.raises(ValueError):
            EvolutionProblem.from_operators(basis, sz, [], r0=np.zeros(3), rho0=np.eye(2) / 2)

    def test_default_step_policy(self):
        assert default_step(2.0, 0.5, 1.0) == pytest.approx(0.005)
        assert default_step(0.0, 4.0, 1.0) == pytest.approx(0.0025)
        assert default_step(0.0, 0.0, 3.0) == 3.0


def test_trajectory_validates_times():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)))
    with pytest.raises(DimensionMismatchError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((3, 3)))


class TestHeisenbergTransform:
    def test_rotating_lindblad(self, half_eps):
        g, w = 0.05, 1.3
        t = np.linspace(0, 10, 101)
        got = heisenberg_transform([np.sqrt(g), 0, 0], [0, 0, w], t, half_eps)
        want = np.sqrt(g) * np.stack([np.cos(w * t), -np.sin(w * t), np.zeros_like(t)], axis=1)
        assert np.abs(got - want).max() < 1e-12

    def test_parallel_and_zero_hamiltonian(self, half_eps, rng):
        h = rng.normal(size=3)
        l = 0.4 * h
        assert np.allclose(heisenberg_transform(l, h, 3.7, half_eps), l, atol=1e-13)
        assert np.allclose(heisenberg_transform(l, np.zeros(3), 3.7, half_eps), l)

    def test_shape_check(self, half_eps):
        with pytest.raises(DimensionMismatchError):
            heisenberg_transform([1, 0], [0, 0, 1], 1.0, half_eps)


class TestEvolveFormula:
    def test_dephasing_closed_form(self, half_eps):
        r0 = np.array([0.3, -0.8, 0.5])
        g = 0.7
        grid = np.linspace(0, 4, 41)
        traj = evolve_formula(dephasing_problem(half_eps, gamma=g, r0=r0), grid)
        decay = np.exp(-g * grid / 2)
        want = np.stack([decay * r0[0], decay * r0[1], np.full_like(grid, r0[2])], axis=1)
        assert np.abs(traj.bloch - want).max() < 1e-10
        assert traj.metadata["method"] == "formula"
        assert "accuracy_warning" not in traj.metadata

    def test_no_dissipation_is_frozen(self, half_eps):
        p = EvolutionProblem(half_eps, np.array([0.2, 0.0, 1.0]), (), np.array([1.0, 0.0, 0.0]))
        traj = evolve_formula(p, np.linspace(0, 5, 11))
        assert np.allclose(traj.bloch, p.r0)

    def test_sigma_x_z_component(self, half_eps):
        g = 0.2
        p = sigma_x_problem(half_eps, g, r0=(0.1, 0.2, 0.9))
        grid = np.linspace(0, 6, 31)
        z = evolve_formula(p, grid).bloch[:, 2]
        assert np.abs(z - 0.9 * np.exp(-g * grid / 2)).max() < 1e-9

    def test_schroedinger_picture_is_rotated(self, half_eps):
        w, g = 1.5, 0.4
        grid = np.linspace(0, 3, 16)
        p = dephasing_problem(half_eps, gamma=g, omega0=w, r0=(1, 0, 0.2), picture="schroedinger")
        traj = evolve_formula(p, grid)
        decay = np.exp(-g * grid / 2)
        # r_S = expm(-t A(h)) r_H; with f = eps/2 the precession runs at omega0
        want = np.stack([decay * np.cos(w * grid), decay * np.sin(w * grid), np.full_like(grid, 0.2)], 1)
        assert np.abs(traj.bloch - want).max() < 1e-10

    def test_accuracy_warning_for_coarse_step(self, half_eps):
        p = sigma_x_problem(half_eps, 3.0, omega0=4.0)
        traj = evolve_formula(p, [0.0, 2.0], dt=0.5)
        assert "accuracy_warning" in traj.metadata
        assert traj.metadata["richardson_delta"] > 1e-6

    @pytest.mark.parametrize("grid", [[1.0, 2.0], [0.0, 1.0, 1.0], []])
    def test_bad_grids(self, half_eps, grid):
        with pytest.raises(ValueError):
            evolve_formula(dephasing_problem(half_eps), grid)

    def test_semigroup_for_commuting_case(self, half_eps):
        p = dephasing_problem(half_eps, gamma=0.9, r0=(0.5, 0.5, 0.1))
        t1, t2 = 0.8, 1.7
        direct = evolve_formula(p, [0.0, t1 + t2]).bloch[-1]
        mid = evolve_formula(p, [0.0, t1]).bloch[-1]
        two_step = evolve_formula(p.replace(r0=mid), [0.0, t2]).bloch[-1]
        assert np.abs(direct - two_step).max() < 1e-10

    @pytest.mark.parametrize("n", [2, 3])
    def test_norm_is_non_increasing(self, n, rng):
        basis = build_generators(n)
        for _ in range(5):
            p = bloch_problem(random_matrix_problem(n, rng, n_lindblads=2), basis)
            norms = np.linalg.norm(evolve_formula(p, np.linspace(0, 3, 61)).bloch, axis=1)
            assert np.all(np.diff(norms) <= 1e-10)

    @pytest.mark.parametrize("n", [2, 3])
    def test_maximally_mixed_fixed_point(self, n, rng):
        basis = build_generators(n)
        mp = random_matrix_problem(n, rng)
        p = bloch_problem(mp, basis).replace(r0=np.zeros(basis.size))
        assert not np.any(evolve_formula(p, np.linspace(0, 2, 5)).bloch)

    def test_kernel_vector_invariant(self, half_eps):
        l = np.array([0.3, -0.2, 0.6])
        p = EvolutionProblem(half_eps, 2 * l, ((l, GammaProfile.constant()),), 1.5 * l)
        assert np.allclose(evolve_formula(p, np.linspace(0, 5, 6)).bloch, 1.5 * l, atol=1e-12)


class TestSeries:
    def test_order_zero_and_negative(self, half_eps):
        p = dephasing_problem(half_eps)
        assert np.array_equal(dyson_series(p, 2.0, 0).value, p.r0)
        with pytest.raises(ValueError):
            dyson_series(p, 1.0, -1)

    def test_dephasing_high_order(self, half_eps):
        p = dephasing_problem(half_eps, r0=(1, 1, 1))
        res = dyson_series(p, 5.0, 20)
        want = np.array([np.exp(-2.5), np.exp(-2.5), 1.0])
        assert np.abs(res.value - want).max() < 1e-10
        # tail bound is a valid bound for a lower order
        low = dyson_series(p, 5.0, 6)
        assert np.linalg.norm(low.value - want) <= low.tail_bound

    @pytest.mark.parametrize("n,count", [(2, 4), (3, 3)])
    def test_dyson_matches_ode(self, n, count, rng):
        basis = build_generators(n)
        done = 0
        while done < count:
            p = bloch_problem(random_matrix_problem(n, rng, l_scale=0.4), basis)
            rate = 2 * p.rates(1.0)[1]   # |B| where G = B / 2
            t = min(3.0, 2.0 / rate)    # 1/2 |B| t <= 1
            ode = evolve_formula(p, [0.0, t], check_step=False).bloch[-1]
            series = dyson_series(p, t, 12)
            assert np.abs(series.value - ode).max() < 1e-8
            done += 1

    def test_schroedinger_series(self, pauli, rng):
        basis, _ = pauli
        p = bloch_problem(random_matrix_problem(2, rng), basis, picture="schroedinger")
        ode = evolve_formula(p, [0.0, 1.0]).bloch[-1]
        assert np.abs(dyson_series(p, 1.0, 16).value - ode).max() < 1e-9

    def test_perturbation_first_order_dephasing(self, half_eps):
        g, t = 0.3, 1.2
        r0 = np.array([0.6, -0.4, 0.5])
        p = dephasing_problem(half_eps, gamma=1.0, r0=r0)
        got = perturbation_series(p, t, 1, g)
        want = r0 - g * t / 2 * np.diag([1, 1, 0]) @ r0
        assert np.allclose(got, want, atol=1e-14)
        assert np.array_equal(perturbation_series(p, t, 0, g), r0)

    def test_perturbation_matches_dyson_at_order_two(self, half_eps):
        g = 0.05
        for t in (0.3, 1.0, 2.5, 4.0):
            pert = perturbation_series(sigma_x_problem(half_eps, 1.0), t, 2, g)
            dyson = dyson_series(sigma_x_problem(half_eps, g), t, 2).value
            assert np.abs(pert - dyson).max() < 1e-14

    def test_perturbation_preconditions(self, half_eps):
        p = dephasing_problem(half_eps)
        with pytest.raises(PreconditionError):
            perturbation_series(p, 1.0, 3, 0.1)
        two = p.replace(channels=p.channels * 2)
        with pytest.raises(PreconditionError):
            perturbation_series(two, 1.0, 1, 0.1)
        decaying = p.replace(channels=((p.channels[0].l, GammaProfile.exponential(1, 1)),))
        with pytest.raises(PreconditionError):
            perturbation_series(decaying, 1.0, 1, 0.1)


class TestClosedForms:
    def test_commuting_closed_form(self, half_eps):
        p = dephasing_problem(half_eps, gamma=1.0, r0=(1, 0, 0))
        assert np.allclose(commuting_closed_form(p, 2.0), [np.exp(-1), 0, 0], atol=1e-14)
        assert np.allclose(commuting_closed_form(p, 0.0), p.r0)

    def test_commuting_precondition(self, half_eps):
        with pytest.raises(PreconditionError):
            commuting_closed_form(sigma_x_problem(half_eps, 0.1), 1.0)
        p = dephasing_problem(half_eps)
        decaying = p.replace(channels=((p.channels[0].l, GammaProfile.exponential(1, 1)),))
        with pytest.raises(PreconditionError):
            commuting_closed_form(decaying, 1.0)

    def test_sinc(self):
        assert sinc(0.0) == 1.0
        assert sinc(np.pi / 2) == pytest.approx(2 / np.pi)

    def test_second_order_trivial_limits(self):
        r0 = np.array([0.3, 0.4, 0.5])
        assert np.allclose(qubit_second_order(r0, 1.0, 0.0, 2.0), r0)
        assert np.allclose(qubit_second_order(r0, 1.0, 0.05, 0.0), r0)
        assert np.allclose(qubit_second_order(r0, 1.0, 0.05, 0.0, as_printed=True), r0)

    def test_second_order_vs_dyson(self, half_eps):
        ratio = 0.05
        res = dyson_series(sigma_x_problem(half_eps, ratio), 1.0, 2).value
        got = qubit_second_order([1, 0, 0], 1.0, ratio, 1.0)
        assert np.abs(got - res).max() < ratio ** 3

    def test_printed_sign_differs_from_exact_integral(self, half_eps):
        # the typeset y <- x coefficient has the opposite sign of the exact double integral
        ratio, wt = 0.05, 3.0
        exact = dyson_series(sigma_x_problem(half_eps, ratio), wt, 2).value
        fixed = qubit_second_order([1, 0, 0], 1.0, ratio, wt)
        printed = qubit_second_order([1, 0, 0], 1.0, ratio, wt, as_printed=True)
        assert abs(fixed[1] - exact[1]) < 1e-13
        e2 = (ratio / 2) ** 2 / 16
        assert printed[1] - fixed[1] == pytest.approx(2 * e2 * (2 * wt * np.cos(2 * wt) - np.sin(2 * wt)))
        assert np.allclose(printed[[0, 2]], fixed[[0, 2]])

    def test_second_order_y_initial_state(self, half_eps):
        ratio = 0.01
        for wt in (0.5, 2.0, 3.9):
            exact = dyson_series(sigma_x_problem(half_eps, ratio, r0=(0, 1, 0)), wt, 2).value
            assert np.abs(qubit_second_order([0, 1, 0], 1.0, ratio, wt) - exact).max() < 1e-13

    def test_zero_frequency_limit(self, half_eps):
        p = EvolutionProblem(half_eps, np.zeros(3), ((np.array([np.sqrt(0.1), 0, 0]), None),),
                             np.array([0.2, 0.7, 0.1]))
        exact = dyson_series(p, 1.5, 2).value
        got = qubit_second_order(p.r0, 0.0, 0.1, 1.5)
        assert np.abs(got[:2] - exact[:2]).max() < 1e-13
        # z is kept as the exact exponential rather than its truncation
        assert got[2] == pytest.approx(0.1 * np.exp(-0.075))

    def test_purity_first_order(self):
        assert purity_first_order(1.0, 0.01, 0.0) == 1.0
        assert purity_first_order(1e-9, 0.5, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert purity_first_order(1.0, 0.01, 1.0) == pytest.approx(1 - 0.005 * (1 - np.sin(2) / 2))
        assert purity_first_order(1.0, 0.01, 1.0) == pytest.approx(0.997273, abs=1e-6)

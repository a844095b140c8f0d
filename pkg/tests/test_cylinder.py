import numpy as np
import pytest

from conic_ln.cylinder.fields import (
    CylinderField,
    WeightedNormSpec,
    build_cylinder_grid,
    choose_truncation,
    weighted_norm,
)
from conic_ln.cylinder.complement import complement_energy, lower_modes, solve_complement
from conic_ln.cylinder.inverse import check_target_rate, invert_cyl_operator, invert_with_report
from conic_ln.cylinder.mode_ode import mode_residual, solve_mode_ode, solve_mode_ode_dirichlet
from conic_ln.cylinder.operator import apply_cyl_operator, second_difference_t
from conic_ln.cylinder.shifted import shifted_angular_solve
from conic_ln.errors import (
    FredholmObstructionError,
    ParameterError,
    PreconditionError,
    RateError,
    ShapeError,
)
from conic_ln.pipeline.suite import manufactured_solution


class TestModeODE:
    """v'' - gamma^2 v = f の減衰解"""

    def setup_method(self):
        self.t = np.linspace(1.0, 11.0, 1001)

    def test_exponential_forcing(self):
        v = solve_mode_ode(1.0, np.exp(-2.0 * self.t), self.t)
        exact = np.exp(-2.0 * self.t) / 3.0
        np.testing.assert_allclose(v, exact, rtol=1e-6)

    def test_zero_forcing(self):
        v = solve_mode_ode(2.0, np.zeros_like(self.t), self.t)
        assert not np.any(v)

    def test_slow_forcing_rejected(self):
        with pytest.raises(RateError):
            solve_mode_ode(1.0, np.exp(-0.5 * self.t), self.t)

    def test_discrete_scheme_satisfies_three_point_equation(self):
        f = np.exp(-3.0 * self.t)
        v = solve_mode_ode(1.5, f, self.t, scheme="discrete")
        h = self.t[1] - self.t[0]
        lhs = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2 - 1.5**2 * v[1:-1]
        np.testing.assert_allclose(lhs, f[1:-1], rtol=1e-6, atol=1e-12)

    def test_residual_small(self):
        f = np.exp(-2.0 * self.t)
        v = solve_mode_ode(1.0, f, self.t)
        residual = mode_residual(1.0, v, f, self.t)
        assert np.max(np.abs(residual)) < 1e-3 * np.max(np.abs(f))

    def test_dirichlet_variant_vanishes_at_ends(self):
        f = np.exp(-2.0 * self.t)
        v = solve_mode_ode_dirichlet(1.0, f, self.t)
        assert v[0] == pytest.approx(0.0, abs=1e-10)
        assert v[-1] == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize(
        "gamma,scheme",
        [
            (0.0, "integral"),
            (-1.0, "integral"),
            (1.0, "spectral"),
        ],
    )
    def test_bad_arguments(self, gamma, scheme):
        with pytest.raises(ParameterError):
            solve_mode_ode(gamma, np.exp(-2.0 * self.t), self.t, scheme=scheme)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            solve_mode_ode(1.0, np.ones(3), self.t)


class TestCylinderGrid:
    def test_short_cylinder_rejected(self, hemisphere_profile):
        with pytest.raises(ParameterError):
            build_cylinder_grid(hemisphere_profile.grid, 1.0, 3.0)

    def test_step_divides_interval(self, hemisphere_profile):
        grid = build_cylinder_grid(hemisphere_profile.grid, 1.0, 5.0, 0.07)
        assert grid.t_nodes[0] == 1.0
        assert grid.t_nodes[-1] == pytest.approx(5.0)
        assert grid.dt <= 0.07
        assert grid.shape == (grid.t_nodes.size, hemisphere_profile.grid.node_count)

    def test_truncation(self):
        # e^{-(gamma_next - mu)(T - t0)} <= 1e-8
        T = choose_truncation(1.0, 4.0, 5.0)
        assert np.exp(-(5.0 - 4.0) * (T - 1.0)) == pytest.approx(1e-8, rel=1e-6)
        assert choose_truncation(1.0, 4.0, None) == 5.0
        assert choose_truncation(1.0, 4.0, 4.1, t_max=10.0) == 10.0

    def test_field_rejects_nan(self, hemisphere_profile):
        grid = build_cylinder_grid(hemisphere_profile.grid, 1.0, 5.0, 0.5)
        values = np.zeros(grid.shape)
        values[0, 0] = np.nan
        with pytest.raises(ShapeError):
            CylinderField(grid, values)


def test_second_difference_exact_on_quadratics():
    t = np.linspace(0.0, 1.0, 11)
    values = (t**2)[:, None] * np.ones((1, 3))
    np.testing.assert_allclose(second_difference_t(values, 0.1), 2.0, rtol=1e-9)


def test_weighted_norm_of_separable_field(hemisphere_profile):
    grid = build_cylinder_grid(hemisphere_profile.grid, 1.0, 5.0, 0.1)
    s = hemisphere_profile.constants.s
    rho = hemisphere_profile.rho.values
    field = CylinderField(grid, np.outer(np.exp(-4.0 * grid.t_nodes), rho**s))
    # e^{mu t} rho^{-s} |v| = 1
    assert weighted_norm(field, WeightedNormSpec(4.0, s, 0), hemisphere_profile) == pytest.approx(1.0, rel=1e-9)


def test_weighted_norm_spec_validation():
    with pytest.raises(ParameterError):
        WeightedNormSpec(0.0, 2.5)
    with pytest.raises(ParameterError):
        WeightedNormSpec(1.0, 2.5, 3)


def test_operator_annihilates_separable_mode(hemisphere_spectrum):
    profile = hemisphere_spectrum.profile
    grid = build_cylinder_grid(profile.grid, 1.0, 5.0, 0.01)
    gamma = float(hemisphere_spectrum.gammas[0])
    phi = hemisphere_spectrum.eigenfield(1)
    v = CylinderField(grid, np.outer(np.exp(-gamma * grid.t_nodes), phi))
    out = apply_cyl_operator(hemisphere_spectrum.operator, v).values
    scale = gamma**2 * np.abs(v.values)
    inner = profile.grid.nodes < 1.2
    assert np.max(np.abs(out[1:-1, inner]) / scale[1:-1, inner]) < 1e-2


class TestShiftedSolve:
    def test_nonresonant(self, hemisphere_spectrum):
        op = hemisphere_spectrum.operator
        h = np.ones(op.size)
        w = shifted_angular_solve(hemisphere_spectrum, h, 4.0).values
        shift = 16.0 - op.constants.beta**2
        residual = op.apply_L(w) + shift * w + h
        inner = op.grid.nodes < 1.3
        assert np.max(np.abs(residual[inner])) < 1e-6

    def test_resonant_obstruction(self, hemisphere_spectrum):
        gamma1 = float(hemisphere_spectrum.gammas[0])
        with pytest.raises(FredholmObstructionError):
            shifted_angular_solve(hemisphere_spectrum, hemisphere_spectrum.eigenfield(1), gamma1)

    def test_resonant_orthogonal_data(self, hemisphere_spectrum):
        gamma1 = float(hemisphere_spectrum.gammas[0])
        lambdas = hemisphere_spectrum.lambdas
        phi2 = hemisphere_spectrum.eigenfield(2)
        w = shifted_angular_solve(hemisphere_spectrum, phi2, gamma1, orthogonality_tol=1e-6).values
        np.testing.assert_allclose(w, phi2 / (lambdas[1] - lambdas[0]), atol=1e-6)
        mass = hemisphere_spectrum.operator.mass
        assert abs((mass * w) @ hemisphere_spectrum.eigenfield(1)) < 1e-8


class TestComplement:
    """下位モードに直交するデータの変分解"""

    @pytest.fixture
    def forcing(self, hemisphere_spectrum):
        grid = build_cylinder_grid(hemisphere_spectrum.profile.grid, 1.0, 5.0, 0.1)
        bump = np.sin(np.pi * (grid.t_nodes - 1.0) / 4.0)
        return CylinderField(grid, np.outer(bump, hemisphere_spectrum.eigenfield(2)))

    def test_solves_operator_equation(self, hemisphere_spectrum, forcing):
        v = solve_complement(hemisphere_spectrum, forcing, 4.0, orthogonality_tol=1e-6)
        assert not np.any(v.values[0]) and not np.any(v.values[-1])
        image = apply_cyl_operator(hemisphere_spectrum.operator, v).values
        inner = hemisphere_spectrum.profile.grid.nodes < 1.3
        error = np.abs(image - forcing.values)[1:-1][:, inner]
        assert np.max(error) < 1e-6 * np.max(np.abs(forcing.values))

    def test_minimises_energy(self, hemisphere_spectrum, forcing):
        v = solve_complement(hemisphere_spectrum, forcing, 4.0, orthogonality_tol=1e-6)
        nudge = CylinderField(v.grid, v.values + 1e-2 * forcing.values)
        assert complement_energy(hemisphere_spectrum, v, forcing) < complement_energy(hemisphere_spectrum, nudge, forcing)

    def test_lower_mode_count(self, hemisphere_spectrum):
        assert lower_modes(hemisphere_spectrum, 4.0) == 1

    def test_rejects_lower_mode_data(self, hemisphere_spectrum, forcing):
        grid = forcing.grid
        bad = CylinderField(grid, np.outer(np.ones(grid.t_nodes.size), hemisphere_spectrum.eigenfield(1)))
        with pytest.raises(PreconditionError):
            solve_complement(hemisphere_spectrum, bad, 4.0)

    def test_rejects_rate_at_exponent(self, hemisphere_spectrum, forcing):
        with pytest.raises(PreconditionError):
            solve_complement(hemisphere_spectrum, forcing, float(hemisphere_spectrum.gammas[0]))

    @pytest.mark.parametrize("seed", [None, 7])
    def test_cg_matches_direct(self, hemisphere_spectrum, forcing, seed):
        # 初期値 (0 または乱数) によらず直接法と一致
        rows = forcing.grid.t_nodes.size - 2
        x0 = None if seed is None else np.random.default_rng(seed).standard_normal((rows, forcing.values.shape[1]))
        direct = solve_complement(hemisphere_spectrum, forcing, 4.0, orthogonality_tol=1e-6)
        iterative = solve_complement(hemisphere_spectrum, forcing, 4.0, orthogonality_tol=1e-6, method="cg", x0=x0)

        # アサーション
        scale = float(np.max(np.abs(direct.values)))
        assert np.max(np.abs(iterative.values - direct.values)) < 1e-7 * scale

    def test_unknown_method(self, hemisphere_spectrum, forcing):
        with pytest.raises(ValueError):
            solve_complement(hemisphere_spectrum, forcing, 4.0, orthogonality_tol=1e-6, method="lu")


class TestInverse:
    def test_target_rate_checks(self, hemisphere_spectrum, hemisphere_chain):
        gamma1 = float(hemisphere_spectrum.gammas[0])
        with pytest.raises(PreconditionError):
            check_target_rate(hemisphere_spectrum, hemisphere_chain, gamma1 - 0.5)
        with pytest.raises(PreconditionError):
            check_target_rate(hemisphere_spectrum, hemisphere_chain, 2.0 * gamma1)
        check_target_rate(hemisphere_spectrum, hemisphere_chain, gamma1 + 1.0)

    def test_manufactured_recovery(self, hemisphere_spectrum, hemisphere_chain):
        profile = hemisphere_spectrum.profile
        grid = build_cylinder_grid(profile.grid, 1.0, 17.0, 0.05)
        mu = float(hemisphere_spectrum.gammas[0]) + 0.8
        exact = manufactured_solution(grid, profile, mu + 1.0)
        forcing = apply_cyl_operator(hemisphere_spectrum.operator, exact)
        recovered, report = invert_with_report(hemisphere_spectrum, hemisphere_chain, forcing, mu)
        spec = WeightedNormSpec(mu, profile.constants.s, 0)
        error = weighted_norm(recovered - exact, spec, profile) / weighted_norm(exact, spec, profile)
        assert error < 1e-3
        assert report.lower_modes == 1
        assert report.to_dict()["I"] == 1

    def test_slow_forcing_rejected(self, hemisphere_spectrum, hemisphere_chain):
        profile = hemisphere_spectrum.profile
        grid = build_cylinder_grid(profile.grid, 1.0, 9.0, 0.05)
        mu = float(hemisphere_spectrum.gammas[0]) + 1.0
        slow = manufactured_solution(grid, profile, mu - 1.0)
        with pytest.raises(RateError):
            invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, slow, mu)

    def test_linearity(self, hemisphere_spectrum, hemisphere_chain):
        # 異なる固有モードから作った f, g の任意の線形結合
        profile = hemisphere_spectrum.profile
        grid = build_cylinder_grid(profile.grid, 1.0, 9.0, 0.05)
        mu = float(hemisphere_spectrum.gammas[0]) + 1.0
        rng = np.random.default_rng(2024)
        t = grid.t_nodes
        ramp = (1.0 - np.exp(-(t - 1.0))) ** 2
        fields = np.stack([hemisphere_spectrum.eigenfield(i) for i in (1, 2, 3, 4)], axis=1)
        f = CylinderField(grid, np.outer(ramp * np.exp(-(mu + 1.0) * t), fields[:, :2] @ rng.uniform(-1.0, 1.0, 2)))
        g = CylinderField(grid, np.outer(ramp * np.exp(-(mu + 1.5) * t), fields[:, 2:] @ rng.uniform(-1.0, 1.0, 2)))
        alpha, beta = (float(x) for x in rng.uniform(-2.0, 2.0, 2))

        vf = invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, f, mu)
        vg = invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, g, mu)
        combined = invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, alpha * f + beta * g, mu)

        # アサーション
        expected = alpha * vf.values + beta * vg.values
        scale = float(np.max(np.abs(expected)))
        assert scale > 0.0
        assert np.max(np.abs(combined.values - expected)) < 1e-9 * scale

    def test_lowest_mode_forcing_follows_mode_ode(self, hemisphere_spectrum, hemisphere_chain):
        profile = hemisphere_spectrum.profile
        grid = build_cylinder_grid(profile.grid, 1.0, 9.0, 0.05)
        mu = float(hemisphere_spectrum.gammas[0]) + 0.8
        t = grid.t_nodes
        phi = hemisphere_spectrum.eigenfield(1)
        forcing = CylinderField(grid, np.outer(np.exp(-mu * t), phi))

        v = invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, forcing, mu)

        coefficient = forcing.values @ (hemisphere_spectrum.operator.mass * phi)
        mode = solve_mode_ode(float(hemisphere_spectrum.gammas[0]), coefficient, t, scheme="discrete")
        expected = np.outer(mode, phi)
        assert np.max(np.abs(v.values - expected)) < 1e-5 * np.max(np.abs(expected))

    def test_upper_mode_forcing_follows_dirichlet_mode_ode(self, hemisphere_spectrum, hemisphere_chain):
        # 第 2 モードは補空間側で両端 0 の解になる
        profile = hemisphere_spectrum.profile
        grid = build_cylinder_grid(profile.grid, 1.0, 9.0, 0.05)
        mu = float(hemisphere_spectrum.gammas[0]) + 0.8
        t = grid.t_nodes
        phi = hemisphere_spectrum.eigenfield(2)
        forcing = CylinderField(grid, np.outer((1.0 - np.exp(-(t - 1.0))) ** 2 * np.exp(-mu * t), phi))

        v = invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, forcing, mu, orthogonality_tol=1e-6)

        coefficient = forcing.values @ (hemisphere_spectrum.operator.mass * phi)
        mode = solve_mode_ode_dirichlet(float(hemisphere_spectrum.gammas[1]), coefficient, t)
        expected = np.outer(mode, phi)
        assert np.max(np.abs(v.values - expected)) < 1e-5 * np.max(np.abs(expected))

    def test_truncation_length_does_not_move_early_rows(self, hemisphere_spectrum, hemisphere_chain):
        # T を伸ばしても前半の解の差は e^{-mu (T - t0) / 2} 以下
        profile = hemisphere_spectrum.profile
        mu = float(hemisphere_spectrum.gammas[0]) + 0.8
        solutions = []
        for t_max in (9.0, 17.0):
            grid = build_cylinder_grid(profile.grid, 1.0, t_max, 0.05)
            forcing = apply_cyl_operator(hemisphere_spectrum.operator, manufactured_solution(grid, profile, mu + 1.0))
            solutions.append(invert_cyl_operator(hemisphere_spectrum, hemisphere_chain, forcing, mu))
        short, long = solutions
        half = int(np.count_nonzero(short.grid.t_nodes <= 5.0 + 1e-9))

        # アサーション
        np.testing.assert_allclose(short.grid.t_nodes[:half], long.grid.t_nodes[:half], atol=1e-12)
        gap = np.max(np.abs(short.values[:half] - long.values[:half]))
        assert gap < np.exp(-mu * (9.0 - 1.0) / 2.0)

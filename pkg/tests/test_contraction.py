import math

import numpy as np
import pytest

from conic_ln.config import DEFAULT_TOLERANCES
from conic_ln.contraction.cone import reconstruct_cone_solution
from conic_ln.contraction.decay import boundary_profile_slope, decay_fit, default_window
from conic_ln.contraction.oracle import direct_solve_oracle
from conic_ln.contraction.picard import assemble_solution, picard_solve
from conic_ln.contraction.residual import (
    check_positive,
    fixed_point_residual,
    hybrid_residual,
    nonlinear_residual,
    perturbation_term,
)
from conic_ln.cylinder.fields import CylinderField, build_cylinder_grid
from conic_ln.errors import DomainError, ParameterError
from conic_ln.expansion.builder import correct_to_order, free_data_modes
from conic_ln.expansion.terms import empty_expansion
from conic_ln.pipeline.stages.verify_stage import oracle_difference


def constant_xi(profile, t0=0.0, t_max=4.0, dt=0.1):
    """t に依存しない v = xi"""
    grid = build_cylinder_grid(profile.grid, t0, t_max, dt)
    return CylinderField(grid, np.tile(profile.xi.values, (grid.t_nodes.size, 1)))


class TestPositivity:
    def test_positive_passes(self):
        check_positive(np.ones((2, 3)))

    def test_reports_first_bad_node(self):
        values = np.ones((2, 3))
        values[1, 2] = 0.0
        with pytest.raises(DomainError) as excinfo:
            check_positive(values)
        assert excinfo.value.node == (1, 2)

    def test_nan_is_not_positive(self):
        with pytest.raises(DomainError):
            check_positive(np.array([1.0, np.nan]))


class TestPerturbation:
    def test_matches_direct_formula(self, hemisphere_profile):
        const = hemisphere_profile.constants
        xi = hemisphere_profile.xi.values
        rho = hemisphere_profile.rho.values
        omega = 0.2 * xi
        w = -0.1 * xi * np.cos(hemisphere_profile.grid.nodes)
        direct = const.c_nl * ((xi + omega + w) ** const.p - (xi + omega) ** const.p) - const.kappa * w / rho**2
        inner = hemisphere_profile.grid.nodes < 1.2
        np.testing.assert_allclose(
            perturbation_term(w, omega, hemisphere_profile)[inner], direct[inner], rtol=1e-8
        )

    def test_leaving_positive_cone(self, hemisphere_profile):
        xi = hemisphere_profile.xi.values
        with pytest.raises(DomainError):
            perturbation_term(-1.5 * xi, np.zeros_like(xi), hemisphere_profile)


def test_xi_has_zero_balanced_residual(hemisphere_profile):
    v = constant_xi(hemisphere_profile)
    res = nonlinear_residual(v, hemisphere_profile, relative=True, balanced=True).values
    assert np.max(np.abs(res)) < 1e-10


def test_nonlinear_residual_requires_positive(hemisphere_profile):
    v = constant_xi(hemisphere_profile)
    with pytest.raises(DomainError):
        nonlinear_residual(-1.0 * v, hemisphere_profile)


def test_hybrid_and_fixed_point_residuals_agree(hemisphere_spectrum, hemisphere_chain):
    profile = hemisphere_spectrum.profile
    operator = hemisphere_spectrum.operator
    expansion = free_data_modes(hemisphere_spectrum, hemisphere_chain, [0.1, 0.0])
    grid = build_cylinder_grid(profile.grid, 1.0, 5.0, 0.05)
    w = CylinderField(grid, 0.01 * np.outer(np.exp(-7.0 * grid.t_nodes), profile.xi.values))
    # N_h(vhat + w) = N_h(vhat) + Lcal_h w - P(w)
    hybrid = hybrid_residual(expansion, w, operator).values[1:-1, :-1]
    fixed = fixed_point_residual(expansion, w, operator)[1:-1, :-1]
    scale = np.abs(hybrid).max(axis=0)
    assert np.all(np.abs(hybrid - fixed) <= 1e-8 * scale + 1e-300)


class TestConeSampler:
    """半球では u(r, phi) = r^(-1/2) cos(phi)^(-1/2)"""

    def test_known_value(self, hemisphere_profile):
        sampler = reconstruct_cone_solution(constant_xi(hemisphere_profile), hemisphere_profile)
        u = sampler(0.5, math.pi / 3.0)
        assert u[0] == pytest.approx(2.0, rel=1e-2)

    def test_radius_out_of_range(self, hemisphere_profile):
        sampler = reconstruct_cone_solution(constant_xi(hemisphere_profile), hemisphere_profile)
        with pytest.raises(ParameterError):
            sampler(2.0, 0.5)
        with pytest.raises(ParameterError):
            sampler(0.5, -0.1)

    def test_rows(self, hemisphere_profile):
        sampler = reconstruct_cone_solution(constant_xi(hemisphere_profile), hemisphere_profile)
        radii = sampler.log_radii(3)
        assert radii[0] == pytest.approx(1.0)
        assert radii[-1] == pytest.approx(math.exp(-4.0))
        header, rows = sampler.to_rows(radii)
        assert header == ["r", "phi", "u"]
        assert len(rows) == 3 * hemisphere_profile.grid.node_count

    def test_rejects_nonpositive(self, hemisphere_profile):
        with pytest.raises(DomainError):
            reconstruct_cone_solution(-1.0 * constant_xi(hemisphere_profile), hemisphere_profile)


class TestDecay:
    def test_recovers_exponential_rate(self, hemisphere_profile):
        s = hemisphere_profile.constants.s
        rho = hemisphere_profile.rho.values
        grid = build_cylinder_grid(hemisphere_profile.grid, 1.0, 9.0, 0.05)
        # 境界付近でも xi に埋もれない大きさの差
        values = hemisphere_profile.xi.values[None, :] + np.outer(np.exp(-2.0 * grid.t_nodes), np.ones(rho.size))
        fit = decay_fit(CylinderField(grid, values), empty_expansion(hemisphere_profile), hemisphere_profile)
        assert fit.rate == pytest.approx(2.0, abs=1e-6)
        assert fit.prefactor == pytest.approx(float(np.max(rho[:-1] ** (-s))), rel=1e-4)
        assert fit.window == default_window(1.0, 9.0)
        assert not fit.floored

    def test_zero_difference_is_floored(self, hemisphere_profile):
        v = constant_xi(hemisphere_profile)
        fit = decay_fit(v, empty_expansion(hemisphere_profile), hemisphere_profile)
        assert math.isinf(fit.rate)
        assert fit.floored

    def test_window_checked(self, hemisphere_profile):
        v = constant_xi(hemisphere_profile)
        with pytest.raises(ParameterError):
            decay_fit(v, empty_expansion(hemisphere_profile), hemisphere_profile, window=(3.0, 9.0))

    def test_boundary_slope(self, hemisphere_profile):
        rho = hemisphere_profile.rho.values
        s = hemisphere_profile.constants.s
        assert boundary_profile_slope(rho**s, hemisphere_profile) == pytest.approx(s, abs=1e-6)


def test_oracle_reproduces_xi(hemisphere_profile):
    v = constant_xi(hemisphere_profile, 1.0, 5.0, 0.1)
    oracle = direct_solve_oracle(hemisphere_profile, v, 1.0, 5.0)
    xi = hemisphere_profile.xi.values
    rho = hemisphere_profile.rho.values
    difference = np.abs(oracle.values - xi[None, :]) * rho[None, :] ** hemisphere_profile.beta
    assert np.max(difference[:, :-1]) < 1e-6


def test_oracle_window_checked(hemisphere_profile):
    v = constant_xi(hemisphere_profile, 1.0, 5.0, 0.1)
    with pytest.raises(ParameterError):
        direct_solve_oracle(hemisphere_profile, v, 1.0, 3.0)


@pytest.mark.slow
def test_picard_builds_exact_solution(hemisphere_spectrum, hemisphere_chain):
    mu = 2.0 * float(hemisphere_spectrum.gammas[0]) + 0.5
    base = free_data_modes(hemisphere_spectrum, hemisphere_chain, [0.1, 0.0])
    vhat = correct_to_order(base, hemisphere_chain, hemisphere_spectrum, mu)
    w, report = picard_solve(vhat, hemisphere_spectrum, hemisphere_chain, mu, 1.0, dt=0.1, t_max=12.0)
    assert report.converged
    assert report.T <= 12.0
    assert report.to_dict()["lambda"] < 1.0
    v = assemble_solution(vhat, w)
    assert np.all(v.values > 0)
    assert report.decay_fit is None or report.decay_fit.rate > float(hemisphere_spectrum.gammas[0])


@pytest.mark.slow
def test_picard_solution_agrees_with_direct_newton(hemisphere_spectrum, hemisphere_chain):
    # 同じ端点データで非線形方程式を直接解いた解と比較
    profile = hemisphere_spectrum.profile
    mu = 2.0 * float(hemisphere_spectrum.gammas[0]) + 0.5
    base = free_data_modes(hemisphere_spectrum, hemisphere_chain, [0.1, 0.0])
    vhat = correct_to_order(base, hemisphere_chain, hemisphere_spectrum, mu)
    w, report = picard_solve(vhat, hemisphere_spectrum, hemisphere_chain, mu, 1.0, dt=0.1, t_max=12.0)
    v = assemble_solution(vhat, w)

    oracle = direct_solve_oracle(profile, v, report.t0_used, report.T, vhat=vhat)

    # アサーション
    assert oracle.values.shape == v.values.shape
    assert oracle_difference(v.values, oracle.values, profile.rho.values) <= DEFAULT_TOLERANCES["oracle"]

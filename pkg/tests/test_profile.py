import math

import numpy as np
import pytest

from conic_ln.geometry.angular_grid import build_grid
from conic_ln.geometry.profile import (
    blowup_rate_check,
    compare_caps,
    perturbed,
    solve_profile,
    xi_residual,
)


class TestHemisphereProfile:
    """半球では rho = cos(phi) が厳密解"""

    def test_rho_matches_cosine(self, hemisphere_profile):
        grid = hemisphere_profile.grid
        error = np.max(np.abs(hemisphere_profile.rho.values - np.cos(grid.nodes)))
        assert error < 5e-3

    def test_xi_is_power_of_rho(self, hemisphere_profile):
        rho = hemisphere_profile.rho.values
        np.testing.assert_allclose(
            hemisphere_profile.xi.values, rho ** (-hemisphere_profile.beta), rtol=1e-12
        )

    def test_boundary_slope_is_minus_one(self, hemisphere_profile):
        assert hemisphere_profile.boundary_slope == pytest.approx(-1.0, abs=0.05)

    def test_rho_positive_and_comparable(self, hemisphere_profile):
        assert np.all(hemisphere_profile.rho.values > 0)
        low, high = hemisphere_profile.comparability
        assert 0.5 < low <= high < 1.5

    def test_residual_converged(self, hemisphere_profile):
        assert hemisphere_profile.residual_norm < 1e-6
        assert hemisphere_profile.history[-1] <= hemisphere_profile.history[0]

    def test_blowup_rate(self, hemisphere_profile):
        report = blowup_rate_check(hemisphere_profile)
        assert report.slope == pytest.approx(-hemisphere_profile.beta, abs=0.1)
        assert 0 < report.c1 <= report.c2

    def test_xi_relative_residual_small_in_interior(self, hemisphere_profile):
        res = xi_residual(hemisphere_profile, relative=True).values
        assert math.isnan(res[-1])
        inner = hemisphere_profile.grid.nodes < 1.0
        assert np.max(np.abs(res[inner])) < 1e-2


def test_rows_and_sidecar(hemisphere_profile):
    header, rows = hemisphere_profile.to_rows()
    assert header == ["phi", "rho", "xi"]
    assert len(rows) == hemisphere_profile.grid.node_count
    sidecar = hemisphere_profile.sidecar()
    assert sidecar["n"] == 3
    assert sidecar["beta"] == 0.5


def test_larger_cap_has_larger_rho(cap_profile, hemisphere_profile):
    assert compare_caps(cap_profile, hemisphere_profile)


def test_cap_profile_positive(cap_profile):
    assert np.all(cap_profile.rho.values > 0)
    assert cap_profile.boundary_slope == pytest.approx(-1.0, abs=0.05)


def test_perturbed_keeps_xi_consistent(hemisphere_profile):
    delta = 1e-3 * np.ones(hemisphere_profile.grid.node_count)
    shifted = perturbed(hemisphere_profile, delta)
    np.testing.assert_allclose(
        shifted.xi.values, shifted.rho.values ** (-shifted.beta), rtol=1e-12
    )


@pytest.mark.slow
def test_four_dimensional_hemisphere():
    profile = solve_profile(build_grid(4, math.pi / 2.0, 240))
    error = np.max(np.abs(profile.rho.values - np.cos(profile.grid.nodes)))
    assert error < 5e-3

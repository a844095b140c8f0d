import math

import numpy as np
import pytest

from conic_ln.errors import ParameterError, ShapeError
from conic_ln.geometry.angular_grid import (
    AngularField,
    build_grid,
    gradient,
    inner_product,
    laplace_apply,
    weighted_l2_norm,
)
from conic_ln.geometry.fitting import fit_power_law


@pytest.mark.parametrize("phi_max", [math.pi / 3.0, math.pi / 2.0, 2.0 * math.pi / 3.0])
def test_weights_integrate_cap_measure(phi_max):
    grid = build_grid(3, phi_max, 80)
    # n = 3 の測度 sin(phi) の積分は 1 - cos(phi_max)
    assert grid.weights.sum() == pytest.approx(1.0 - math.cos(phi_max), rel=1e-10)


def test_nodes_are_graded_towards_boundary():
    grid = build_grid(3, math.pi / 2.0, 64)
    spacing = np.diff(grid.nodes)
    assert np.all(spacing > 0)
    assert spacing[-1] < spacing[0]
    assert grid.nodes[-1] < grid.phi_max


@pytest.mark.parametrize(
    "args",
    [
        (2, math.pi / 2.0, 64),
        (3, 0.0, 64),
        (3, math.pi, 64),
        (3, math.pi / 2.0, 8),
    ],
)
def test_build_grid_rejects_bad_arguments(args):
    with pytest.raises(ParameterError):
        build_grid(*args)


def test_build_grid_rejects_flat_grading():
    with pytest.raises(ParameterError):
        build_grid(3, math.pi / 2.0, 64, grading_exponent=0.5)


def test_to_rows_header_and_order():
    grid = build_grid(3, math.pi / 2.0, 32)
    header, rows = grid.to_rows()
    assert header == ["phi", "weight"]
    assert len(rows) == 32
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)


class TestAngularField:
    """格子上の関数のテスト"""

    def setup_method(self):
        self.grid = build_grid(3, math.pi / 2.0, 64)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            AngularField(self.grid, np.ones(10))

    def test_values_are_read_only(self):
        field = AngularField(self.grid, np.ones(64))
        with pytest.raises(ValueError):
            field.values[0] = 2.0

    def test_arithmetic(self):
        a = AngularField(self.grid, np.ones(64))
        b = 2.0 * a - a
        np.testing.assert_allclose(b.values, 1.0)
        np.testing.assert_allclose((-b).values, -1.0)

    def test_other_grid_rejected(self):
        other = build_grid(3, math.pi / 3.0, 64)
        with pytest.raises(ShapeError):
            inner_product(self.grid, AngularField(other, np.ones(64)), np.ones(64))


def test_inner_product_and_norm():
    grid = build_grid(3, math.pi / 2.0, 120)
    ones = np.ones(grid.node_count)
    assert inner_product(grid, ones, ones) == pytest.approx(1.0, rel=1e-10)
    assert weighted_l2_norm(grid, 3.0 * ones) == pytest.approx(3.0, rel=1e-10)


def test_laplacian_of_constant_vanishes():
    grid = build_grid(3, math.pi / 2.0, 80)
    out = laplace_apply(grid, np.ones(grid.node_count))
    assert np.max(np.abs(out.values)) < 1e-8


@pytest.mark.parametrize("n", [3, 5])
def test_laplacian_of_first_harmonic_converges(n):
    # Δcos = -(n - 1) cos、N を倍にするごとに誤差は 1/4
    errors = []
    for node_count in (200, 400, 800):
        grid = build_grid(n, math.pi / 2.0, node_count)
        f = np.cos(grid.nodes)
        out = laplace_apply(grid, f).values
        errors.append(float(np.max(np.abs(out + (n - 1.0) * f))))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 1.8
    assert errors[-1] < 2e-5


def test_gradient_of_smooth_field():
    grid = build_grid(3, math.pi / 2.0, 200)
    f = np.cos(grid.nodes)
    d = gradient(grid, f).values
    inner = grid.nodes < 1.2
    np.testing.assert_allclose(d[inner], -np.sin(grid.nodes[inner]), atol=1e-2)


def test_fit_power_law_recovers_slope():
    x = np.linspace(0.01, 0.1, 20)
    slope, _ = fit_power_law(x, 3.0 * x ** -0.5)
    assert slope == pytest.approx(-0.5, abs=1e-10)

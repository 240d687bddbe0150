import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spadeopt.errors import DimensionError, InvalidArgument
from spadeopt.grid import convergence_check, inner_product, make_grid, robust_floor


def gaussian_field(x, R, sigma=1.0):
    return (2 * np.pi * sigma**2) ** -0.25 * np.exp(-((x - R) ** 2) / (4 * sigma**2))


def test_point_count_and_centering():
    g = make_grid(1, 1.0, 0.1)
    assert g.n_axis == 21
    assert g.axis[0] == pytest.approx(-1.0)
    assert g.axis[-1] == pytest.approx(1.0)
    assert np.allclose(g.axis, -g.axis[::-1])


def test_non_integer_ratio_is_centered():
    g = make_grid(1, 1.0, 0.3)
    assert g.n_axis == 7
    assert g.axis.mean() == pytest.approx(0.0, abs=1e-15)


def test_floor_is_robust_to_rounding():
    assert robust_floor(24 / 0.1) == 240
    assert make_grid(1, 12.0, 0.1).n_axis == 241


def test_2d_ordering_is_row_major_x_fastest():
    g = make_grid(2, 1.0, 0.5)
    pts = g.points
    n = g.n_axis
    assert g.size == n * n
    assert np.allclose(pts[1] - pts[0], [0.5, 0.0])
    assert np.allclose(pts[n] - pts[0], [0.0, 0.5])


@pytest.mark.parametrize("args", [(3, 1.0, 0.1), (1, -1.0, 0.1), (1, 1.0, 0.0), (1, 1.0, 5.0)])
def test_invalid_arguments(args):
    with pytest.raises(InvalidArgument):
        make_grid(*args)


def test_gaussian_overlap_matches_closed_form():
    g = make_grid(1, 12.0, 0.1)
    for R in (0.0, 0.3, 1.7):
        val = inner_product(gaussian_field(g.axis, 0.0), gaussian_field(g.axis, R), g)
        assert val == pytest.approx(np.exp(-(R**2) / 8.0), abs=1e-12)


def test_2d_norm():
    g = make_grid(2, 7.0, 0.25)
    x, y = g.points.T
    psi = gaussian_field(x, 0.2) * gaussian_field(y, -0.4)
    assert inner_product(psi, psi, g) == pytest.approx(1.0, abs=1e-10)


def test_size_mismatch():
    g = make_grid(1, 1.0, 0.1)
    with pytest.raises(DimensionError):
        inner_product(np.ones(g.size), np.ones(g.size + 1), g)


def test_convergence_check_is_small_for_smooth_integrands():
    delta = convergence_check(lambda gr: gaussian_field(gr.axis, 0.5) ** 2, 10.0, 0.1)
    assert delta < 1e-12


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1),
)
def test_linearity(a, b, seed):
    g = make_grid(1, 3.0, 0.1)
    r = np.random.default_rng(seed)
    f, h, u = r.standard_normal((3, g.size))
    lhs = inner_product(a * f + b * h, u, g)
    rhs = a * inner_product(f, u, g) + b * inner_product(h, u, g)
    scale = (abs(a) + abs(b)) * np.linalg.norm(u) * (np.linalg.norm(f) + np.linalg.norm(h)) * g.weight
    assert abs(lhs - rhs) <= 1e-13 * max(scale, 1.0)

"""Cantilever beam solver, stiffness blending, and the tabulated surrogate."""

import numpy as np
import pytest

from mapmcmc.models_beam import (
    BeamModel,
    beam_observe,
    beam_solve,
    build_beam_surrogate,
    load_beam_surrogate,
    make_beam_grid,
    save_beam_surrogate,
    stiffness_field,
)
from mapmcmc.problems import ExtrapolationError


def test_uniform_stiffness_matches_quartic(beam_grid):
    """For E = 1, f = 1 the exact deflection is (x^4 - 4x^3 + 6x^2)/24."""
    u = beam_solve(np.ones(3), beam_grid)
    x = beam_grid.x
    exact = (x**4 - 4 * x**3 + 6 * x**2) / 24.0
    assert np.max(np.abs(u - exact)) < 1e-5


def test_tip_deflection_analytic(beam_grid):
    for e in (0.5, 1.0, 2.0):
        u = beam_solve(np.full(3, e), beam_grid)
        assert u[-1] == pytest.approx(1.0 / (8.0 * e), rel=1e-4)


def test_linearity_in_inverse_stiffness(beam_grid):
    # the fourth-order operator has condition number O(N^4), so the sparse
    # solve only reproduces the exact 1/3 scaling to backward-error level
    u1 = beam_solve(np.ones(3), beam_grid)
    u3 = beam_solve(np.full(3, 3.0), beam_grid)
    np.testing.assert_allclose(u3, u1 / 3.0, rtol=1e-4, atol=1e-6)


def test_clamped_end_conditions(beam_grid):
    u = beam_solve(np.array([1.5, 0.9, 2.5]), beam_grid)
    delta = beam_grid.delta
    assert abs(u[0]) < 1e-6
    slope = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * delta)
    assert abs(slope) < 1e-5


def test_stiffness_field_plateaus():
    x = np.array([0.0, 1.0 / 6.0, 0.5, 5.0 / 6.0, 1.0])
    E = stiffness_field(x, np.array([1.5, 0.9, 2.5]))
    np.testing.assert_allclose(E, [1.5, 1.5, 0.9, 2.5, 2.5], rtol=1e-9)


def test_stiffness_field_validation():
    with pytest.raises(ValueError):
        stiffness_field(np.linspace(0, 1, 5), np.ones(2))


def test_nonpositive_stiffness_rejected(beam_grid):
    with pytest.raises(ValueError):
        beam_solve(np.array([1.0, -0.5, 1.0]), beam_grid)


def test_observe_stride(beam_grid):
    u = np.arange(601, dtype=float)
    obs = beam_observe(u, beam_grid)
    assert obs.shape == (41,)
    np.testing.assert_array_equal(obs, u[::15])


def test_observe_requires_compatible_grid():
    grid = make_beam_grid(100)
    with pytest.raises(ValueError):
        beam_observe(np.zeros(100), grid)


def test_grid_validation():
    with pytest.raises(ValueError):
        make_beam_grid(5)


def test_beam_model_protocol(beam_grid):
    model = BeamModel(beam_grid)
    assert model.d_in == 3 and model.d_out == 41 and model.cost == "hifi"
    out = model.eval(np.array([1.5, 0.9, 2.5]))
    assert out.shape == (41,)
    assert out[0] == pytest.approx(0.0, abs=1e-6)


# ---------------------------------------------------------------------------
# surrogate


def test_surrogate_reproduces_nodes_bitwise(beam_surrogate):
    axes = beam_surrogate.axes
    theta = np.array([axes[0][2], axes[1][6], axes[2][9]])
    np.testing.assert_array_equal(
        beam_surrogate.eval(theta), beam_surrogate.table[2, 6, 9]
    )


def test_surrogate_accuracy(beam_surrogate, beam_grid):
    fom = BeamModel(beam_grid)
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(30):
        theta = np.exp(rng.uniform(np.log(0.55), np.log(3.8), size=3))
        y_f = fom.eval(theta)
        y_s = beam_surrogate.eval(theta)
        worst = max(worst, np.linalg.norm(y_s - y_f) / np.linalg.norm(y_f))
    assert worst < 0.02


def test_surrogate_extrapolation_raises(beam_surrogate):
    with pytest.raises(ExtrapolationError):
        beam_surrogate.eval(np.array([0.4, 1.0, 1.0]))
    with pytest.raises(ExtrapolationError):
        beam_surrogate.eval(np.array([1.0, 1.0, 4.5]))


def test_surrogate_box_edges_inclusive(beam_surrogate):
    lo = np.array([a[0] for a in beam_surrogate.axes])
    hi = np.array([a[-1] for a in beam_surrogate.axes])
    assert np.all(np.isfinite(beam_surrogate.eval(lo)))
    assert np.all(np.isfinite(beam_surrogate.eval(hi)))


def test_surrogate_protocol(beam_surrogate):
    assert beam_surrogate.d_in == 3
    assert beam_surrogate.d_out == 41
    assert beam_surrogate.cost == "lofi"


def test_surrogate_save_load_roundtrip(beam_surrogate, tmp_path):
    path = tmp_path / "surrogate.json"
    save_beam_surrogate(path, beam_surrogate)
    again = load_beam_surrogate(path)
    np.testing.assert_array_equal(beam_surrogate.table, again.table)
    for a, b in zip(beam_surrogate.axes, again.axes):
        np.testing.assert_array_equal(a, b)
    theta = np.array([1.5, 0.9, 2.5])
    np.testing.assert_array_equal(beam_surrogate.eval(theta), again.eval(theta))


def test_surrogate_node_count_validation(beam_grid):
    with pytest.raises(ValueError):
        build_beam_surrogate(beam_grid, nodes_per_axis=3)

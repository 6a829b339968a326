import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhydro.errors import MeshTanglingError, NumericError
from qhydro.kinematics import (FlowState, LabelInterpolator, deformation,
                               deformation_from_positions, div_q, grad_q, invert_labels,
                               jacobian_and_cofactor, to_eulerian)
from qhydro.lattice import make_grid


def smooth_map(grid, amp, k):
    a = grid.mesh()
    shift = amp * np.stack([np.sin(k * a[(i + 1) % grid.dim]) for i in range(grid.dim)])
    return a + shift


class TestDeformation:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 3), st.floats(-0.2, 0.2), st.floats(0.2, 1.0))
    def test_cofactor_identity(self, dim, amp, k):
        grid = make_grid(dim, (-3, 3), 16 if dim == 3 else 24)
        tensors = deformation_from_positions(smooth_map(grid, amp, k), grid)
        assert tensors.cofactor_residual() <= 1e-10

    def test_affine_jacobian(self):
        grid = make_grid(2, (-1, 1), 21)
        M = np.array([[2.0, 0.5], [0.1, 1.5]])
        q = np.einsum("ij,j...->i...", M, grid.mesh())
        tensors = deformation_from_positions(q, grid)
        assert np.allclose(tensors.J, np.linalg.det(M), atol=1e-12)
        assert np.allclose(tensors.cof[:, :, 5, 5], np.linalg.det(M) * np.linalg.inv(M).T)

    def test_3x3_cofactor(self):
        rng = np.random.default_rng(3)
        F = rng.normal(size=(3, 3))
        J, cof = jacobian_and_cofactor(F.reshape(3, 3, 1))
        assert J[0] == pytest.approx(np.linalg.det(F))
        assert np.allclose(cof[:, :, 0], np.linalg.det(F) * np.linalg.inv(F).T)

    def test_tangling_detected(self):
        grid = make_grid(1, (-1, 1), 32)
        a = grid.mesh()
        q = a + 0.3 * np.sin(8 * a)  # dq/da = 1 + 2.4 cos(8a) folds over
        flow = FlowState(0.5, q, np.zeros_like(q), np.zeros(grid.counts))
        with pytest.raises(MeshTanglingError) as info:
            deformation(flow, grid)
        assert info.value.min_jacobian < 0 and info.value.time == 0.5

    def test_non_finite_state(self):
        q = np.zeros((1, 20))
        q[0, 3] = np.inf
        with pytest.raises(NumericError):
            FlowState(0.0, q, np.zeros_like(q), np.zeros(20))


class TestPositionDerivatives:
    def test_grad_and_div_under_stretch(self):
        grid = make_grid(1, (-2, 2), 81)
        a = grid.axes()[0]
        q = (2 * a + 0.1 * a ** 3)[None]
        tensors = deformation_from_positions(q, grid)
        g = grad_q(q[0] ** 2, tensors, grid)
        assert np.max(np.abs(g[0] - 2 * q[0])[5:-5]) < 1e-6
        assert np.max(np.abs(div_q(q, tensors, grid) - 1.0)[5:-5]) < 1e-9


class TestInversion:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_round_trip(self, dim):
        grid = make_grid(dim, (-3, 3), 40)
        q = smooth_map(grid, 0.2, 0.7)
        flow = FlowState(0.0, q, np.zeros_like(q), np.zeros(grid.counts))
        xgrid = make_grid(dim, (-2, 2), 25)
        labels, mask = invert_labels(flow, grid, xgrid)
        assert mask.all()
        back = np.stack([LabelInterpolator(grid, q[i])(labels.reshape(dim, -1))
                         for i in range(dim)]).reshape((dim,) + xgrid.counts)
        assert np.max(np.abs(back - xgrid.mesh())) < 1e-9

    def test_outside_hull_masked(self):
        grid = make_grid(1, (-1, 1), 32)
        flow = FlowState(0.0, grid.mesh(), np.zeros((1, 32)), np.zeros(32))
        _, mask = invert_labels(flow, grid, make_grid(1, (-2, 2), 41))
        x = np.linspace(-2, 2, 41)
        assert np.array_equal(mask, np.abs(x) <= 1 + 1e-12)

    def test_eulerian_of_uniform_stretch(self):
        grid = make_grid(1, (-8, 8), 161)
        a = grid.axes()[0]
        rho0 = np.exp(-a ** 2 / 2) / np.sqrt(2 * np.pi)
        q = 2 * grid.mesh()
        flow = FlowState(1.0, q, 0.5 * q, np.zeros(161))
        xgrid = make_grid(1, (-4, 4), 81)
        fld = to_eulerian(flow, deformation_from_positions(q, grid), rho0, xgrid, grid)
        x = xgrid.axes()[0]
        assert np.max(np.abs(fld.rho - np.exp(-x ** 2 / 8) / np.sqrt(8 * np.pi))) < 1e-6
        assert np.max(np.abs(fld.v[0] - 0.5 * x)) < 1e-12

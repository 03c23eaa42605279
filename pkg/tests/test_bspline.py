import numpy as np
import pytest

from gyrosl import bspline as bs
from gyrosl.bspline import BoundaryCondition as BC

rng = np.random.default_rng(12345)


class TestSolve1D:
    @pytest.mark.parametrize("bc", [BC.PERIODIC, BC.NATURAL, BC.CLAMPED_ZERO_SLOPE])
    def test_constant_gives_constant_coefficients(self, bc):
        rep = bs.solve_coeffs_1d(np.full(24, 2.75), bc)
        np.testing.assert_allclose(rep.coeffs, 2.75, rtol=1e-13)

    @pytest.mark.parametrize("bc", [BC.PERIODIC, BC.NATURAL, BC.CLAMPED_ZERO_SLOPE])
    def test_nodal_reproduction(self, bc):
        vals = rng.uniform(-1, 1, size=40)
        rep = bs.solve_coeffs_1d(vals, bc)
        out = rep.eval(np.arange(40.0))
        assert np.max(np.abs(out - vals)) < 1e-12

    def test_unit_coefficient_round_trip(self):
        # values sampled from a known coefficient vector come back exactly
        n = 16
        coeffs = np.zeros(n)
        coeffs[5] = 1.0
        vals = (np.roll(coeffs, -1) + 4 * coeffs + np.roll(coeffs, 1)) / 6.0
        rep = bs.solve_coeffs_1d(vals, BC.PERIODIC)
        np.testing.assert_allclose(rep.coeffs, coeffs, atol=1e-14)

    def test_periodic_sinusoid_fourth_order(self):
        errs = []
        for n in (16, 32, 64, 128):
            x = np.arange(n) * (2 * np.pi / n)
            rep = bs.solve_coeffs_1d(np.sin(x), BC.PERIODIC, x0=0.0,
                                     dx=2 * np.pi / n)
            xs = np.linspace(0, 2 * np.pi, 701, endpoint=False) + 1e-3
            errs.append(np.max(np.abs(rep.eval(xs) - np.sin(xs))))
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(orders > 3.7)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            bs.solve_coeffs_1d(np.ones(3), BC.PERIODIC)


class TestEval2D:
    def test_nodal_reproduction(self):
        vals = rng.normal(size=(20, 24))
        rep = bs.solve_coeffs_2d(vals)
        x, y = np.meshgrid(np.arange(20.0), np.arange(24.0), indexing="ij")
        assert np.max(np.abs(bs.eval_2d(rep, x, y) - vals)) < 1e-12

    def test_constant_everywhere(self):
        rep = bs.solve_coeffs_2d(np.full((12, 16), 3.5))
        pts = rng.uniform(0, 11, size=(2, 50))
        np.testing.assert_allclose(
            bs.eval_2d(rep, pts[0], pts[1] * 16 / 11), 3.5, rtol=1e-13
        )

    def test_bilinear_reproduction_interior(self):
        # the linear-in-theta part is discontinuous across the periodic seam;
        # its spline ringing decays like (2 - sqrt(3))^d, so sample far from
        # both the seam and the radial ends
        nx, ny = 24, 96
        x, y = np.meshgrid(np.arange(float(nx)), np.arange(float(ny)),
                           indexing="ij")
        vals = 0.7 * x + 1.3 * y
        rep = bs.solve_coeffs_2d(vals, bc_theta=BC.PERIODIC)
        xs = rng.uniform(6, nx - 7, size=200)
        ys = rng.uniform(36, 60, size=200)
        out = bs.eval_2d(rep, xs, ys)
        ref = 0.7 * xs + 1.3 * ys
        assert np.max(np.abs(out - ref)) < 1e-11 * np.abs(ref).max()

    def test_out_of_domain_clamps_and_counts(self):
        vals = rng.normal(size=(12, 16))
        rep = bs.solve_coeffs_2d(vals)
        out, count = bs.eval_2d_counted(rep, np.array([-3.0, 5.0, 14.0]),
                                        np.array([0.0, 0.0, 0.0]))
        assert count == 2
        assert out[0] == pytest.approx(bs.eval_2d(rep, 0.0, 0.0), rel=1e-13)
        assert np.isfinite(out).all()


class TestPartitionOfUnity:
    def test_cardinal_sum(self):
        xs = rng.uniform(10, 20, size=400)
        total = np.zeros_like(xs)
        for i in range(5, 26):
            total += bs.cardinal_bspline(xs - i)
        assert np.max(np.abs(total - 1.0)) < 1e-14

    def test_basis_weights_sum(self):
        w = bs.basis_weights(rng.uniform(0, 1, size=300))
        assert np.max(np.abs(w.sum(axis=-1) - 1.0)) < 1e-14

    def test_known_node_values(self):
        w = bs.basis_weights(0.0)
        np.testing.assert_allclose(w, [1 / 6, 2 / 3, 1 / 6, 0.0], atol=1e-15)


class TestDeposit:
    def test_on_node_pattern(self):
        # single unit-weight particle exactly on a node spreads (1/6, 2/3, 1/6)
        n = 16
        rep = bs.SplineRep1D(np.zeros(n), BC.PERIODIC, 0.0, 1.0, n)
        rep.coeffs[8] = 1.0
        out, loss = bs.deposit_1d(rep, np.arange(float(n)))
        assert loss == 0.0
        np.testing.assert_allclose(out[7:10], [1 / 6, 2 / 3, 1 / 6], atol=1e-15)
        assert np.all(out[:6] == 0) and np.all(out[11:] == 0)

    def test_2d_tensor_pattern(self):
        vals = np.zeros((16, 16))
        rep = bs.solve_coeffs_2d(vals, bc_r=BC.PERIODIC)
        rep.coeffs[:] = 0.0
        rep.coeffs[8, 8] = 1.0
        x, y = np.meshgrid(np.arange(16.0), np.arange(16.0), indexing="ij")
        out, _ = bs.deposit_2d(rep, x, y)
        expect = np.outer([1 / 6, 2 / 3, 1 / 6], [1 / 6, 2 / 3, 1 / 6])
        np.testing.assert_allclose(out[7:10, 7:10], expect, atol=1e-15)

    def test_fully_periodic_conservation(self):
        vals = rng.normal(size=(24, 20))
        rep = bs.solve_coeffs_2d(vals, bc_r=BC.PERIODIC)
        x, y = np.meshgrid(np.arange(24.0), np.arange(20.0), indexing="ij")
        fx = x + rng.uniform(-5, 5, size=x.shape)
        fy = y + rng.uniform(-5, 5, size=y.shape)
        out, loss = bs.deposit_2d(rep, fx, fy)
        assert loss == 0.0
        total = rep.coeffs.sum()
        assert abs(out.sum() - total) < 1e-13 * abs(total)

    def test_zero_displacement_inverts_interpolation(self):
        vals = rng.normal(size=(18, 22))
        rep = bs.solve_coeffs_2d(vals)
        x, y = np.meshgrid(np.arange(18.0), np.arange(22.0), indexing="ij")
        out, _ = bs.deposit_2d(rep, x, y)
        assert np.max(np.abs(out - vals)) < 1e-12

    def test_spill_accounting_closes(self):
        # deposited total + spilled weight = total particle weight
        vals = rng.normal(size=(12, 8))
        rep = bs.solve_coeffs_2d(vals)
        x, y = np.meshgrid(np.arange(12.0), np.arange(8.0), indexing="ij")
        out, loss = bs.deposit_2d(rep, x - 2.7, y + 0.4)
        assert out.sum() + loss == pytest.approx(rep.coeffs.sum(), rel=1e-13)


class TestTranslation:
    def test_full_period_return_fourth_order(self):
        # advect sin(3 theta) by a constant off-grid shift all the way around
        errs = []
        for n in (32, 64, 128):
            theta = np.arange(n) * (2 * np.pi / n)
            f = np.sin(3 * theta)
            steps = n + 3          # irrational-ish per-step shift
            shift = 2 * np.pi / steps
            cur = f.copy()
            for _ in range(steps):
                rep = bs.solve_coeffs_1d(cur, BC.PERIODIC, dx=2 * np.pi / n)
                cur = rep.eval(theta - shift)
            errs.append(np.max(np.abs(cur - f)))
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert errs[-1] < 2e-4
        assert np.all(orders > 3.5)

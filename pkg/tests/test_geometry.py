import numpy as np
import pytest

from gyrosl.geometry import (
    Grid4D,
    MagneticKind,
    MagneticModel,
    Profiles,
    QProfile,
    Units,
)

A = 100.0


def toroidal(q0=1.5, qa=2.8, p=2.0, aspect=3.0):
    return MagneticModel(MagneticKind.TOROIDAL, r0=aspect * A, a=A,
                         q=QProfile(q0, qa, p, A), r_min=0.1 * A)


def cylindrical():
    return MagneticModel(MagneticKind.CYLINDRICAL, r0=3 * A, a=A,
                         q=QProfile(1.5, 2.8, 2.0, A), r_min=0.1 * A)


class TestUnits:
    def test_normalized_constants(self):
        u = Units(rho_star=0.01)
        assert u.v_th0 == 1.0
        assert u.omega_c == 1.0
        assert u.a == 100.0

    def test_rho_star_bounds(self):
        with pytest.raises(ValueError):
            Units(rho_star=0.0)
        with pytest.raises(ValueError):
            Units(rho_star=1.5)


class TestMagneticField:
    def test_cylindrical_uniform(self):
        m = cylindrical()
        br, bt, bp, b = m.field(50.0, 1.3)
        assert (br, bt, bp, b) == (0.0, 0.0, 1.0, 1.0)

    def test_toroidal_midplane_top(self):
        # theta = pi/2 puts R = R0, so |B| = B0 sqrt(1 + (r/(q R0))^2)
        m = toroidal()
        r = 60.0
        _, _, _, b = m.field(r, np.pi / 2)
        f = r / (m.q(r) * m.r0)
        assert b == pytest.approx(np.sqrt(1.0 + f * f), rel=1e-14)

    def test_high_field_side(self):
        m = toroidal()
        b_out = m.bmag(70.0, 0.0)
        b_in = m.bmag(70.0, np.pi)
        assert b_in > b_out

    def test_toroidal_requires_interior_a(self):
        with pytest.raises(ValueError):
            MagneticModel(MagneticKind.TOROIDAL, r0=90.0, a=A,
                          q=QProfile(1.5, 2.8, 2.0, A))


class TestBStarParallel:
    def test_zero_vpar(self):
        m = toroidal()
        assert m.b_star_parallel(55.0, 0.3, 0.0) == m.bmag(55.0, 0.3)

    def test_cylindrical_uniform_curl_free(self):
        m = cylindrical()
        for v in (-5.0, -1.0, 2.0, 5.0):
            assert m.b_star_parallel(42.0, 2.0, v) == m.bmag(42.0, 2.0)

    def test_antisymmetric_correction(self):
        m = toroidal()
        b = m.bmag(62.0, 1.1)
        up = m.b_star_parallel(62.0, 1.1, 2.5) - b
        dn = m.b_star_parallel(62.0, 1.1, -2.5) - b
        assert up == pytest.approx(-dn, rel=1e-14)


class TestPsi:
    def test_gauge_zero_at_r_min(self):
        m = toroidal()
        assert m.psi(m.r_min) == 0.0

    def test_constant_q_closed_form(self):
        m = MagneticModel(MagneticKind.TOROIDAL, r0=3 * A, a=A,
                          q=QProfile(2.0, 2.0, 2.0, A), r_min=0.1 * A)
        r = np.linspace(0.1 * A, A, 7)
        expected = -(r**2 - (0.1 * A) ** 2) / (2.0 * 2.0)
        np.testing.assert_allclose(m.psi(r), expected, rtol=1e-13)

    def test_strictly_decreasing(self):
        m = toroidal()
        psi = m.psi(np.linspace(0.1 * A, A, 300))
        assert np.all(np.diff(psi) < 0)

    def test_quadrature_refinement(self):
        m = toroidal()
        coarse = m.psi(A, n_segments=32)
        fine = m.psi(A, n_segments=64)
        assert abs(fine - coarse) < 1e-12 * abs(fine)


class TestPPhi:
    def test_vpar_zero(self):
        m = toroidal()
        assert m.p_phi(70.0, 0.4, 0.0) == pytest.approx(m.psi(70.0), rel=1e-14)

    def test_cylindrical_closed_form(self):
        m = cylindrical()
        r, v = 33.0, -3.0
        assert m.p_phi(r, 1.0, v) == pytest.approx(m.psi(r) + m.r0 * v, rel=1e-14)

    def test_invariant_along_orbit(self):
        # RK4 integration of the unperturbed drift flow, t = 100, dt = 0.01
        from gyrosl.characteristics import linear_advection_field

        m = toroidal()
        v = -3.0

        def rhs(y):
            rd, td, _ = linear_advection_field(m, y[0], y[1], v)
            return np.array([rd, td])

        y = np.array([55.0, 0.7])
        p0 = m.p_phi(y[0], y[1], v)
        dt = 0.01
        for _ in range(10000):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * dt * k1)
            k3 = rhs(y + 0.5 * dt * k2)
            k4 = rhs(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        p1 = m.p_phi(y[0], y[1], v)
        assert abs(p1 - p0) < 1e-6 * abs(p0)

    def test_direct_vs_cached_psi(self):
        m = toroidal()
        grid = Grid4D(16, 8, 1, 4, 0.1 * A, A, -3.0, 3.0)
        psi = m.psi(grid.r)
        direct = m.p_phi(grid.r[:, None, None], grid.theta[None, :, None],
                         grid.vpar[None, None, :])
        cached = m.p_phi(grid.r[:, None, None], grid.theta[None, :, None],
                         grid.vpar[None, None, :], psi_values=psi[:, None, None])
        np.testing.assert_allclose(direct, cached, rtol=1e-14)


class TestEnergy:
    def test_values(self):
        m = toroidal()
        assert m.energy(50.0, 0.0, 0.0, 0.0) == 0.0
        assert m.energy(50.0, 0.0, -3.0, 0.0) == 4.5

    def test_even_in_vpar(self):
        m = toroidal()
        assert m.energy(50.0, 1.0, 2.2) == m.energy(50.0, 1.0, -2.2)

    def test_negative_mu_rejected(self):
        with pytest.raises(ValueError):
            toroidal().energy(50.0, 0.0, 1.0, mu=-0.1)


def fd_bracket(model, r, theta, target, h):
    """Finite-difference oracle for b . (grad|B| x grad x^i); the angular
    step is h relative to the 2*pi period."""
    ht = h / model.a * 2 * np.pi
    dbdr = (model.bmag(r + h, theta) - model.bmag(r - h, theta)) / (2 * h)
    dbdt = (model.bmag(r, theta + ht) - model.bmag(r, theta - ht)) / (2 * ht)
    _, btheta, bphi, b = model.field(r, theta)
    bt, bp = btheta / b, bphi / b
    rr = model.major_radius(r, theta)
    if target == "r":
        return -bp * dbdt / r
    if target == "theta":
        return bp * dbdr / r
    return -bt * dbdr / rr


class TestBrackets:
    def test_cylindrical_all_zero(self):
        m = cylindrical()
        for tgt in ("r", "theta", "phi"):
            assert np.all(m.poisson_bracket_b(55.0, 0.9, tgt) == 0.0)
        assert np.all(m.mu0_b_dot_j(55.0, 0.9) == 0.0)

    def test_toroidal_vs_finite_difference(self):
        m = toroidal()
        h = 1e-4 * A
        r = np.linspace(0.2 * A, 0.9 * A, 9)[:, None]
        th = np.linspace(0.1, 6.1, 11)[None, :]
        for tgt in ("r", "theta", "phi"):
            ana = m.poisson_bracket_b(r, th, tgt)
            ref = fd_bracket(m, r, th, tgt, h)
            scale = np.max(np.abs(ref))
            assert np.max(np.abs(ana - ref)) < 1e-6 * scale

    def test_bracket_of_function_of_b_vanishes(self):
        # [B, B^2] = 2B [B, B] = 0; assemble with the model's gradients
        m = toroidal()
        r, th = 64.0, 2.1
        dbdr, dbdt = m.grad_bmag(r, th)
        b = m.bmag(r, th)
        _, btheta, bphi, _ = m.field(r, th)
        # b . (grad B x grad B^2) has identical direction factors
        cross = dbdr * (2 * b * dbdt) - dbdt * (2 * b * dbdr)
        assert cross == 0.0

    def test_mu0_j_vs_finite_difference_curl(self):
        # (curl B)_phi = (1/r) d(r B_theta)/dr - (1/(r R)) d(R B_r)/dtheta
        m = toroidal()
        h = 1e-4 * A
        r = np.linspace(0.2 * A, 0.9 * A, 7)
        th = np.linspace(0.0, 6.0, 9)[None, :]
        r = r[:, None]

        def rbt(rr):
            _, btheta, _, _ = m.field(rr, th)
            return rr * btheta

        curl_phi = (rbt(r + h) - rbt(r - h)) / (2 * h) / r
        ana = m.mu0_j_phi(r, th)
        assert np.max(np.abs(ana - curl_phi)) < 1e-6 * np.max(np.abs(ana))


class TestJacobian:
    def test_cylindrical(self):
        assert cylindrical().jacobian_space(0.5, 0.0) == 0.5

    def test_toroidal_top(self):
        m = toroidal()
        assert m.jacobian_space(44.0, np.pi / 2) == pytest.approx(44.0, rel=1e-14)

    def test_positive(self):
        m = toroidal()
        g = Grid4D(32, 16, 1, 1, 0.1 * A, A, -3.0, -3.0)
        js = m.jacobian_space(g.r[:, None], g.theta[None, :])
        assert np.all(js > 0)


class TestGrid4D:
    def test_spacings(self):
        g = Grid4D(11, 8, 4, 5, 1.0, 2.0, -5.0, 5.0)
        assert g.dr == pytest.approx(0.1)
        assert g.dtheta == pytest.approx(2 * np.pi / 8)
        assert g.dv == pytest.approx(2.5)

    def test_nodes_reproducible_from_indices(self):
        g = Grid4D(257, 64, 8, 17, 10.0, 100.0, -5.0, 5.0)
        assert np.array_equal(g.r, 10.0 + np.arange(257) * g.dr)
        assert np.array_equal(g.theta, np.arange(64) * g.dtheta)

    def test_degenerate_axes(self):
        g = Grid4D(8, 8, 1, 1, 1.0, 2.0, -3.0, -3.0)
        assert g.vpar.tolist() == [-3.0]
        assert g.w_v.tolist() == [1.0]
        assert g.w_phi.tolist() == [2 * np.pi]

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid4D(3, 8, 1, 1, 1.0, 2.0, -3.0, -3.0)
        with pytest.raises(ValueError):
            Grid4D(8, 8, 2, 1, 1.0, 2.0, -3.0, -3.0)
        with pytest.raises(ValueError):
            Grid4D(8, 8, 1, 1, 2.0, 1.0, -3.0, -3.0)
        with pytest.raises(ValueError):
            Grid4D(8, 8, 1, 1, 1.0, 2.0, -3.0, -2.0)

    def test_trapezoid_weights(self):
        g = Grid4D(5, 8, 1, 5, 0.0 + 1.0, 2.0, -1.0, 1.0)
        assert g.w_r[0] == 0.5 * g.dr and g.w_r[2] == g.dr
        # integrates linear functions exactly
        assert np.dot(g.w_v, g.vpar) == pytest.approx(0.0, abs=1e-15)


class TestProfiles:
    def test_flat(self):
        g = Grid4D(16, 8, 1, 1, 10.0, 100.0, -3.0, -3.0)
        p = Profiles.flat(g)
        assert np.all(p.n0 == 1.0)

    def test_positivity_enforced(self):
        g = Grid4D(16, 8, 1, 1, 10.0, 100.0, -3.0, -3.0)
        with pytest.raises(ValueError):
            Profiles(np.zeros(16), np.ones(16), np.ones(16))

    def test_gradient_generator_log_slope(self):
        # X'/X should equal -kappa/a * sech^2((r - rp)/dr)
        g = Grid4D(401, 8, 1, 1, 10.0, 100.0, -3.0, -3.0)
        kappa = 4.0
        p = Profiles.with_gradients(g, A, kappa_ti=kappa, r_peak_frac=0.5,
                                    delta_r_frac=0.2)
        logti = np.log(p.ti)
        slope = np.gradient(logti, g.r)
        expected = -(kappa / A) / np.cosh((g.r - 0.5 * A) / (0.2 * A)) ** 2
        # np.gradient is 2nd order; tolerance covers its truncation
        assert np.max(np.abs(slope - expected)) < 2e-3 * (kappa / A)

    def test_edge_floor_window(self):
        g = Grid4D(101, 8, 1, 1, 10.0, 100.0, -3.0, -3.0)
        p = Profiles.with_gradients(g, A, n_edge_floor=1e-3)
        assert p.n0[0] < 5e-3
        assert p.n0[50] > 0.5
        assert np.all(p.n0 > 0)

"""Tests for the pseudo-spectral core: transforms, RHS, time stepping."""

import numpy as np
import numpy.testing as npt
import pytest

from mzclosure.errors import DomainError
from mzclosure.spectral import (
    DomainParams,
    IfRk3Stepper,
    PhysicalField,
    SpectralField,
    default_initial_condition,
    ks_rhs,
    simulate_dns,
    step_if_rk3,
    to_physical,
    to_spectral,
    wavenumbers,
)

KS_LENGTH = 2 * np.pi / np.sqrt(0.085)


def random_field(domain, seed, amplitude=1.0, zero_nyquist=True):
    rng = np.random.default_rng(seed)
    u = amplitude * rng.standard_normal(domain.n_modes)
    c = np.fft.rfft(u) / domain.n_modes
    if zero_nyquist:
        c[-1] = 0.0
    return SpectralField(c, domain)


def direct_convolution_rhs(f):
    """O(N^2) oracle for the K-S right-hand side.

    Builds the two-sided mode set (Nyquist dropped) and evaluates the
    convolution sum of the quadratic term pair by pair.
    """
    dom = f.domain
    nh = dom.n_half
    half = dom.n_modes // 2
    k = wavenumbers(dom)
    modes = np.arange(-(half - 1), half)
    two = np.empty(modes.size, dtype=np.complex128)
    for i, m in enumerate(modes):
        two[i] = f.coeffs[m] if m >= 0 else np.conj(f.coeffs[-m])
    conv = np.zeros(nh, dtype=np.complex128)
    for i, p in enumerate(modes):
        for j, q in enumerate(modes):
            s = p + q
            if 0 <= s <= half - 1:
                conv[s] += two[i] * two[j]
    out = (k**2 - k**4) * f.coeffs
    out[:-1] -= 0.5j * k[:-1] * conv[:-1]
    return out


class TestDomainParams:
    def test_valid(self):
        d = DomainParams(KS_LENGTH, 256, 1e-3)
        assert d.n_half == 129
        assert d.fundamental == pytest.approx(np.sqrt(0.085))

    @pytest.mark.parametrize("args", [(-1.0, 64, 1e-3), (1.0, 63, 1e-3),
                                      (1.0, 2, 1e-3), (1.0, 64, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(DomainError):
            DomainParams(*args)


class TestTransforms:
    def test_constant_field(self):
        dom = DomainParams(2 * np.pi, 16, 1e-3)
        f = to_spectral(PhysicalField(np.full(16, 3.0), dom))
        assert f.coeffs[0] == pytest.approx(3.0)
        npt.assert_allclose(np.abs(f.coeffs[1:]), 0.0, atol=1e-15)

    def test_single_cosine_mode(self):
        dom = DomainParams(2 * np.pi, 8, 1e-3)
        u = np.cos(dom.fundamental * dom.grid())
        f = to_spectral(PhysicalField(u, dom))
        assert f.coeffs[1] == pytest.approx(0.5, abs=1e-15)
        mask = np.ones(dom.n_half, dtype=bool)
        mask[1] = False
        npt.assert_allclose(np.abs(f.coeffs[mask]), 0.0, atol=1e-15)

    def test_roundtrip_physical(self):
        dom = DomainParams(3.7, 64, 1e-3)
        u = np.random.default_rng(0).standard_normal(64)
        back = to_physical(to_spectral(PhysicalField(u, dom)))
        npt.assert_allclose(back.values, u, atol=1e-12)

    def test_roundtrip_spectral(self):
        dom = DomainParams(3.7, 64, 1e-3)
        f = random_field(dom, 1, zero_nyquist=False)
        back = to_spectral(to_physical(f))
        npt.assert_allclose(back.coeffs, f.coeffs, atol=1e-12)

    def test_zero_coeffs_to_zero_field(self):
        dom = DomainParams(1.0, 16, 1e-3)
        u = to_physical(SpectralField(np.zeros(9, complex), dom))
        npt.assert_array_equal(u.values, 0.0)

    def test_mean_only_gives_constant(self):
        dom = DomainParams(1.0, 16, 1e-3)
        c = np.zeros(9, complex)
        c[0] = -1.25
        u = to_physical(SpectralField(c, dom))
        npt.assert_allclose(u.values, -1.25, atol=1e-15)

    def test_length_mismatch_rejected(self):
        dom = DomainParams(1.0, 16, 1e-3)
        with pytest.raises(DomainError):
            PhysicalField(np.zeros(15), dom)
        with pytest.raises(DomainError):
            SpectralField(np.zeros(8, complex), dom)

    def test_reality_invariant_enforced(self):
        dom = DomainParams(1.0, 16, 1e-3)
        c = np.zeros(9, complex)
        c[0] = 1j
        with pytest.raises(DomainError):
            SpectralField(c, dom)


class TestKsRhs:
    def test_zero_field(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        out = ks_rhs(SpectralField(np.zeros(17, complex), dom))
        npt.assert_array_equal(out.coeffs, 0.0)

    def test_linear_part_vanishes_at_unit_wavenumber(self):
        dom = DomainParams(2 * np.pi, 32, 1e-3)
        c = np.zeros(17, complex)
        c[1] = 1.0
        out = ks_rhs(SpectralField(c, dom), nonlinear=False)
        assert abs(out.coeffs[1]) < 1e-15

    def test_sine_nonlinearity_analytic(self):
        # u = sin(x) on L=2*pi: -(1/2) d(u^2)/dx = -(1/2) sin(2x)
        dom = DomainParams(2 * np.pi, 32, 1e-3)
        x = dom.grid()
        f = to_spectral(PhysicalField(np.sin(x), dom))
        full = ks_rhs(f)
        lin = ks_rhs(f, nonlinear=False)
        quad = SpectralField(full.coeffs - lin.coeffs, dom)
        expected = to_spectral(PhysicalField(-0.5 * np.sin(2 * x), dom))
        npt.assert_allclose(quad.coeffs, expected.coeffs, atol=1e-12)

    @pytest.mark.parametrize("n_modes", [8, 16, 32])
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_matches_direct_convolution(self, n_modes, seed):
        dom = DomainParams(KS_LENGTH, n_modes, 1e-3)
        f = random_field(dom, seed)
        out = ks_rhs(f)
        oracle = direct_convolution_rhs(f)
        npt.assert_allclose(out.coeffs, oracle, atol=1e-10)

    def test_reality_preserved(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        out = ks_rhs(random_field(dom, 7))
        assert out.coeffs[0].imag == 0.0


class TestStepIfRk3:
    def test_zero_fixed_point(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        out = step_if_rk3(SpectralField(np.zeros(17, complex), dom), 1e-2)
        npt.assert_array_equal(out.coeffs, 0.0)

    @pytest.mark.parametrize("mode", [1, 3, 7])
    def test_linear_exactness(self, mode):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        c = np.zeros(17, complex)
        c[mode] = 0.3 - 0.2j
        dt = 0.05
        out = step_if_rk3(SpectralField(c, dom), dt, nonlinear=False)
        k = wavenumbers(dom)[mode]
        exact = c[mode] * np.exp((k**2 - k**4) * dt)
        assert abs(out.coeffs[mode] - exact) < 1e-14

    def test_self_convergence_order(self):
        # Richardson self-convergence on the full equation, N=32.
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        c0 = to_spectral(default_initial_condition(dom, 11)).coeffs
        total = 0.5

        def integrate(dt):
            stepper = IfRk3Stepper(dom, dt)
            c = c0.copy()
            for _ in range(round(total / dt)):
                c = stepper.step(c)
            return c

        ref = integrate(2.5e-4 / 4)
        errs = [np.max(np.abs(integrate(dt) - ref)) for dt in (4e-3, 2e-3, 1e-3)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 2.5)


class TestSimulateDns:
    def test_two_entries_for_single_step(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        g = default_initial_condition(dom, 0)
        traj = simulate_dns(g, dom, dom.dt, 1)
        assert traj.n_frames == 2
        assert traj.frame_dt == dom.dt

    def test_zero_initial_condition(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        traj = simulate_dns(PhysicalField(np.zeros(32), dom), dom, 10 * dom.dt, 5)
        npt.assert_array_equal(traj.coeffs, 0.0)

    def test_bitwise_determinism(self):
        dom = DomainParams(KS_LENGTH, 64, 1e-3)
        g = default_initial_condition(dom, 42)
        t1 = simulate_dns(g, dom, 0.2, 10)
        t2 = simulate_dns(g, dom, 0.2, 10)
        assert np.array_equal(t1.coeffs, t2.coeffs)

    def test_attractor_bounded(self):
        # K-S attractor boundedness after a transient, N=64.
        dom = DomainParams(KS_LENGTH, 64, 2e-3)
        g = default_initial_condition(dom, 3)
        traj = simulate_dns(g, dom, 100.0, 50, transient_time=50.0)
        umax = max(np.abs(to_physical(traj.field(i)).values).max()
                   for i in range(traj.n_frames))
        assert umax < 10.0
        assert umax > 0.5  # genuinely on the attractor, not decayed

    def test_stride_must_divide(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        g = default_initial_condition(dom, 0)
        with pytest.raises(DomainError):
            simulate_dns(g, dom, 10 * dom.dt, 3)

    def test_mean_mode_conserved(self):
        dom = DomainParams(KS_LENGTH, 32, 1e-3)
        g = default_initial_condition(dom, 5)
        traj = simulate_dns(g, dom, 0.1, 10)
        npt.assert_array_equal(traj.coeffs[:, 0].imag, 0.0)
        npt.assert_allclose(traj.coeffs[:, 0].real, traj.coeffs[0, 0].real, atol=1e-15)

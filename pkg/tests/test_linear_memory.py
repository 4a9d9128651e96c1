"""Tests for the block-linear memory-kernel reduction."""

import numpy as np
import numpy.testing as npt
import pytest

from mzclosure.errors import DomainError
from mzclosure.linear_memory import LinearSystem, full_solve, gle_solve


def random_stable_scalar(seed):
    rng = np.random.default_rng(seed)
    return LinearSystem(
        a11=rng.uniform(-1.5, -0.1), a12=rng.uniform(-1.0, 1.0),
        a21=rng.uniform(-1.0, 1.0), a22=rng.uniform(-2.0, -0.3),
        x0=rng.uniform(-1.0, 1.0), y0=rng.uniform(-1.0, 1.0))


class TestFullSolve:
    def test_decoupled_scalar_exponential(self):
        sys = LinearSystem(a11=-0.7, a12=0.0, a21=0.0, a22=-1.0, x0=2.0, y0=1.0)
        ts, xs, _ = full_solve(sys, 1.0, 1e-3)
        npt.assert_allclose(xs[:, 0], 2.0 * np.exp(-0.7 * ts), atol=1e-8)

    def test_zero_initial_data(self):
        sys = LinearSystem(a11=-0.7, a12=0.3, a21=0.2, a22=-1.0, x0=0.0, y0=0.0)
        _, xs, ys = full_solve(sys, 1.0, 1e-2)
        npt.assert_array_equal(xs, 0.0)
        npt.assert_array_equal(ys, 0.0)

    def test_rotation_oracle(self):
        # x' = y, y' = -x with x0=1, y0=0 gives x(t) = cos(t)
        sys = LinearSystem(a11=0.0, a12=1.0, a21=-1.0, a22=0.0, x0=1.0, y0=0.0)
        ts, xs, _ = full_solve(sys, 1.0, 1e-3)
        assert abs(xs[-1, 0] - np.cos(1.0)) < 1e-6

    def test_shape_validation(self):
        with pytest.raises(DomainError):
            LinearSystem(a11=np.zeros((2, 2)), a12=1.0, a21=1.0, a22=1.0,
                         x0=np.zeros(2), y0=0.0)


class TestGleSolve:
    def test_no_coupling_reduces_to_markov(self):
        sys = LinearSystem(a11=-0.9, a12=0.0, a21=0.4, a22=-1.2, x0=1.5, y0=0.7)
        ts, xs = gle_solve(sys, 2.0, 1e-3)
        npt.assert_allclose(xs[:, 0], 1.5 * np.exp(-0.9 * ts), atol=1e-6)

    def test_zero_y0_removes_noise_term(self):
        # with y0 = 0 the GLE still matches the full solve (memory only)
        sys = LinearSystem(a11=-0.5, a12=0.8, a21=-0.6, a22=-1.0, x0=1.0, y0=0.0)
        _, x_full, _ = full_solve(sys, 3.0, 1e-3)
        _, x_gle = gle_solve(sys, 3.0, 1e-3)
        assert np.max(np.abs(x_full - x_gle)) < 1e-5

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_full_solve_scalar(self, seed):
        sys = random_stable_scalar(seed)
        _, x_full, _ = full_solve(sys, 5.0, 1e-3)
        _, x_gle = gle_solve(sys, 5.0, 1e-3)
        assert np.max(np.abs(x_full - x_gle)) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_full_solve_2x2(self, seed):
        rng = np.random.default_rng(200 + seed)
        # stable blocks: diagonally dominant negative definite diagonal blocks
        a11 = -np.eye(2) * rng.uniform(0.5, 1.5) + 0.1 * rng.standard_normal((2, 2))
        a22 = -np.eye(2) * rng.uniform(0.8, 2.0) + 0.1 * rng.standard_normal((2, 2))
        sys = LinearSystem(a11=a11, a12=0.5 * rng.standard_normal((2, 2)),
                           a21=0.5 * rng.standard_normal((2, 2)), a22=a22,
                           x0=rng.standard_normal(2), y0=rng.standard_normal(2))
        _, x_full, _ = full_solve(sys, 4.0, 1e-3)
        _, x_gle = gle_solve(sys, 4.0, 1e-3)
        assert np.max(np.abs(x_full - x_gle)) < 2e-4

    @pytest.mark.parametrize("seed", range(6))
    def test_second_order_convergence(self, seed):
        sys = random_stable_scalar(1000 + seed)
        errs = []
        for dt in (4e-3, 2e-3, 1e-3):
            _, x_full, _ = full_solve(sys, 2.0, dt)
            _, x_gle = gle_solve(sys, 2.0, dt)
            errs.append(np.max(np.abs(x_full - x_gle)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.7), (errs, orders)

"""Exact memory-kernel reduction of a block 2x2 linear ODE system.

For

    x' = A11 x + A12 y
    y' = A21 x + A22 y

eliminating y gives a closed equation for the resolved block,

    x' = A11 x + A12 int_0^t exp(A22 (t-s)) A21 x(s) ds + A12 exp(A22 t) y0,

whose three terms are Markovian, memory, and (known-initial-data) noise.
`gle_solve` integrates this equation with trapezoidal quadrature of the
memory integral and a Heun predictor-corrector step, both second order,
so the result converges to the full solve at O(dt^2).  The history sum
is carried by the exact recursion

    I_n = E I_{n-1} + dt/2 (g_n + E g_{n-1}),      E = exp(A22 dt),

so no history buffer is required.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, InstabilityError


def _as_matrix(a):
    m = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise DomainError("blocks must be scalars or 2-D matrices")
    return m


@dataclass
class LinearSystem:
    """Block-partitioned linear system with resolved x and unresolved y."""

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    x0: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        self.a11 = _as_matrix(self.a11)
        self.a12 = _as_matrix(self.a12)
        self.a21 = _as_matrix(self.a21)
        self.a22 = _as_matrix(self.a22)
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=np.float64))
        n, m = self.x0.size, self.y0.size
        shapes = {"a11": (n, n), "a12": (n, m), "a21": (m, n), "a22": (m, m)}
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise DomainError(f"block {name} has shape {got}, expected {want}")
        for arr in (self.a11, self.a12, self.a21, self.a22, self.x0, self.y0):
            if not np.all(np.isfinite(arr)):
                raise DomainError("non-finite system data")


def _steps(total_time, dt):
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if total_time < dt:
        raise DomainError(f"total_time {total_time} must be >= dt {dt}")
    return round(total_time / dt)


def full_solve(sys: LinearSystem, total_time: float, dt: float):
    """Classical RK4 on the coupled system.  Returns (t, x, y) trajectories."""
    n_steps = _steps(total_time, dt)
    n, m = sys.x0.size, sys.y0.size
    a = np.zeros((n + m, n + m))
    a[:n, :n] = sys.a11
    a[:n, n:] = sys.a12
    a[n:, :n] = sys.a21
    a[n:, n:] = sys.a22
    z = np.concatenate([sys.x0, sys.y0])
    ts = np.arange(n_steps + 1) * dt
    out = np.empty((n_steps + 1, n + m))
    out[0] = z
    for step in range(1, n_steps + 1):
        k1 = a @ z
        k2 = a @ (z + 0.5 * dt * k1)
        k3 = a @ (z + 0.5 * dt * k2)
        k4 = a @ (z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise InstabilityError(f"full solve non-finite at step {step}", step=step)
        out[step] = z
    return ts, out[:, :n], out[:, n:]


def gle_solve(sys: LinearSystem, total_time: float, dt: float):
    """Integrate the reduced equation for x with its explicit memory term.

    Returns (t, x).  The memory integral uses trapezoidal quadrature on
    the step grid; the noise term A12 exp(A22 t) y0 is included exactly
    since y0 is known.
    """
    n_steps = _steps(total_time, dt)
    n = sys.x0.size
    e_dt = expm(sys.a22 * dt)
    x = sys.x0.copy()
    mem = np.zeros(sys.y0.size)          # trapezoid accumulator I_n
    noise_vec = sys.y0.copy()            # exp(A22 t_n) y0
    g_prev = sys.a21 @ x                 # integrand value at t_n

    def rhs(x_val, mem_val, noise_val):
        return sys.a11 @ x_val + sys.a12 @ mem_val + sys.a12 @ noise_val

    ts = np.arange(n_steps + 1) * dt
    out = np.empty((n_steps + 1, n))
    out[0] = x
    for step in range(1, n_steps + 1):
        # predictor (Euler)
        f0 = rhs(x, mem, noise_vec)
        x_pred = x + dt * f0
        # corrector ingredients at t_{n+1}
        g_pred = sys.a21 @ x_pred
        mem_next = e_dt @ mem + 0.5 * dt * (g_pred + e_dt @ g_prev)
        noise_next = e_dt @ noise_vec
        f1 = rhs(x_pred, mem_next, noise_next)
        x = x + 0.5 * dt * (f0 + f1)
        # refresh the accumulator with the corrected endpoint
        g_new = sys.a21 @ x
        mem = e_dt @ mem + 0.5 * dt * (g_new + e_dt @ g_prev)
        g_prev = g_new
        noise_vec = noise_next
        if not np.all(np.isfinite(x)):
            raise InstabilityError(f"GLE solve non-finite at step {step}", step=step)
        out[step] = x
    return ts, out

"""Pseudo-spectral machinery for the 1D Kuramoto-Sivashinsky equation.

Real periodic fields are stored one-sided: ``coeffs[j]`` is the Fourier
coefficient at physical wavenumber ``k_j = 2*pi*j/L`` for ``j = 0..N/2``,
normalized so that ``coeffs[0]`` equals the field mean.  Reality of the
underlying field is then guaranteed by construction.

Time stepping uses an integrating-factor Runge-Kutta scheme: the stiff
linear multiplier ``k^2 - k^4`` is integrated exactly through its
exponential while the quadratic term is advanced explicitly.  The RK
tableau is Kutta's third-order method,

    c = (0, 1/2, 1)
    a21 = 1/2, a31 = -1, a32 = 2
    b = (1/6, 2/3, 1/6)

whose non-decreasing abscissae mean every integrating-factor exponential
that appears is a decaying one.  (Tableaus with decreasing abscissae need
``exp(+|k^2-k^4| dt)`` factors which overflow for fine grids.)

The quadratic product is dealiased with 3/2-rule zero padding.  The mode
at the Nyquist slot is treated as unresolved: it never participates in
the product and no derivative is applied to it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InstabilityError


@dataclass(frozen=True)
class DomainParams:
    """Periodic domain of length `length`, `n_modes` grid points, DNS step `dt`."""

    length: float
    n_modes: int
    dt: float

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError(f"domain length must be positive, got {self.length}")
        if self.n_modes < 4 or self.n_modes % 2 != 0:
            raise DomainError(f"n_modes must be an even integer >= 4, got {self.n_modes}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")

    @property
    def n_half(self) -> int:
        """Length of the one-sided coefficient array."""
        return self.n_modes // 2 + 1

    @property
    def fundamental(self) -> float:
        """Fundamental wavenumber 2*pi/L."""
        return 2.0 * np.pi / self.length

    def grid(self) -> np.ndarray:
        """Uniform collocation points x_i = i*L/N."""
        return np.arange(self.n_modes) * (self.length / self.n_modes)


def wavenumbers(domain: DomainParams) -> np.ndarray:
    """Physical wavenumbers k_j = 2*pi*j/L for the one-sided modes."""
    return domain.fundamental * np.arange(domain.n_half)


@dataclass
class SpectralField:
    """One-sided Fourier coefficients of a real periodic field."""

    coeffs: np.ndarray
    domain: DomainParams

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (self.domain.n_half,):
            raise DomainError(
                f"coefficient array has shape {c.shape}, expected ({self.domain.n_half},)"
            )
        if not np.all(np.isfinite(c.view(np.float64))):
            raise DomainError("non-finite spectral coefficients")
        if c[0].imag != 0.0:
            raise DomainError("mean mode must be real (imag(coeffs[0]) != 0)")
        self.coeffs = c


@dataclass
class PhysicalField:
    """Real field values on the uniform collocation grid."""

    values: np.ndarray
    domain: DomainParams

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.domain.n_modes,):
            raise DomainError(
                f"value array has shape {v.shape}, expected ({self.domain.n_modes},)"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite field values")
        self.values = v


def to_spectral(u: PhysicalField) -> SpectralField:
    """Forward transform, normalized so coeffs[0] = mean(u)."""
    return SpectralField(np.fft.rfft(u.values) / u.domain.n_modes, u.domain)


def to_physical(f: SpectralField) -> PhysicalField:
    """Inverse transform back to grid values (exactly real by construction)."""
    n = f.domain.n_modes
    return PhysicalField(np.fft.irfft(f.coeffs, n=n) * n, f.domain)


def eval_on_grid(coeffs: np.ndarray, n_points: int) -> np.ndarray:
    """Evaluate a one-sided spectrum on an arbitrary uniform grid.

    The Nyquist slot of the source spectrum is dropped, consistent with
    its unresolved treatment everywhere else.
    """
    return np.fft.irfft(coeffs[:-1], n=n_points) * n_points


class IfRk3Stepper:
    """Precomputed integrating-factor RK3 stepper for one domain and dt.

    ``cutoff`` restricts the evolved nonlinearity to modes |j| <= cutoff,
    which turns the stepper into the sharp-filtered macro-scale solver.
    ``forcing`` (a one-sided stress spectrum tau_hat) adds the closure
    injection term -(i k / 2) tau_hat, held fixed across the RK stages.
    """

    def __init__(self, domain: DomainParams, dt: float, cutoff: int | None = None):
        if not dt > 0:
            raise DomainError(f"dt must be positive, got {dt}")
        if cutoff is not None and not 0 < cutoff < domain.n_modes // 2:
            raise DomainError(f"cutoff {cutoff} outside (0, N/2)")
        self.domain = domain
        self.dt = dt
        self.cutoff = cutoff
        n = domain.n_modes
        self.n_half = domain.n_half
        # padded grid for the 3/2 rule; inputs are band-limited to N/2-1
        self.n_pad = 3 * n // 2
        k = wavenumbers(domain)
        self.k = k
        lam = k**2 - k**4
        self.lam = lam
        self.exp_full = np.exp(lam * dt)
        self.exp_half = np.exp(lam * dt / 2.0)
        nlfac = (-0.5j * k) * self.n_pad
        nlfac[-1] = 0.0
        inj = -0.5j * k
        inj[-1] = 0.0
        if cutoff is not None:
            nlfac[cutoff + 1:] = 0.0
            inj[cutoff + 1:] = 0.0
        self._nlfac = nlfac
        self._inj = inj

    def _quad(self, c: np.ndarray) -> np.ndarray:
        # -(ik/2) (u*u)_k with 3/2-rule padding; c[:-1] drops the Nyquist slot
        u = np.fft.irfft(c[:-1], n=self.n_pad)
        return self._nlfac * np.fft.rfft(u * u)[: self.n_half]

    def rhs(self, c: np.ndarray, tau_hat: np.ndarray | None = None,
            nonlinear: bool = True) -> np.ndarray:
        """Right-hand side (k^2-k^4) u_k - (ik/2)(u*u)_k - (ik/2) tau_k."""
        out = self.lam * c
        if nonlinear:
            out = out + self._quad(c)
        if tau_hat is not None:
            out = out + self._inj * tau_hat
        return out

    def step(self, c: np.ndarray, tau_hat: np.ndarray | None = None,
             nonlinear: bool = True) -> np.ndarray:
        """Advance one step of the integrating-factor RK3 scheme."""
        dt = self.dt
        e1, eh = self.exp_full, self.exp_half
        if not nonlinear:
            if tau_hat is None:
                return e1 * c
            inj = self._inj * tau_hat
            k1 = inj
            u2 = eh * (c + (0.5 * dt) * k1)
            k2 = inj
            u3 = e1 * c + dt * (-(e1 * k1) + 2.0 * (eh * k2))
            k3 = inj
            return e1 * c + dt * ((e1 * k1) / 6.0 + (2.0 / 3.0) * (eh * k2) + k3 / 6.0)
        if tau_hat is None:
            k1 = self._quad(c)
            u2 = eh * (c + (0.5 * dt) * k1)
            k2 = self._quad(u2)
            u3 = e1 * c + dt * (-(e1 * k1) + 2.0 * (eh * k2))
            k3 = self._quad(u3)
        else:
            inj = self._inj * tau_hat
            k1 = self._quad(c) + inj
            u2 = eh * (c + (0.5 * dt) * k1)
            k2 = self._quad(u2) + inj
            u3 = e1 * c + dt * (-(e1 * k1) + 2.0 * (eh * k2))
            k3 = self._quad(u3) + inj
        return e1 * c + dt * ((e1 * k1) / 6.0 + (2.0 / 3.0) * (eh * k2) + k3 / 6.0)


def ks_rhs(f: SpectralField, nonlinear: bool = True) -> SpectralField:
    """K-S right-hand side du_k/dt = (k^2-k^4) u_k - (ik/2)(u*u)_k.

    The quadratic term is dealiased by 3/2-rule zero padding and is exact
    for all retained modes; `nonlinear=False` suppresses it (diagnostic).
    """
    stepper = IfRk3Stepper(f.domain, f.domain.dt)
    return SpectralField(stepper.rhs(f.coeffs, nonlinear=nonlinear), f.domain)


def step_if_rk3(f: SpectralField, dt: float, nonlinear: bool = True) -> SpectralField:
    """One integrating-factor RK3 step of size dt."""
    stepper = IfRk3Stepper(f.domain, dt)
    out = stepper.step(f.coeffs, nonlinear=nonlinear)
    if not np.all(np.isfinite(out.view(np.float64))):
        raise InstabilityError("non-finite state after one step", step=1)
    return SpectralField(out, f.domain)


@dataclass
class Trajectory:
    """Time-ordered spectral states saved at a fixed stride."""

    coeffs: np.ndarray          # (n_frames, N//2 + 1) complex
    domain: DomainParams
    frame_dt: float             # time between saved frames

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 2 or c.shape[1] != self.domain.n_half:
            raise DomainError(f"trajectory array has shape {c.shape}")
        self.coeffs = c

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.coeffs[i].copy(), self.domain)

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_dt


def default_initial_condition(domain: DomainParams, seed: int) -> PhysicalField:
    """Random zero-mean superposition of the four longest-wavelength modes.

    Real and imaginary parts are drawn uniformly from [-0.6, 0.6] with a
    seeded generator; the mean mode stays zero so that it is conserved
    exactly along the flow.
    """
    rng = np.random.default_rng(seed)
    c = np.zeros(domain.n_half, dtype=np.complex128)
    n_seed = min(4, domain.n_modes // 2 - 1)
    c[1:1 + n_seed] = (rng.uniform(-0.6, 0.6, n_seed)
                       + 1j * rng.uniform(-0.6, 0.6, n_seed))
    return to_physical(SpectralField(c, domain))


def dns_frames(c0: np.ndarray, stepper: IfRk3Stepper, n_steps: int, save_stride: int):
    """Yield (step_index, coefficients) for the saved frames of a DNS run.

    The initial state is frame 0.  Saved states are copies; non-finite
    frames raise InstabilityError with the offending step index.
    """
    c = c0.copy()
    c[-1] = 0.0  # Nyquist treated as unresolved
    yield 0, c.copy()
    for step in range(1, n_steps + 1):
        c = stepper.step(c)
        if step % save_stride == 0:
            if not np.all(np.isfinite(c.view(np.float64))):
                raise InstabilityError(f"DNS state non-finite at step {step}", step=step)
            yield step, c.copy()


def simulate_dns(g: PhysicalField, params: DomainParams, total_time: float,
                 save_stride: int, transient_time: float = 0.0) -> Trajectory:
    """Integrate the K-S equation and save every `save_stride` steps.

    `transient_time` is integrated and discarded before frame 0 is
    recorded.  Deterministic for identical inputs.
    """
    if not total_time > 0:
        raise DomainError(f"total_time must be positive, got {total_time}")
    if save_stride < 1:
        raise DomainError(f"save_stride must be >= 1, got {save_stride}")
    n_steps = round(total_time / params.dt)
    if abs(n_steps * params.dt - total_time) > 1e-9 * max(1.0, total_time):
        raise DomainError(f"total_time {total_time} is not a multiple of dt {params.dt}")
    if n_steps % save_stride != 0:
        raise DomainError(f"save_stride {save_stride} does not divide {n_steps} steps")
    stepper = IfRk3Stepper(params, params.dt)
    c = to_spectral(g).coeffs.copy()
    c[-1] = 0.0
    n_transient = round(transient_time / params.dt)
    for step in range(n_transient):
        c = stepper.step(c)
    if n_transient and not np.all(np.isfinite(c.view(np.float64))):
        raise InstabilityError("DNS state non-finite after transient", step=n_transient)
    frames = np.empty((n_steps // save_stride + 1, params.n_half), dtype=np.complex128)
    for i, (_, state) in enumerate(dns_frames(c, stepper, n_steps, save_stride)):
        frames[i] = state
    return Trajectory(frames, params, save_stride * params.dt)

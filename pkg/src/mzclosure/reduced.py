"""Macro-scale K-S solver with pluggable subgrid closures.

The reduced state keeps modes |j| <= K on an M-point grid and is
advanced by the same integrating-factor RK3 stepper as the full DNS,
with the closure stress injected as -(ik/2) tau_hat and held frozen
across the RK stages of each macro step.  Closures see the rolling
physical-space strain history; the first `window` entries of any run
come from ground truth ("warm-up"), after which the model feeds on its
own strains.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InstabilityError
from .filtering import strain
from .lstm import init_state, step_forward
from .model import StressModel
from .spectral import DomainParams, IfRk3Stepper, SpectralField, Trajectory


def smagorinsky_stress_1d(strain_values: np.ndarray, cs: float,
                          delta: float) -> np.ndarray:
    """Eddy-viscosity stress tau = -2 nu_t S with nu_t = (cs*delta)^2 sqrt(2) |S|."""
    if cs <= 0 or delta <= 0:
        raise DomainError("smagorinsky constants must be positive")
    nu_t = (cs * delta) ** 2 * np.sqrt(2.0) * np.abs(strain_values)
    return -2.0 * nu_t * strain_values


def macro_rhs(u_bar: SpectralField, tau_hat: np.ndarray, cutoff: int) -> SpectralField:
    """Reduced right-hand side: filtered K-S RHS plus stress injection.

    rhs_k = (k^2-k^4) u_k - (ik/2) (u*u)_k - (ik/2) tau_k  for |k| <= cutoff.
    """
    if tau_hat.shape != u_bar.coeffs.shape:
        raise DomainError(
            f"tau_hat shape {tau_hat.shape} != field shape {u_bar.coeffs.shape}")
    stepper = IfRk3Stepper(u_bar.domain, u_bar.domain.dt, cutoff=cutoff)
    return SpectralField(stepper.rhs(u_bar.coeffs, tau_hat=tau_hat), u_bar.domain)


@dataclass(frozen=True)
class ClosureSpec:
    """Which closure to run: learned(checkpoint) | smagorinsky | zero."""

    kind: str
    checkpoint: str | None = None
    mode: str | None = None        # learned only: "window" | "recurrent"
    cs: float = 0.17
    delta: float | None = None     # defaults to L / M

    def __post_init__(self):
        if self.kind not in ("learned", "smagorinsky", "zero"):
            raise DomainError(f"unknown closure kind {self.kind!r}")
        if self.kind == "learned" and self.checkpoint is None:
            raise DomainError("learned closure requires a checkpoint path")


class ZeroClosure:
    """No subgrid stress; the plain sharp-truncated system."""

    window = 0

    def reset(self, warmup_strains):
        pass

    def stress_for_step(self, strain_now):
        return None


class SmagorinskyClosure:
    """Instantaneous eddy-viscosity stress from the current strain."""

    window = 0

    def __init__(self, cs: float, delta: float):
        self.cs = cs
        self.delta = delta

    def reset(self, warmup_strains):
        pass

    def stress_for_step(self, strain_now):
        return smagorinsky_stress_1d(strain_now, self.cs, self.delta)


class WindowClosure:
    """Stateless re-evaluation over the trailing strain window.

    Matches the direct-training convention: the stress applied over
    [t, t+dt_r) is predicted from the window ending at t.
    """

    def __init__(self, model: StressModel):
        self.model = model
        self.window = model.window
        self._hist = None

    def reset(self, warmup_strains):
        if len(warmup_strains) < self.window - 1:
            raise DomainError(
                f"need at least {self.window - 1} warm-up strains, "
                f"got {len(warmup_strains)}")
        self._hist = deque(list(warmup_strains), maxlen=self.window)

    def stress_for_step(self, strain_now):
        if self._hist is None:
            raise DomainError("closure used before reset()")
        self._hist.append(strain_now)
        stacked = np.stack(self._hist)
        if stacked.shape[0] < self.window:
            raise DomainError("strain history shorter than the model window")
        return self.model.predict_windows(stacked)


class RecurrentClosure:
    """Persistent-state closure matching the coupled-training protocol.

    The warm-up strains are run through the cells once; thereafter each
    call consumes the current strain and returns the stress predicted by
    the previous call (the one-exchange-per-step structure of the
    coupled system).
    """

    def __init__(self, model: StressModel):
        self.model = model
        self.window = model.window
        self._state = None
        self._pending = None

    def reset(self, warmup_strains):
        if len(warmup_strains) < 1:
            raise DomainError("recurrent closure needs at least one warm-up strain")
        self._state = init_state(self.model.params, batch_size=1)
        for s in warmup_strains:
            self._advance(s)

    def _advance(self, strain_now):
        x = self.model.norm.norm_strain(strain_now)[None, :]
        y, self._state, _ = step_forward(self.model.params, x, self._state)
        self._pending = self.model.norm.denorm_stress(y[0])

    def stress_for_step(self, strain_now):
        if self._state is None:
            raise DomainError("closure used before reset()")
        out = self._pending
        self._advance(strain_now)
        return out


def build_closure(spec: ClosureSpec, macro_grid: int, length: float,
                  model: StressModel | None = None):
    """Instantiate a closure object, validating grid compatibility."""
    if spec.kind == "zero":
        return ZeroClosure()
    if spec.kind == "smagorinsky":
        delta = spec.delta if spec.delta is not None else length / macro_grid
        return SmagorinskyClosure(spec.cs, delta)
    if model is None:
        model, _, _ = StressModel.load(spec.checkpoint)
    if model.macro_grid != macro_grid:
        raise DomainError(
            f"checkpoint macro grid {model.macro_grid} != requested {macro_grid}")
    mode = spec.mode or model.closure_mode
    return WindowClosure(model) if mode == "window" else RecurrentClosure(model)


def simulate_reduced(u0: SpectralField, warmup_strains, closure,
                     total_time: float, dt_r: float, cutoff: int,
                     save_stride: int = 1, substeps: int = 1):
    """Run the reduced model.  Returns (trajectory, applied_stresses).

    `closure` is a closure object (see build_closure).  The stress is
    refreshed once per macro step dt_r and held during the RK stages; the
    recorded stress row i is the stress applied when leaving frame i
    (zero-filled where none was computed).
    """
    if dt_r <= 0 or total_time <= 0:
        raise DomainError("total_time and dt_r must be positive")
    n_steps = round(total_time / dt_r)
    if abs(n_steps * dt_r - total_time) > 1e-9 * max(1.0, total_time):
        raise DomainError(f"total_time {total_time} is not a multiple of dt_r {dt_r}")
    if n_steps % save_stride != 0:
        raise DomainError(f"save_stride {save_stride} does not divide {n_steps} steps")
    dom = u0.domain
    m = dom.n_modes
    if np.any(u0.coeffs[cutoff + 1:] != 0):
        raise DomainError("initial state carries modes above the cutoff")
    stepper = IfRk3Stepper(dom, dt_r / substeps, cutoff=cutoff)
    closure.reset(warmup_strains)
    c = u0.coeffs.copy()
    n_frames = n_steps // save_stride + 1
    frames = np.empty((n_frames, dom.n_half), dtype=np.complex128)
    stresses = np.zeros((n_frames, m))
    frames[0] = c
    for step in range(n_steps):
        s_now = strain(SpectralField(c, dom))
        tau = closure.stress_for_step(s_now)
        if tau is None:
            tau_hat = None
        else:
            if tau.shape != (m,):
                raise DomainError(f"closure returned shape {tau.shape}, "
                                  f"expected ({m},)")
            tau_hat = np.fft.rfft(tau) / m
            tau_hat[cutoff + 1:] = 0.0
            if step % save_stride == 0:
                stresses[step // save_stride] = tau
        for _ in range(substeps):
            c = stepper.step(c, tau_hat=tau_hat)
        if not np.all(np.isfinite(c.view(np.float64))):
            raise InstabilityError(
                f"reduced model blew up at macro step {step + 1}", step=step + 1)
        if (step + 1) % save_stride == 0:
            frames[(step + 1) // save_stride] = c
    return Trajectory(frames, dom, dt_r * save_stride), stresses

"""Trained stress model: LSTM parameters plus the context needed to use them.

The network maps normalized strain histories to a normalized stress
prediction; normalization constants are scalar (one per quantity, not
per grid location) so the model stays translation equivariant, and they
travel with the checkpoint.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .filtering import Dataset
from .lstm import (
    AdamState,
    LstmParams,
    checkpoint_read,
    checkpoint_write,
    lstm_forward,
)

CLOSURE_MODES = ("window", "recurrent")


@dataclass(frozen=True)
class NormStats:
    """Scalar standardization constants estimated on the training split."""

    strain_mean: float
    strain_std: float
    stress_mean: float
    stress_std: float

    @classmethod
    def from_dataset(cls, d: Dataset) -> "NormStats":
        tr_strain = d.strain[: d.split_index]
        tr_stress = d.stress[: d.split_index]
        return cls(float(tr_strain.mean()), max(float(tr_strain.std()), 1e-300),
                   float(tr_stress.mean()), max(float(tr_stress.std()), 1e-300))

    def norm_strain(self, s):
        return (s - self.strain_mean) / self.strain_std

    def norm_stress(self, t):
        return (t - self.stress_mean) / self.stress_std

    def denorm_stress(self, y):
        return y * self.stress_std + self.stress_mean


@dataclass
class StressModel:
    """LSTM stress closure with its window, normalization, and grid context."""

    params: LstmParams
    window: int
    norm: NormStats
    cutoff: int
    macro_grid: int
    length: float
    macro_dt: float
    trained_by: str = "direct"
    closure_mode: str = "window"

    def __post_init__(self):
        if self.closure_mode not in CLOSURE_MODES:
            raise DomainError(f"closure_mode must be one of {CLOSURE_MODES}")
        if self.params.input_size != self.macro_grid:
            raise DomainError(
                f"model input size {self.params.input_size} != macro grid "
                f"{self.macro_grid}")

    def predict_windows(self, strain_windows: np.ndarray) -> np.ndarray:
        """Physical stress predictions for strain windows.

        `strain_windows` is (window, M) or (window, batch, M); the output
        is the final-step prediction, (M,) or (batch, M).
        """
        if strain_windows.shape[0] != self.window:
            raise DomainError(
                f"window length {strain_windows.shape[0]} != model window "
                f"{self.window}")
        xs = self.norm.norm_strain(strain_windows)
        ys, _, _ = lstm_forward(self.params, xs)
        return self.norm.denorm_stress(ys[-1])

    def with_params(self, params: LstmParams) -> "StressModel":
        return replace(self, params=params)

    def save(self, path, opt: AdamState | None = None, extra_meta: dict | None = None):
        meta = {
            "window": self.window,
            "cutoff": self.cutoff,
            "macro_grid": self.macro_grid,
            "length": self.length,
            "macro_dt": self.macro_dt,
            "trained_by": self.trained_by,
            "closure_mode": self.closure_mode,
            "norm": {
                "strain_mean": self.norm.strain_mean,
                "strain_std": self.norm.strain_std,
                "stress_mean": self.norm.stress_mean,
                "stress_std": self.norm.stress_std,
            },
        }
        if extra_meta:
            meta.update(extra_meta)
        checkpoint_write(path, self.params, opt, meta)

    @classmethod
    def load(cls, path):
        """Returns (model, opt_or_None, meta)."""
        params, opt, meta = checkpoint_read(path)
        if meta is None or "norm" not in meta:
            raise DomainError(
                "checkpoint carries no stress-model metadata; was it written "
                "by a training run?")
        norm = NormStats(**meta["norm"])
        model = cls(params, meta["window"], norm, meta["cutoff"],
                    meta["macro_grid"], meta["length"], meta["macro_dt"],
                    meta.get("trained_by", "direct"),
                    meta.get("closure_mode", "window"))
        return model, opt, meta

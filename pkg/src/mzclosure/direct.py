"""Direct training: fit the subgrid stress from trailing strain windows.

The network sees the last `window` strain vectors and its final-step
output is trained against the stress at the window end with a plain
squared-error loss.  Strain and stress are standardized by scalar
training-split statistics.  Errors are reported as pooled relative
errors ||pred - true|| / ||true|| on the physical (unnormalized)
quantities, falling back to absolute RMS (flagged) when the reference
is identically zero.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TrainingError
from .filtering import Dataset
from .lstm import adam_init, adam_update, bptt_from_tape, init_params, lstm_forward
from .model import NormStats, StressModel


@dataclass(frozen=True)
class DirectTrainConfig:
    window: int = 20
    batch_size: int = 64
    iterations: int = 200_000
    hidden_sizes: tuple = (64, 64)
    learning_rate: float = 1e-3
    eval_every: int = 500
    eval_windows: int = 512
    seed: int = 0
    forget_mode: str = "one_minus"

    def __post_init__(self):
        if self.window < 1 or self.batch_size < 1 or self.iterations < 1:
            raise DomainError("window, batch_size, iterations must all be >= 1")


def make_window_batch(d: Dataset, indices, window: int):
    """Strain windows ending at `indices` plus the stresses there.

    Returns (inputs, targets) with inputs (window, batch, M) time-major:
    step t of window i holds the strain at sample index
    ``indices[i] - window + 1 + t``.
    """
    indices = np.asarray(indices)
    if np.any(indices < window - 1) or np.any(indices >= d.n_samples):
        raise DomainError("window extends past the start (or end) of the dataset")
    offsets = np.arange(-(window - 1), 1)
    gather = indices[None, :] + offsets[:, None]          # (window, batch)
    return d.strain[gather], d.stress[indices]


def pooled_relative_error(pred: np.ndarray, true: np.ndarray):
    """Frobenius relative error with an absolute-RMS fallback.

    Returns (error, is_absolute); is_absolute flags a zero-norm
    reference, in which case the value is the RMS of the prediction
    error itself.
    """
    ref = np.linalg.norm(true.ravel())
    diff = np.linalg.norm((pred - true).ravel())
    if ref == 0.0:
        return diff / np.sqrt(true.size), True
    return diff / ref, False


def train_test_eval_indices(d: Dataset, window: int, n_eval: int):
    """Fixed, evenly spaced window end-indices for the two splits."""
    train_lo, train_hi = window - 1, d.split_index - 1
    test_lo, test_hi = d.split_index + window - 1, d.n_samples - 1
    if train_hi < train_lo:
        raise DomainError("train split too small for the window length")
    if test_hi < test_lo:
        raise DomainError("test split too small for the window length")

    def spaced(lo, hi):
        count = min(n_eval, hi - lo + 1)
        return np.unique(np.linspace(lo, hi, count).round().astype(int))

    return spaced(train_lo, train_hi), spaced(test_lo, test_hi)


def _eval_error(model: StressModel, d: Dataset, indices, chunk=1024):
    preds = []
    trues = []
    for lo in range(0, indices.size, chunk):
        idx = indices[lo: lo + chunk]
        x, y = make_window_batch(d, idx, model.window)
        preds.append(model.predict_windows(x))
        trues.append(y)
    return pooled_relative_error(np.concatenate(preds), np.concatenate(trues))


def train_direct(d: Dataset, cfg: DirectTrainConfig, log=None):
    """Minimize squared stress error over random train windows with Adam.

    Returns (model, history); history rows are
    (iteration, train_err, test_err, errors_are_absolute).
    """
    w = cfg.window
    n_train_windows = d.split_index - w + 1
    if n_train_windows < cfg.batch_size:
        raise DomainError(
            f"train split supplies {n_train_windows} windows, fewer than one "
            f"batch of {cfg.batch_size}")
    if d.length is None:
        raise DomainError("dataset must carry its domain length")
    ss = np.random.SeedSequence(cfg.seed)
    init_seed, batch_seed = ss.spawn(2)
    m = d.filter.macro_grid
    params = init_params(m, list(cfg.hidden_sizes), m, init_seed,
                         forget_mode=cfg.forget_mode)
    opt = adam_init(params, alpha=cfg.learning_rate)
    norm = NormStats.from_dataset(d)
    model = StressModel(params, w, norm, d.filter.cutoff, m, d.length,
                        d.macro_dt, trained_by="direct", closure_mode="window")
    rng = np.random.default_rng(batch_seed)
    eval_train, eval_test = train_test_eval_indices(d, w, cfg.eval_windows)
    history = []

    def record(it):
        tr, tr_abs = _eval_error(model.with_params(params), d, eval_train)
        te, te_abs = _eval_error(model.with_params(params), d, eval_test)
        history.append((it, tr, te, tr_abs or te_abs))
        if log is not None:
            log(f"iter {it:>8d}  train_rel_err {tr:.5f}  test_rel_err {te:.5f}")

    for it in range(1, cfg.iterations + 1):
        idx = rng.integers(w - 1, d.split_index, size=cfg.batch_size)
        x, y = make_window_batch(d, idx, w)
        xs = norm.norm_strain(x)
        target = norm.norm_stress(y)
        ys, _, tape = lstm_forward(params, xs)
        resid = ys[-1] - target
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at iteration {it}", iteration=it)
        dys = np.zeros_like(ys)
        dys[-1] = (2.0 / resid.size) * resid
        grads, _, _ = bptt_from_tape(params, tape, dys)
        params, opt = adam_update(params, grads, opt)
        if it == 1 or it % cfg.eval_every == 0 or it == cfg.iterations:
            record(it)
    return model.with_params(params), history


@dataclass
class AprioriReport:
    """Per-grid-location test metrics for a stress model."""

    rel_err: np.ndarray        # (M,)
    correlation: np.ndarray    # (M,), NaN where the truth has no variance
    n_windows: int

    @property
    def median_correlation(self) -> float:
        finite = self.correlation[np.isfinite(self.correlation)]
        return float(np.median(finite)) if finite.size else float("nan")


def evaluate_apriori(model, d: Dataset, chunk=1024) -> AprioriReport:
    """Per-location relative error and Pearson correlation on the test split.

    `model` needs predict_windows and a window attribute; truth locations
    with zero variance get a NaN correlation sentinel.
    """
    w = model.window
    lo, hi = d.split_index + w - 1, d.n_samples - 1
    if hi < lo:
        raise DomainError("test split too small for the window length")
    indices = np.arange(lo, hi + 1)
    preds = np.empty((indices.size, d.filter.macro_grid))
    for start in range(0, indices.size, chunk):
        idx = indices[start: start + chunk]
        x, _ = make_window_batch(d, idx, w)
        preds[start: start + idx.size] = model.predict_windows(x)
    true = d.stress[indices]
    diff = preds - true
    ref = np.linalg.norm(true, axis=0)
    ref_safe = np.where(ref == 0.0, 1.0, ref)
    rel = np.linalg.norm(diff, axis=0) / ref_safe
    rel[ref == 0.0] = np.nan
    pc = true - true.mean(axis=0)
    qc = preds - preds.mean(axis=0)
    denom = np.sqrt((pc * pc).sum(axis=0) * (qc * qc).sum(axis=0))
    corr = np.full(d.filter.macro_grid, np.nan)
    ok = denom > 0
    corr[ok] = (pc * qc).sum(axis=0)[ok] / denom[ok]
    return AprioriReport(rel, corr, indices.size)

"""Sharp spectral filtering, subgrid stress extraction, and dataset files.

The macro-scale state keeps Fourier modes |j| <= K of the full solution
and is represented physically on an oversampled grid of M points
(M >= 2K+1, here typically 4K) so that quadratic products formed on it
are alias-free.  The subgrid stress is

    tau = filter(u u) - ubar ubar,

computed in mode space with exact (sufficiently padded) products, then
evaluated on the macro grid.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _binio
from .errors import DomainError, FileFormatError
from .spectral import DomainParams, SpectralField, Trajectory, wavenumbers


@dataclass(frozen=True)
class FilterSpec:
    """Sharp filter keeping modes |j| <= cutoff, macro grid of `macro_grid` points."""

    cutoff: int
    macro_grid: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise DomainError(f"filter cutoff must be >= 1, got {self.cutoff}")
        if self.macro_grid % 2 != 0 or self.macro_grid < 2 * self.cutoff + 1:
            raise DomainError(
                f"macro_grid must be even and >= 2*cutoff+1, got {self.macro_grid}")


@dataclass
class StressSample:
    """One macro frame: physical strain and stress plus its frame index."""

    strain: np.ndarray
    stress: np.ndarray
    time_index: int


def _even_at_least(n):
    return n + (n % 2)


def _product_coeffs(coeffs, n_keep):
    """Exact Fourier coefficients 0..n_keep of the square of a field.

    Every entry of `coeffs` is a live mode (no Nyquist slot); the
    evaluation grid is padded far enough that no aliasing reaches the
    kept modes.
    """
    n_max = coeffs.shape[0] - 1  # highest participating mode
    pad = _even_at_least(2 * n_max + n_keep + 2)
    u = np.fft.irfft(coeffs, n=pad)
    return np.fft.rfft(u * u)[: n_keep + 1] * pad


def sharp_filter(f: SpectralField, spec: FilterSpec) -> SpectralField:
    """Project onto modes |j| <= cutoff, represented on the macro domain."""
    if spec.cutoff >= f.domain.n_modes // 2:
        raise DomainError(
            f"cutoff {spec.cutoff} must be < N/2 = {f.domain.n_modes // 2}")
    macro = DomainParams(f.domain.length, spec.macro_grid, f.domain.dt)
    out = np.zeros(macro.n_half, dtype=np.complex128)
    out[: spec.cutoff + 1] = f.coeffs[: spec.cutoff + 1]
    return SpectralField(out, macro)


def subgrid_stress_spectral(full: SpectralField, spec: FilterSpec) -> np.ndarray:
    """Stress coefficients tau_hat_k for k = 0..cutoff.

    tau_hat_k = sum over p+q=k with |p|>K or |q|>K of u_p u_q, computed
    as filter(u u) - ubar ubar with exact padded products.
    """
    if spec.cutoff >= full.domain.n_modes // 2:
        raise DomainError(
            f"cutoff {spec.cutoff} must be < N/2 = {full.domain.n_modes // 2}")
    k = spec.cutoff
    conv_full = _product_coeffs(full.coeffs[:-1], k)  # Nyquist is unresolved
    conv_bar = _product_coeffs(full.coeffs[: k + 1], k)
    return conv_full - conv_bar


def subgrid_stress(full: SpectralField, spec: FilterSpec) -> np.ndarray:
    """Physical-space subgrid stress on the macro grid."""
    tau_hat = subgrid_stress_spectral(full, spec)
    return np.fft.irfft(tau_hat, n=spec.macro_grid) * spec.macro_grid


def strain(macro: SpectralField) -> np.ndarray:
    """Physical-space derivative d(u)/dx on the field's own grid.

    Computed spectrally as ik * u_k; the Nyquist slot carries no
    derivative.
    """
    d = 1j * wavenumbers(macro.domain) * macro.coeffs
    n = macro.domain.n_modes
    return np.fft.irfft(d[:-1], n=n) * n


def field_from_strain(strain_values: np.ndarray, spec: FilterSpec,
                      length: float) -> np.ndarray:
    """Recover macro one-sided coefficients from a physical strain vector.

    Valid for the zero-mean pipeline used throughout: the mean mode is
    conserved at zero by the flow, so u_k = s_k / (ik) for 1 <= k <= K
    determines the state completely.
    """
    m = strain_values.shape[-1]
    if m != spec.macro_grid:
        raise DomainError(f"strain vector has {m} points, expected {spec.macro_grid}")
    s_hat = np.fft.rfft(strain_values) / m
    k = 2 * np.pi / length * np.arange(1, spec.cutoff + 1)
    out = np.zeros(strain_values.shape[:-1] + (m // 2 + 1,), dtype=np.complex128)
    out[..., 1: spec.cutoff + 1] = s_hat[..., 1: spec.cutoff + 1] / (1j * k)
    return out


@dataclass
class Dataset:
    """Time-ordered (strain, stress) samples with a contiguous train/test split.

    Frames 0..split_index-1 are training data, the rest test data; the
    split is never shuffled so no temporal leakage crosses it.
    """

    strain: np.ndarray        # (F, M)
    stress: np.ndarray        # (F, M)
    time_index: np.ndarray    # (F,)
    macro_dt: float
    filter: FilterSpec
    split_index: int
    source_n: int
    length: float | None = None
    meta: dict | None = None

    def __post_init__(self):
        f, m = self.strain.shape
        if self.stress.shape != (f, m) or self.time_index.shape != (f,):
            raise DomainError("dataset arrays have inconsistent shapes")
        if m != self.filter.macro_grid:
            raise DomainError(
                f"sample width {m} does not match macro_grid {self.filter.macro_grid}")
        if not 0 <= self.split_index <= f:
            raise DomainError(f"split_index {self.split_index} out of range")
        if f > 1 and not np.all(np.diff(self.time_index) > 0):
            raise DomainError("time_index must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return self.strain.shape[0]

    def samples(self):
        for i in range(self.n_samples):
            yield StressSample(self.strain[i], self.stress[i], int(self.time_index[i]))

    def fields(self, indices) -> np.ndarray:
        """Macro spectral states reconstructed from the stored strains."""
        if self.length is None:
            raise DomainError("dataset carries no domain length; pass one explicitly")
        return field_from_strain(self.strain[indices], self.filter, self.length)


def default_split_index(n_frames: int) -> int:
    """Contiguous 10:1 train:test split."""
    return round(n_frames * 10 / 11)


def frame_to_sample(coeffs: np.ndarray, domain: DomainParams, spec: FilterSpec):
    """(strain, stress) physical vectors for one full-resolution frame."""
    f = SpectralField(coeffs, domain)
    bar = sharp_filter(f, spec)
    return strain(bar), subgrid_stress(f, spec)


def generate_dataset(traj: Trajectory, spec: FilterSpec,
                     split_index: int | None = None) -> Dataset:
    """Filter every trajectory frame into a (strain, stress) sample."""
    if traj.n_frames == 0:
        raise DomainError("empty trajectory")
    m = spec.macro_grid
    strains = np.empty((traj.n_frames, m))
    stresses = np.empty((traj.n_frames, m))
    for i in range(traj.n_frames):
        strains[i], stresses[i] = frame_to_sample(traj.coeffs[i], traj.domain, spec)
    if split_index is None:
        split_index = default_split_index(traj.n_frames)
    return Dataset(strains, stresses, np.arange(traj.n_frames, dtype=np.uint64),
                   traj.frame_dt, spec, split_index, traj.domain.n_modes,
                   length=traj.domain.length)


_HEADER = struct.Struct("<IIIIdQQ")  # version, N, K, M, macro_dt, count, split


class DatasetWriter:
    """Incremental writer for the dataset binary format.

    Layout: magic "MZC1", header, per-sample records
    [time_index u64 | strain M*f64 | stress M*f64], CRC32 trailer of the
    record bytes, then an optional provenance footer.
    """

    def __init__(self, path, spec: FilterSpec, macro_dt: float, sample_count: int,
                 split_index: int, source_n: int):
        self.spec = spec
        self.sample_count = sample_count
        self._written = 0
        self._fh = open(path, "wb")
        self._fh.write(_binio.DATASET_MAGIC)
        self._fh.write(_HEADER.pack(_binio.DATASET_VERSION, source_n, spec.cutoff,
                                    spec.macro_grid, macro_dt, sample_count,
                                    split_index))
        self._body = _binio.CrcWriter(self._fh)

    def append(self, time_index: int, strain_values: np.ndarray,
               stress_values: np.ndarray):
        if self._written >= self.sample_count:
            raise FileFormatError("more samples appended than declared in header")
        m = self.spec.macro_grid
        if strain_values.shape != (m,) or stress_values.shape != (m,):
            raise DomainError("sample width does not match header")
        self._body.write(struct.pack("<Q", time_index))
        self._body.write(np.ascontiguousarray(strain_values, dtype="<f8").tobytes())
        self._body.write(np.ascontiguousarray(stress_values, dtype="<f8").tobytes())
        self._written += 1

    def close(self, provenance: dict | None = None):
        if self._written != self.sample_count:
            raise FileFormatError(
                f"declared {self.sample_count} samples but wrote {self._written}")
        self._fh.write(struct.pack("<I", self._body.crc))
        if provenance is not None:
            _binio.write_footer(self._fh, provenance)
        self._fh.close()


def dataset_write(d: Dataset, path, provenance: dict | None = None):
    """Write a dataset; provenance (config echo/fingerprint) goes in the footer."""
    if provenance is None and d.length is not None:
        provenance = {"length": d.length}
    elif provenance is not None and d.length is not None:
        provenance = dict(provenance, length=d.length)
    w = DatasetWriter(path, d.filter, d.macro_dt, d.n_samples, d.split_index,
                      d.source_n)
    for i in range(d.n_samples):
        w.append(int(d.time_index[i]), d.strain[i], d.stress[i])
    w.close(provenance)


def dataset_read(path, length: float | None = None) -> Dataset:
    """Read a dataset file, validating magic, version, lengths and CRC."""
    with open(path, "rb") as fh:
        _binio.check_magic(fh, _binio.DATASET_MAGIC)
        hdr = _binio.read_exact(fh, _HEADER.size, "dataset header")
        version, source_n, cutoff, macro_grid, macro_dt, count, split = \
            _HEADER.unpack(hdr)
        if version != _binio.DATASET_VERSION:
            raise FileFormatError(
                f"unsupported dataset version {version}, expected "
                f"{_binio.DATASET_VERSION}")
        spec = FilterSpec(cutoff, macro_grid)
        body = _binio.CrcReader(fh)
        m = macro_grid
        rec = 8 + 16 * m
        strains = np.empty((count, m))
        stresses = np.empty((count, m))
        tidx = np.empty(count, dtype=np.uint64)
        for i in range(count):
            raw = body.read_exact(rec, f"sample {i}")
            (tidx[i],) = struct.unpack_from("<Q", raw)
            row = np.frombuffer(raw, dtype="<f8", count=2 * m, offset=8)
            strains[i] = row[:m]
            stresses[i] = row[m:]
        (crc,) = struct.unpack("<I", _binio.read_exact(fh, 4, "CRC trailer"))
        if crc != body.crc:
            raise FileFormatError(
                f"dataset body CRC mismatch: stored {crc:#010x}, "
                f"computed {body.crc:#010x}")
        meta = _binio.read_footer(fh)
    if length is None and meta is not None:
        length = meta.get("length")
    return Dataset(strains, stresses, tidx, macro_dt, spec, split,
                   source_n, length=length, meta=meta)

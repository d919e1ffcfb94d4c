"""Measurement series: even data from snapshots or raw samples, noise, CSV files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .solver import SnapshotSet


class AcquisitionError(ValueError):
    pass


class MissingSampleError(AcquisitionError):
    pass


@dataclass
class EvenDataSeries:
    """D_ev(j tau) for j = 0..2(M-1) at one slow time."""

    values: np.ndarray
    s: int = 0
    tau: float = 1.0
    M: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.M is None:
            if self.values.size % 2 == 0:
                raise AcquisitionError("an even series has an odd number 2M-1 of lags")
            self.M = (self.values.size + 1) // 2
        if self.values.size != 2 * self.M - 1:
            raise AcquisitionError(f"series has {self.values.size} lags, expected 2M-1 = {2 * self.M - 1}")

    def check_positive(self) -> None:
        if not self.values[0] > 0:
            raise AcquisitionError(f"slow time {self.s}: D_ev(0) = {self.values[0]:.6g} is not positive")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.tau


@dataclass
class RawDataSeries:
    """Samples of D(t) near t = 0 and near t = 2T.

    ``near[K + j] = D(j tau)`` and ``far[K + j] = D(2T + j tau)`` for
    ``-K <= j <= K``; NaN marks a sample that was not recorded.
    """

    near: np.ndarray
    far: np.ndarray
    tau: float
    T: float
    s: int = 0

    def __post_init__(self):
        self.near = np.asarray(self.near, float)
        self.far = np.asarray(self.far, float)
        if self.near.size % 2 == 0 or self.near.shape != self.far.shape:
            raise AcquisitionError("near and far sample arrays must have the same odd length 2K+1")

    @property
    def K(self) -> int:
        return (self.near.size - 1) // 2

    def _get(self, arr, j, what):
        k = self.K + j
        if not 0 <= k < arr.size or math.isnan(arr[k]):
            raise MissingSampleError(f"missing sample {what} at lag {j} (slow time {self.s})")
        return float(arr[k])

    def D(self, j: int) -> float:
        return self._get(self.near, j, "D(j tau)")

    def D2T(self, j: int) -> float:
        return self._get(self.far, j, "D(2T + j tau)")


def predicted_even_data(u0: np.ndarray, snaps: SnapshotSet, M: int | None = None, s: int = 0) -> EvenDataSeries:
    """<u0, u_ev(j tau)> for j = 0..2(M-1) from a solver run."""
    if np.shape(u0) != snaps.grid.shape:
        raise AcquisitionError(f"grid mismatch: u0 {np.shape(u0)} vs snapshots {snaps.grid.shape}")
    M = (snaps.J // 2) + 1 if M is None else M
    if snaps.J < 2 * (M - 1):
        raise AcquisitionError(f"snapshots recorded to {snaps.J}, need {2 * (M - 1)}")
    if snaps.snapshots is not None and snaps.indices == list(range(snaps.J + 1)):
        g = snaps.grid
        vals = np.array([g.inner(u0, snaps.snapshots[j]) for j in range(2 * M - 1)])
    else:
        vals = snaps.data[: 2 * M - 1].copy()
    return EvenDataSeries(vals, s, snaps.tau, M)


def even_from_raw(raw: RawDataSeries, M: int) -> EvenDataSeries:
    """D_ev(j) = (D(j) + D(-j)) / 2 + (D(2T + j) + D(2T - j)) / 4."""
    vals = np.array([0.5 * (raw.D(j) + raw.D(-j)) + 0.25 * (raw.D2T(j) + raw.D2T(-j))
                     for j in range(2 * M - 1)])
    return EvenDataSeries(vals, raw.s, raw.tau, M)


def gramian_from_raw(raw: RawDataSeries, M: int) -> np.ndarray:
    """Snapshot Gramian G[m, m+j] = (D(j) + D(-j)) / 2 + D(2T + 2m + j) / 2."""
    G = np.empty((M, M))
    for m in range(M):
        for j in range(M - m):
            v = 0.5 * (raw.D(j) + raw.D(-j)) + 0.5 * raw.D2T(2 * m + j)
            G[m, m + j] = G[m + j, m] = v
    return G


# --- noise -----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Stationary Gaussian noise with covariance sigma^2 exp(-(dt)^2 / ell_t^2).

    ``ell_t`` is in units of the Nyquist period T_Ny = pi / omega_o.  The
    amplitude is either given (``sigma``) or calibrated to ``snr`` = RMS
    signal / RMS noise over the noisy lags.  ``ell_x`` is carried for the
    aperture-field model only.
    """

    snr: float = math.inf
    ell_t: float = 0.7
    ell_x: float = 0.5
    sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sigma is not None and self.sigma < 0:
            raise AcquisitionError("noise amplitude must be non-negative")
        if not self.snr > 0:
            raise AcquisitionError("SNR must be positive")
        if not self.ell_t > 0:
            raise AcquisitionError("correlation time must be positive")

    @property
    def active(self) -> bool:
        return (self.sigma is not None and self.sigma > 0) or (self.sigma is None and math.isfinite(self.snr))


def nyquist_period(omega_o: float) -> float:
    return math.pi / omega_o


def noise_covariance(n: int, dt: float, ell: float, sigma: float = 1.0) -> np.ndarray:
    k = np.arange(n)
    c = sigma**2 * np.exp(-((k * dt) / ell) ** 2)
    return c[np.abs(k[:, None] - k[None, :])]


def noise_sequence(n: int, dt: float, ell: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Unit-variance stationary Gaussian samples by circulant embedding.

    Returns shape ``(n,)`` or ``(size, n)``.  The embedding length is grown
    until the circulant spectrum is non-negative up to round-off, which is
    then clipped.
    """
    m = max(2 * (n - 1), 2)
    while True:
        k = np.minimum(np.arange(m), m - np.arange(m))
        c = np.exp(-((k * dt) / ell) ** 2)
        lam = np.fft.fft(c).real
        if lam.min() >= -1e-10 * lam.max():
            break
        m *= 2
    lam = np.clip(lam, 0.0, None)
    shape = (1 if size is None else size, m)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = np.fft.fft(np.sqrt(lam / m) * z, axis=-1).real[:, :n]
    return y[0] if size is None else y


def slow_time_rng(seed: int, s: int) -> np.random.Generator:
    """Independent, reproducible stream per slow time."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(s)]))


def add_noise(series: EvenDataSeries, spec: NoiseSpec, omega_o: float = 2 * math.pi,
              rng: np.random.Generator | None = None) -> EvenDataSeries:
    """Add correlated noise to lags j >= 1.

    D_ev(0) = |u0|^2 is known analytically and stays exact.  The amplitude is
    spec.sigma if given, else RMS(signal over j >= 1) / spec.snr.
    """
    if not spec.active:
        return replace(series, values=series.values.copy(), meta=dict(series.meta))
    rng = slow_time_rng(spec.seed, series.s) if rng is None else rng
    v = series.values
    n = v.size - 1
    if n == 0:
        return replace(series, values=v.copy())
    sig = spec.sigma if spec.sigma is not None else float(np.sqrt(np.mean(v[1:] ** 2))) / spec.snr
    ell = spec.ell_t * nyquist_period(omega_o)
    noise = sig * noise_sequence(n, series.tau, ell, rng)
    out = v.copy()
    out[1:] += noise
    meta = dict(series.meta, noise_sigma=sig)
    return replace(series, values=out, meta=meta)


# --- files -----------------------------------------------------------------

def write_even_csv(path, series: EvenDataSeries, header: dict | None = None) -> None:
    """Columns j, t, value; ``# key=value`` header lines; 17 significant digits."""
    head = {"s": series.s, "tau": repr(float(series.tau)), "M": series.M}
    head.update(series.meta)
    head.update(header or {})
    with open(path, "w") as f:
        for k, v in head.items():
            f.write(f"# {k}={v}\n")
        f.write("j,t,value\n")
        for j, val in enumerate(series.values):
            f.write(f"{j},{j * series.tau:.17g},{val:.17g}\n")


def read_header(path) -> dict:
    head = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            k, _, v = line[1:].strip().partition("=")
            head[k.strip()] = v.strip()
    return head


def read_even_csv(path) -> EvenDataSeries:
    head = read_header(path)
    with open(path) as f:
        body = [ln for ln in f if ln.strip() and not ln.startswith("#") and not ln.startswith("j,")]
    vals = np.array([float(ln.split(",")[2]) for ln in body])
    meta = {k: v for k, v in head.items() if k not in ("s", "tau", "M")}
    return EvenDataSeries(vals, int(head.get("s", 0)), float(head.get("tau", 1.0)),
                          int(head["M"]) if "M" in head else None, meta)

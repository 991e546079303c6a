"""Time-series container, preprocessing, DFT and descriptive statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateScale,
    DegenerateSpectrum,
    DegenerateVariance,
    InvalidLag,
    InvalidLength,
)


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real-valued sequence.

    ``values`` is copied into a read-only float64 array on construction.
    ``t0_index`` is the time index of the first sample (1 by default, so the
    DFT exponent runs over t = 1..T).
    """

    values: np.ndarray
    label: str = ""
    t0_index: int = 1

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"series {self.label!r} contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, label=self.label, t0_index=self.t0_index)


@dataclass(frozen=True)
class DftTable:
    """DFT coefficients d(lambda_j), j = 0..T-1, on the Fourier grid 2*pi*j/T."""

    coefficients: np.ndarray
    length: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "length", c.shape[0])

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.length) / self.length

    def periodogram(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2


def _as_array(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


def difference(series: TimeSeries) -> TimeSeries:
    """First difference, ``out[t] = x[t+1] - x[t]``; length drops by one."""
    x = series.values
    if x.shape[0] < 2:
        raise InvalidLength(f"difference needs at least 2 points, got {x.shape[0]}")
    return series.with_values(np.diff(x))


def scale_to_initial(series: TimeSeries) -> TimeSeries:
    """Divide every value by the first one so the series starts at exactly 1."""
    x = series.values
    if x.shape[0] == 0 or x[0] == 0.0:
        raise DegenerateScale(f"series {series.label!r} cannot be scaled: first value is 0")
    out = x / x[0]
    out[0] = 1.0
    return series.with_values(out)


def dft(series) -> DftTable:
    """DFT with exponent index t = 1..T.

    ``d(lambda_j) = sum_{t=1}^{T} x_t exp(-i lambda_j t)``. This equals the
    usual zero-based FFT times the per-bin phase ``exp(-i lambda_j)``.
    """
    x = _as_array(series)
    n = x.shape[0]
    if n < 1:
        raise InvalidLength("dft of an empty series")
    lam = 2.0 * np.pi * np.arange(n) / n
    return DftTable(np.fft.fft(x) * np.exp(-1j * lam))


def autocovariance(series, max_lag: int) -> np.ndarray:
    """Biased (1/T) sample autocovariances for lags 0..max_lag."""
    x = _as_array(series)
    n = x.shape[0]
    if not 0 <= max_lag < n:
        raise InvalidLag(f"max_lag must satisfy 0 <= max_lag < {n}, got {max_lag}")
    xc = x - x.mean()
    return np.array([np.dot(xc[: n - h], xc[h:]) / n for h in range(max_lag + 1)])


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation ``gamma(h)/gamma(0)`` for lags 0..max_lag."""
    gamma = autocovariance(series, max_lag)
    if gamma[0] <= 0.0:
        raise DegenerateVariance("autocorrelation of a zero-variance series")
    out = gamma / gamma[0]
    out[0] = 1.0
    return out


def descriptive_stats(series: TimeSeries) -> dict[str, float]:
    """Mean return, volatility and lag-1 autocorrelation of a scaled price series.

    Returns are simple first differences of the (already scaled) series;
    volatility is their population standard deviation.
    """
    x = series.values
    if x.shape[0] < 3:
        raise InvalidLength("descriptive_stats needs at least 3 points")
    r = np.diff(x)
    return {
        "mean_return": float(np.mean(r)),
        "volatility": float(np.std(r)),
        "acf1": float(acf(r, 1)[1]),
    }


def dominant_period(series) -> float:
    """Period ``T / j*`` of the strongest periodogram bin among j = 1..T//2.

    Ties go to the smallest j. Returns a float because ``j*`` need not
    divide ``T``.
    """
    x = _as_array(series)
    n = x.shape[0]
    if n < 4:
        raise InvalidLength(f"dominant_period needs at least 4 points, got {n}")
    power = dft(x).periodogram()[1 : n // 2 + 1]
    # rounding residue of a constant input counts as a vanishing spectrum
    if power.max() <= 1e-20 * n * np.dot(x, x):
        raise DegenerateSpectrum("periodogram vanishes at every nonzero frequency")
    j_star = int(np.argmax(power)) + 1
    return n / j_star

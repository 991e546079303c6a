"""Spectral (k=1) and bispectral (k=2) means estimated from DFT products.

The estimator for order k is

    (2 pi)^k T^(-k-1) sum_j d(l_j1) ... d(l_jk) d(-(l_j1 + ... + l_jk)) g(l) Phi(j)

summed over all Fourier index tuples j in {0..T-1}^k, where Phi removes any
tuple having a non-empty subset whose index sum is 0 mod T. Weights are
evaluated on frequencies folded into (-pi, pi].
"""
from __future__ import annotations

import functools
import itertools
import math
import re
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import AsymmetryWarning, InvalidLength, OracleSizeError, WeightArityError
from .series import TimeSeries, dft

ORACLE_MAX_LENGTH = 256

_KIND_ORDER = {
    "unit": None,
    "band_indicator": 1,
    "triangular": 1,
    "cosine_1d": 1,
    "disc_indicator": 2,
    "radial": 2,
    "cosine_sum": 2,
    "cosine_product": 2,
}
_KIND_PARAMS = {
    "band_indicator": ("lo", "hi"),
    "disc_indicator": ("r",),
}


@dataclass(frozen=True)
class WeightFunction:
    """Declarative weight g for a spectral (order 1) or bispectral (order 2) mean.

    ``params`` holds the kind's numeric parameters in the order listed by
    :func:`param_names` (``band_indicator``: lo, hi; ``disc_indicator``: r).
    ``unit`` is the only kind available at both orders.
    """

    kind: str
    params: tuple[float, ...] = ()
    order: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        natural = _KIND_ORDER[self.kind]
        order = self.order or natural
        if order is None:
            raise ValueError("unit weight needs an explicit order (1 or 2)")
        if natural is not None and order != natural:
            raise WeightArityError(f"{self.kind} is an order-{natural} weight, not order {order}")
        if order not in (1, 2):
            raise WeightArityError(f"only orders 1 and 2 are supported, got {order}")
        params = tuple(float(p) for p in self.params)
        expected = len(param_names(self.kind))
        if len(params) != expected:
            raise ValueError(f"{self.kind} takes {expected} parameter(s), got {len(params)}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "order", order)

    @property
    def identifier(self) -> str:
        if not self.params:
            return self.kind if self.kind != "unit" else f"unit{self.order}"
        body = ", ".join(f"{n}: {v:.10g}" for n, v in zip(param_names(self.kind), self.params))
        return f"{self.kind}{{{body}}}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "params": dict(zip(param_names(self.kind), self.params)),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WeightFunction":
        kind = data["kind"]
        raw = data.get("params") or {}
        if isinstance(raw, dict):
            params = tuple(raw[n] for n in param_names(kind))
        else:
            params = tuple(raw)
        return cls(kind, params, int(data.get("order", 0)))

    @classmethod
    def parse(cls, text: str) -> "WeightFunction":
        """Parse ``kind`` or ``kind{name: value, ...}``, e.g. ``disc_indicator{r: 1.5708}``."""
        m = re.fullmatch(r"\s*([a-z_0-9]+)\s*(?:\{(.*)\})?\s*", text)
        if m is None:
            raise ValueError(f"cannot parse weight description {text!r}")
        kind, body = m.group(1), m.group(2)
        order = 0
        if kind in ("unit1", "unit2"):
            kind, order = "unit", int(kind[-1])
        values = {}
        if body and body.strip():
            for item in body.split(","):
                key, _, val = item.partition(":")
                values[key.strip()] = float(val)
        if "order" in values:
            order = int(values.pop("order"))
        return cls(kind, tuple(values[n] for n in param_names(kind)), order)

    def evaluate(self, *lams: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on folded frequency arrays (one per axis)."""
        if len(lams) != self.order:
            raise WeightArityError(f"{self.identifier} expects {self.order} frequencies")
        l1 = np.asarray(lams[0], dtype=np.float64)
        kind = self.kind
        if kind == "unit":
            return np.ones(np.broadcast(*lams).shape)
        if kind == "band_indicator":
            lo, hi = self.params
            a = np.abs(l1)
            inside = (a >= lo) & ((a < hi) | ((hi >= np.pi) & (a <= hi)))
            return inside.astype(np.float64)
        if kind == "triangular":
            return 1.0 - np.abs(l1) / np.pi
        if kind == "cosine_1d":
            return np.cos(l1)
        l2 = np.asarray(lams[1], dtype=np.float64)
        if kind == "disc_indicator":
            (r,) = self.params
            return (l1 ** 2 + l2 ** 2 < r ** 2).astype(np.float64)
        if kind == "radial":
            return np.sqrt(l1 ** 2 + l2 ** 2)
        if kind == "cosine_sum":
            return np.cos(l1 + l2)
        return np.cos(l1) * np.cos(l2)


@dataclass(frozen=True)
class LinearWeight:
    """Linear combination ``sum_i c_i g_i`` of same-order weights."""

    terms: tuple[tuple[float, WeightFunction], ...]

    def __post_init__(self):
        orders = {g.order for _, g in self.terms}
        if len(orders) != 1:
            raise WeightArityError("all terms of a linear weight must share one order")

    @property
    def order(self) -> int:
        return self.terms[0][1].order

    @property
    def identifier(self) -> str:
        return " + ".join(f"{c:.10g}*{g.identifier}" for c, g in self.terms)

    def evaluate(self, *lams):
        return sum(c * g.evaluate(*lams) for c, g in self.terms)


Weight = Union[WeightFunction, LinearWeight]


def param_names(kind: str) -> tuple[str, ...]:
    return _KIND_PARAMS.get(kind, ())


DEFAULT_WEIGHTS: dict[str, WeightFunction] = {
    "spec_band_lo": WeightFunction("band_indicator", (0.0, np.pi / 2)),
    "spec_band_hi": WeightFunction("band_indicator", (np.pi / 2, np.pi)),
    "spec_triangular": WeightFunction("triangular"),
    "spec_cosine": WeightFunction("cosine_1d"),
    "bispec_disc": WeightFunction("disc_indicator", (np.pi / 2,)),
    "bispec_radial": WeightFunction("radial"),
    "bispec_cosine_sum": WeightFunction("cosine_sum"),
    "bispec_cosine_product": WeightFunction("cosine_product"),
}


@dataclass(frozen=True)
class PolyspectralEstimate:
    value: float
    weight: str
    order: int
    raw_complex: complex
    series_label: str = ""


def fold_frequency(j: int, n: int) -> float:
    """Fourier frequency 2*pi*j/n mapped into (-pi, pi]."""
    j %= n
    if 2 * j > n:
        j -= n
    return 2.0 * math.pi * j / n


def phi_indicator(freq_indices: Sequence[int], n: int) -> bool:
    """True iff no non-empty subset of the indices sums to 0 mod ``n``."""
    idx = tuple(freq_indices)
    for m in range(1, len(idx) + 1):
        for subset in itertools.combinations(idx, m):
            if sum(subset) % n == 0:
                return False
    return True


def eval_weight(g: Weight, lam: Sequence[float]) -> float:
    """Scalar evaluation of a weight at one frequency tuple in [-pi, pi]^k."""
    lam = tuple(float(v) for v in lam)
    if len(lam) != g.order:
        raise WeightArityError(f"{g.identifier} expects {g.order} frequencies, got {len(lam)}")
    if isinstance(g, LinearWeight):
        return sum(c * eval_weight(w, lam) for c, w in g.terms)
    kind = g.kind
    if kind == "unit":
        return 1.0
    if kind == "band_indicator":
        lo, hi = g.params
        a = abs(lam[0])
        if a < lo:
            return 0.0
        return 1.0 if (a < hi or (hi >= math.pi and a <= hi)) else 0.0
    if kind == "triangular":
        return 1.0 - abs(lam[0]) / math.pi
    if kind == "cosine_1d":
        return math.cos(lam[0])
    l1, l2 = lam
    if kind == "disc_indicator":
        return 1.0 if l1 * l1 + l2 * l2 < g.params[0] ** 2 else 0.0
    if kind == "radial":
        return math.hypot(l1, l2)
    if kind == "cosine_sum":
        return math.cos(l1 + l2)
    return math.cos(l1) * math.cos(l2)


@functools.lru_cache(maxsize=32)
def _masked_weight_grid(g: Weight, n: int) -> np.ndarray:
    j = np.arange(n)
    folded = np.where(2 * j > n, j - n, j) * (2.0 * np.pi / n)
    if g.order == 1:
        grid = g.evaluate(folded).astype(np.float64)
        grid[0] = 0.0
    else:
        grid = np.asarray(g.evaluate(folded[:, None], folded[None, :]), dtype=np.float64)
        grid = np.broadcast_to(grid, (n, n)).copy()
        grid[0, :] = 0.0
        grid[:, 0] = 0.0
        grid[(j[:, None] + j[None, :]) % n == 0] = 0.0
    grid.setflags(write=False)
    return grid


def _product_table(d: np.ndarray, order: int) -> np.ndarray:
    if order == 1:
        return d * np.conj(d)
    n = d.shape[0]
    j = np.arange(n)
    return d[:, None] * d[None, :] * np.conj(d[(j[:, None] + j[None, :]) % n])


def _finish(raw: complex, g: Weight, label: str) -> PolyspectralEstimate:
    if abs(raw.imag) > 1e-6 * (1.0 + abs(raw)):
        warnings.warn(
            f"estimate for {g.identifier} on {label!r} has imaginary part {raw.imag:.3g}",
            AsymmetryWarning,
            stacklevel=3,
        )
    return PolyspectralEstimate(float(raw.real), g.identifier, g.order, raw, label)


def _check_length(n: int, order: int):
    if n < order + 2:
        raise InvalidLength(f"order-{order} mean needs at least {order + 2} points, got {n}")


def polyspectral_means(series: TimeSeries, weights: Iterable[Weight]) -> list[PolyspectralEstimate]:
    """Estimate several polyspectral means of one series, sharing the DFT table.

    Parameters
    ----------
    series : TimeSeries
        Input series, normally already differenced.
    weights : iterable of WeightFunction or LinearWeight
        Orders may be mixed; each order's product table is built once.

    Returns
    -------
    list of PolyspectralEstimate
        One estimate per weight, in input order.
    """
    weights = list(weights)
    x = series.values
    n = x.shape[0]
    for g in weights:
        _check_length(n, g.order)
    d = dft(x).coefficients
    tables: dict[int, np.ndarray] = {}
    out = []
    for g in weights:
        k = g.order
        if k not in tables:
            tables[k] = _product_table(d, k)
        total = np.sum(tables[k] * _masked_weight_grid(g, n))
        raw = complex(total) * (2.0 * np.pi) ** k / float(n) ** (k + 1)
        out.append(_finish(raw, g, series.label))
    return out


def polyspectral_mean(series: TimeSeries, g: Weight) -> PolyspectralEstimate:
    return polyspectral_means(series, [g])[0]


def brute_force_polyspectral_mean(series: TimeSeries, g: Weight) -> PolyspectralEstimate:
    """Reference estimator: direct summation with a fresh DFT for every factor.

    Meant for checking :func:`polyspectral_mean`; refuses series longer than
    256 points.
    """
    x = series.values
    n = x.shape[0]
    if n > ORACLE_MAX_LENGTH:
        raise OracleSizeError(f"oracle limited to T <= {ORACLE_MAX_LENGTH}, got {n}")
    k = g.order
    _check_length(n, k)
    t = np.arange(1, n + 1)

    def naive_dft(lam: float) -> complex:
        return complex(np.dot(x, np.exp(-1j * lam * t)))

    total = 0j
    for idx in itertools.product(range(n), repeat=k):
        if not phi_indicator(idx, n):
            continue
        lams = [2.0 * math.pi * j / n for j in idx]
        term = naive_dft(-sum(lams))
        for lam in lams:
            term *= naive_dft(lam)
        total += term * eval_weight(g, [fold_frequency(j, n) for j in idx])
    raw = total * (2.0 * math.pi) ** k / float(n) ** (k + 1)
    return _finish(complex(raw), g, series.label)


__all__ = [
    "DEFAULT_WEIGHTS",
    "LinearWeight",
    "PolyspectralEstimate",
    "WeightFunction",
    "brute_force_polyspectral_mean",
    "eval_weight",
    "fold_frequency",
    "phi_indicator",
    "polyspectral_mean",
    "polyspectral_means",
]

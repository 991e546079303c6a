"""Seeded generators for the three simulation scenarios.

Every emitted series draws from its own ``numpy`` generator derived from
``(seed, replication, group, index)`` via :class:`numpy.random.SeedSequence`,
so a series does not depend on how many other series are generated or in
which order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ScenarioError, UnstableModel
from .series import TimeSeries

BURN_IN = 200
MAX_REDRAWS = 10
GROUP_NAMES = ("A", "B", "C")


@dataclass(frozen=True)
class ArmaSpec:
    """ARMA(2,2) ``X_t = a1 X_{t-1} + a2 X_{t-2} + W_t + m1 W_{t-1} + m2 W_{t-2}``.

    ``ma`` holds the coefficients exactly as they enter the recursion, so the
    default ``(-0.2, -0.8)`` gives ``W_t - 0.2 W_{t-1} - 0.8 W_{t-2}``.
    """

    ar: tuple[float, float] = (0.1, 0.5)
    ma: tuple[float, float] = (-0.2, -0.8)
    noise_sd: float = 1.0
    burn_in: int = BURN_IN

    def __post_init__(self):
        # roots of 1 - a1 z - a2 z^2 must lie outside the unit circle
        poly = [-self.ar[1], -self.ar[0], 1.0]
        roots = np.roots(poly) if any(self.ar) else np.array([])
        if np.any(np.abs(roots) <= 1.0):
            raise UnstableModel(f"AR polynomial with coefficients {self.ar} is not stationary")

    def psi_weights(self, n: int) -> np.ndarray:
        """First ``n`` MA(infinity) weights of the process."""
        psi = np.zeros(n)
        psi[0] = 1.0
        for j in range(1, n):
            acc = self.ma[j - 1] if j <= len(self.ma) else 0.0
            for i, a in enumerate(self.ar, start=1):
                if j - i >= 0:
                    acc += a * psi[j - i]
            psi[j] = acc
        return psi

    def variance(self, n_terms: int = 2000) -> float:
        return float(self.noise_sd ** 2 * np.sum(self.psi_weights(n_terms) ** 2))


@dataclass(frozen=True)
class GarchSpec:
    """Scale recursion ``s_t = omega + alpha X_{t-1}^2 + beta s_{t-1}``, ``X_t = s_t W_t``.

    ``s_t`` multiplies the innovation directly (it is not a variance), and
    ``omega`` defaults to 0.
    """

    alpha: float = 0.2
    beta: float = 0.3
    omega: float = 0.0
    sigma0: float = 1.0
    noise_sd: float = 1.0
    burn_in: int = BURN_IN

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.omega < 0 or self.sigma0 < 0:
            raise UnstableModel("GARCH coefficients and sigma0 must be non-negative")
        if self.alpha + self.beta >= 1.0:
            raise UnstableModel(f"alpha + beta = {self.alpha + self.beta} must be below 1")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: int
    group_sizes: tuple[int, ...] = ()
    T: int = 100
    seed: int = 0
    arma: ArmaSpec = field(default_factory=ArmaSpec)
    garch: GarchSpec = field(default_factory=GarchSpec)
    eps_sd: float = 1.0

    def __post_init__(self):
        if self.scenario not in (1, 2, 3):
            raise ScenarioError(f"scenario must be 1, 2 or 3, got {self.scenario}")
        sizes = tuple(int(s) for s in self.group_sizes) or ((25, 25) if self.scenario < 3 else (20, 15, 15))
        expected = 3 if self.scenario == 3 else 2
        if len(sizes) != expected:
            raise ScenarioError(f"scenario {self.scenario} needs {expected} groups, got {len(sizes)}")
        if any(s < 1 for s in sizes):
            raise ScenarioError(f"group sizes must be positive, got {sizes}")
        if self.T < 4:
            raise ScenarioError(f"series length must be at least 4, got {self.T}")
        object.__setattr__(self, "group_sizes", sizes)


@dataclass(frozen=True)
class LabeledSeries:
    series: TimeSeries
    group: str


def series_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def gen_arma(spec: ArmaSpec, T: int, rng: np.random.Generator, label: str = "") -> TimeSeries:
    if T < 1:
        raise ValueError("T must be at least 1")
    w = rng.standard_normal(T + spec.burn_in) * spec.noise_sd
    b = [1.0, *spec.ma]
    a = [1.0, *(-c for c in spec.ar)]
    # lfilter starts from zero state: pre-sample X and W are 0
    x = signal.lfilter(b, a, w)
    return TimeSeries(x[spec.burn_in:], label=label)


def garch_path(spec: GarchSpec, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``(X, s)`` after burn-in; ``s`` is the scale path."""
    n = T + spec.burn_in
    w = rng.standard_normal(n) * spec.noise_sd
    x = np.empty(n)
    s = np.empty(n)
    s[0] = spec.sigma0
    x[0] = s[0] * w[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, n):
            s[t] = spec.omega + spec.alpha * x[t - 1] ** 2 + spec.beta * s[t - 1]
            x[t] = s[t] * w[t]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
        raise UnstableModel("GARCH scale recursion diverged")
    return x[spec.burn_in:], s[spec.burn_in:]


def gen_garch(spec: GarchSpec, T: int, rng: np.random.Generator, label: str = "") -> TimeSeries:
    if T < 1:
        raise ValueError("T must be at least 1")
    return TimeSeries(garch_path(spec, T, rng)[0], label=label)


def _trend(t: np.ndarray, T: int) -> np.ndarray:
    return 10.0 * (t / T) ** 2


def _wave_trend(t: np.ndarray, T: int) -> np.ndarray:
    return _trend(t, T) * np.sin(0.9 * np.pi * t / T)


def _one_series(spec: ScenarioSpec, group: int, rng: np.random.Generator, label: str) -> TimeSeries:
    T = spec.T
    t = np.arange(1, T + 1, dtype=np.float64)
    sc = spec.scenario
    if sc == 3:
        process = gen_garch if group == 2 else gen_arma
        model = spec.garch if group == 2 else spec.arma
    else:
        process = gen_arma if group == 0 else gen_garch
        model = spec.arma if group == 0 else spec.garch
    # a diverged GARCH path is redrawn from the same (advancing) stream
    for attempt in range(MAX_REDRAWS):
        try:
            x = process(model, T, rng).values
            break
        except UnstableModel:
            if attempt == MAX_REDRAWS - 1:
                raise
    eps = rng.standard_normal(T) * spec.eps_sd
    if sc == 1:
        y = x + eps
    elif sc == 2:
        y = (_trend(t, T) if group == 0 else _wave_trend(t, T)) + x + eps
    else:
        if group == 0:
            y = 5.0 + x + eps
        elif group == 1:
            y = _trend(t, T) * x + eps
        else:
            y = _wave_trend(t, T) * x + eps
    return TimeSeries(y, label=label)


def gen_scenario(spec: ScenarioSpec, replication: int = 0) -> list[LabeledSeries]:
    """Generate every series of one replication, grouped A, B(, C) in order.

    Series labels are ``"<group><index>"`` (``A0``, ``A1``, ...); the true
    group is carried separately on each :class:`LabeledSeries`.
    """
    out = []
    for g, size in enumerate(spec.group_sizes):
        name = GROUP_NAMES[g]
        for i in range(size):
            rng = series_rng(spec.seed, replication, g, i)
            out.append(LabeledSeries(_one_series(spec, g, rng, f"{name}{i}"), name))
    return out

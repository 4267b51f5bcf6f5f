"""Synthetic demand and solar scenarios, AR(1) forecasts and Lloyd-Max quantization.

Generative form of one scenario (kW, per step ``t``):

* electrical demand ``d_el = m_t * exp(sigma * z_t - sigma^2 / 2)`` where
  ``z`` is a stationary AR(1) chain of standard normals with correlation
  ``el_corr``; the factor has mean one, so ``E[d_el] = m_t``;
* hot water ``d_th = tap_t + shower_kw * B_t`` with independent
  ``B_t ~ Bernoulli(shower_prob_t)``;
* solar ``Phi_t = max(0, mu_t * (1 + eps_t))`` with independent
  ``eps_t ~ N(0, sigma_t^2)`` and ``sigma_t`` linear from ``sigma_0`` to ``sigma_T``;
* ``d_el_net = d_el - Phi``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .physical import TimeGrid
from .sddp import DiscreteDistribution

log = logging.getLogger(__name__)

DIMENSIONS = ("d_el_net", "d_th")
OPTIMIZATION = "optimization"
ASSESSMENT = "assessment"


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def step_hours(grid: TimeGrid) -> np.ndarray:
    """Hour of day at the middle of every step."""
    return np.array([grid.hour_of_day(t) for t in range(grid.horizon_steps)]) + grid.delta_hours / 2


def solar_profile(grid: TimeGrid, daily_kwh: float, sunrise: float = 6.5, sunset: float = 20.5) -> np.ndarray:
    """Mean production (kW) shaped as ``sin^2`` between sunrise and sunset,
    scaled to ``daily_kwh`` over the horizon."""
    h = step_hours(grid)
    phase = np.clip((h - sunrise) / (sunset - sunrise), 0.0, 1.0)
    shape = np.sin(np.pi * phase) ** 2
    total = shape.sum() * grid.delta_hours
    return daily_kwh * shape / total if total > 0 else np.zeros_like(shape)


@dataclass(frozen=True)
class SolarNoiseModel:
    mu: np.ndarray
    sigma_0: float = 0.0
    sigma_T: float = 0.0

    def __post_init__(self):
        if self.sigma_0 < 0 or self.sigma_T < 0:
            raise ValueError("solar noise standard deviations must be nonnegative")
        if np.any(np.asarray(self.mu) < 0):
            raise ValueError("mean solar production must be nonnegative")

    @property
    def sigma(self) -> np.ndarray:
        T = len(self.mu)
        return self.sigma_0 + (self.sigma_T - self.sigma_0) * np.arange(T) / T


def sample_solar(model: SolarNoiseModel, n: int, seed, clamp: bool = True) -> np.ndarray:
    """``n`` production scenarios ``mu_t (1 + eps_t)``, shape ``(n, T)``."""
    rng = np.random.default_rng(seed)
    mu = np.asarray(model.mu, dtype=float)
    eps = rng.standard_normal((n, len(mu))) * model.sigma
    phi = mu * (1.0 + eps)
    if clamp:
        negative = phi < 0
        if negative.any():
            log.info("solar clamp rate %.6f", negative.mean())
        phi = np.where(negative, 0.0, phi)
    return phi


@dataclass(frozen=True)
class DemandProfile:
    """Per-step shapes of the synthetic household (all kW)."""

    el_mean: np.ndarray
    shower_prob: np.ndarray
    tap_kw: np.ndarray
    solar: SolarNoiseModel
    el_sigma: float = 0.35
    el_corr: float = 0.7
    shower_kw: float = 6.0

    def __post_init__(self):
        T = len(self.el_mean)
        for name in ("shower_prob", "tap_kw"):
            if len(getattr(self, name)) != T:
                raise ValueError(f"{name} must have {T} entries")
        if len(self.solar.mu) != T:
            raise ValueError(f"solar profile must have {T} entries")
        if np.any(np.asarray(self.el_mean) < 0) or np.any(np.asarray(self.tap_kw) < 0):
            raise ValueError("mean demands must be nonnegative")
        p = np.asarray(self.shower_prob)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("shower probabilities must lie in [0, 1]")
        if self.el_sigma < 0 or self.shower_kw < 0 or not -1 < self.el_corr < 1:
            raise ValueError("invalid dispersion parameters")

    @property
    def horizon(self) -> int:
        return len(self.el_mean)

    @property
    def th_mean(self) -> np.ndarray:
        return np.asarray(self.tap_kw) + np.asarray(self.shower_prob) * self.shower_kw

    @property
    def net_mean(self) -> np.ndarray:
        """Mean net demand when solar clamping never binds."""
        return np.asarray(self.el_mean) - np.asarray(self.solar.mu)

    def deterministic(self) -> DemandProfile:
        """Same means, with demands fixed to them (solar noise kept)."""
        return replace(self, el_sigma=0.0, tap_kw=self.th_mean, shower_prob=np.zeros(self.horizon))

    @classmethod
    def synthetic(cls, grid: TimeGrid, solar: SolarNoiseModel, base_kw: float = 0.2,
                  morning_kw: float = 0.5, midday_kw: float = 0.7, evening_kw: float = 1.3,
                  shower_kwh: float = 1.5, **kwargs) -> DemandProfile:
        """Household with demand peaks around 7:30, midday and 20:00 and showers
        in the morning and evening windows."""
        h = step_hours(grid)
        el = (base_kw + morning_kw * _bump(h, 7.5, 0.8) + midday_kw * _bump(h, 12.5, 1.3)
              + evening_kw * _bump(h, 20.0, 1.3))
        shower_kw = shower_kwh / grid.delta_hours
        prob = 0.10 * ((h >= 6.5) & (h < 8.5)) + 0.06 * ((h >= 19.0) & (h < 22.0))
        tap = 0.03 + 0.12 * _bump(h, 13.0, 1.0) + 0.12 * _bump(h, 19.5, 1.0)
        return cls(el, prob.astype(float), tap, solar, shower_kw=shower_kw, **kwargs)


@dataclass(frozen=True)
class ScenarioSet:
    values: np.ndarray
    labels: np.ndarray
    dimensions: tuple[str, ...] = DIMENSIONS

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3 or values.shape[2] != len(self.dimensions):
            raise ValueError("values must have shape (n, T, dims)")
        if np.any(values[:, :, 1] < 0):
            raise ValueError("hot-water demand must be nonnegative")
        labels = np.asarray(self.labels, dtype=object)
        if len(labels) != len(values):
            raise ValueError("one label per scenario is required")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def subset(self, label: str) -> np.ndarray:
        return self.values[self.labels == label]

    @property
    def optimization(self) -> np.ndarray:
        return self.subset(OPTIMIZATION)

    @property
    def assessment(self) -> np.ndarray:
        return self.subset(ASSESSMENT)

    def to_csv(self, path: str | Path, label: str | None = None) -> None:
        """Write ``scenario_id,step,d_el_net,d_th``; ids index the chosen subset."""
        vals = self.values if label is None else self.subset(label)
        write_scenarios_csv(path, vals)


def write_scenarios_csv(path: str | Path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "step", *DIMENSIONS])
        for n, scen in enumerate(values):
            for t, (a, b) in enumerate(scen):
                w.writerow([n, t, repr(float(a)), repr(float(b))])


def read_scenarios_csv(path: str | Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n, T = int(data[:, 0].max()) + 1, int(data[:, 1].max()) + 1
    if len(data) != n * T:
        raise ValueError(f"{path}: expected {n * T} rows, found {len(data)}")
    out = np.empty((n, T, 2))
    out[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2:4]
    return out


def generate_scenarios(profile: DemandProfile, n: int, seed, n_optimization: int | None = None) -> ScenarioSet:
    """``n`` seeded scenarios; a seeded random half (or ``n_optimization``) is
    labelled for optimization, the rest for assessment."""
    if n < 1:
        raise ValueError("n must be at least 1")
    T = profile.horizon
    root = np.random.SeedSequence(seed)
    s_el, s_th, s_pv, s_split = (np.random.default_rng(s) for s in root.spawn(4))

    el = np.broadcast_to(np.asarray(profile.el_mean, dtype=float), (n, T)).copy()
    if profile.el_sigma > 0:
        rho = profile.el_corr
        eps = s_el.standard_normal((n, T))
        z = np.empty((n, T))
        z[:, 0] = eps[:, 0]
        for t in range(1, T):
            z[:, t] = rho * z[:, t - 1] + np.sqrt(1 - rho**2) * eps[:, t]
        sig = profile.el_sigma
        el *= np.exp(sig * z - 0.5 * sig**2)

    th = np.broadcast_to(np.asarray(profile.tap_kw, dtype=float), (n, T)).copy()
    prob = np.asarray(profile.shower_prob, dtype=float)
    if np.any((prob > 0) & (prob < 1)):
        th += profile.shower_kw * (s_th.random((n, T)) < prob)
    else:
        th += profile.shower_kw * prob

    pv = sample_solar(profile.solar, n, s_pv)
    values = np.stack([el - pv, th], axis=2)

    n_opt = n // 2 if n_optimization is None else n_optimization
    if not 0 <= n_opt <= n:
        raise ValueError("n_optimization must lie in [0, n]")
    labels = np.full(n, ASSESSMENT, dtype=object)
    labels[s_split.permutation(n)[:n_opt]] = OPTIMIZATION
    return ScenarioSet(values, labels)


@dataclass(frozen=True)
class Ar1Model:
    """``w[t] ~ alpha[t] * w[t-1] + beta[t]`` per dimension; ``alpha[0] = 0``
    and ``beta[0]`` is the mean of the first step."""

    alpha: np.ndarray
    beta: np.ndarray
    residual_std: np.ndarray
    residuals: np.ndarray
    degenerate: np.ndarray
    means: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.alpha)

    def predict(self, t: int, w_prev) -> np.ndarray:
        """One-step prediction of ``w[t]`` from ``w[t-1]``, hot water clipped at 0."""
        pred = self.alpha[t] * np.asarray(w_prev, dtype=float) + self.beta[t]
        pred[..., 1] = np.maximum(pred[..., 1], 0.0)
        return pred


def fit_ar1(values: np.ndarray, variance_floor: float = 1e-12) -> Ar1Model:
    """Per-step ordinary least squares of ``values[:, t]`` on ``values[:, t-1]``."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("the AR(1) fit needs at least two scenarios")
    n, T, D = values.shape
    alpha = np.zeros((T, D))
    beta = np.zeros((T, D))
    degenerate = np.zeros((T, D), dtype=bool)
    means = values.mean(axis=0)
    beta[0] = means[0]
    for t in range(1, T):
        x, y = values[:, t - 1], values[:, t]
        xc, yc = x - means[t - 1], y - means[t]
        var = (xc**2).mean(axis=0)
        for d in range(D):
            if var[d] <= variance_floor:
                degenerate[t, d] = True
                alpha[t, d], beta[t, d] = 0.0, means[t, d]
            else:
                alpha[t, d] = (xc[:, d] * yc[:, d]).mean() / var[d]
                beta[t, d] = means[t, d] - alpha[t, d] * means[t - 1, d]
    pred = np.empty_like(values)
    pred[:, 0] = beta[0]
    pred[:, 1:] = alpha[1:] * values[:, :-1] + beta[1:]
    residuals = values - pred
    if degenerate.any():
        log.info("AR(1) fit fell back to the mean on %d (step, dimension) pairs", int(degenerate.sum()))
    return Ar1Model(alpha, beta, residuals.std(axis=0), residuals, degenerate, means)


def mpc_forecast(ar: Ar1Model, t: int, w_t=None) -> np.ndarray:
    """Forecast of the noise at steps ``t .. T-1`` made at decision time ``t``.

    The first entry is the AR prediction from the last observation ``w_t``
    (the step mean when nothing has been observed yet); later entries are the
    per-step means of the fitting scenarios.
    """
    T = ar.horizon
    if not 0 <= t < T:
        raise ValueError(f"t must lie in [0, {T})")
    out = ar.means[t:].copy()
    if t > 0 and w_t is not None:
        out[0] = ar.predict(t, w_t)
    out[:, 1] = np.maximum(out[:, 1], 0.0)
    return out


@dataclass
class LloydResult:
    centroids: np.ndarray
    weights: np.ndarray
    distortion: list[float]
    iterations: int


def _kmeanspp(points: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, s):
        total = d2.sum()
        idx = rng.choice(len(points), p=d2 / total) if total > 0 else rng.integers(len(points))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def lloyd_max(points, s: int, seed=0, max_iterations: int = 100) -> LloydResult:
    """Lloyd iterations from a seeded k-means++ start.

    Stops at an assignment fixpoint or after ``max_iterations``. An emptied
    cluster is moved onto the point with the largest error, which can only
    lower the distortion.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0 or s < 1:
        raise ValueError("need at least one point and one atom")
    distinct = len(np.unique(pts, axis=0))
    if s > distinct:
        warnings.warn(f"reducing atom count from {s} to {distinct} distinct points", stacklevel=2)
        s = distinct
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(pts, s, rng)
    assign = None
    distortion = []
    it = 0
    for it in range(1, max_iterations + 1):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        err = d2[np.arange(len(pts)), new_assign]
        counts = np.bincount(new_assign, minlength=s)
        for j in np.flatnonzero(counts == 0):
            worst = int(err.argmax())
            new_assign[worst] = j
            err[worst] = 0.0
            counts = np.bincount(new_assign, minlength=s)
        for j in range(s):
            centers[j] = pts[new_assign == j].mean(axis=0)
        distortion.append(float(((pts - centers[new_assign]) ** 2).sum(axis=1).mean()))
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    weights = np.bincount(new_assign, minlength=s) / len(pts)
    return LloydResult(centers, weights, distortion, it)


def lloyd_max_quantize(points, s: int, seed=0, max_iterations: int = 100) -> DiscreteDistribution:
    res = lloyd_max(points, s, seed, max_iterations)
    atoms = res.centroids.copy()
    atoms[:, 1] = np.maximum(atoms[:, 1], 0.0)
    w = res.weights / res.weights.sum()
    return DiscreteDistribution(atoms, w)


def quantize_scenarios(values: np.ndarray, s: int = 10, seed=0) -> list[DiscreteDistribution]:
    """One joint ``(d_el_net, d_th)`` quantization per step."""
    values = np.asarray(values, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [lloyd_max_quantize(values[:, t], s, seed=[seed, t] if np.ndim(seed) == 0 else [*seed, t])
                for t in range(values.shape[1])]

"""Generalized spiked-model machinery.

Eigenvalue lists are in descending order and spike indices are 0-based
positions in that order: large spikes sit at the front, small spikes at the
back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import trim_mean

from .measures import SpectralMeasure

ROOT_TOL = 1e-10
ROOT_MAX_ITER = 200
GUARD_BAND = 0.05
TRIM = 0.1


@dataclass(frozen=True)
class SpikeConfig:
    """Which sample eigen-directions are treated as spikes.

    ``large_indices`` are the r1 leading positions, ``small_indices`` the r2
    trailing ones. ``bulk_variance`` is only needed by the simple-spiked
    plug-in estimators.
    """

    large_indices: tuple = ()
    small_indices: tuple = ()
    bulk_variance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "large_indices", tuple(int(j) for j in self.large_indices))
        object.__setattr__(self, "small_indices", tuple(int(j) for j in self.small_indices))
        if set(self.large_indices) & set(self.small_indices):
            raise ValueError("large and small spike index sets overlap")
        if self.bulk_variance is not None and not self.bulk_variance > 0:
            raise ValueError("bulk variance must be positive")

    @classmethod
    def from_counts(cls, p, r1, r2, bulk_variance=None):
        if r1 < 0 or r2 < 0 or r1 + r2 > p:
            raise ValueError(f"invalid spike counts r1={r1}, r2={r2} for p={p}")
        return cls(tuple(range(r1)), tuple(range(p - r2, p)), bulk_variance)

    @property
    def r1(self):
        return len(self.large_indices)

    @property
    def r2(self):
        return len(self.small_indices)

    @property
    def indices(self):
        return self.large_indices + self.small_indices

    def check_levels(self, levels):
        """Raise if a level is attached to a non-spike or breaks its sign rule."""
        for j, ell in levels.items():
            if j in self.large_indices:
                if not ell <= 0:
                    raise ValueError(f"level {ell} at large spike {j} must be <= 0")
            elif j in self.small_indices:
                if not 0 <= ell < 1:
                    raise ValueError(f"level {ell} at small spike {j} must lie in [0, 1)")
            else:
                raise ValueError(f"index {j} is not a configured spike")


@dataclass(frozen=True)
class ChiWeights:
    j: int
    omega: float
    chi: np.ndarray = field(repr=False)

    @property
    def self_weight(self):
        return float(self.chi[self.j])


def _as_descending(eigenvalues):
    s = np.asarray(eigenvalues, dtype=float).ravel()
    if np.any(np.diff(s) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    return s


def is_supercritical(bulk: SpectralMeasure, s_j: float, y: float) -> bool:
    """Detachment test: int s^2 dH(s) / (s_j - s)^2 < 1/y."""
    gap = s_j - bulk.locations
    if np.any(np.abs(gap) <= 1e-12 * max(1.0, abs(s_j))):
        raise ValueError(f"spike {s_j} coincides with a bulk atom")
    return bulk.integrate(bulk.locations**2 / gap**2) < 1.0 / y


def _omega_equation(s, y, omega):
    # (1/p) sum_i s_i / (s_i - omega) - 1/y, vectorized over omega
    omega = np.atleast_1d(omega)
    with np.errstate(divide="ignore"):
        return (s[None, :] / (s[None, :] - omega[:, None])).mean(axis=1) - 1.0 / y


def all_omegas(eigenvalues, y):
    """Every root of (1/p) sum s_i/(s_i - w) = 1/y, one per distinct eigenvalue.

    Returns ``(distinct, roots)`` with ``distinct`` descending and ``roots[k]``
    lying in (distinct[k+1], distinct[k]) (below the smallest value for the
    last one).
    """
    if not y > 0:
        raise ValueError("y must be positive")
    s = _as_descending(eigenvalues)
    if np.any(s <= 0):
        raise ValueError("eigenvalues must be strictly positive")
    distinct = np.unique(s)[::-1]
    hi = distinct.copy()
    lo = np.empty_like(hi)
    lo[:-1] = distinct[1:]
    # left end of the last interval: push down until the equation is negative
    width = distinct[-1]
    left = distinct[-1] - width
    while _omega_equation(s, y, left)[0] > 0:
        width *= 2.0
        left = distinct[-1] - width
    lo[-1] = left

    a, b = lo.copy(), hi.copy()
    for _ in range(ROOT_MAX_ITER):
        mid = 0.5 * (a + b)
        val = _omega_equation(s, y, mid)
        neg = val < 0
        a = np.where(neg, mid, a)
        b = np.where(neg, b, mid)
        if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(np.abs(a), np.abs(b))):
            break
    roots = 0.5 * (a + b)
    resid = np.abs(_omega_equation(s, y, roots)) * y
    # near a pole the attainable residual is limited by float spacing in omega
    with np.errstate(divide="ignore"):
        slope = (s[None, :] / (s[None, :] - roots[:, None]) ** 2).mean(axis=1) * y
    floor = slope * np.spacing(np.maximum(np.abs(roots), 1e-300)) * 4
    bad = resid > np.maximum(ROOT_TOL, floor)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ArithmeticError(f"omega root on ({lo[k]}, {hi[k]}) has residual {resid[k]:.3e}")
    return distinct, roots


def solve_omegas(eigenvalues, y, spike_indices):
    """Map each spike index j to its omega_j, the root just below s_j."""
    s = _as_descending(eigenvalues)
    distinct, roots = all_omegas(s, y)
    out = {}
    for j in spike_indices:
        k = int(np.argmin(np.abs(distinct - s[j])))
        out[int(j)] = float(roots[k])
    return out


def chi_weights(eigenvalues, j: int, omega_j: float) -> ChiWeights:
    """Limiting overlaps of the j-th sample spike eigenvector with every v_i.

    When s_j has multiplicity m the sample eigenvectors of that cluster are
    only determined up to a rotation inside it. Of the m roots, m - 1
    collapse onto s_j and carry no weight off the cluster, so the cluster
    as a whole has the single-root weight off the group; each member gets
    the rotation average, 1/m of it, and splits the rest evenly.
    """
    s = _as_descending(eigenvalues)
    group = s == s[j]
    m = int(group.sum())
    si = s[~group]
    if np.any(si == omega_j):
        raise ValueError(f"omega {omega_j} coincides with an eigenvalue")
    chi = np.empty_like(s)
    chi[~group] = (s[j] / (si - s[j]) - omega_j / (si - omega_j)) / m
    chi[group] = (1.0 - chi[~group].sum()) / m
    return ChiWeights(j=int(j), omega=float(omega_j), chi=chi)


def spike_chis(eigenvalues, y, spike_indices):
    omegas = solve_omegas(eigenvalues, y, spike_indices)
    return {j: chi_weights(eigenvalues, j, w) for j, w in omegas.items()}


def predicted_overlap(xi, eigenvectors, chi: ChiWeights) -> float:
    """Limit of <xi, u_j>^2 as sum_i chi_j(i) <xi, v_i>^2."""
    xi = np.asarray(xi, dtype=float)
    if abs(np.linalg.norm(xi) - 1.0) > 1e-8:
        raise ValueError("xi must be a unit vector")
    coef = np.asarray(eigenvectors).T @ xi
    return float(np.dot(chi.chi, coef**2))


def level_gain(ell):
    """Coefficient ell/(1 - ell) that a level contributes to the f-transform."""
    if ell == 1:
        raise ValueError("level 1 is a pole of the spectral transform")
    return ell / (1.0 - ell)


def f_transform(eigenvalues, levels, chis):
    """f(s_i) = [1 + sum_j gain(l_j) chi_j(i)] s_i over the spikes in ``levels``."""
    s = _as_descending(eigenvalues)
    factor = np.ones_like(s)
    for j, ell in levels.items():
        if ell == 0:
            continue
        factor = factor + level_gain(ell) * chis[j].chi
    return factor * s


def _mp_density(x, y):
    lo, hi = (1 - np.sqrt(y)) ** 2, (1 + np.sqrt(y)) ** 2
    return np.sqrt(max((hi - x) * (x - lo), 0.0)) / (2 * np.pi * y * x)


def mp_cdf(x, y):
    """CDF of the unit-variance Marcenko-Pastur law (atom 1 - 1/y at 0 when y > 1)."""
    lo, hi = (1 - np.sqrt(y)) ** 2, (1 + np.sqrt(y)) ** 2
    atom = max(0.0, 1 - 1 / y)
    if x < 0:
        return 0.0
    if x <= lo:
        return atom
    if x >= hi:
        return 1.0
    return atom + quad(_mp_density, lo, x, args=(y,), limit=200)[0]


def mp_quantile(q, y):
    atom = max(0.0, 1 - 1 / y)
    if q <= atom:
        return 0.0
    lo, hi = (1 - np.sqrt(y)) ** 2, (1 + np.sqrt(y)) ** 2
    return brentq(lambda x: mp_cdf(x, y) - q, lo, hi, xtol=1e-14)


@lru_cache(maxsize=256)
def mp_trimmed_mean(y, cut=TRIM):
    """Mean of the unit-variance MP law restricted to its central 1 - 2*cut mass."""
    a, b = mp_quantile(cut, y), mp_quantile(1 - cut, y)
    lo = max(a, (1 - np.sqrt(y)) ** 2)
    inner = quad(lambda x: x * _mp_density(x, y), lo, b, limit=200)[0]
    return inner / (1 - 2 * cut)


def estimate_spike_counts(sample_eigenvalues, y):
    """Count eigenvalues outside the guarded MP bulk edges.

    The bulk variance is the 10%-trimmed mean of the sample eigenvalues
    divided by the same trimmed mean of the unit-variance MP law, which
    removes the ~7% downward bias from the law's right skew. The edges are
    sigma^2 (1 -+ sqrt(y))^2 widened by a 5% guard band. No small spikes are
    reported when y >= 1.
    """
    a = _as_descending(sample_eigenvalues)
    if a.size < 4:
        raise ValueError("need at least 4 eigenvalues")
    sigma2 = float(trim_mean(a, TRIM)) / mp_trimmed_mean(float(y))
    upper = sigma2 * (1 + np.sqrt(y)) ** 2 * (1 + GUARD_BAND)
    r1 = int(np.sum(a > upper))
    r2 = 0
    if y < 1:
        lower = sigma2 * (1 - np.sqrt(y)) ** 2 * (1 - GUARD_BAND)
        r2 = int(np.sum(a < lower))
    return r1, r2, sigma2


def spike_forward(s, bulk: SpectralMeasure, y):
    """Almost-sure limit of the sample eigenvalue of a supercritical spike s."""
    t = bulk.locations
    return s * (1.0 + y * bulk.integrate(t / (s - t)))


def _forward_slope(s, bulk, y):
    t = bulk.locations
    return 1.0 - y * bulk.integrate(t**2 / (s - t) ** 2)


def _bisect(fn, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def critical_spikes(bulk: SpectralMeasure, y):
    """Detachment thresholds (lower, upper) for population spikes.

    ``lower`` is None when y >= 1 (no small spike can detach).
    """
    t_max, t_min = bulk.locations.max(), bulk.locations.min()
    hi = t_max * 2 + 1
    while _forward_slope(hi, bulk, y) <= 0:
        hi *= 2
    upper = _bisect(lambda s: _forward_slope(s, bulk, y), t_max, hi)
    lower = None
    if y < 1 and t_min > 0:
        lower = _bisect(lambda s: -_forward_slope(s, bulk, y), 0.0, t_min)
    return lower, upper


def invert_spike(a, bulk: SpectralMeasure, y):
    """Population spike whose sample eigenvalue limit is ``a``.

    Sample values inside the bulk edges are clamped to the nearest
    detachment threshold.
    """
    lower, upper = critical_spikes(bulk, y)
    if a > bulk.locations.max():
        if a <= spike_forward(upper, bulk, y):
            return upper
        return _bisect(lambda s: spike_forward(s, bulk, y) - a, upper, a)
    if lower is None:
        raise ValueError(f"sample eigenvalue {a} cannot be a small spike at y={y}")
    if a >= spike_forward(lower, bulk, y):
        return lower
    return _bisect(lambda s: spike_forward(s, bulk, y) - a, 0.0, lower)

"""Discrete spectral measures and the Marcenko-Pastur fixed point.

Everything here works on finite atomic measures, so every integral is an
exact weighted sum over atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MERGE_RTOL = 1e-10
MP_TOL = 1e-12
MP_MAX_ITER = 10_000


class MpConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SpectralMeasure:
    """Probability measure with finitely many atoms on [0, inf).

    Use :meth:`from_atoms` to build one; it validates, normalizes and merges
    locations that agree to a relative 1e-10.
    """

    locations: np.ndarray
    masses: np.ndarray

    @classmethod
    def from_atoms(cls, locations, masses, normalize=False):
        loc = np.asarray(locations, dtype=float).ravel()
        w = np.asarray(masses, dtype=float).ravel()
        if loc.size == 0:
            raise ValueError("a spectral measure needs at least one atom")
        if loc.shape != w.shape:
            raise ValueError(f"{loc.size} locations but {w.size} masses")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(w))):
            raise ValueError("atom locations and masses must be finite")
        if np.any(loc < 0):
            raise ValueError(f"negative atom location {loc.min():g}")
        if np.any(w < 0):
            raise ValueError(f"negative atom mass {w.min():g}")
        total = w.sum()
        if total <= 0:
            raise ValueError("measure has zero total mass")
        if normalize:
            w = w / total
        elif abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {total!r}, expected 1")

        order = np.argsort(loc, kind="stable")
        loc, w = loc[order], w[order]
        merged_loc, merged_w = [loc[0]], [w[0]]
        for x, m in zip(loc[1:], w[1:]):
            if x - merged_loc[-1] <= MERGE_RTOL * max(abs(x), abs(merged_loc[-1])):
                merged_w[-1] += m
            else:
                merged_loc.append(x)
                merged_w.append(m)
        return cls(np.array(merged_loc), np.array(merged_w))

    def integrate(self, values):
        """Sum of ``values`` (evaluated at the atoms) against the masses."""
        return float(np.dot(self.masses, values))

    @property
    def atoms(self):
        return list(zip(self.locations.tolist(), self.masses.tolist()))

    def __len__(self):
        return self.locations.size


@dataclass(frozen=True)
class MpSolution:
    m: float
    m_prime: float
    lam: float
    y: float
    residual: float
    k: float

    @property
    def scale(self):
        """The recurring factor 1 - y + y*lam*m, kept as solved to avoid cancellation."""
        return self.k


@dataclass(frozen=True)
class Functionals:
    t1: float
    t2: float
    u1: float
    u2: float
    m1: float
    mp: MpSolution


def build_spectral_measure(eigenvalues) -> SpectralMeasure:
    """Empirical spectral distribution: mass multiplicity/p at each value."""
    s = np.asarray(eigenvalues, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empty eigenvalue list")
    if not np.all(np.isfinite(s)):
        raise ValueError("eigenvalues must be finite")
    if np.any(s < 0):
        raise ValueError(f"negative eigenvalue {s.min():g}")
    return SpectralMeasure.from_atoms(s, np.full(s.size, 1.0 / s.size), normalize=True)


def projection_weights(eigenvalues, eigenvectors, mean_diff):
    """Per-eigenvector weights <mu1-mu2, v_i>^2 / s_i.

    These are the unnormalized G masses; their sum is the squared
    Mahalanobis distance between the means.
    """
    s = np.asarray(eigenvalues, dtype=float)
    if np.any(s <= 0):
        raise ValueError("covariance is singular: non-positive eigenvalue")
    proj = np.asarray(eigenvectors).T @ np.asarray(mean_diff, dtype=float)
    return proj**2 / s


def build_projected_measure(eigenvalues, eigenvectors, mu1, mu2):
    """Measure G with mass <mu, v_i>^2/||mu||^2 at s_i, mu = Sigma^{-1/2}(mu1 - mu2).

    Returns ``(G, mu_norm_sq)``. Eigenvectors are the columns of
    ``eigenvectors``.
    """
    delta = np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float)
    if not np.any(delta):
        raise ValueError("mu1 == mu2: the projected measure is undefined")
    w = projection_weights(eigenvalues, eigenvectors, delta)
    mu_norm_sq = float(w.sum())
    return SpectralMeasure.from_atoms(eigenvalues, w / mu_norm_sq, normalize=True), mu_norm_sq


def _mp_gap(H, y, lam, k):
    # the fixed point written in k = 1 - y + y lam m; decreasing in k
    d = H.locations * k + lam
    h = y * lam * H.integrate(1.0 / d) - (k - 1.0 + y)
    dh = -y * lam * H.integrate(H.locations / d**2) - 1.0
    return h, dh


def solve_mp(H: SpectralMeasure, y: float, lam: float, tol=MP_TOL, max_iter=MP_MAX_ITER) -> MpSolution:
    """Solve m = int dH(s) / (s(1 - y + y lam m) + lam) on the admissible branch.

    The unknown is k = 1 - y + y lam m, which ranges over [max(0, 1 - y), 1]
    as m ranges over the admissible bracket. Solving for k directly avoids
    the cancellation in 1 - y + y lam m when y > 1 and lam is small. The
    gap is strictly decreasing there and changes sign, so safeguarded
    Newton steps with a bisection fallback always converge; iteration
    continues to machine precision before the tolerance is checked.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    lo, hi = max(0.0, 1.0 - y), 1.0
    k = 0.5 * (lo + hi)
    best_k, best_h = k, np.inf
    for _ in range(max_iter):
        h, dh = _mp_gap(H, y, lam, k)
        if abs(h) < abs(best_h):
            best_k, best_h = k, h
        if h == 0:
            break
        if h > 0:
            lo = k
        else:
            hi = k
        step = k - h / dh
        nxt = step if lo < step < hi else 0.5 * (lo + hi)
        if nxt == k or hi - lo <= 2 * np.spacing(hi):
            break
        k = nxt
    k = best_k
    m = (k - 1.0 + y) / (y * lam)
    d = H.locations * k + lam
    residual = m - H.integrate(1.0 / d)
    if not abs(residual) <= tol:
        raise MpConvergenceError("Marcenko-Pastur fixed point did not converge", residual)

    # implicit differentiation, m' = dm/dz at z = -lam
    a = H.integrate((H.locations * y * m + 1.0) / d**2)
    b = H.integrate(H.locations * y * lam / d**2)
    return MpSolution(m=m, m_prime=a / (1.0 + b), lam=lam, y=y, residual=residual, k=k)


def refine_mp(H: SpectralMeasure, sol: MpSolution) -> MpSolution:
    """Newton-polish a solution in extended precision.

    The closed forms subtract terms of order 1/k^4, so with y > 1 and small
    lam they amplify float64 rounding in (m, m') by up to ~1e9; evaluating
    them from refined inputs keeps the cross-check meaningful.
    """
    ld = np.longdouble
    s, w = H.locations.astype(ld), H.masses.astype(ld)
    y, lam, k = ld(sol.y), ld(sol.lam), ld(sol.k)
    for _ in range(3):
        d = s * k + lam
        h = y * lam * np.sum(w / d) - (k - 1 + y)
        dh = -y * lam * np.sum(w * s / d**2) - 1
        k = k - h / dh
    m = (k - 1 + y) / (y * lam)
    d = s * k + lam
    a = np.sum(w * (s * y * m + 1) / d**2)
    b = np.sum(w * s * y * lam / d**2)
    return MpSolution(m=m, m_prime=a / (1 + b), lam=lam, y=y, residual=m - np.sum(w / d), k=k)


def closed_form_t1(sol: MpSolution) -> float:
    return (1.0 - sol.lam * sol.m) / sol.scale


def closed_form_t2(sol: MpSolution) -> float:
    lam, m, mp, k = sol.lam, sol.m, sol.m_prime, sol.scale
    return (1.0 - lam * m) / k**3 - (lam * m - lam**2 * mp) / k**4


def closed_form_m1(sol: MpSolution) -> float:
    lam, m, mp, k, y = sol.lam, sol.m, sol.m_prime, sol.scale, sol.y
    return 1.0 / (y * k) - y * lam * (m - lam * mp) / (y * k**2) - 1.0 / y


def _agree(a, b, what):
    if abs(a - b) > 1e-8 * max(1.0, abs(a)):
        raise ArithmeticError(f"{what}: integral {a!r} vs closed form {b!r}")


def compute_functionals(H, G, mu_norm_sq, y, lam, check=True) -> Functionals:
    """T1, U1, T2, U2 and m1 evaluated at -lam.

    The integral definitions are cross-checked against the closed forms in
    terms of (m, m'); a disagreement beyond 1e-8 raises ``ArithmeticError``.
    """
    sol = solve_mp(H, y, lam)
    k = sol.k
    sh, sg = H.locations, G.locations
    dh, dg = sh * k + lam, sg * k + lam

    m1 = H.integrate(sh**2 * k / dh**2) / (1.0 + y * H.integrate(lam * sh / dh**2))
    t1 = H.integrate(sh / dh)
    t2 = (1.0 + y * m1) * H.integrate(sh**2 / dh**2)
    u1 = mu_norm_sq * G.integrate(sg / dg)
    u2 = mu_norm_sq * (1.0 + y * m1) * G.integrate(sg**2 / dg**2)
    if check:
        ref = refine_mp(H, sol)
        _agree(t1, float(closed_form_t1(ref)), "T1")
        _agree(t2, float(closed_form_t2(ref)), "T2")
        _agree(m1, float(closed_form_m1(ref)), "m1")
    return Functionals(t1=t1, t2=t2, u1=u1, u2=u2, m1=m1, mp=sol)

"""Deterministic misclassification-rate approximations and plug-in tuning."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import spiked
from .measures import SpectralMeasure, build_spectral_measure, compute_functionals
from .spiked import SpikeConfig


@dataclass(frozen=True)
class ThetaParams:
    lam: float
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "levels", {int(j): float(v) for j, v in self.levels.items()})

    def validate(self, config: SpikeConfig):
        config.check_levels(self.levels)
        return self

    def as_tuple(self):
        return (self.lam,) + tuple(self.levels[j] for j in sorted(self.levels))


def pooled_ratio(y1, y2):
    """p/(n1 + n2) expressed through p/n1 and p/n2."""
    return y1 * y2 / (y1 + y2)


def _two_term_rate(f, y1, y2):
    den = 2.0 * np.sqrt(f.u2 + (y1 + y2) * f.t2)
    return 0.5 * sum(norm.cdf(-(f.u1 + (-1) ** i * (y1 - y2) * f.t1) / den) for i in (1, 2))


def _corrected_rate(f, y1, y2):
    return float(norm.cdf(-f.u1 / (2.0 * np.sqrt(f.u2 + (y1 + y2) * f.t2))))


def rlda_rate(H: SpectralMeasure, G: SpectralMeasure, mu_norm_sq, y1, y2, lam):
    """Deterministic approximation of the RLDA conditional error."""
    f = compute_functionals(H, G, mu_norm_sq, pooled_ratio(y1, y2), lam)
    return float(_two_term_rate(f, y1, y2))


def transformed_measures(spectrum, g_masses, theta: ThetaParams, config: SpikeConfig, y):
    """H_f and G_f: both measures pushed through the spiked f-transform.

    ``spectrum`` is the descending population spectrum and ``g_masses`` the
    G mass attached to each of its entries.
    """
    s = np.asarray(spectrum, dtype=float)
    active = {j: l for j, l in theta.validate(config).levels.items() if l != 0}
    chis = {}
    if active:
        bulk_idx = np.setdiff1d(np.arange(s.size), list(config.indices))
        bulk = build_spectral_measure(s[bulk_idx])
        for j in active:
            if not spiked.is_supercritical(bulk, s[j], y):
                raise ValueError(f"spike {j} (s={s[j]:g}) is not supercritical at y={y:g}")
        chis = spiked.spike_chis(s, y, active)
    fs = spiked.f_transform(s, active, chis)
    H = build_spectral_measure(fs)
    G = SpectralMeasure.from_atoms(fs, g_masses, normalize=True)
    return H, G


def seda_functionals(spectrum, g_masses, mu_norm_sq, theta, config, y1, y2):
    y = pooled_ratio(y1, y2)
    H, G = transformed_measures(spectrum, g_masses, theta, config, y)
    return compute_functionals(H, G, mu_norm_sq, y, theta.lam)


def seda_rate(spectrum, g_masses, mu_norm_sq, theta, config, y1, y2):
    f = seda_functionals(spectrum, g_masses, mu_norm_sq, theta, config, y1, y2)
    return float(_two_term_rate(f, y1, y2))


def corrected_seda_rate(spectrum, g_masses, mu_norm_sq, theta, config, y1, y2):
    f = seda_functionals(spectrum, g_masses, mu_norm_sq, theta, config, y1, y2)
    return _corrected_rate(f, y1, y2)


def efficacy_ratio(u1, u2, t2, y1, y2):
    """U1^2 / (U2 + (y1 + y2) T2), signed by U1 so that U1 < 0 ranks last."""
    den = u2 + (y1 + y2) * t2
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sign(u1) * u1**2 / den
    return np.where(den > 0, val, -np.inf)


def trace_resolvents(eigenvalues, theta: ThetaParams):
    """(1/p) tr[S I^-1 + lam]^-1 and (1/p) tr[S I^-1 + lam]^-2.

    The spike directions of I are eigenvectors of S, so S I^-1 is
    diagonal in S's eigenbasis with entries a_i / (1 - l_i).
    """
    a = np.asarray(eigenvalues, dtype=float).copy()
    for j, ell in theta.levels.items():
        a[j] = a[j] / (1.0 - ell)
    r = 1.0 / (a + theta.lam)
    return float(r.mean()), float((r**2).mean())


def alpha_hat(sample_eigenvalues, theta: ThetaParams, n1, n2, p=None):
    """Data-driven intercept shift for unequal class sizes."""
    a = np.asarray(sample_eigenvalues, dtype=float)
    p = a.size if p is None else p
    n = n1 + n2
    m_hat, _ = trace_resolvents(a, theta)
    tr = theta.lam * p * m_hat  # tr[(1/lam) S I^-1 + I]^-1
    den = 1.0 - p / n + tr / n
    if abs(den) <= 1e-12:
        raise ArithmeticError("alpha correction denominator vanishes")
    return (p / (2 * n1) - p / (2 * n2)) * (1.0 - tr / p) / den


@dataclass(frozen=True)
class PluginInputs:
    """Theta-independent sample quantities feeding the plug-in estimators.

    ``n`` is the sample count behind the eigenvalues (n1 + n2 for a binary
    problem, the total over all classes for a pairwise multi-class term).
    """

    eigenvalues: np.ndarray
    spike_proj_sq: dict
    mean_diff_sq: float
    n1: int
    n2: int
    n: int
    config: SpikeConfig
    s_hat: dict
    chi_hat: dict
    sigma2: float

    @property
    def p(self):
        return self.eigenvalues.size

    @property
    def y(self):
        return self.p / self.n

    @property
    def y1(self):
        return self.p / self.n1

    @property
    def y2(self):
        return self.p / self.n2


@dataclass(frozen=True)
class PluginEstimates:
    t1_hat: float
    t2_hat: float
    u1_hat: float
    u2_hat: float
    m_hat: float
    m_prime_hat: float
    m1_hat: float
    gamma: float
    beta: dict
    s_tilde: dict
    y1_hat: float
    y2_hat: float
    y_hat: float

    @property
    def efficacy(self):
        return float(efficacy_ratio(self.u1_hat, self.u2_hat, self.t2_hat, self.y1_hat, self.y2_hat))


def bulk_variance(eigenvalues, config: SpikeConfig, y):
    """Trace-based bulk level: (tr S - sum of plug-in spikes)/(p - r)."""
    a = np.asarray(eigenvalues, dtype=float)
    idx = list(config.indices)
    sigma2 = spiked.estimate_spike_counts(a, y)[2] if a.size >= 4 else float(a.mean())
    if not idx:
        return float(a.mean())
    # spikes are estimated against the bulk, and the bulk against the spikes
    for _ in range(50):
        bulk = SpectralMeasure.from_atoms([sigma2], [1.0])
        s_hat = [spiked.invert_spike(a[j], bulk, y) for j in idx]
        new = (a.sum() - sum(s_hat)) / (a.size - len(idx))
        if abs(new - sigma2) <= 1e-12 * sigma2:
            break
        sigma2 = new
    return float(sigma2)


def estimate_spikes(eigenvalues, config: SpikeConfig, y, sigma2=None):
    """Plug-in (s_hat_j, chi_hat_j(j)) for every configured spike.

    The bulk is modelled as a point mass at sigma2; each sample spike is
    pulled back through the spike forward map, and chi weights are
    evaluated on the spectrum {s_hat spikes} + {sigma2 repeated}.
    """
    a = np.asarray(eigenvalues, dtype=float)
    if sigma2 is None:
        sigma2 = config.bulk_variance or bulk_variance(a, config, y)
    idx = list(config.indices)
    if not idx:
        return {}, {}, sigma2
    bulk = SpectralMeasure.from_atoms([sigma2], [1.0])
    s_hat = {j: spiked.invert_spike(a[j], bulk, y) for j in idx}
    spectrum = np.full(a.size, sigma2)
    for j, v in s_hat.items():
        spectrum[j] = v
    # clamped spikes can land on each other; nudge to keep them distinct
    order = np.argsort(-spectrum, kind="stable")
    spectrum = spectrum[order]
    for i in range(1, spectrum.size):
        if order[i] in s_hat and spectrum[i] >= spectrum[i - 1]:
            spectrum[i] = spectrum[i - 1] * (1 - 1e-6)
    pos = {j: int(np.nonzero(order == j)[0][0]) for j in idx}
    chis = spiked.spike_chis(spectrum, y, [pos[j] for j in idx])
    chi_hat = {j: chis[pos[j]].self_weight for j in idx}
    return s_hat, chi_hat, sigma2


def prepare_plugin(eigenvalues, eigenvectors, mean_diff, n1, n2, config: SpikeConfig,
                   spike_estimates=None, sigma2=None, n=None) -> PluginInputs:
    """Collect everything the plug-in estimators need from one sample.

    ``spike_estimates`` optionally maps spike index to ``(s_hat, chi_hat)``;
    otherwise both are estimated from the sample spectrum.
    """
    if n1 < 2 or n2 < 2:
        raise ValueError("each class needs at least two samples")
    a = np.asarray(eigenvalues, dtype=float)
    n = n1 + n2 if n is None else n
    d = np.asarray(mean_diff, dtype=float)
    U = np.asarray(eigenvectors)
    proj_sq = {j: float(np.dot(U[:, j], d) ** 2) for j in config.indices}
    y = a.size / n
    if spike_estimates is None:
        s_hat, chi_hat, sigma2 = estimate_spikes(a, config, y, sigma2)
    else:
        s_hat = {j: float(spike_estimates[j][0]) for j in config.indices}
        chi_hat = {j: float(spike_estimates[j][1]) for j in config.indices}
        if sigma2 is None:
            sigma2 = config.bulk_variance or bulk_variance(a, config, y)
    for j, v in s_hat.items():
        if not v > 0:
            raise ValueError(f"degenerate spike estimate s_hat[{j}] = {v}")
    return PluginInputs(
        eigenvalues=a, spike_proj_sq=proj_sq, mean_diff_sq=float(d @ d), n1=n1, n2=n2, n=n,
        config=config, s_hat=s_hat, chi_hat=chi_hat, sigma2=float(sigma2),
    )


def _plugin_grid(inp: PluginInputs, lams, level_rows):
    """Vectorized plug-in estimates over paired (lam, levels) rows.

    ``lams`` has shape (G,), ``level_rows`` shape (G, r) ordered as
    ``inp.config.indices``. Returns a dict of (G,) arrays.
    """
    idx = list(inp.config.indices)
    a = inp.eigenvalues
    p, y, y1, y2 = inp.p, inp.y, inp.y1, inp.y2
    lams = np.asarray(lams, dtype=float)
    L = np.asarray(level_rows, dtype=float).reshape(lams.size, len(idx))

    bulk_mask = np.ones(p, bool)
    bulk_mask[idx] = False
    ab = a[bulk_mask]
    ulam, inv = np.unique(lams, return_inverse=True)
    rb = 1.0 / (ab[None, :] + ulam[:, None])
    s1 = rb.sum(axis=1)[inv]
    s2 = (rb**2).sum(axis=1)[inv]
    if idx:
        aspk = a[idx][None, :] / (1.0 - L)
        rs = 1.0 / (aspk + lams[:, None])
        s1 = s1 + rs.sum(axis=1)
        s2 = s2 + (rs**2).sum(axis=1)
    m = s1 / p
    mp = s2 / p
    k = 1.0 - y + y * lams * m
    t1 = (1.0 - lams * m) / k
    t2 = (1.0 - lams * m) / k**3 - (lams * m - lams**2 * mp) / k**4
    m1 = 1.0 / (y * k) - y * lams * (m - lams * mp) / (y * k**2) - 1.0 / y

    s_hat = np.array([inp.s_hat[j] for j in idx])
    chi = np.array([inp.chi_hat[j] for j in idx])
    beta = np.array([inp.spike_proj_sq[j] for j in idx]) / (s_hat * chi) if idx else np.zeros(0)
    gamma = float(np.sum((1.0 - s_hat / inp.sigma2) * beta)) + inp.mean_diff_sq / inp.sigma2 - y1 - y2
    rest = gamma - beta.sum()
    if idx:
        gain = L / (1.0 - L)
        s_tilde = (1.0 + gain * chi[None, :]) * s_hat[None, :]
        frac = s_tilde / (s_tilde * k[:, None] + lams[:, None])
        spike_u1 = (beta[None, :] * frac).sum(axis=1)
        spike_u2 = (beta[None, :] * frac**2).sum(axis=1)
    else:
        s_tilde = np.zeros((lams.size, 0))
        spike_u1 = spike_u2 = np.zeros(lams.size)
    u1 = spike_u1 + rest * t1
    # t2 already carries the (1 + y m1) factor; only the spike part needs it
    u2 = (1.0 + y * m1) * spike_u2 + rest * t2
    return dict(m=m, mp=mp, m1=m1, t1=t1, t2=t2, u1=u1, u2=u2, gamma=gamma, beta=beta,
                s_tilde=s_tilde)


def plugin_estimates(inp: PluginInputs, theta: ThetaParams) -> PluginEstimates:
    theta.validate(inp.config)
    idx = list(inp.config.indices)
    row = [[theta.levels.get(j, 0.0) for j in idx]]
    g = _plugin_grid(inp, [theta.lam], row)
    return PluginEstimates(
        t1_hat=float(g["t1"][0]), t2_hat=float(g["t2"][0]), u1_hat=float(g["u1"][0]),
        u2_hat=float(g["u2"][0]), m_hat=float(g["m"][0]), m_prime_hat=float(g["mp"][0]),
        m1_hat=float(g["m1"][0]), gamma=float(g["gamma"]),
        beta={j: float(b) for j, b in zip(idx, g["beta"])},
        s_tilde={j: float(s) for j, s in zip(idx, g["s_tilde"][0])},
        y1_hat=inp.y1, y2_hat=inp.y2, y_hat=inp.y,
    )


def plugin_objective(inp: PluginInputs, lams, level_rows):
    """Plug-in efficacy ratio; -inf where a transformed spike crosses the bulk.

    A small spike amplified past sigma^2 (or a large one shrunk below it)
    is no longer separated from the bulk and the rate approximation stops
    tracking the true error there.
    """
    g = _plugin_grid(inp, lams, level_rows)
    val = efficacy_ratio(g["u1"], g["u2"], g["t2"], inp.y1, inp.y2)
    idx = list(inp.config.indices)
    if idx:
        large = np.array([j in inp.config.large_indices for j in idx])
        st = g["s_tilde"]
        crossed = np.where(large[None, :], st < inp.sigma2, st > inp.sigma2).any(axis=1)
        val = np.where(crossed, -np.inf, val)
    return val


@dataclass(frozen=True)
class SearchConfig:
    lam_grid: tuple = tuple(np.logspace(-3, 1, 32))
    large_levels: tuple = (0.0, -0.25, -0.5, -1.0, -2.0, -4.0)
    small_levels: tuple = (0.0, 0.25, 0.5, 0.75, 0.9)
    polish_sweeps: int = 3
    chunk: int = 200_000
    # full products larger than this switch to tied levels plus per-spike ascent
    max_grid_points: int = 300_000


def _tune(inputs, search: SearchConfig, objective):
    config = inputs[0].config
    for inp in inputs[1:]:
        if inp.config != config:
            raise ValueError("all plug-in inputs must share one spike configuration")
    idx = list(config.indices)
    grids = [sorted(search.lam_grid)]
    for j in idx:
        grids.append(sorted(search.large_levels if j in config.large_indices else search.small_levels))
    if any(len(g) == 0 for g in grids):
        raise ValueError("empty search space")

    def evaluate(rows):
        rows = np.asarray(rows, dtype=float).reshape(-1, 1 + len(idx))
        total = np.zeros(rows.shape[0])
        for inp in inputs:
            total += objective(inp, rows[:, 0], rows[:, 1:])
        return total

    best_val, best_row = -np.inf, None

    def scan(points):
        nonlocal best_val, best_row
        while True:
            chunk = list(itertools.islice(points, search.chunk))
            if not chunk:
                break
            vals = evaluate(chunk)
            # first maximal row in lexicographic order wins ties
            k = int(np.argmax(vals))
            if vals[k] > best_val:
                best_val, best_row = float(vals[k]), list(chunk[k])

    if math.prod(len(g) for g in grids) <= search.max_grid_points:
        scan(itertools.product(*grids))
    else:
        # one shared level per spike group, then per-spike discrete ascent
        large = [j in config.large_indices for j in idx]
        tied = [grids[0], sorted(search.large_levels), sorted(search.small_levels)]
        scan(([lam] + [lv if is_large else sv for is_large in large] for lam, lv, sv in itertools.product(*tied)))
        if best_row is not None:
            for _ in range(search.polish_sweeps):
                start = best_val
                for c in range(1, len(best_row)):
                    base = best_row
                    scan(iter([base[:c] + [v] + base[c + 1 :] for v in grids[c]]))
                if best_val <= start:
                    break
    if best_row is None or not np.isfinite(best_val):
        best_row = [g[0] for g in grids]
        best_val = float(evaluate([best_row])[0])

    # coordinate polish inside the grid's bounding box; log-steps on lam
    lows = [g[0] for g in grids]
    highs = [g[-1] for g in grids]
    steps = [0.5 * np.log(highs[0] / lows[0]) / max(len(grids[0]) - 1, 1)]
    steps += [0.5 * (h - l) / max(len(g) - 1, 1) for g, l, h in zip(grids[1:], lows[1:], highs[1:])]
    for _ in range(search.polish_sweeps):
        for c in range(len(best_row)):
            for direction in (-1.0, 1.0):
                cand = list(best_row)
                if c == 0:
                    cand[0] = best_row[0] * float(np.exp(direction * steps[0]))
                else:
                    cand[c] = best_row[c] + direction * steps[c]
                cand[c] = float(np.clip(cand[c], lows[c], highs[c]))
                val = float(evaluate([cand])[0])
                if val > best_val:
                    best_val, best_row = val, cand
            steps[c] *= 0.5
    theta = ThetaParams(best_row[0], {j: best_row[1 + i] for i, j in enumerate(idx)})
    return theta, best_val


def tune_theta(inp: PluginInputs, search: SearchConfig = SearchConfig(), objective=plugin_objective):
    """Maximize the plug-in efficacy ratio over lam and the spike levels.

    Returns ``(theta, objective_value)``.
    """
    return _tune([inp], search, objective)


def tune_theta_multiclass(pair_inputs, search: SearchConfig = SearchConfig(), objective=plugin_objective):
    """Joint tuning: maximize the sum of pairwise efficacy ratios.

    ``pair_inputs`` holds one :class:`PluginInputs` per ordered class pair.
    """
    pair_inputs = list(pair_inputs)
    if not pair_inputs:
        raise ValueError("multi-class tuning needs at least two classes")
    return _tune(pair_inputs, search, objective)

"""Synthetic two-class Gaussian experiments and the Monte Carlo harness."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from . import theory
from .classify import (
    SedaModel,
    bayes_error,
    conditional_error,
    fit_corrected_seda,
    fit_rlda,
    fit_seda,
    fit_tuned_seda,
    oracle_alpha,
)
from .measures import build_projected_measure, build_spectral_measure
from .spiked import SpikeConfig, estimate_spike_counts
from .theory import SearchConfig, ThetaParams

SCHEMA_VERSION = 1
CSV_HEADER = ["rep", "classifier", "emp_error", "theory_error", "wall_ms"]
CLASSIFIER_KINDS = ("bayes", "rlda", "seda", "seda_corrected", "seda_oracle", "seda_tuned",
                    "seda_tuned_corrected")


@dataclass(frozen=True)
class CovarianceSpec:
    """Population covariance recipe.

    ``eigen_scale`` multiplies chosen eigenvalues (1-based, descending order)
    after construction, e.g. ``{100: 20}`` amplifies the smallest of 100.
    """

    kind: str
    p: int
    rho: float | None = None
    diagonal: tuple | None = None
    matrix: tuple | None = None
    n_fives: int | None = None
    eigen_scale: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Covariance:
    """Matrix plus descending eigen-pairs.

    ``source_rank[k]`` is the current column of the eigenvector that ranked
    k-th (0-based) before any ``eigen_scale`` was applied.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_rank: np.ndarray

    @property
    def factor(self):
        return self.eigenvectors * np.sqrt(self.eigenvalues)

    @property
    def p(self):
        return self.eigenvalues.size


def _case_diagonal(kind, p, n_fives=None):
    if kind == "case1":
        d = np.ones(p)
        d[[0, 1, -1]] = 0.01, 0.05, 10.0
        return d
    n5 = p // 10 if n_fives is None else n_fives
    if p < n5 + 4:
        raise ValueError(f"case2 needs p >= {n5 + 4}")
    d = np.ones(p)
    d[[0, 1]] = 0.01, 0.05
    d[p - 1 - n5 : p - 1] = 5.0
    d[-1] = 20.0
    return d


def make_covariance(spec: CovarianceSpec) -> Covariance:
    """Covariance matrix and its descending eigen-pairs."""
    p = spec.p
    if spec.kind in ("case1", "case2"):
        d = _case_diagonal(spec.kind, p, spec.n_fives)
    elif spec.kind in ("custom-diagonal", "diagonal"):
        d = np.asarray(spec.diagonal, dtype=float)
        if d.size != p:
            raise ValueError("diagonal length does not match p")
    else:
        d = None
    if d is not None:
        order = np.argsort(-d, kind="stable")
        vals, vecs = d[order], np.eye(p)[:, order]
    else:
        if spec.kind == "case3":
            M = np.full((p, p), -1.0 / p)
            np.fill_diagonal(M, 1.0)
        elif spec.kind == "ar1":
            if spec.rho is None or not abs(spec.rho) < 1:
                raise ValueError("ar1 needs |rho| < 1")
            idx = np.arange(p)
            M = spec.rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)
        elif spec.kind in ("custom-dense", "dense"):
            M = np.asarray(spec.matrix, dtype=float)
            if M.shape != (p, p) or not np.allclose(M, M.T):
                raise ValueError("dense covariance must be a symmetric p x p matrix")
        else:
            raise ValueError(f"unknown covariance kind {spec.kind!r}")
        w, V = np.linalg.eigh(M)
        vals, vecs = w[::-1].copy(), V[:, ::-1].copy()
    source_rank = np.arange(p)
    if spec.eigen_scale:
        vals = vals.copy()
        for k, factor in spec.eigen_scale.items():
            vals[int(k) - 1] *= float(factor)
        order = np.argsort(-vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        source_rank = np.argsort(order)
    if np.any(vals <= 0):
        raise ValueError("covariance is not positive definite")
    matrix = (vecs * vals) @ vecs.T
    if d is not None and not spec.eigen_scale:
        matrix = np.diag(d)
    return Covariance(matrix=matrix, eigenvalues=vals, eigenvectors=vecs, source_rank=source_rank)


def szego_approx(rho, p, k):
    """Approximate k-th largest eigenvalue of the AR(1) matrix (rho^|i-j|)."""
    return (1 - rho**2) / (1 + rho**2 - 2 * rho * np.cos(k * np.pi / (p + 1)))


def mahalanobis_target(target):
    """Squared Mahalanobis distance whose Bayes error equals ``target``."""
    if not 0 < target < 0.5:
        raise ValueError(f"target Bayes error must lie in (0, 0.5), got {target}")
    return (2.0 * norm.ppf(target)) ** 2


def calibrate_means(Sigma, direction, target, fixed=None):
    """Scale ``direction`` so that N(mu1, Sigma) vs N(0, Sigma) has Bayes error ``target``.

    Coordinates listed in ``fixed`` (index -> value) keep their value and
    only the remaining coordinates are rescaled.
    """
    delta2 = mahalanobis_target(target)
    r = np.asarray(direction, dtype=float).copy()
    f = np.zeros_like(r)
    for i, v in (fixed or {}).items():
        f[int(i)] = float(v)
        r[int(i)] = 0.0
    if not np.any(r):
        raise ValueError("direction has no free component to rescale")
    Sr = np.linalg.solve(Sigma, r)
    Sf = np.linalg.solve(Sigma, f)
    a, b, c = r @ Sr, 2 * (f @ Sr), f @ Sf - delta2
    disc = b * b - 4 * a * c
    if disc < 0 or c > 0:
        raise ValueError("fixed coordinates alone exceed the target separation")
    scale = (-b + np.sqrt(disc)) / (2 * a)
    return f + scale * r


def sample_gaussian(mu, factor, n, seed):
    """n rows from N(mu, F F^T); ``seed`` is an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    F = np.asarray(factor)
    return np.asarray(mu, dtype=float) + rng.standard_normal((n, F.shape[1])) @ F.T


@dataclass(frozen=True)
class MeanSpec:
    """How mu1 is built before calibration (mu2 is always 0).

    kind: ``random-normal`` (optionally holding ``fixed`` coordinates),
    ``eigvec`` (proportional to the k-th eigenvector, 1-based descending,
    ``k="p"`` for the last) or ``fixed`` (explicit ``values``).
    """

    kind: str = "random-normal"
    k: int | str | None = None
    values: tuple | None = None
    fixed: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    kind: str
    lam: float = 0.1
    large_level: float = 0.0
    small_level: float = 0.0
    spikes: str | tuple = "population"

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    covariance: CovarianceSpec
    mean: MeanSpec
    n1: int
    n2: int
    roster: tuple
    target_bayes_error: float = 0.1
    n_test: int = 0
    replications: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        mahalanobis_target(self.target_bayes_error)
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("each class needs at least two training samples")
        names = [c.name for c in self.roster]
        if len(set(names)) != len(names):
            raise ValueError("classifier names must be unique")

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"expected schema_version {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
        cov = dict(doc["covariance"])
        if "eigen_scale" in cov:
            cov["eigen_scale"] = {int(k): float(v) for k, v in cov["eigen_scale"].items()}
        for key in ("diagonal", "matrix"):
            if cov.get(key) is not None:
                cov[key] = tuple(map(tuple, cov[key])) if key == "matrix" else tuple(cov[key])
        mean = dict(doc.get("mean", {}))
        if "fixed" in mean:
            mean["fixed"] = {int(k): float(v) for k, v in mean["fixed"].items()}
        if mean.get("values") is not None:
            mean["values"] = tuple(mean["values"])
        roster = []
        for c in doc["roster"]:
            c = dict(c)
            if isinstance(c.get("spikes"), list):
                c["spikes"] = tuple(c["spikes"])
            roster.append(ClassifierSpec(**c))
        keys = ("n1", "n2", "target_bayes_error", "n_test", "replications", "base_seed")
        return cls(covariance=CovarianceSpec(**cov), mean=MeanSpec(**mean), roster=tuple(roster),
                   **{k: doc[k] for k in keys if k in doc})

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        doc = {"schema_version": SCHEMA_VERSION, **asdict(self)}
        doc["roster"] = [asdict(c) for c in self.roster]
        return doc

    def with_overrides(self, **kw):
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**doc)


@dataclass
class ResultRow:
    rep: int
    classifier: str
    emp_error: float
    theory_error: float
    wall_ms: float
    cond_error: float = float("nan")
    failure: str = ""


def _finite_mean(v):
    v = v[np.isfinite(v)]
    return float(np.mean(v)) if v.size else float("nan")


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def classifiers(self):
        return list(dict.fromkeys(r.classifier for r in self.rows))

    def column(self, classifier, name="emp_error"):
        return np.array([getattr(r, name) for r in self.rows if r.classifier == classifier])

    def summary(self, name="emp_error"):
        out = {}
        for c in self.classifiers():
            v = self.column(c, name)
            v = v[np.isfinite(v)]
            q = np.quantile(v, [0.05, 0.5, 0.95]) if v.size else [np.nan] * 3
            out[c] = {"mean": float(np.mean(v)) if v.size else np.nan,
                      "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
                      "q05": float(q[0]), "median": float(q[1]), "q95": float(q[2]),
                      "theory": _finite_mean(self.column(c, "theory_error")), "n": int(v.size)}
        return out

    def to_csv(self, fh=None, timing=True):
        """CSV export; ``timing=False`` writes nan wall times so output is byte-reproducible."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.rep, r.classifier, repr(float(r.emp_error)), repr(float(r.theory_error)),
                        repr(float(r.wall_ms)) if timing else "nan"])
        return buf.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, fh):
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return cls([ResultRow(int(r["rep"]), r["classifier"], float(r["emp_error"]),
                              float(r["theory_error"]), float(r["wall_ms"])) for r in reader])


@dataclass(frozen=True)
class Population:
    covariance: Covariance
    mu1: np.ndarray
    mu2: np.ndarray
    g_masses: np.ndarray
    mu_norm_sq: float


def build_population(config: ExperimentConfig) -> Population:
    """Covariance plus calibrated class means; mean draws use their own stream."""
    cov = make_covariance(config.covariance)
    p = cov.p
    spec = config.mean
    if spec.kind == "random-normal":
        direction = np.random.default_rng([config.base_seed, 104729]).standard_normal(p)
    elif spec.kind == "eigvec":
        # k refers to the ranking before any eigen_scale
        k = p if spec.k == "p" else int(spec.k)
        direction = cov.eigenvectors[:, cov.source_rank[k - 1]]
    elif spec.kind == "fixed":
        direction = np.asarray(spec.values, dtype=float)
    else:
        raise ValueError(f"unknown mean kind {spec.kind!r}")
    mu1 = calibrate_means(cov.matrix, direction, config.target_bayes_error, spec.fixed)
    mu2 = np.zeros(p)
    G, mns = build_projected_measure(cov.eigenvalues, cov.eigenvectors, mu1, mu2)
    proj = (cov.eigenvectors.T @ mu1) ** 2 / cov.eigenvalues
    return Population(cov, mu1, mu2, proj / proj.sum(), mns)


def _levels_for(spec: ClassifierSpec, config: SpikeConfig):
    levels = {j: spec.large_level for j in config.large_indices}
    levels.update({j: spec.small_level for j in config.small_indices})
    return levels


def _spike_config(spec: ClassifierSpec, pop: Population, y):
    p = pop.covariance.p
    if spec.spikes == "auto":
        return None
    if spec.spikes == "population":
        r1, r2, _ = estimate_spike_counts(pop.covariance.eigenvalues, y)
        return SpikeConfig.from_counts(p, r1, r2)
    r1, r2 = spec.spikes
    return SpikeConfig.from_counts(p, int(r1), int(r2))


def _theory(spec, model, pop, y1, y2):
    if spec.kind == "bayes":
        return bayes_error(pop.mu1, pop.mu2, pop.covariance.matrix)
    s = pop.covariance.eigenvalues
    if spec.kind == "rlda":
        H = build_spectral_measure(s)
        G, mns = build_projected_measure(s, pop.covariance.eigenvectors, pop.mu1, pop.mu2)
        return theory.rlda_rate(H, G, mns, y1, y2, model.theta.lam)
    rate = theory.seda_rate if spec.kind in ("seda", "seda_tuned") else theory.corrected_seda_rate
    return rate(s, pop.g_masses, pop.mu_norm_sq, model.theta, model.spike_config, y1, y2)


def _fit(spec: ClassifierSpec, X1, X2, pop: Population, y, search):
    if spec.kind == "bayes":
        S = pop.covariance.matrix
        w = np.linalg.solve(S, pop.mu1 - pop.mu2)
        return SedaModel(kind="bayes", direction=w, midpoint=0.5 * (pop.mu1 + pop.mu2), alpha=0.0,
                         theta=ThetaParams(1.0), spike_config=SpikeConfig(), eigenvalues=np.zeros(0))
    if spec.kind == "rlda":
        return fit_rlda(X1, X2, spec.lam)
    config = _spike_config(spec, pop, y)
    if spec.kind in ("seda_tuned", "seda_tuned_corrected"):
        return fit_tuned_seda(X1, X2, config, search, corrected=spec.kind == "seda_tuned_corrected")
    if config is None:
        probe = fit_seda(X1, X2, ThetaParams(spec.lam), None)
        config = probe.spike_config
    theta = ThetaParams(spec.lam, _levels_for(spec, config))
    if spec.kind == "seda":
        return fit_seda(X1, X2, theta, config)
    if spec.kind == "seda_corrected":
        return fit_corrected_seda(X1, X2, theta, config)
    model = fit_seda(X1, X2, theta, config)
    return model.with_alpha(oracle_alpha(model, pop.mu1, pop.mu2), "seda_oracle")


def _test_error(model, T1, T2):
    return 0.5 * (np.mean(model.predict(T1) != model.labels[0]) + np.mean(model.predict(T2) != model.labels[1]))


def run_replication(config: ExperimentConfig, pop: Population, rep: int, search=SearchConfig()):
    rng = np.random.default_rng(config.base_seed + rep)
    F = pop.covariance.factor
    X1 = sample_gaussian(pop.mu1, F, config.n1, rng)
    X2 = sample_gaussian(pop.mu2, F, config.n2, rng)
    T1 = T2 = None
    if config.n_test > 0:
        T1 = sample_gaussian(pop.mu1, F, config.n_test, rng)
        T2 = sample_gaussian(pop.mu2, F, config.n_test, rng)
    p = pop.covariance.p
    y1, y2 = p / config.n1, p / config.n2
    y = p / (config.n1 + config.n2)
    rows = []
    for spec in config.roster:
        t0 = time.perf_counter()
        try:
            model = _fit(spec, X1, X2, pop, y, search)
            cond = conditional_error(model, pop.mu1, pop.mu2, pop.covariance.matrix)
            emp = cond if T1 is None else _test_error(model, T1, T2)
            wall = (time.perf_counter() - t0) * 1e3
            try:
                th = _theory(spec, model, pop, y1, y2)
            except (ValueError, ArithmeticError):
                th = float("nan")
            rows.append(ResultRow(rep, spec.name, float(emp), float(th), wall, cond))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            wall = (time.perf_counter() - t0) * 1e3
            rows.append(ResultRow(rep, spec.name, float("nan"), float("nan"), wall, failure=str(exc)))
    return rows


def run_experiment(config: ExperimentConfig, threads=1, search=SearchConfig()) -> ResultTable:
    """Run every replication; rows are ordered by replication, then roster.

    Replication r draws its data from ``default_rng(base_seed + r)``; with
    ``n_test == 0`` the empirical error is the exact conditional error of
    the fitted rule instead of a test-set estimate.
    """
    pop = build_population(config)
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda r: run_replication(config, pop, r, search), reps))
    else:
        chunks = [run_replication(config, pop, r, search) for r in reps]
    return ResultTable([row for chunk in chunks for row in chunk])

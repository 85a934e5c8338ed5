"""Bayes, RLDA, SEDA and corrected-SEDA classifiers plus multi-class SEDA."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np
from scipy.stats import norm

from . import spiked, theory
from .spiked import SpikeConfig
from .theory import ThetaParams

FORMAT_VERSION = 1


def bayes_classify(x, mu1, mu2, Sigma):
    """1 if x falls on the class-1 side of the Bayes boundary, else 2."""
    w = _spd_solve(Sigma, np.asarray(mu1, float) - np.asarray(mu2, float))
    stat = (np.atleast_2d(x) - 0.5 * (np.asarray(mu1) + np.asarray(mu2))) @ w
    labels = np.where(stat > 0, 1, 2)
    return int(labels[0]) if np.ndim(x) == 1 else labels


def bayes_error(mu1, mu2, Sigma):
    delta = np.asarray(mu1, float) - np.asarray(mu2, float)
    if not np.any(delta):
        return 0.5
    return float(norm.cdf(-0.5 * np.sqrt(delta @ _spd_solve(Sigma, delta))))


def _spd_solve(Sigma, b):
    try:
        c = np.linalg.cholesky(np.asarray(Sigma, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance matrix is not positive definite") from exc
    return np.linalg.solve(c.T, np.linalg.solve(c, b))


def _eigh_desc(M):
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    vals = np.clip(vals[::-1], 0.0, None)
    return vals, vecs[:, ::-1]


def pooled_covariance(X1, X2):
    """Pooled sample covariance with divisor n1 + n2 - 2."""
    R = np.vstack([X1 - X1.mean(axis=0), X2 - X2.mean(axis=0)])
    return R.T @ R / (len(X1) + len(X2) - 2)


@dataclass(frozen=True)
class SedaModel:
    """Fitted binary classifier.

    Predicts ``labels[0]`` iff ``w.(x - midpoint) + alpha > 0``.
    """

    kind: str
    direction: np.ndarray
    midpoint: np.ndarray
    alpha: float
    theta: ThetaParams
    spike_config: SpikeConfig
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray | None = field(repr=False, default=None)
    labels: tuple = (1, 2)
    n1: int = 0
    n2: int = 0

    @property
    def p(self):
        return self.direction.size

    @property
    def intercept(self):
        return float(-self.direction @ self.midpoint)

    def decision_function(self, X):
        return (np.atleast_2d(X) - self.midpoint) @ self.direction + self.alpha

    def predict(self, X):
        stat = self.decision_function(X)
        return np.where(stat > 0, self.labels[0], self.labels[1])

    def with_alpha(self, alpha, kind=None):
        return replace(self, alpha=float(alpha), kind=kind or self.kind)


def _fit_direction(X1, X2, theta, config, kind, labels):
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    n1, n2 = len(X1), len(X2)
    if n1 < 2 or n2 < 2:
        raise ValueError("each class needs at least two samples")
    p = X1.shape[1]
    a, U = _eigh_desc(pooled_covariance(X1, X2))
    if config is None:
        r1, r2, _ = spiked.estimate_spike_counts(a, p / (n1 + n2)) if p >= 4 else (0, 0, None)
        config = SpikeConfig.from_counts(p, r1, r2)
    if config.r1 + config.r2 >= min(p, n1 + n2) - 1 and config.indices:
        raise ValueError("too many spikes for the sample size")
    theta.validate(config)
    xbar1, xbar2 = X1.mean(axis=0), X2.mean(axis=0)
    shrink = np.ones(p)
    for j, ell in theta.levels.items():
        shrink[j] = 1.0 - ell
    # (S + lam I)^{-1} in the eigenbasis of S, I = I - sum l_j u_j u_j^T
    w = U @ ((U.T @ (xbar1 - xbar2)) / (a + theta.lam * shrink))
    return SedaModel(kind=kind, direction=w, midpoint=0.5 * (xbar1 + xbar2), alpha=0.0, theta=theta,
                     spike_config=config, eigenvalues=a, eigenvectors=U, labels=tuple(labels),
                     n1=n1, n2=n2)


def fit_rlda(X1, X2, lam, labels=(1, 2)) -> SedaModel:
    return _fit_direction(X1, X2, ThetaParams(lam), SpikeConfig(), "rlda", labels)


def fit_seda(X1, X2, theta: ThetaParams, config: SpikeConfig | None = None, labels=(1, 2)) -> SedaModel:
    """SEDA with the given levels; spike counts are estimated when ``config`` is None."""
    return _fit_direction(X1, X2, theta, config, "seda", labels)


def fit_corrected_seda(X1, X2, theta, config=None, labels=(1, 2)) -> SedaModel:
    model = fit_seda(X1, X2, theta, config, labels)
    alpha = theory.alpha_hat(model.eigenvalues, model.theta, model.n1, model.n2)
    return model.with_alpha(alpha, "seda_corrected")


def oracle_alpha(model: SedaModel, mu1, mu2):
    """Intercept shift that makes the boundary optimal for the fitted direction."""
    centre = 0.5 * (np.asarray(mu1, float) + np.asarray(mu2, float))
    return float(-(centre - model.midpoint) @ model.direction)


def plugin_inputs(model: SedaModel, X1, X2, spike_estimates=None):
    d = np.mean(X1, axis=0) - np.mean(X2, axis=0)
    return theory.prepare_plugin(model.eigenvalues, model.eigenvectors, d, model.n1, model.n2,
                                 model.spike_config, spike_estimates)


def fit_tuned_seda(X1, X2, config=None, search=theory.SearchConfig(), corrected=False, labels=(1, 2)):
    """Fit SEDA with theta chosen by the plug-in efficacy maximizer."""
    base = fit_seda(X1, X2, ThetaParams(1.0), config, labels)
    theta, _ = theory.tune_theta(plugin_inputs(base, X1, X2), search)
    fit = fit_corrected_seda if corrected else fit_seda
    return fit(X1, X2, theta, base.spike_config, labels)


def conditional_error(model: SedaModel, mu1, mu2, Sigma):
    """Exact error of the fitted rule under N(mu_i, Sigma) classes with equal priors."""
    w = model.direction
    sd = np.sqrt(w @ np.asarray(Sigma) @ w)
    if not sd > 0:
        raise ValueError("zero discriminant direction")
    two_mid = 2 * model.midpoint
    total = 0.0
    for i, mu in ((1, mu1), (2, mu2)):
        num = w @ (2 * np.asarray(mu, float) - two_mid) + 2 * model.alpha
        total += norm.cdf((-1) ** i * num / (2 * sd))
    return 0.5 * float(total)


@dataclass(frozen=True)
class MulticlassModel:
    projector: np.ndarray
    centroids: np.ndarray
    scales: np.ndarray
    theta: ThetaParams
    labels: tuple
    spike_config: SpikeConfig = SpikeConfig()

    def transform(self, X):
        return np.atleast_2d(X) @ self.projector

    def predict(self, X):
        Z = self.transform(X) * self.scales
        C = self.centroids * self.scales
        dist = ((Z[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        return np.asarray(self.labels, dtype=object)[np.argmin(dist, axis=1)]


def within_between_scatter(Xs):
    n = sum(len(X) for X in Xs)
    means = [np.mean(X, axis=0) for X in Xs]
    grand = np.vstack(Xs).mean(axis=0)
    R = np.vstack([X - m for X, m in zip(Xs, means)])
    Sw = R.T @ R / n
    D = np.array([np.sqrt(len(X) / n) * (m - grand) for X, m in zip(Xs, means)])
    Sb = D.T @ D
    return Sw, Sb, means


def fit_multiclass(Xs, theta: ThetaParams, config: SpikeConfig | None = None, labels=None) -> MulticlassModel:
    """Project onto the top K-1 eigenvectors of (S_w + lam I)^{-1} S_b."""
    Xs = [np.asarray(X, dtype=float) for X in Xs]
    K = len(Xs)
    if K < 2:
        raise ValueError("need at least two classes")
    if any(len(X) < 2 for X in Xs):
        raise ValueError("each class needs at least two samples")
    p = Xs[0].shape[1]
    if K - 1 > p:
        raise ValueError(f"cannot project {K} classes into {K - 1} > p={p} dimensions")
    labels = tuple(range(1, K + 1)) if labels is None else tuple(labels)
    n = sum(len(X) for X in Xs)
    Sw, Sb, means = within_between_scatter(Xs)
    a, U = _eigh_desc(Sw)
    if config is None:
        r1, r2, _ = spiked.estimate_spike_counts(a, p / n) if p >= 4 else (0, 0, None)
        config = SpikeConfig.from_counts(p, r1, r2)
    theta.validate(config)
    shrink = np.ones(p)
    for j, ell in theta.levels.items():
        shrink[j] = 1.0 - ell
    diag = a + theta.lam * shrink  # eigenvalues of S_w + lam I, eigenvectors U
    inv_sqrt = (U / np.sqrt(diag)) @ U.T
    M = inv_sqrt @ Sb @ inv_sqrt
    _, Z = _eigh_desc(M)
    W = inv_sqrt @ Z[:, : K - 1]
    W = W / np.linalg.norm(W, axis=0)
    A = (U * diag) @ U.T
    scales = 1.0 / np.sqrt(np.einsum("ik,ij,jk->k", W, A, W))
    centroids = np.array([m @ W for m in means])
    return MulticlassModel(projector=W, centroids=centroids, scales=scales, theta=theta, labels=labels,
                           spike_config=config)


def multiclass_plugin_inputs(Xs, config: SpikeConfig | None = None):
    """Pairwise plug-in inputs (one per ordered class pair) sharing S_w."""
    Xs = [np.asarray(X, dtype=float) for X in Xs]
    p = Xs[0].shape[1]
    n = sum(len(X) for X in Xs)
    Sw, _, means = within_between_scatter(Xs)
    a, U = _eigh_desc(Sw)
    if config is None:
        r1, r2, _ = spiked.estimate_spike_counts(a, p / n)
        config = SpikeConfig.from_counts(p, r1, r2)
    sigma2 = theory.bulk_variance(a, config, p / n)
    s_hat, chi_hat, _ = theory.estimate_spikes(a, config, p / n, sigma2)
    est = {j: (s_hat[j], chi_hat[j]) for j in config.indices}
    return [
        theory.prepare_plugin(a, U, means[i] - means[k], len(Xs[i]), len(Xs[k]), config,
                              spike_estimates=est, sigma2=sigma2, n=n)
        for i, k in permutations(range(len(Xs)), 2)
    ], config


def _encode(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(obj):
    return np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8").reshape(obj["shape"]).copy()


def _label(v):
    return v.item() if isinstance(v, np.generic) else v


def model_to_dict(model):
    theta = {"lambda": model.theta.lam, "levels": {str(j): l for j, l in model.theta.levels.items()}}
    spikes = {"large": list(model.spike_config.large_indices), "small": list(model.spike_config.small_indices)}
    if isinstance(model, MulticlassModel):
        return {"version": FORMAT_VERSION, "kind": "multiclass", "p": int(model.projector.shape[0]),
                "labels": [_label(v) for v in model.labels], "theta": theta, "spikes": spikes,
                "projector": _encode(model.projector), "centroids": _encode(model.centroids),
                "scales": _encode(model.scales)}
    return {"version": FORMAT_VERSION, "kind": model.kind, "p": model.p,
            "labels": [_label(v) for v in model.labels], "theta": theta, "spikes": spikes,
            "direction": _encode(model.direction), "midpoint": _encode(model.midpoint),
            "intercept": model.intercept, "alpha": model.alpha, "n1": model.n1, "n2": model.n2}


def model_from_dict(doc):
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    theta = ThetaParams(doc["theta"]["lambda"], {int(j): l for j, l in doc["theta"]["levels"].items()})
    config = SpikeConfig(doc["spikes"]["large"], doc["spikes"]["small"])
    if doc["kind"] == "multiclass":
        return MulticlassModel(projector=_decode(doc["projector"]), centroids=_decode(doc["centroids"]),
                               scales=_decode(doc["scales"]), theta=theta, labels=tuple(doc["labels"]),
                               spike_config=config)
    if doc["kind"] not in ("rlda", "seda", "seda_corrected"):
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    direction = _decode(doc["direction"])
    return SedaModel(kind=doc["kind"], direction=direction, midpoint=_decode(doc["midpoint"]),
                     alpha=float(doc["alpha"]), theta=theta, spike_config=config,
                     eigenvalues=np.zeros(0), labels=tuple(doc["labels"]),
                     n1=int(doc.get("n1", 0)), n2=int(doc.get("n2", 0)))


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

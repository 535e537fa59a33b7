"""Selective prediction: feature-space uncertainty scores and threshold selection.

Scores follow the convention "larger = more uncertain"; an input is accepted
iff score <= tau, where tau is the 95% quantile of the val scores. GMM scores
are negative log-densities (a strictly increasing transform of the negative
density, so accept/reject decisions are unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statkit import QuantileMode, empirical_quantile, log_sum_exp, substream

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmModel:
    weights: np.ndarray         # (k,) mixture weights on the simplex
    means: np.ndarray           # (k, d)
    covariances: np.ndarray     # (k, d, d), SPD after ridge
    fit_log: list = field(default_factory=list)  # per-iteration train log-likelihood

    @property
    def k(self) -> int:
        return self.weights.size


def _component_log_pdf(X, mean, cov):
    d = mean.size
    chol = np.linalg.cholesky(cov)
    diff = X - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol * sol, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * _LOG_2PI + log_det + maha)


def _log_prob_matrix(model: GmmModel, X):
    cols = [np.log(model.weights[j]) + _component_log_pdf(X, model.means[j], model.covariances[j])
            for j in range(model.k)]
    return np.column_stack(cols)


def _ridge(cov, d, floor=0.0):
    # floor keeps the ridge positive when a component collapses to zero
    # covariance (all responsibility drained away), which would otherwise
    # make the Cholesky factorization fail
    return 1e-6 * max(np.trace(cov) / d, floor, 1e-12) * np.eye(d)


def _kmeanspp_means(X, k, rng):
    n = X.shape[0]
    means = [X[rng.integers(n)]]
    for _ in range(k - 1):
        dist2 = np.min([np.sum((X - m) ** 2, axis=1) for m in means], axis=0)
        total = dist2.sum()
        if total <= 0.0:
            means.append(X[rng.integers(n)])
            continue
        means.append(X[rng.choice(n, p=dist2 / total)])
    return np.array(means)


def fit_gmm(features, k: int = 4, seed: int = 0, max_iter: int = 200,
            tol_per_point: float = 1e-7) -> GmmModel:
    """Full-covariance GMM via EM with log-domain responsibilities.

    k-means++-style seeding from the seed substream; stops when the
    log-likelihood gain drops below tol_per_point * n or after max_iter
    iterations. A ridge of 1e-6 * max(trace(C)/d, overall feature variance)
    is added to each covariance every M-step so collapsed components stay
    positive definite.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    n, d = X.shape
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")

    rng = substream(seed, "gmm-init")
    means = _kmeanspp_means(X, k, rng)
    # hard-assignment M-step as initialization
    dist2 = np.sum((X[:, None, :] - means[None, :, :]) ** 2, axis=2)
    assign = np.argmin(dist2, axis=1)
    weights = np.empty(k)
    covariances = np.empty((k, d, d))
    global_cov = np.cov(X.T, bias=True).reshape(d, d)
    scale = np.trace(global_cov) / d
    for j in range(k):
        mask = assign == j
        weights[j] = max(mask.sum(), 1) / n
        if mask.sum() >= 2:
            cov = np.cov(X[mask].T, bias=True).reshape(d, d)
        else:
            cov = global_cov.copy()
        covariances[j] = cov + _ridge(cov, d, floor=scale)
    weights /= weights.sum()
    model = GmmModel(weights=weights, means=means, covariances=covariances)

    prev_ll = -np.inf
    prev_params = None
    for _ in range(max_iter):
        log_prob = _log_prob_matrix(model, X)
        norm = log_sum_exp(log_prob, axis=1)
        ll = float(np.sum(norm))
        if ll < prev_ll:
            # the covariance ridge can nudge a converged fit marginally
            # downhill; keep the better previous parameters instead
            model.weights, model.means, model.covariances = prev_params
            break
        model.fit_log.append(ll)
        if ll - prev_ll < tol_per_point * n:
            break
        prev_ll = ll
        prev_params = (model.weights.copy(), model.means.copy(),
                       model.covariances.copy())
        resp = np.exp(log_prob - norm[:, None])
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        model.weights = nk / n
        model.weights /= model.weights.sum()
        model.means = (resp.T @ X) / nk[:, None]
        for j in range(k):
            diff = X - model.means[j]
            cov = (diff * resp[:, j:j + 1]).T @ diff / nk[j]
            model.covariances[j] = cov + _ridge(cov, d, floor=scale)
    return model


def gmm_log_density(model: GmmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.means.shape[1]:
        raise ValueError("feature dimension mismatch")
    log_prob = _log_prob_matrix(model, X)
    return log_sum_exp(log_prob, axis=1)


def gmm_score(model: GmmModel, feature) -> float:
    """Uncertainty score -log p(g(x)) for a single feature vector."""
    return float(gmm_log_density(model, feature)[0] * -1.0)


def gmm_scores(model: GmmModel, X) -> np.ndarray:
    return -gmm_log_density(model, X)


def ensemble_gmm_scores(models, features_per_member) -> np.ndarray:
    """-log of the mean member density, -log((1/M) sum_i p_i(g_i(x)))."""
    if len(models) != len(features_per_member):
        raise ValueError("one feature matrix per member GMM required")
    log_p = np.stack([gmm_log_density(m, f) for m, f in zip(models, features_per_member)])
    return -(log_sum_exp(log_p, axis=0) - np.log(len(models)))


def ensemble_gmm_score(models, features_per_member) -> float:
    return float(ensemble_gmm_scores(models, [np.atleast_2d(f) for f in features_per_member])[0])


@dataclass
class KnnScorer:
    """Exact brute-force average distance to the k nearest reference rows."""

    reference: np.ndarray
    k: int = 10
    metric: str = "cosine"

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=float)
        if self.reference.ndim != 2:
            raise ValueError("reference must be a 2-D matrix")
        if not np.all(np.isfinite(self.reference)):
            raise ValueError("non-finite reference rows")
        if not 1 <= self.k <= self.reference.shape[0]:
            raise ValueError("k must be in 1..n_reference")
        if self.metric not in ("cosine", "l2"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "cosine":
            norms = np.linalg.norm(self.reference, axis=1)
            if np.any(norms == 0.0):
                raise ValueError("undefined cosine distance")
            self._unit_ref = self.reference / norms[:, None]

    def score(self, X, chunk: int = 512) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.reference.shape[1]:
            raise ValueError("feature dimension mismatch")
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], chunk):
            block = X[start:start + chunk]
            if self.metric == "cosine":
                norms = np.linalg.norm(block, axis=1)
                if np.any(norms == 0.0):
                    raise ValueError("undefined cosine distance")
                dist = 1.0 - (block / norms[:, None]) @ self._unit_ref.T
            else:
                # row-at-a-time differences: exact (no cancellation from the
                # expanded dot-product form) and memory stays O(n_reference * d)
                dist = np.empty((block.shape[0], self.reference.shape[0]))
                for i, row in enumerate(block):
                    dist[i] = np.sqrt(np.sum((row - self.reference) ** 2, axis=1))
            nearest = np.partition(dist, self.k - 1, axis=1)[:, :self.k]
            nearest.sort(axis=1)  # fix summation order for reproducible means
            out[start:start + chunk] = nearest.mean(axis=1)
        return out


def knn_score(scorer: KnnScorer, feature) -> float:
    return float(scorer.score(feature)[0])


def variance_score(sigma2) -> float:
    """Predictive-variance passthrough."""
    return float(sigma2)


def ensemble_variance_scores(mus) -> np.ndarray:
    """Population variance of member means (axis 0 = member)."""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    mu_hat = mus.mean(axis=0)
    return np.mean((mu_hat - mus) ** 2, axis=0)


def ensemble_variance_score(mus) -> float:
    return float(ensemble_variance_scores(np.asarray(mus, dtype=float)[:, None])[0])


@dataclass
class Threshold:
    tau: float
    quantile: float = 0.95
    source: str = "val_quantile"


def select_threshold(val_scores, quantile: float = 0.95) -> Threshold:
    """tau = conformal empirical quantile of val scores; accept iff score <= tau."""
    val_scores = np.asarray(val_scores, dtype=float)
    if val_scores.size == 0:
        raise ValueError("empty sample")
    tau = empirical_quantile(val_scores, quantile, QuantileMode.CONFORMAL)
    return Threshold(tau=tau, quantile=quantile)


def accept_mask(scores, threshold: Threshold) -> np.ndarray:
    return np.asarray(scores, dtype=float) <= threshold.tau

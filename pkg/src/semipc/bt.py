"""Covariate-adjusted Bradley-Terry baseline.

``P(head wins) = sigmoid(theta_head - theta_tail + s * x0 + z' eta)`` with the
special regressor entering as a fixed offset of coefficient ``s``.  Fitted by
damped Newton on the concave log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.special import expit, log_expit

from .core import DataError, Dataset
from .design import DesignOperator

SEPARATION_BOUND = 30.0


class SeparationError(DataError):
    """Some merit estimate diverges (complete or quasi-complete separation)."""


@dataclass(frozen=True)
class BtFitResult:
    theta_mle: NDArray[np.float64]
    eta_mle: NDArray[np.float64]
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    loglik_path: list[float] = field(default_factory=list, repr=False)


def design_matrix(dataset: Dataset) -> sp.csr_matrix:
    """Sparse record-level design ``[e_head - e_tail (reference dropped) | z]``."""
    r, n = dataset.n_records, dataset.n
    rows = np.concatenate([np.arange(r), np.arange(r)])
    cols = np.concatenate([dataset.head, dataset.tail])
    vals = np.concatenate([np.ones(r), -np.ones(r)])
    inc = sp.coo_matrix((vals, (rows, cols)), shape=(r, n + 1)).tocsr()[:, 1:]
    return sp.hstack([inc, sp.csr_matrix(dataset.z)], format="csr")


def loglik(x: sp.csr_matrix, offset: NDArray, a: NDArray, beta: NDArray) -> float:
    mu = x @ beta + offset
    return float(np.sum(a * log_expit(mu) + (1 - a) * log_expit(-mu)))


def fit_bt_mle(dataset: Dataset, *, tol: float = 1e-8, max_iter: int = 200) -> BtFitResult:
    """Maximum likelihood with the special regressor coefficient fixed at ``special_sign``."""
    DesignOperator.from_dataset(dataset).check_connected()
    x = design_matrix(dataset)
    offset = dataset.schema.special_sign * dataset.x0
    a = dataset.outcome.astype(float)
    n, k = dataset.n, x.shape[1]
    beta = np.zeros(k)
    ll = loglik(x, offset, a, beta)
    path = [ll]
    grad = x.T @ (a - expit(x @ beta + offset))
    converged = bool(np.max(np.abs(grad), initial=0.0) < tol)
    it = 0
    while not converged and it < max_iter:
        it += 1
        prob = expit(x @ beta + offset)
        w = prob * (1 - prob)
        hess = (x.T @ sp.diags(w) @ x).toarray()
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # near the optimum the log-likelihood is flat to round-off, so a step
        # that loses less than that still counts as non-decreasing
        slack = 1e-12 * max(abs(ll), 1.0)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = loglik(x, offset, a, cand)
            if ll_new >= ll - slack or t < 1e-10:
                break
            t *= 0.5
        if ll_new < ll - slack:
            break
        beta, ll = cand, ll_new
        path.append(ll)
        if np.max(np.abs(beta[:n]), initial=0.0) > SEPARATION_BOUND:
            raise SeparationError("merit estimates diverge; outcomes are (quasi-)separated")
        grad = x.T @ (a - expit(x @ beta + offset))
        converged = bool(np.max(np.abs(grad)) < tol)
    return BtFitResult(
        theta_mle=beta[:n],
        eta_mle=beta[n:],
        loglik=ll,
        iterations=it,
        converged=converged,
        gradient_norm=float(np.max(np.abs(grad), initial=0.0)),
        loglik_path=path,
    )


def win_probability(theta_full: NDArray, eta: NDArray, head: int, tail: int, x0: float, z: NDArray, sign: int = 1) -> float:
    return float(expit(theta_full[head] - theta_full[tail] + sign * x0 + np.dot(z, eta)))

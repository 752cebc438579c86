"""Kernel-based least squares for merits and covariate effects.

Outcomes are turned into pseudo-outcomes ``(a - I(x0 > 0)) / f(x0 | z)``,
averaged within each pair, and regressed on the merit design and the
pair-averaged covariates.  The covariate effects come from the projected
(partialled-out) regression; merits follow from the residual.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .core import Dataset, IdentifiabilityError
from .density import (
    DEFAULT_DELTAS,
    DEFAULT_FLOOR,
    BandwidthSelection,
    DensityModel,
    select_bandwidth,
)
from .design import DesignOperator


class CollinearityError(IdentifiabilityError):
    """Projected covariate Gram matrix is numerically singular."""


@dataclass(frozen=True)
class PseudoOutcomeVector:
    ybreve: NDArray[np.float64]
    zbar: NDArray[np.float64]
    counts: NDArray[np.intp]
    yhat: NDArray[np.float64] = field(repr=False)


def pseudo_outcomes(
    outcome: NDArray, x0: NDArray[np.float64], dens: NDArray[np.float64]
) -> NDArray[np.float64]:
    return (np.asarray(outcome, dtype=float) - (np.asarray(x0) > 0)) / np.asarray(dens, dtype=float)


def build_pseudo_outcomes(
    dataset: Dataset, density: DensityModel | NDArray[np.float64]
) -> PseudoOutcomeVector:
    """Per-pair means of the pseudo-outcomes and covariates, in pair order.

    ``density`` is either a fitted model or precomputed per-record densities.
    """
    if isinstance(density, DensityModel):
        dens, _ = density.record_densities(dataset)
    else:
        dens = np.asarray(density, dtype=float)
        if dens.shape != (dataset.n_records,):
            raise ValueError("need one density value per record")
    if np.any(dataset.counts <= 0):
        raise RuntimeError("pair index lists a pair without comparisons")
    yhat = pseudo_outcomes(dataset.outcome, dataset.x0, dens)
    if not np.isfinite(yhat).all():
        raise ValueError("non-finite pseudo-outcome; density values must be positive")
    return PseudoOutcomeVector(
        dataset.pair_means(yhat), dataset.pair_means(dataset.z), dataset.counts, yhat
    )


@dataclass(frozen=True)
class FitDiagnostics:
    mode: str
    bandwidth: float | None
    lambda_min: float
    floor_hits: int
    n_records: int
    n_pairs: int
    residual_dof: int
    variance_unreliable: bool
    weighted: bool
    covariates: str = "pair"
    variance_note: str = "observable pair residuals plugged in for both covariance terms"
    bandwidth_selection: BandwidthSelection | None = field(default=None, repr=False)


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: NDArray[np.float64]
    eta_hat: NDArray[np.float64]
    se_theta: NDArray[np.float64]
    se_eta: NDArray[np.float64]
    ci_level: float
    ci_theta: NDArray[np.float64]
    ci_eta: NDArray[np.float64]
    p_eta: NDArray[np.float64]
    ranks: NDArray[np.intp]
    diagnostics: FitDiagnostics
    special_sign: int
    labels: tuple[str, ...] | None = None
    eta_names: tuple[str, ...] = ()
    residuals: NDArray[np.float64] = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def theta_full(self) -> NDArray[np.float64]:
        return np.concatenate([[0.0], self.theta_hat])

    @property
    def p_theta(self) -> NDArray[np.float64]:
        return _two_sided_p(self.theta_hat, self.se_theta)


@dataclass(frozen=True)
class ResidualVariances:
    xi_sq: NDArray[np.float64]
    tau_sq: NDArray[np.float64]
    cov_eta: NDArray[np.float64]
    var_theta: NDArray[np.float64]

    @property
    def se_eta(self) -> NDArray[np.float64]:
        return np.sqrt(np.clip(np.diag(self.cov_eta), 0.0, None))

    @property
    def se_theta(self) -> NDArray[np.float64]:
        return np.sqrt(np.clip(self.var_theta, 0.0, None))


def _two_sided_p(est: NDArray[np.float64], se: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore", invalid="ignore"):
        zstat = np.abs(est) / se
    return np.where(se > 0, 2.0 * stats.norm.sf(zstat), np.nan)


def _gram_check(a: NDArray[np.float64], raw_scale: float = 0.0) -> float:
    """Smallest eigenvalue of ``a``; raises when it is negligible next to ``trace(a)``.

    ``raw_scale`` (the unprojected sum of squares) guards the case where the
    projection annihilates everything and the trace itself is round-off.
    """
    eig = np.linalg.eigvalsh(a)
    if eig[0] <= 1e-10 * max(np.trace(a), raw_scale, 1e-300):
        raise CollinearityError(
            "projected covariate Gram matrix is singular: covariates lie (nearly) in "
            "the span of the merit design"
        )
    return float(eig[0])


def solve_least_squares(
    op: DesignOperator,
    zbar: NDArray[np.float64],
    y: NDArray[np.float64],
    weights: NDArray[np.float64] | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``argmin ||y - U theta - Zbar eta||^2``: closed form on complete designs, Laplacian otherwise."""
    if op.mode == "closed_form" and weights is None:
        if zbar.shape[1]:
            dz = op.d_apply(zbar)
            a = op.projected_gram(zbar)
            _gram_check(a, float(np.sum(zbar * zbar)))
            eta = np.linalg.solve(a, dz.T @ y)
        else:
            eta = np.zeros(0)
        theta = op.v_inverse_apply(op.u_transpose_apply(y - zbar @ eta))
        return theta, eta
    return op.solve_normal_equations(zbar, y, weights)


def sandwich_variance(
    op: DesignOperator,
    zbar: NDArray[np.float64],
    residuals: NDArray[np.float64],
    weights: NDArray[np.float64] | None = None,
) -> ResidualVariances:
    """Heteroskedasticity-robust covariance of the covariate effects and merit variances.

    ``Var(eta) = A^-1 (DZ)' S (DZ) A^-1`` with ``A = Z'DZ`` and
    ``S = diag(residual^2)``; ``Var(theta_i) = [V^-1 U' S U V^-1]_ii``.
    """
    xi_sq = np.asarray(residuals, dtype=float) ** 2
    p = zbar.shape[1]
    if p:
        w = np.ones(op.n_pairs) if weights is None else np.asarray(weights, dtype=float)
        dz = op.project_out(zbar, weights)
        a = zbar.T @ (w[:, None] * dz)
        a = (a + a.T) / 2
        wdz = w[:, None] * dz
        meat = wdz.T @ (xi_sq[:, None] * wdz)
        ainv = np.linalg.inv(a)
        cov_eta = ainv @ meat @ ainv
        cov_eta = (cov_eta + cov_eta.T) / 2
    else:
        cov_eta = np.zeros((0, 0))
    var_theta = op.theta_sandwich_diag(xi_sq, weights)
    return ResidualVariances(xi_sq, xi_sq, cov_eta, var_theta)


def solve_record_level(
    op: DesignOperator,
    dataset: Dataset,
    y_records: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64] | None]:
    """Least squares on the stacked record rows ``y_ijt ~ theta_i - theta_j + z_ijt' eta``.

    Keeps within-pair covariate variation that the pair-averaged fit discards.
    Returns ``(theta, eta, projected record covariates, pair weights)``.
    """
    counts = dataset.counts.astype(float)
    weights = None if np.all(counts == counts[0]) else counts
    zbar = dataset.pair_means(dataset.z)
    ybar = dataset.pair_means(y_records)
    pr = dataset.pair_of_record
    if dataset.schema.p:
        dzbar = op.project_out(zbar, weights)
        d_rec = dataset.z - zbar[pr] + dzbar[pr]
        a = d_rec.T @ d_rec
        _gram_check(a, float(np.sum(dataset.z * dataset.z)))
        eta = np.linalg.solve(a, d_rec.T @ y_records)
    else:
        d_rec = np.zeros((dataset.n_records, 0))
        eta = np.zeros(0)
    rhs = ybar - zbar @ eta
    if weights is None and op.mode == "closed_form":
        theta = op.v_inverse_apply(op.u_transpose_apply(rhs))
    else:
        w = counts if weights is not None else np.ones(op.n_pairs)
        theta = op.laplacian_solve(op.u_transpose_apply(w * rhs), w)
    return theta, eta, d_rec, weights


def record_sandwich_variance(
    op: DesignOperator,
    dataset: Dataset,
    d_rec: NDArray[np.float64],
    record_resid: NDArray[np.float64],
    pair_resid: NDArray[np.float64],
    weights: NDArray[np.float64] | None,
) -> ResidualVariances:
    xi_sq = pair_resid**2
    if d_rec.shape[1]:
        ainv = np.linalg.inv(d_rec.T @ d_rec)
        meat = d_rec.T @ (record_resid[:, None] ** 2 * d_rec)
        cov_eta = ainv @ meat @ ainv
        cov_eta = (cov_eta + cov_eta.T) / 2
    else:
        cov_eta = np.zeros((0, 0))
    var_theta = op.theta_sandwich_diag(xi_sq, weights)
    return ResidualVariances(xi_sq, record_resid**2, cov_eta, var_theta)


def rank_items(theta_hat: NDArray[np.float64]) -> NDArray[np.intp]:
    """1-based rank of every item ``0..n`` by merit, best first; ties go to the lower id."""
    full = np.concatenate([[0.0], np.asarray(theta_hat, dtype=float)])
    order = np.lexsort((np.arange(full.size), -full))
    ranks = np.empty(full.size, dtype=np.intp)
    ranks[order] = np.arange(1, full.size + 1)
    return ranks


def fit(
    dataset: Dataset,
    bandwidth: float | Literal["auto"] = "auto",
    *,
    floor: float = DEFAULT_FLOOR,
    level: float = 0.95,
    grid: Sequence[float] | None = None,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    leave_one_out: bool = False,
    weighted: bool = False,
    covariates: Literal["pair", "record"] = "pair",
    densities: NDArray[np.float64] | None = None,
) -> EstimateReport:
    """Estimate merits and covariate effects with robust standard errors.

    ``covariates="pair"`` regresses per-pair mean pseudo-outcomes on per-pair
    mean covariates; ``"record"`` uses the stacked record rows, which is
    identical when every pair is compared once.  ``weighted`` weights pairs by
    their comparison counts in the pair-level fit.  ``densities`` overrides
    the kernel estimate with known per-record values.
    """
    if covariates not in ("pair", "record"):
        raise ValueError(f"covariates must be 'pair' or 'record', got {covariates!r}")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    op = DesignOperator.from_dataset(dataset)
    op.check_connected()

    selection = None
    floor_hits = 0
    h: float | None = None
    if densities is not None:
        dens = np.asarray(densities, dtype=float)
    elif bandwidth == "auto":
        selection = select_bandwidth(dataset, grid, deltas, floor, leave_one_out)
        dens, floor_hits, h = selection.densities, selection.floor_hits, selection.bandwidth
    else:
        h = float(bandwidth)
        dens, floor_hits = DensityModel.fit(dataset, h, floor, leave_one_out).record_densities(dataset)

    po = build_pseudo_outcomes(dataset, dens)
    s = dataset.schema.special_sign
    y = s * po.ybreve
    zbar = po.zbar
    if covariates == "record":
        y_rec = s * po.yhat
        theta, eta, d_rec, weights = solve_record_level(op, dataset, y_rec)
        resid = y - op.u_apply(theta) - zbar @ eta
        th_full = np.concatenate([[0.0], theta])
        rec_resid = y_rec - (th_full[dataset.head] - th_full[dataset.tail]) - dataset.z @ eta
        var = record_sandwich_variance(op, dataset, d_rec, rec_resid, resid, weights)
    else:
        weights = po.counts.astype(float) if weighted else None
        if weights is not None and np.all(weights == weights[0]):
            weights = None
        theta, eta = solve_least_squares(op, zbar, y, weights)
        resid = y - op.u_apply(theta) - zbar @ eta
        var = sandwich_variance(op, zbar, resid, weights)

    p = zbar.shape[1]
    lam = float("nan")
    if p:
        lam = float(np.linalg.eigvalsh(op.projected_gram(zbar) if weights is None else
                                       zbar.T @ (weights[:, None] * op.project_out(zbar, weights)))[0]) / op.n_pairs
    dof = op.n_pairs - (dataset.n + p)
    if dof <= 0:
        warnings.warn("fewer residual degrees of freedom than parameters; standard errors unreliable",
                      RuntimeWarning, stacklevel=2)

    zq = stats.norm.ppf(0.5 + level / 2)
    se_t, se_e = var.se_theta, var.se_eta
    return EstimateReport(
        theta_hat=theta,
        eta_hat=eta,
        se_theta=se_t,
        se_eta=se_e,
        ci_level=level,
        ci_theta=np.column_stack([theta - zq * se_t, theta + zq * se_t]),
        ci_eta=np.column_stack([eta - zq * se_e, eta + zq * se_e]).reshape(p, 2),
        p_eta=_two_sided_p(eta, se_e),
        ranks=rank_items(theta),
        diagnostics=FitDiagnostics(
            mode="closed_form" if (op.mode == "closed_form" and weights is None) else "general",
            bandwidth=h,
            lambda_min=lam,
            floor_hits=floor_hits,
            n_records=dataset.n_records,
            n_pairs=op.n_pairs,
            residual_dof=dof,
            variance_unreliable=dof <= 0,
            weighted=weights is not None,
            covariates=covariates,
            variance_note=(
                "record residuals for eta, pair residuals for theta"
                if covariates == "record"
                else "observable pair residuals plugged in for both covariance terms"
            ),
            bandwidth_selection=selection,
        ),
        special_sign=s,
        labels=dataset.labels,
        eta_names=dataset.schema.column_names(),
        residuals=resid,
    )


@dataclass(frozen=True)
class SignCheck:
    sign: int
    win_rates: NDArray[np.float64]
    counts: NDArray[np.intp]
    edges: NDArray[np.float64]
    kendall_tau: float
    low_confidence: bool
    merged_buckets: int


def trend_sign_check(dataset: Dataset, k: int = 5) -> SignCheck:
    """Win rate of the head item across ``k`` equal-width bins of the special regressor.

    Both orientations of every record are pooled.  A decreasing trend
    recommends sign -1, an increasing one +1.
    """
    if k < 2:
        raise ValueError("need at least two buckets")
    x = np.concatenate([dataset.x0, -dataset.x0])
    a = np.concatenate([dataset.outcome, 1 - dataset.outcome]).astype(float)
    lo, hi = float(x.min()), float(x.max())
    edges = np.linspace(lo, hi, k + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, k - 1)
    wins = np.bincount(idx, a, k)
    counts = np.bincount(idx, minlength=k).astype(np.intp)

    merged = 0
    wins_l, counts_l, edges_l = list(wins), list(counts), list(edges)
    b = 0
    while b < len(counts_l):
        if counts_l[b] == 0 and len(counts_l) > 1:
            nb = b + 1 if b + 1 < len(counts_l) else b - 1
            counts_l[nb] += counts_l[b]
            wins_l[nb] += wins_l[b]
            del counts_l[b], wins_l[b]
            del edges_l[b + 1 if nb > b else b]
            merged += 1
            continue
        b += 1
    if merged:
        warnings.warn(f"{merged} empty bucket(s) merged with a neighbour", RuntimeWarning, stacklevel=2)

    c = np.array(counts_l, dtype=np.intp)
    wr = np.array(wins_l) / c
    if wr.size >= 2 and np.ptp(wr) > 0:
        tau = float(stats.kendalltau(np.arange(wr.size), wr).statistic)
    else:
        tau = 0.0
    se = np.sqrt(0.25 / c)
    low = bool(np.all(np.abs(wr - 0.5) < 2 * se)) or tau == 0.0
    return SignCheck(-1 if tau < 0 else 1, wr, c, np.array(edges_l), tau, low, merged)

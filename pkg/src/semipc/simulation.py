"""Monte Carlo harness: synthetic designs, replications, bias/SD/coverage tables, QQ data."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .bt import fit_bt_mle
from .core import ColumnSchema, DataError, Dataset
from .design import DesignOperator
from .estimator import fit

logger = logging.getLogger(__name__)

Noise = Literal["gauss", "logistic_unit_var", "mix_norm", "logistic_standard"]
NOISES: tuple[str, ...] = ("gauss", "logistic_unit_var", "mix_norm", "logistic_standard")

MIX_WEIGHT = 0.75
MIX_MEANS = (-0.3, 0.9)
MIX_VARS = (0.91, 0.19)
MAX_FAILURE_RATE = 0.10
SPARSE_ATTEMPTS = 20


@dataclass(frozen=True)
class SimConfig:
    n: int
    T: int = 1
    noise: str = "gauss"
    reps: int = 100
    seed: int = 0
    eta_star: tuple[float, ...] = (-0.5, 0.5)
    z_corr: float = 0.25
    b: tuple[float, ...] = (0.5, -0.5)
    theta_scale: float = 0.2
    tracked_items: tuple[int, ...] | None = None
    bandwidth: float | str = "auto"
    density: Literal["kernel", "oracle"] = "kernel"
    sparse: bool = False
    covariates: Literal["pair", "record"] = "record"
    floor: float = 0.01
    level: float = 0.95

    def __post_init__(self) -> None:
        if self.reps < 0:
            raise ValueError("reps must be non-negative")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise {self.noise!r}; choose from {NOISES}")
        if len(self.eta_star) != 2 or len(self.b) != 2:
            raise ValueError("the synthetic design has two covariates")
        if not abs(self.z_corr) < 1:
            raise ValueError("covariate covariance must be positive definite")

    @property
    def theta_star(self) -> NDArray[np.float64]:
        i = np.arange(1, self.n + 1)
        return self.theta_scale * i * math.log(self.n) / self.n

    @property
    def z_cov(self) -> NDArray[np.float64]:
        return np.array([[1.0, self.z_corr], [self.z_corr, 1.0]])

    @property
    def tracked(self) -> tuple[int, ...]:
        if self.tracked_items is not None:
            return tuple(self.tracked_items)
        n = self.n
        return tuple(sorted({1, n // 4, n // 2, 3 * n // 4, n} - {0}))

    def parameter_names(self) -> list[str]:
        return [f"theta{i}" for i in self.tracked] + [f"eta{k + 1}" for k in range(len(self.eta_star))]

    def truth(self) -> NDArray[np.float64]:
        th = self.theta_star
        return np.concatenate([th[np.array(self.tracked) - 1], np.asarray(self.eta_star)])


def _seed(config: SimConfig, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(config.seed, spawn_key=tuple(key))


def draw_noise(noise: str, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    if noise == "gauss":
        return rng.standard_normal(size)
    if noise == "logistic_unit_var":
        return rng.logistic(0.0, math.sqrt(3.0) / math.pi, size)
    if noise == "logistic_standard":
        return rng.logistic(0.0, 1.0, size)
    if noise == "mix_norm":
        first = rng.random(size) < MIX_WEIGHT
        out = rng.standard_normal(size)
        out[first] = MIX_MEANS[0] + math.sqrt(MIX_VARS[0]) * out[first]
        out[~first] = MIX_MEANS[1] + math.sqrt(MIX_VARS[1]) * out[~first]
        return out
    raise ValueError(f"unknown noise {noise!r}")


def sparse_schedule(
    n: int,
    T: int,
    seed: int | np.random.SeedSequence,
    prob_range: tuple[float, float] | None = None,
) -> NDArray[np.intp]:
    """Per-pair comparison counts ``Binomial(T, p_ij)``, ``p_ij ~ U(p_n, q_n)`` clipped to (0, 1].

    ``p_n = 1/sqrt(n)`` and ``q_n = p_n log n`` unless ``prob_range`` is given.
    Disconnected draws are regenerated from fresh sub-seeds.
    """
    if T < 1:
        raise DataError("sparse schedule needs T >= 1")
    if n < 2:
        raise DataError("sparse schedule needs n >= 2")
    lo, hi = prob_range if prob_range is not None else (1 / math.sqrt(n), math.log(n) / math.sqrt(n))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    op = DesignOperator.complete(n)
    for child in ss.spawn(SPARSE_ATTEMPTS):
        rng = np.random.default_rng(child)
        p = np.clip(rng.uniform(lo, hi, op.n_pairs), 1e-12, 1.0)
        counts = rng.binomial(T, p).astype(np.intp)
        if DesignOperator(n, op.pairs[counts > 0], "general").is_connected():
            return counts
    raise DataError(f"no connected sparse design after {SPARSE_ATTEMPTS} attempts")


def generate_dataset(config: SimConfig, rep: int = 0) -> Dataset:
    """One synthetic replication: bivariate normal covariates, special regressor, latent noise."""
    n = config.n
    pairs = DesignOperator.complete(n).pairs
    if config.sparse:
        counts = sparse_schedule(n, config.T, _seed(config, rep, 1))
    else:
        counts = np.full(pairs.shape[0], config.T, dtype=np.intp)
    head = np.repeat(pairs[:, 0], counts)
    tail = np.repeat(pairs[:, 1], counts)
    r = head.shape[0]
    rng = np.random.default_rng(_seed(config, rep, 0))
    chol = np.linalg.cholesky(config.z_cov)
    z = rng.standard_normal((r, 2)) @ chol.T
    x0 = z @ np.asarray(config.b) + rng.standard_normal(r)
    eps = draw_noise(config.noise, r, rng)
    theta = np.concatenate([[0.0], config.theta_star])
    index = theta[head] - theta[tail] + x0 + z @ np.asarray(config.eta_star)
    outcome = (index > eps).astype(np.int8)
    schema = ColumnSchema((True, True), 1, ("eta1", "eta2"))
    return Dataset.from_arrays(n + 1, schema, head, tail, outcome, x0, z)


def oracle_density(config: SimConfig, x0: NDArray[np.float64], z: NDArray[np.float64]) -> NDArray[np.float64]:
    """Exact conditional density of the special regressor given ``z`` under the synthetic design."""
    return stats.norm.pdf(np.asarray(x0) - np.asarray(z) @ np.asarray(config.b))


# -- replications -----------------------------------------------------------


def _fit_one(config: SimConfig, dataset: Dataset):
    dens = oracle_density(config, dataset.x0, dataset.z) if config.density == "oracle" else None
    return fit(
        dataset,
        config.bandwidth,
        floor=config.floor,
        level=config.level,
        covariates=config.covariates,
        densities=dens,
    )


def _replicate(args: tuple[SimConfig, int]) -> tuple[int, NDArray | None, NDArray | None, float | None]:
    config, rep = args
    tracked = np.array(config.tracked) - 1
    try:
        report = _fit_one(config, generate_dataset(config, rep))
    except (DataError, np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("replication %d failed: %s", rep, exc)
        return rep, None, None, None
    est = np.concatenate([report.theta_hat[tracked], report.eta_hat])
    se = np.concatenate([report.se_theta[tracked], report.se_eta])
    return rep, est, se, report.diagnostics.bandwidth


def _map(fn, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(it) for it in items]


@dataclass(frozen=True)
class MetricsRow:
    parameter: str
    truth: float
    bias: float
    sd: float
    cp: float


@dataclass(frozen=True)
class MetricsTable:
    rows: list[MetricsRow]
    replications: int
    failures: int

    def row(self, parameter: str) -> MetricsRow:
        for r in self.rows:
            if r.parameter == parameter:
                return r
        raise KeyError(parameter)


@dataclass(frozen=True)
class MonteCarloResult:
    """Per-replication estimates kept as an audit trail for the aggregates."""

    config: SimConfig
    names: list[str]
    truth: NDArray[np.float64]
    reps: NDArray[np.intp]
    estimates: NDArray[np.float64]
    std_errors: NDArray[np.float64]
    bandwidths: NDArray[np.float64] = field(repr=False)
    failures: int = 0

    @property
    def hits(self) -> NDArray[np.bool_]:
        zq = stats.norm.ppf(0.5 + self.config.level / 2)
        return np.abs(self.estimates - self.truth) <= zq * self.std_errors

    def metrics(self) -> MetricsTable:
        k = self.estimates.shape[0]
        rows = []
        for c, name in enumerate(self.names):
            err = self.estimates[:, c] - self.truth[c]
            rows.append(
                MetricsRow(
                    name,
                    float(self.truth[c]),
                    float(err.mean()) if k else float("nan"),
                    float(self.estimates[:, c].std(ddof=1)) if k > 1 else float("nan"),
                    float(self.hits[:, c].mean()) if k else float("nan"),
                )
            )
        return MetricsTable(rows, k, self.failures)

    def column(self, parameter: str) -> NDArray[np.float64]:
        return self.estimates[:, self.names.index(parameter)]


def run_monte_carlo(config: SimConfig, workers: int = 1) -> MonteCarloResult:
    """Replicate generate-select-fit ``config.reps`` times; failures are counted, not fatal below 10%."""
    out = _map(_replicate, [(config, r) for r in range(config.reps)], workers)
    out.sort(key=lambda t: t[0])
    good = [t for t in out if t[1] is not None]
    failures = len(out) - len(good)
    if config.reps and failures > MAX_FAILURE_RATE * config.reps:
        raise RuntimeError(f"{failures} of {config.reps} replications failed")
    k = len(config.parameter_names())
    return MonteCarloResult(
        config,
        config.parameter_names(),
        config.truth(),
        np.array([t[0] for t in good], dtype=np.intp),
        np.array([t[1] for t in good]).reshape(len(good), k),
        np.array([t[2] for t in good]).reshape(len(good), k),
        np.array([np.nan if t[3] is None else t[3] for t in good]),
        failures,
    )


# -- semiparametric vs. Bradley-Terry ------------------------------------------


def _compare_one(args: tuple[SimConfig, int]):
    config, rep = args
    tracked = np.array(config.tracked) - 1
    data = generate_dataset(config, rep)
    semi = mle = None
    try:
        rep_semi = _fit_one(config, data)
        semi = np.concatenate([rep_semi.theta_hat[tracked], rep_semi.eta_hat])
    except (DataError, np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("semiparametric fit failed in replication %d: %s", rep, exc)
    try:
        bt = fit_bt_mle(data)
        if bt.converged:
            mle = np.concatenate([bt.theta_mle[tracked], bt.eta_mle])
    except (DataError, np.linalg.LinAlgError) as exc:
        logger.warning("MLE failed in replication %d: %s", rep, exc)
    return rep, semi, mle


@dataclass(frozen=True)
class ComparisonTable:
    names: list[str]
    truth: NDArray[np.float64]
    semi_bias: NDArray[np.float64]
    mle_bias: NDArray[np.float64]
    semi_reps: int
    mle_reps: int
    semi_excluded: int
    mle_excluded: int

    def bias(self, parameter: str, method: str) -> float:
        c = self.names.index(parameter)
        return float((self.semi_bias if method == "semi" else self.mle_bias)[c])


def compare_estimators(config: SimConfig, workers: int = 1) -> ComparisonTable:
    """Average bias of the semiparametric estimator and the Bradley-Terry MLE over replications."""
    names, truth = config.parameter_names(), config.truth()
    out = sorted(_map(_compare_one, [(config, r) for r in range(config.reps)], workers), key=lambda t: t[0])
    semi = np.array([t[1] for t in out if t[1] is not None]).reshape(-1, len(names))
    mle = np.array([t[2] for t in out if t[2] is not None]).reshape(-1, len(names))

    def _bias(a: NDArray) -> NDArray:
        return a.mean(axis=0) - truth if a.shape[0] else np.full(len(names), np.nan)

    return ComparisonTable(
        names,
        truth,
        _bias(semi),
        _bias(mle),
        semi.shape[0],
        mle.shape[0],
        len(out) - semi.shape[0],
        len(out) - mle.shape[0],
    )


# -- QQ -----------------------------------------------------------------------


@dataclass(frozen=True)
class QQTable:
    parameter: str
    sample: NDArray[np.float64]
    theoretical: NDArray[np.float64]
    degenerate: bool


def qq_pairs(values: Sequence[float], parameter: str = "value") -> QQTable:
    """Standardized order statistics against normal quantiles at ``(k - 0.5) / m``."""
    v = np.sort(np.asarray(values, dtype=float))
    m = v.size
    if m < 10:
        raise ValueError(f"QQ export needs at least 10 replications, got {m}")
    theo = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    sd = v.std(ddof=1)
    if not sd > 0:
        return QQTable(parameter, np.zeros(m), theo, True)
    return QQTable(parameter, (v - v.mean()) / sd, theo, False)


def qq_export(result: MonteCarloResult, parameter: str) -> QQTable:
    if parameter not in result.names:
        raise KeyError(f"{parameter!r} not tracked; available: {result.names}")
    return qq_pairs(result.column(parameter), parameter)



"""Correlation study over a suite of datasets.

For every (dataset, seed) run a classifier is trained on a stratified
training split, all measures are evaluated per component (disc on the
holdout), and Spearman correlations between every pair of measures are
computed.  Runs are then averaged entrywise with standard deviations.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import data as dm
from .errors import UndefinedMeasureError
from .measures import MEASURES, evaluate, spearman
from .training import TrainingConfig, fit

logger = logging.getLogger(__name__)

# Desk-scale suite; high-dimensional sets are reduced by PCA before training.
DEFAULT_SUITE = ("iris", "wine", "breast_cancer", "digits", "two_moons", "ripley", "clouds", "mixed")
PCA_DIMS = {"breast_cancer": 5, "digits": 8}


def prepare(name, seed=0, pca_dims=None):
    """Load a builtin dataset, z-normalize it and apply PCA where configured."""
    pca_dims = PCA_DIMS if pca_dims is None else pca_dims
    ds = dm.load_builtin(name, seed=seed)
    if ds.schema.n_cont:
        ds, _ = dm.z_normalize(ds)
        k = pca_dims.get(name)
        if k and k < ds.schema.n_cont:
            ds, _ = dm.pca(ds, k)
    return ds


@dataclass
class RunResult:
    dataset: str
    seed: int
    n_components: int
    matrix: np.ndarray  # Spearman rho, NaN where undefined
    p_values: np.ndarray
    timings: dict
    test_error: float
    excluded: str = None


@dataclass
class CorrelationSummary:
    measures: tuple
    runs: list
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    p_values: np.ndarray  # one-sample t-test of the run correlations against 0
    timings: dict = field(default_factory=dict)

    def value(self, a, b):
        i, j = self.measures.index(a), self.measures.index(b)
        return float(self.mean[i, j])

    def significant(self, a, b, level=0.05):
        i, j = self.measures.index(a), self.measures.index(b)
        return bool(self.p_values[i, j] < level)

    def table_text(self, digits=2):
        """Upper triangle as ``mean±std``; ``*`` marks significance at 0.05."""
        m = self.measures
        width = 2 * digits + 8
        lines = [" " * 6 + "".join(f"{name:>{width}}" for name in m)]
        for i, a in enumerate(m):
            cells = []
            for j in range(len(m)):
                if j < i:
                    cells.append(" " * width)
                elif self.count[i, j] == 0:
                    cells.append(f"{'n/a':>{width}}")
                else:
                    star = "*" if i != j and self.p_values[i, j] < 0.05 else " "
                    cell = f"{self.mean[i, j]:.{digits}f}±{self.std[i, j]:.{digits}f}{star}"
                    cells.append(f"{cell:>{width}}")
            lines.append(f"{a:<6}" + "".join(cells))
        return "\n".join(lines) + "\n"

    def table_csv(self):
        rows = ["measure_a,measure_b,mean,std,n_runs,p_value"]
        for i, a in enumerate(self.measures):
            for j in range(i, len(self.measures)):
                rows.append(f"{a},{self.measures[j]},{float(self.mean[i, j])!r},{float(self.std[i, j])!r},"
                            f"{int(self.count[i, j])},{float(self.p_values[i, j])!r}")
        return "\n".join(rows) + "\n"


def correlation_matrix(report, measures=MEASURES):
    measures = [m for m in measures if m in report.values]
    n = len(measures)
    rho = np.full((n, n), np.nan)
    pv = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i, n):
            a, b = report.values[measures[i]], report.values[measures[j]]
            keep = [k for k in range(len(a)) if a[k] is not None and b[k] is not None]
            try:
                r = spearman([a[k] for k in keep], [b[k] for k in keep])
            except UndefinedMeasureError:
                continue
            rho[i, j] = rho[j, i] = r.rho
            pv[i, j] = pv[j, i] = r.p_value
    return tuple(measures), rho, pv


def run_one(name, seed, config=None, test_fraction=0.2):
    config = config or TrainingConfig()
    config = TrainingConfig.from_mapping({**config.to_dict(), "rng_seed": seed, "track_error": False})
    ds = prepare(name, seed)
    train, test = dm.split(ds, test_fraction, seed)
    res = fit(train, config)
    clf = res.classifier
    n = len(MEASURES)
    if clf.n_components < 3:
        nan = np.full((n, n), np.nan)
        return RunResult(name, seed, clf.n_components, nan, nan, {}, float("nan"),
                         f"only {clf.n_components} components")
    report = evaluate(clf, train, res.second_order, test_data=test)
    _, rho, pv = correlation_matrix(report)
    err = float(np.mean(clf.predict(test) != test.y))
    return RunResult(name, seed, clf.n_components, rho, pv, dict(report.timings), err)


def _run_args(args):
    return run_one(*args)


def summarize(runs, measures=MEASURES):
    used = [r for r in runs if r.excluded is None]
    n = len(measures)
    if not used:
        nan = np.full((n, n), np.nan)
        return CorrelationSummary(tuple(measures), runs, nan, nan, np.zeros((n, n), int), nan)
    stack = np.stack([r.matrix for r in used])
    count = np.sum(~np.isnan(stack), axis=0)
    with np.errstate(invalid="ignore"), np.testing.suppress_warnings() as sup:
        sup.filter(RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
        std = np.nanstd(stack, axis=0)
    p = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            col = stack[:, i, j]
            col = col[~np.isnan(col)]
            if i == j:
                p[i, j] = 0.0 if col.size else np.nan
            elif col.size >= 2 and np.std(col) > 0:
                p[i, j] = float(stats.ttest_1samp(col, 0.0).pvalue)
    timings = {}
    for m in measures:
        ts = [r.timings[m] for r in used if m in r.timings]
        if ts:
            timings[m] = (float(np.mean(ts)), float(np.std(ts)))
    return CorrelationSummary(tuple(measures), runs, mean, std, count, p, timings)


def correlation_study(datasets=DEFAULT_SUITE, seeds=(0, 1, 2), config=None, workers=1):
    """Train, evaluate and correlate for every dataset/seed pair."""
    jobs = [(name, seed, config) for name in datasets for seed in seeds]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_args, jobs))
    else:
        runs = [_run_args(j) for j in jobs]
    for r in runs:
        if r.excluded:
            logger.warning("excluded %s seed %d: %s", r.dataset, r.seed, r.excluded)
    logger.info("correlation study finished in %.1f s", time.perf_counter() - t0)
    return summarize(runs)

"""Objective measures over the components of a trained classifier.

Seven per-component measures are provided: informativeness (info),
uniqueness (uniq), importance (impo), discrimination (disc),
representativity (repr), uncertainty (unct) and distinguishability (dsng).
:func:`evaluate` computes all of them at once and returns a
:class:`MeasureReport`.  Measures that are undefined for a component are
reported as ``None``, never NaN.
"""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .density import ParzenEstimator, kl2_hat_from_logs
from .entropy import dirichlet_entropy, normal_wishart_entropy  # noqa: F401  (re-export)
from .errors import EmptyInputError, StructuralError, UndefinedMeasureError
from .model import LOG_FLOOR, classification_error
from .special import digamma, ln_gamma  # noqa: F401  (re-export)
from .training import importance_from_pi

MEASURES = ("info", "uniq", "impo", "disc", "repr", "unct", "dsng")
BOUNDED = {"info": (0.0, 1.0), "uniq": (0.0, 1.0), "impo": (0.0, 1.0), "dsng": (0.0, 1.0), "disc": (-1.0, 1.0)}


# -- pairwise component comparisons ------------------------------------------------


def log_gaussian_bc(g1, g2):
    """log of the Bhattacharyya coefficient of two Gaussians."""
    if g1.dim == 0:
        return 0.0
    pooled = 0.5 * (g1.cov + g2.cov)
    try:
        L = np.linalg.cholesky(pooled)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("pooled covariance is not positive definite") from exc
    diff = np.linalg.solve(L, g1.mean - g2.mean)
    logdet_pooled = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.125 * diff @ diff + 0.25 * (g1.logdet + g2.logdet) - 0.5 * logdet_pooled)


def categorical_bc(cat1, cat2):
    out = 1.0
    for p, q in zip(cat1.probs, cat2.probs):
        out *= float(np.sum(np.sqrt(p * q)))
    return out


def _same_distribution(ci, cj):
    # rounding in log-determinants would otherwise leave BC a few ulps below 1
    if ci is cj:
        return True
    gi, gj = ci.gaussian, cj.gaussian
    return (np.array_equal(gi.mean, gj.mean) and np.array_equal(gi.cov, gj.cov)
            and len(ci.categorical.probs) == len(cj.categorical.probs)
            and all(np.array_equal(p, q) for p, q in zip(ci.categorical.probs, cj.categorical.probs)))


def bhattacharyya(ci, cj):
    """Bhattacharyya coefficient of two hybrid components, clamped to [0, 1]."""
    if _same_distribution(ci, cj):
        return 1.0
    bc = np.exp(log_gaussian_bc(ci.gaussian, cj.gaussian)) * categorical_bc(ci.categorical, cj.categorical)
    return float(min(max(bc, 0.0), 1.0))


def hellinger(ci, cj):
    return float(np.sqrt(max(0.0, 1.0 - bhattacharyya(ci, cj))))


def hellinger_matrix(classifier):
    comps = classifier.components
    n = len(comps)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = hellinger(comps[i], comps[j])
    return H


def distinguishability_pair(ci, cj, d):
    """Separation of the (unnormalized) axis-``d`` projections of two components."""
    if not 0 <= d < ci.gaussian.dim:
        raise IndexError(f"continuous dimension {d} out of range")
    mi, si = ci.gaussian.marginal(d)
    mj, sj = cj.gaussian.marginal(d)
    dm2 = (mi - mj) ** 2
    s = si + sj
    if s == 0:
        return 0.0 if dm2 == 0 else 1.0
    return float(1.0 - np.exp(-dm2 / (2.0 * s * s)))


def _require_pairs(classifier, what):
    if classifier.n_components < 2:
        raise UndefinedMeasureError(f"{what} needs at least two components")


# -- per-component measures ---------------------------------------------------------


def informativeness(classifier, i):
    """Hellinger distance to the closest other component."""
    _require_pairs(classifier, "informativeness")
    ci = classifier.components[i]
    return min(hellinger(cj, ci) for j, cj in enumerate(classifier.components) if j != i)


def uniqueness(classifier, data, i, resp=None):
    """Share of component ``i``'s responsibility mass that falls on its own class."""
    if data.y is None:
        raise UndefinedMeasureError("uniqueness needs labeled data")
    if resp is None:
        resp = classifier.responsibilities_batch(data)
    total = float(resp[:, i].sum())
    if not total > 0:
        raise UndefinedMeasureError(f"component {i} has zero total responsibility")
    own = float(resp[data.y == classifier.components[i].class_index, i].sum())
    return min(own / total, 1.0)


def importance(classifier, i):
    """Piecewise-linear rescaling of pi_i around the average 1/I."""
    return float(importance_from_pi(classifier.pi)[i])


def discrimination(classifier, data, i, log_dens=None, base_error=None):
    """Error without component ``i`` minus error with it."""
    if log_dens is None:
        log_dens = classifier.log_component_densities(data)
    try:
        reduced = classifier.remove_component(i)
    except StructuralError as exc:
        raise UndefinedMeasureError(f"discrimination of component {i}: {exc}") from exc
    if base_error is None:
        base_error = classification_error(classifier, data, log_dens)
    keep = np.arange(classifier.n_components) != i
    return classification_error(reduced, data, log_dens[:, keep]) - base_error


def continuous_log_components(classifier, xc):
    """log(pi_j N(x | mu_j, Sigma_j)) for the continuous marginal, shape ``(N, I)``."""
    with np.errstate(divide="ignore"):
        return np.column_stack([np.log(c.pi) + c.gaussian.log_pdf(xc) for c in classifier.components])


def representativity(classifier, data, i, parzen=None, log_joint=None, log_q=None):
    """Increase of the model-vs-Parzen symmetric KL when component ``i`` is removed.

    Only continuous dimensions are used; the mixture without ``i`` has its
    weights renormalized.
    """
    if classifier.schema.n_cont == 0:
        raise UndefinedMeasureError("representativity needs continuous dimensions")
    if classifier.n_components < 2:
        raise UndefinedMeasureError("representativity needs at least two components")
    if log_joint is None:
        log_joint = continuous_log_components(classifier, data.xc)
    if log_q is None:
        parzen = parzen or ParzenEstimator(data.xc)
        log_q = parzen.log_density(data.xc)
    pi = classifier.pi
    rest = 1.0 - pi[i]
    if rest <= 0:
        raise UndefinedMeasureError(f"component {i} carries all mixing weight")
    if pi[i] == 0:
        return 0.0
    log_with = logsumexp(log_joint, axis=1)
    keep = np.arange(log_joint.shape[1]) != i
    log_without = logsumexp(log_joint[:, keep], axis=1) - np.log(rest)
    return kl2_hat_from_logs(log_without, log_q) - kl2_hat_from_logs(log_with, log_q)


def uncertainty(second_order, i, cont_weight=1.0, cat_weight=1.0):
    """Summed entropy of the parameter posteriors of component ``i``."""
    if second_order is None:
        raise UndefinedMeasureError("uncertainty needs second-order parameters")
    return second_order.uncertainty(i, cont_weight, cat_weight)


def distinguishability(classifier, i):
    """Smallest pairwise projected separation over all other components and dimensions."""
    _require_pairs(classifier, "distinguishability")
    D = classifier.schema.n_cont
    if D == 0:
        raise UndefinedMeasureError("distinguishability needs continuous dimensions")
    ci = classifier.components[i]
    return min(distinguishability_pair(ci, cj, d)
               for d in range(D) for j, cj in enumerate(classifier.components) if j != i)


# -- aggregation and correlation ------------------------------------------------------


def classifier_aggregate(values, weights=None, mode="weighted_mean"):
    """Classifier-level value from per-component values (``None`` entries skipped)."""
    values = list(values)
    if not values:
        raise EmptyInputError("no values to aggregate")
    if weights is None:
        weights = np.ones(len(values))
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(values):
        raise ValueError("values and weights differ in length")
    ok = [k for k, v in enumerate(values) if v is not None]
    if not ok:
        raise UndefinedMeasureError("all values are undefined")
    v = np.array([values[k] for k in ok], dtype=float)
    if mode == "min":
        return float(v.min())
    if mode != "weighted_mean":
        raise ValueError(f"unknown aggregation mode {mode!r}")
    w = weights[ok]
    if w.sum() <= 0:
        raise UndefinedMeasureError("weights of defined values sum to zero")
    return float(np.dot(w, v) / w.sum())


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int

    @property
    def significant(self):
        return self.p_value < 0.05


def spearman(a, b):
    """Spearman rank correlation with a two-sided t-approximation p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("spearman needs two 1-D sequences of equal length")
    n = a.size
    if n < 3:
        raise UndefinedMeasureError("spearman needs at least three pairs")
    ra, rb = stats.rankdata(a), stats.rankdata(b)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise UndefinedMeasureError("spearman is undefined for constant input")
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(np.dot(ra, rb) / np.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))
    rho = min(max(rho, -1.0), 1.0)
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return SpearmanResult(rho, p, n)


# -- report -------------------------------------------------------------------------


def rank_components(values):
    """Ascending ranking; returns ``[(rank, component, value), ...]`` for defined values."""
    defined = [(v, i) for i, v in enumerate(values) if v is not None]
    defined.sort(key=lambda t: (t[0], t[1]))
    return [(r + 1, i, v) for r, (v, i) in enumerate(defined)]


@dataclass
class MeasureReport:
    values: dict
    pi: np.ndarray
    component_classes: np.ndarray
    disc_dataset: str = "train"
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def n_components(self):
        return len(self.pi)

    @property
    def measures(self):
        return [m for m in MEASURES if m in self.values]

    def aggregate(self, measure):
        mode = "min" if measure == "dsng" else "weighted_mean"
        try:
            return classifier_aggregate(self.values[measure], self.pi, mode)
        except UndefinedMeasureError:
            return None

    @property
    def aggregates(self):
        return {m: self.aggregate(m) for m in self.measures}

    def ranking(self, measure):
        return rank_components(self.values[measure])

    def to_csv(self, component_base=1):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "class", "pi"] + self.measures)
        for i in range(self.n_components):
            row = [i + component_base, int(self.component_classes[i]), _fmt(self.pi[i])]
            row += [_fmt(self.values[m][i]) for m in self.measures]
            w.writerow(row)
        return buf.getvalue()

    def rank_table_csv(self, measures=None, component_base=1):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["measure", "value", "rank", "component"])
        for m in measures or self.measures:
            for rank, i, v in self.ranking(m):
                w.writerow([m, _fmt(v), rank, i + component_base])
        return buf.getvalue()

    def rank_table_text(self, measures=None, component_base=1, digits=4):
        lines = [f"{'Measure':<8} {'Value':>10} {'Rank':>5} {'Component':>10}"]
        for m in measures or self.measures:
            for rank, i, v in self.ranking(m):
                lines.append(f"{m:<8} {v:>10.{digits}f} {rank:>5d} {i + component_base:>10d}")
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def _fmt(v):
    return "undefined" if v is None else repr(float(v))


def _safe(fn):
    try:
        return fn()
    except UndefinedMeasureError:
        return None


def evaluate(classifier, data, second_order=None, test_data=None, parzen=None,
             measures=MEASURES, unct_weights=(1.0, 1.0)):
    """Compute the requested measures for every component.

    ``data`` is the training set (used for uniq and repr); disc uses
    ``test_data`` when given, otherwise ``data``.
    """
    I = classifier.n_components
    values, timings, notes = {}, {}, []
    measures = [m for m in MEASURES if m in measures]
    if "unct" in measures and second_order is None:
        notes.append("unct omitted: no second-order parameters")
        measures.remove("unct")
    if classifier.schema.n_cont == 0:
        for m in ("repr", "dsng"):
            if m in measures:
                notes.append(f"{m} undefined: no continuous dimensions")

    def timed(name, fn):
        t0 = time.perf_counter()
        values[name] = fn()
        timings[name] = time.perf_counter() - t0

    if "info" in measures:
        def _info():
            if I < 2:
                return [None] * I
            H = hellinger_matrix(classifier)
            np.fill_diagonal(H, np.inf)
            return [float(v) for v in H.min(axis=1)]
        timed("info", _info)
    if "uniq" in measures:
        def _uniq():
            resp = classifier.responsibilities_batch(data)
            return [_safe(lambda i=i: uniqueness(classifier, data, i, resp)) for i in range(I)]
        timed("uniq", _uniq)
    if "impo" in measures:
        timed("impo", lambda: [float(v) for v in importance_from_pi(classifier.pi)])
    if "disc" in measures:
        target = test_data if test_data is not None else data

        def _disc():
            ld = classifier.log_component_densities(target)
            base = classification_error(classifier, target, ld)
            return [_safe(lambda i=i: discrimination(classifier, target, i, ld, base)) for i in range(I)]
        timed("disc", _disc)
    if "repr" in measures:
        def _repr():
            if classifier.schema.n_cont == 0 or I < 2:
                return [None] * I
            lj = continuous_log_components(classifier, data.xc)
            est = parzen or ParzenEstimator(data.xc)
            lq = est.log_density(data.xc)
            return [_safe(lambda i=i: representativity(classifier, data, i, log_joint=lj, log_q=lq)) for i in range(I)]
        timed("repr", _repr)
    if "unct" in measures:
        timed("unct", lambda: [uncertainty(second_order, i, *unct_weights) for i in range(I)])
    if "dsng" in measures:
        def _dsng():
            if classifier.schema.n_cont == 0 or I < 2:
                return [None] * I
            return [distinguishability(classifier, i) for i in range(I)]
        timed("dsng", _dsng)
    return MeasureReport(values, classifier.pi, classifier.component_classes,
                         "test" if test_data is not None else "train", timings, notes)

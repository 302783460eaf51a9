"""Hybrid mixture classifier: data model and density evaluation.

A classifier is a set of components, each a multivariate Gaussian over the
continuous columns times independent multinomials over the categorical
columns.  Every component belongs to exactly one class and carries a global
mixing coefficient ``pi`` (class prior already folded in), so that

    p(x)   = sum_i pi_i p(x | i)
    p(c|x) = sum_{i in I_c} pi_i p(x | i) / p(x)

All density math is done in log space.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateInputError, EmptyInputError, SchemaError, StructuralError

LOG_FLOOR = -700.0
_LOG_2PI = np.log(2.0 * np.pi)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
FEATURE = "feature"
CLASS = "class"


@dataclass(frozen=True)
class ColumnSchema:
    """One column: a continuous or categorical feature, or the class label.

    Categorical columns (and the class column) carry their category labels;
    ``len(categories)`` is the number of categories K_d.
    """

    name: str
    kind: str = CONTINUOUS
    role: str = FEATURE
    categories: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in (FEATURE, CLASS):
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.role == CLASS and self.kind != CATEGORICAL:
            raise SchemaError(f"class column {self.name!r} must be categorical")
        if self.kind == CATEGORICAL:
            if self.categories is None:
                raise SchemaError(f"categorical column {self.name!r} needs categories")
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
            if self.role == FEATURE and len(self.categories) < 2:
                raise SchemaError(f"categorical column {self.name!r} needs K_d >= 2")
        elif self.categories is not None:
            raise SchemaError(f"continuous column {self.name!r} cannot have categories")

    @property
    def n_categories(self):
        return len(self.categories) if self.categories is not None else 0

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.categories is not None:
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d):
        cats = d.get("categories")
        return cls(d["name"], d.get("kind", CONTINUOUS), d.get("role", FEATURE),
                   tuple(cats) if cats is not None else None)


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations with at most one class column."""

    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if sum(c.role == CLASS for c in self.columns) > 1:
            raise SchemaError("schema declares more than one class column")

    @property
    def continuous(self):
        return tuple(c for c in self.columns if c.role == FEATURE and c.kind == CONTINUOUS)

    @property
    def categorical(self):
        return tuple(c for c in self.columns if c.role == FEATURE and c.kind == CATEGORICAL)

    @property
    def class_column(self):
        for c in self.columns:
            if c.role == CLASS:
                return c
        return None

    @property
    def n_cont(self):
        return len(self.continuous)

    @property
    def n_cat(self):
        return len(self.categorical)

    @property
    def cat_sizes(self):
        return tuple(c.n_categories for c in self.categorical)

    @property
    def class_labels(self):
        cc = self.class_column
        return cc.categories if cc is not None else ()

    @property
    def n_classes(self):
        return len(self.class_labels)

    def features_only(self):
        return Schema(tuple(c for c in self.columns if c.role == FEATURE))

    def to_list(self):
        return [c.to_dict() for c in self.columns]

    @classmethod
    def from_list(cls, items):
        return cls(tuple(ColumnSchema.from_dict(d) for d in items))


@dataclass(frozen=True)
class Sample:
    """A single observation; categorical values are stored as indices."""

    continuous: np.ndarray
    categorical: tuple = ()
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "continuous", np.asarray(self.continuous, dtype=float).ravel())
        object.__setattr__(self, "categorical", tuple(int(v) for v in self.categorical))

    def one_hot(self, d, k_d):
        """Indicator vector of categorical dimension ``d``."""
        v = np.zeros(k_d)
        v[self.categorical[d]] = 1.0
        return v


class GaussianParams:
    """Mean and covariance with cached Cholesky factor, log-determinant and inverse."""

    __slots__ = ("mean", "cov", "chol", "logdet", "inv")

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).ravel()
        cov = np.array(cov, dtype=float).reshape(mean.size, mean.size)
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
            raise SchemaError("covariance matrix is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SchemaError("covariance matrix is not positive definite") from exc
        self.mean = mean
        self.cov = cov
        self.chol = chol
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        self.inv = cho_solve((chol, True), np.eye(mean.size))
        for a in (self.mean, self.cov, self.chol, self.inv):
            a.setflags(write=False)

    @property
    def dim(self):
        return self.mean.size

    def log_pdf(self, x):
        """Log density at the rows of ``x`` (shape ``(N, D)``)."""
        x = np.atleast_2d(x)
        if self.dim == 0:
            return np.zeros(x.shape[0])
        z = solve_triangular(self.chol, (x - self.mean).T, lower=True)
        maha = np.sum(z * z, axis=0)
        return -0.5 * (self.dim * _LOG_2PI + self.logdet + maha)

    def marginal(self, d):
        """(mean, std) of the projection onto axis ``d``."""
        return float(self.mean[d]), float(np.sqrt(self.cov[d, d]))

    def is_diagonal(self, atol=1e-12):
        off = self.cov - np.diag(np.diag(self.cov))
        return bool(np.all(np.abs(off) <= atol))


class CategoricalParams:
    """One probability vector per categorical dimension."""

    __slots__ = ("probs", "_logp")

    def __init__(self, probs):
        out = []
        for d, p in enumerate(probs):
            p = np.array(p, dtype=float).ravel()
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise SchemaError(f"categorical dimension {d}: probabilities must be >= 0 and sum to 1")
            p.setflags(write=False)
            out.append(p)
        self.probs = tuple(out)
        with np.errstate(divide="ignore"):
            self._logp = tuple(np.log(p) for p in self.probs)

    def __len__(self):
        return len(self.probs)

    def log_pmf(self, xk):
        """Sum of log category probabilities for index rows ``xk`` (shape ``(N, D_cat)``).

        A negative index marks an unseen category and contributes the
        uniform probability 1/K_d.
        """
        xk = np.asarray(xk, dtype=int)
        if xk.ndim == 1:
            xk = xk[None, :]
        out = np.zeros(xk.shape[0])
        for d, lp in enumerate(self._logp):
            col = xk[:, d]
            out += np.where(col < 0, -np.log(lp.size), lp[np.maximum(col, 0)])
        return out


@dataclass(frozen=True)
class HybridComponent:
    gaussian: GaussianParams
    categorical: CategoricalParams
    class_index: int
    pi: float

    def log_density(self, xc, xk):
        return self.gaussian.log_pdf(xc) + self.categorical.log_pmf(xk)

    def with_pi(self, pi):
        return HybridComponent(self.gaussian, self.categorical, self.class_index, float(pi))


def make_component(mean, cov, probs=(), class_index=0, pi=1.0):
    """Convenience constructor from raw arrays."""
    return HybridComponent(GaussianParams(mean, cov), CategoricalParams(probs), int(class_index), float(pi))


class Classifier:
    """Immutable hybrid mixture classifier.

    Parameters
    ----------
    schema : Schema
        Column declarations; must include the class column.
    class_priors : array-like
        Empirical class frequencies gamma_c.  Kept for reporting; the
        posterior is computed from the global mixing coefficients, which
        already include the priors.
    components : sequence of HybridComponent
    """

    def __init__(self, schema, class_priors, components):
        self.schema = schema
        self.class_priors = np.array(class_priors, dtype=float)
        self.components = tuple(components)
        self._validate()
        self._pi = np.array([c.pi for c in self.components])
        with np.errstate(divide="ignore"):
            self._log_pi = np.log(self._pi)
        self._class_of = np.array([c.class_index for c in self.components], dtype=int)
        self.class_priors.setflags(write=False)

    def _validate(self):
        s = self.schema
        n_classes = s.n_classes
        if n_classes == 0:
            raise SchemaError("classifier schema needs a class column")
        if self.class_priors.shape != (n_classes,):
            raise SchemaError("class_priors length does not match the number of classes")
        if np.any(self.class_priors < 0) or abs(self.class_priors.sum() - 1.0) > 1e-9:
            raise SchemaError("class priors must be >= 0 and sum to 1")
        if not self.components:
            raise StructuralError("classifier needs at least one component")
        pis = np.array([c.pi for c in self.components])
        if np.any(pis < 0) or np.any(pis > 1) or abs(pis.sum() - 1.0) > 1e-9:
            raise SchemaError("mixing coefficients must lie in [0, 1] and sum to 1")
        for i, comp in enumerate(self.components):
            if comp.gaussian.dim != s.n_cont:
                raise SchemaError(f"component {i}: Gaussian dimension {comp.gaussian.dim} != {s.n_cont}")
            if len(comp.categorical) != s.n_cat:
                raise SchemaError(f"component {i}: {len(comp.categorical)} categorical dims != {s.n_cat}")
            for d, (p, k) in enumerate(zip(comp.categorical.probs, s.cat_sizes)):
                if p.size != k:
                    raise SchemaError(f"component {i}, categorical dim {d}: {p.size} probs != K_d={k}")
            if not 0 <= comp.class_index < n_classes:
                raise SchemaError(f"component {i}: class index {comp.class_index} out of range")

    # -- structure ---------------------------------------------------------

    @property
    def n_components(self):
        return len(self.components)

    @property
    def n_classes(self):
        return self.schema.n_classes

    @property
    def pi(self):
        return self._pi.copy()

    @property
    def component_classes(self):
        return self._class_of.copy()

    def class_components(self, c):
        """Index set I_c of components assigned to class ``c``."""
        return np.flatnonzero(self._class_of == c)

    # -- input handling ----------------------------------------------------

    def _split(self, data):
        """Return ``(xc, xk)`` arrays for a Sample, Dataset or ``(xc, xk)`` pair."""
        if isinstance(data, Sample):
            xc, xk = data.continuous[None, :], np.asarray(data.categorical, dtype=int)[None, :]
        elif hasattr(data, "xc") and hasattr(data, "xk"):
            xc, xk = data.xc, data.xk
        else:
            xc, xk = data
        xc = np.asarray(xc, dtype=float)
        if xc.ndim == 1:
            xc = xc.reshape(1, -1) if self.schema.n_cont else xc.reshape(-1, 0)
        n = xc.shape[0]
        xk = np.asarray(xk, dtype=int)
        if xk.size == 0:
            xk = np.zeros((n, 0), dtype=int)
        elif xk.ndim == 1:
            xk = xk.reshape(1, -1)
        if xc.shape[1] != self.schema.n_cont or xk.shape != (n, self.schema.n_cat):
            raise SchemaError(
                f"expected {self.schema.n_cont} continuous and {self.schema.n_cat} categorical values, "
                f"got arrays of shape {xc.shape} and {xk.shape}"
            )
        for d, k in enumerate(self.schema.cat_sizes):
            col = xk[:, d]
            if col.size and (col.min() < -1 or col.max() >= k):
                raise SchemaError(f"categorical dimension {d}: index outside [0, {k})")
        return xc, xk

    # -- densities ---------------------------------------------------------

    def log_component_densities(self, data):
        """Matrix of log p(x_n | i), shape ``(N, I)``."""
        xc, xk = self._split(data)
        with np.errstate(divide="ignore"):
            return np.column_stack([c.log_density(xc, xk) for c in self.components])

    def log_joint(self, data, log_dens=None):
        """log(pi_i p(x_n|i)), shape ``(N, I)``."""
        if log_dens is None:
            log_dens = self.log_component_densities(data)
        return log_dens + self._log_pi

    def log_evidence(self, data, log_dens=None):
        return logsumexp(self.log_joint(data, log_dens), axis=1)

    def _checked_log_evidence(self, lj):
        with np.errstate(divide="ignore", invalid="ignore"):
            le = logsumexp(lj, axis=1)
        bad = np.flatnonzero(~(le > LOG_FLOOR))
        if bad.size:
            raise DegenerateInputError(
                f"evidence below exp({LOG_FLOOR:g}) for sample {int(bad[0])}", int(bad[0]))
        return le

    def responsibilities_batch(self, data, log_dens=None):
        lj = self.log_joint(data, log_dens)
        return np.minimum(np.exp(lj - self._checked_log_evidence(lj)[:, None]), 1.0)

    def class_posterior_batch(self, data, log_dens=None):
        rho = self.responsibilities_batch(data, log_dens)
        post = np.zeros((rho.shape[0], self.n_classes))
        np.add.at(post.T, self._class_of, rho.T)
        return np.minimum(post, 1.0)

    def predict(self, data, log_dens=None):
        """Winner-takes-all class index per sample; ties go to the lowest index."""
        return np.argmax(self.class_posterior_batch(data, log_dens), axis=1)

    # -- editing -----------------------------------------------------------

    def remove_component(self, i):
        """New classifier without component ``i``; remaining pi renormalized globally."""
        n = self.n_components
        if not 0 <= i < n:
            raise IndexError(f"component index {i} out of range")
        if n < 2:
            raise StructuralError("cannot remove the only component")
        c = self.components[i].class_index
        if len(self.class_components(c)) == 1:
            raise StructuralError(f"component {i} is the last component of class {c}")
        rest = [comp for j, comp in enumerate(self.components) if j != i]
        total = float(sum(comp.pi for comp in rest))
        if total <= 0:
            raise StructuralError("remaining components have zero total mixing weight")
        return Classifier(self.schema, self.class_priors, [comp.with_pi(comp.pi / total) for comp in rest])

    def with_components(self, components):
        return Classifier(self.schema, self.class_priors, components)

    def __repr__(self):
        return f"Classifier(classes={self.n_classes}, components={self.n_components}, D_cont={self.schema.n_cont}, D_cat={self.schema.n_cat})"


# -- single-sample API --------------------------------------------------------


def component_density(component, sample):
    """p(x | i) for one sample."""
    xc = np.asarray(sample.continuous, dtype=float)
    if xc.size != component.gaussian.dim or len(sample.categorical) != len(component.categorical):
        raise SchemaError("sample does not match the component's dimensions")
    xk = np.asarray(sample.categorical, dtype=int)
    for d, p in enumerate(component.categorical.probs):
        if not 0 <= xk[d] < p.size:
            raise SchemaError(f"categorical dimension {d}: index {xk[d]} outside [0, {p.size})")
    with np.errstate(divide="ignore"):
        return float(np.exp(component.log_density(xc[None, :], xk[None, :])[0]))


def evidence(classifier, sample):
    return float(np.exp(classifier.log_evidence(sample)[0]))


def class_posterior(classifier, sample):
    return classifier.class_posterior_batch(sample)[0]


def classify(classifier, sample):
    return int(classifier.predict(sample)[0])


def responsibilities(classifier, sample):
    return classifier.responsibilities_batch(sample)[0]


def remove_component(classifier, i):
    return classifier.remove_component(i)


def classification_error(classifier, data, log_dens=None):
    """Fraction of labeled samples in ``data`` that are misclassified."""
    if data.y is None:
        raise SchemaError("classification error needs labeled data")
    if len(data.y) == 0:
        raise EmptyInputError("classification error of an empty dataset")
    return float(np.mean(classifier.predict(data, log_dens) != data.y))

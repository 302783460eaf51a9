"""Variational Bayesian training of per-class hybrid mixtures.

Each class is modeled by its own mixture, trained with the standard
variational GMM updates (Normal-Wishart posteriors over mean/precision,
Dirichlet posterior over mixing weights) extended with one Dirichlet
posterior per categorical column.  Every iteration runs an E step, an M step
and a pruning step.  Classes are iterated in lockstep so that a single trace
records the classifier as a whole.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
from scipy.special import digamma, logsumexp

from .entropy import component_uncertainty
from .errors import EmptyInputError, SchemaError
from .model import Classifier, make_component

logger = logging.getLogger(__name__)

PRUNING_STRATEGIES = ("resp", "impo", "unct", "none")
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TrainingConfig:
    """Hyperparameters of :func:`fit`.

    ``nu0`` defaults to ``D_cont + 2``.  The Wishart prior scale is chosen so
    that the prior mean covariance is ``prior_cov_scale`` times the average
    feature variance (times the identity); smaller values give more local
    components.
    """

    initial_components_per_class: int = 10
    max_iterations: int = 200
    convergence_tol: float = 1e-4
    beta0: float = 1e-2
    nu0: Optional[float] = None
    prior_cov_scale: float = 1.0
    epsilon0: float = 1.0
    alpha0: float = 1e-3
    pruning: str = "resp"
    prune_threshold: float = 1.0
    covariance: str = "full"
    rng_seed: int = 0
    unct_cont_weight: float = 1.0
    unct_cat_weight: float = 1.0
    track_error: bool = True

    def __post_init__(self):
        self.pruning = str(self.pruning).lower()
        if self.pruning not in PRUNING_STRATEGIES:
            raise ValueError(f"unknown pruning strategy {self.pruning!r}")
        if self.covariance not in ("full", "diag"):
            raise ValueError(f"unknown covariance type {self.covariance!r}")
        if self.initial_components_per_class < 1:
            raise ValueError("initial_components_per_class must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.pruning == "resp" and self.prune_threshold < 0:
            raise ValueError("Resp pruning threshold must be >= 0")
        if self.pruning == "impo" and not 0 <= self.prune_threshold <= 1:
            raise ValueError("Impo pruning threshold must lie in [0, 1]")
        for name in ("beta0", "epsilon0", "alpha0", "prior_cov_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown training option {key!r}")
            kwargs[key] = _coerce(value, known[key].type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        """Read ``key = value`` lines or a JSON object."""
        with open(path) as fh:
            text = fh.read()
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError:
            mapping = {}
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                k, v = line.split("=", 1)
                mapping[k.strip()] = v.strip()
        return cls.from_mapping(mapping)

    def to_dict(self):
        return asdict(self)


def _coerce(value, typ):
    if not isinstance(value, str):
        return value
    typ = str(typ)
    if value.lower() in ("none", "null", ""):
        return None
    if "bool" in typ:
        return value.lower() in ("1", "true", "yes", "on")
    if "int" in typ and "float" not in typ:
        return int(value)
    if "float" in typ:
        return float(value)
    return value


@dataclass
class SecondOrderParams:
    """Posterior parameter distributions of every component.

    Arrays are indexed by the component order of the trained classifier.
    ``eps[d]`` has shape ``(I, K_d)``.
    """

    m: np.ndarray
    beta: np.ndarray
    nu: np.ndarray
    W: np.ndarray
    eps: list
    alpha: np.ndarray
    class_index: np.ndarray

    def __post_init__(self):
        self.validate()

    @property
    def n_components(self):
        return len(self.beta)

    def validate(self):
        D = self.m.shape[1] if self.m.ndim == 2 else 0
        if np.any(self.beta <= 0):
            raise SchemaError("second-order params: beta must be > 0")
        if np.any(self.nu <= D - 1):
            raise SchemaError("second-order params: nu must exceed D_cont - 1")
        for i in range(self.n_components):
            if D:
                try:
                    np.linalg.cholesky(self.W[i])
                except np.linalg.LinAlgError:
                    raise SchemaError(f"second-order params: W[{i}] is not SPD") from None
        for e in self.eps:
            if np.any(e <= 0):
                raise SchemaError("second-order params: Dirichlet parameters must be > 0")
        if np.any(self.alpha <= 0):
            raise SchemaError("second-order params: mixing Dirichlet parameters must be > 0")

    def component(self, i):
        return {"m": self.m[i], "beta": float(self.beta[i]), "nu": float(self.nu[i]),
                "W": self.W[i], "eps": [e[i] for e in self.eps]}

    def uncertainty(self, i, cont_weight=1.0, cat_weight=1.0):
        c = self.component(i)
        return component_uncertainty(c["beta"], c["nu"], c["W"], c["eps"], cont_weight, cat_weight)

    def remove(self, i):
        keep = np.arange(self.n_components) != i
        return SecondOrderParams(self.m[keep], self.beta[keep], self.nu[keep], self.W[keep],
                                 [e[keep] for e in self.eps], self.alpha[keep], self.class_index[keep])

    def to_dict(self):
        return {
            "components": [
                {"m": self.m[i].tolist(), "beta": float(self.beta[i]), "nu": float(self.nu[i]),
                 "W": self.W[i].tolist(), "epsilon": [e[i].tolist() for e in self.eps],
                 "alpha": float(self.alpha[i]), "class": int(self.class_index[i])}
                for i in range(self.n_components)
            ]
        }

    @classmethod
    def from_dict(cls, d, n_cont, cat_sizes):
        comps = d["components"]
        n = len(comps)
        m = np.array([c["m"] for c in comps], dtype=float).reshape(n, n_cont)
        W = np.array([c["W"] for c in comps], dtype=float).reshape(n, n_cont, n_cont)
        eps = [np.array([c["epsilon"][j] for c in comps], dtype=float).reshape(n, k)
               for j, k in enumerate(cat_sizes)]
        return cls(m, np.array([c["beta"] for c in comps], dtype=float),
                   np.array([c["nu"] for c in comps], dtype=float), W, eps,
                   np.array([c["alpha"] for c in comps], dtype=float),
                   np.array([c["class"] for c in comps], dtype=int))


@dataclass
class TraceRecord:
    iteration: int
    components: int
    convergence: float
    train_error: Optional[float]
    per_class_components: tuple = ()


# -- per-class variational state -------------------------------------------------


@dataclass
class _Prior:
    alpha0: float
    beta0: float
    m0: np.ndarray
    W0_inv: np.ndarray
    nu0: float
    eps0: float


@dataclass
class VIState:
    """Variational posterior of one class mixture plus its data."""

    xc: np.ndarray
    xk: np.ndarray
    cat_sizes: tuple
    prior: _Prior
    alpha: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    eps: list
    resp: Optional[np.ndarray] = None
    diag: bool = False
    converged: bool = False
    iterations: int = 0
    convergence: float = math.inf

    @property
    def n_components(self):
        return len(self.alpha)

    @property
    def dim(self):
        return self.xc.shape[1]

    @property
    def nk(self):
        """Un-normalized responsibility mass sum_n rho_nk."""
        if self.resp is None:
            return self.alpha - self.prior.alpha0
        return self.resp.sum(axis=0)

    def mixing(self):
        return self.alpha / self.alpha.sum()

    def keep(self, mask):
        mask = np.asarray(mask, dtype=bool)
        self.alpha = self.alpha[mask]
        self.beta = self.beta[mask]
        self.m = self.m[mask]
        self.W = self.W[mask]
        self.nu = self.nu[mask]
        self.eps = [e[mask] for e in self.eps]
        if self.resp is not None:
            self.resp = self.resp[:, mask]
            s = self.resp.sum(axis=1, keepdims=True)
            self.resp = np.divide(self.resp, s, out=np.full_like(self.resp, 1.0 / mask.sum()), where=s > 0)

    def copy(self):
        return replace(self, alpha=self.alpha.copy(), beta=self.beta.copy(), m=self.m.copy(),
                       W=self.W.copy(), nu=self.nu.copy(), eps=[e.copy() for e in self.eps],
                       resp=None if self.resp is None else self.resp.copy())


def _kmeanspp(points, k, rng):
    """k-means++ seeding over distinct rows; returns indices into ``points``."""
    n = points.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return np.array(chosen)


def _safe_inverse(A, what):
    """Inverse of an SPD matrix, adding a trace-scaled ridge if Cholesky fails."""
    D = A.shape[0]
    ridge = 1e-8 * max(np.trace(A), 1e-300) / D
    M = A
    for _ in range(12):
        try:
            L = np.linalg.cholesky(M)
            Linv = np.linalg.inv(L)
            return Linv.T @ Linv
        except np.linalg.LinAlgError:
            logger.info("%s: Cholesky failed, adding ridge %.3g", what, ridge)
            M = A + ridge * np.eye(D)
            ridge *= 10.0
    raise np.linalg.LinAlgError(f"{what}: matrix could not be regularized")


def _symmetrize(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def init_state(xc, xk, cat_sizes, config, avg_var, rng):
    """Seed component means with k-means++ and give every component the
    class sample covariance and an equal share of the samples."""
    n, D = xc.shape
    if n == 0:
        raise EmptyInputError("cannot train a mixture on an empty class")
    nu0 = config.nu0 if config.nu0 is not None else D + 2.0
    if n < D + 1:
        logger.warning("class with %d samples in %d dimensions is under-determined; strengthening the prior", n, D)
        nu0 = nu0 + D + 1.0
    prior_cov = config.prior_cov_scale * avg_var
    W0_inv = np.eye(D) * prior_cov * max(nu0 - D - 1.0, 1.0)
    m0 = xc.mean(axis=0) if D else np.zeros(0)
    prior = _Prior(config.alpha0, config.beta0, m0, W0_inv, nu0, config.epsilon0)

    onehot = [np.eye(k)[xk[:, d]] for d, k in enumerate(cat_sizes)]
    feats = np.column_stack([xc] + onehot) if (D or onehot) else np.zeros((n, 1))
    _, uniq = np.unique(feats, axis=0, return_index=True)
    uniq = np.sort(uniq)
    K = min(config.initial_components_per_class, uniq.size)
    seeds = uniq[_kmeanspp(feats[uniq], K, rng)]
    K = seeds.size

    nk = np.full(K, n / K)
    if D:
        cov = np.cov(xc, rowvar=False).reshape(D, D) if n > 1 else np.zeros((D, D))
        if config.covariance == "diag":
            cov = np.diag(np.diag(cov))
    beta = config.beta0 + nk
    nu = nu0 + nk
    m = xc[seeds].copy()
    W = np.empty((K, D, D))
    for k in range(K):
        W[k] = _safe_inverse(W0_inv + nk[k] * cov, "init W") if D else np.zeros((0, 0))
    eps = []
    for d, kd in enumerate(cat_sizes):
        freq = np.bincount(xk[:, d], minlength=kd) / n
        eps.append(config.epsilon0 + np.outer(nk, freq))
    alpha = config.alpha0 + nk
    return VIState(xc, xk, tuple(cat_sizes), prior, alpha, beta, m, W, nu, eps,
                   diag=config.covariance == "diag")


def expected_log_resp(state):
    """Unnormalized log responsibilities E[ln pi_k] + E[ln p(x_n | k)]."""
    xc, D = state.xc, state.dim
    n, K = xc.shape[0], state.n_components
    log_rho = np.empty((n, K))
    e_ln_pi = digamma(state.alpha) - digamma(state.alpha.sum())
    j = np.arange(1, D + 1)
    for k in range(K):
        if D:
            sign, logdet = np.linalg.slogdet(state.W[k])
            e_ln_det = np.sum(digamma((state.nu[k] + 1 - j) / 2.0)) + D * math.log(2.0) + logdet
            diff = xc - state.m[k]
            quad = D / state.beta[k] + state.nu[k] * np.einsum("ni,ij,nj->n", diff, state.W[k], diff)
            log_rho[:, k] = e_ln_pi[k] + 0.5 * e_ln_det - 0.5 * D * _LOG_2PI - 0.5 * quad
        else:
            log_rho[:, k] = e_ln_pi[k]
    for d, e in enumerate(state.eps):
        e_ln_delta = digamma(e) - digamma(e.sum(axis=1, keepdims=True))
        log_rho += e_ln_delta[:, state.xk[:, d]].T
    return log_rho


def e_step(state):
    log_rho = expected_log_resp(state)
    state.resp = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))
    return state


def m_step(state):
    p = state.prior
    r = state.resp
    xc, D = state.xc, state.dim
    nk = r.sum(axis=0)
    safe = np.maximum(nk, 1e-300)
    state.alpha = p.alpha0 + nk
    state.beta = p.beta0 + nk
    state.nu = p.nu0 + nk
    if D:
        xbar = (r.T @ xc) / safe[:, None]
        state.m = (p.beta0 * p.m0 + nk[:, None] * xbar) / state.beta[:, None]
        for k in range(state.n_components):
            diff = xc - xbar[k]
            S = (r[:, k, None] * diff).T @ diff
            dm = (xbar[k] - p.m0)[:, None]
            w_inv = p.W0_inv + S + (p.beta0 * nk[k] / (p.beta0 + nk[k])) * (dm @ dm.T)
            w_inv = _symmetrize(w_inv)
            if state.diag:
                w_inv = np.diag(np.diag(w_inv))
            state.W[k] = _symmetrize(_safe_inverse(w_inv, f"W[{k}]"))
    for d, kd in enumerate(state.cat_sizes):
        counts = np.zeros((state.n_components, kd))
        for cat in range(kd):
            counts[:, cat] = r[state.xk[:, d] == cat].sum(axis=0)
        state.eps[d] = p.eps0 + counts
    return state


def importance_from_pi(pi):
    """Piecewise-linear importance of each mixing coefficient in ``pi``."""
    pi = np.asarray(pi, dtype=float)
    bar = 1.0 / pi.size
    if pi.size == 1:
        return np.array([0.5 if pi[0] <= bar else 1.0])
    return np.where(pi <= bar, pi / (2.0 * bar), (1.0 - pi) / (2.0 * (bar - 1.0)) + 1.0)


def state_uncertainty(state, cont_weight=1.0, cat_weight=1.0):
    return np.array([
        component_uncertainty(state.beta[k], state.nu[k], state.W[k], [e[k] for e in state.eps],
                              cont_weight, cat_weight)
        for k in range(state.n_components)
    ])


def prune(state, strategy, threshold, cont_weight=1.0, cat_weight=1.0):
    """Drop components by the given strategy; never empties the mixture.

    resp: sum_n rho_nk < threshold.  impo: importance < threshold.
    unct: uncertainty > threshold.  All comparisons are strict.
    """
    strategy = strategy.lower()
    if strategy == "none" or state.n_components <= 1:
        return state
    if strategy == "resp":
        score = state.nk
        drop = score < threshold
    elif strategy == "impo":
        score = importance_from_pi(state.mixing())
        drop = score < threshold
    elif strategy == "unct":
        score = -state_uncertainty(state, cont_weight, cat_weight)
        drop = -score > threshold
    else:
        raise ValueError(f"unknown pruning strategy {strategy!r}")
    if drop.all():
        drop[int(np.argmax(score))] = False
    if drop.any():
        state.keep(~drop)
    return state


def _relative_change(new, old):
    return np.max(np.abs(new - old) / np.maximum(np.abs(old), 1.0)) if new.size else 0.0


def vi_iteration(state, config):
    """One E step, M step and pruning step; updates the convergence statistic."""
    old_m, old_pi, old_k = state.m.copy(), state.mixing(), state.n_components
    e_step(state)
    m_step(state)
    prune(state, config.pruning, config.prune_threshold, config.unct_cont_weight, config.unct_cat_weight)
    state.iterations += 1
    if state.n_components != old_k:
        state.convergence = math.inf
    else:
        state.convergence = float(max(_relative_change(state.m, old_m),
                                      _relative_change(state.mixing(), old_pi)))
    state.converged = state.convergence < config.convergence_tol
    return state


@dataclass
class FitResult:
    classifier: Classifier
    second_order: SecondOrderParams
    trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def vi_steps(self):
        return len(self.trace)

    def __iter__(self):
        # allows ``clf, so = fit(...)``
        return iter((self.classifier, self.second_order))


def _average_variance(xc):
    if xc.shape[1] == 0:
        return 1.0
    v = float(np.mean(xc.var(axis=0)))
    return v if v > 0 else 1.0


def assemble(schema, class_priors, states):
    """Point classifier (posterior means) and second-order params from class states."""
    comps = []
    ms, betas, nus, Ws, alphas, cls = [], [], [], [], [], []
    cat_sizes = schema.cat_sizes
    eps = [[] for _ in cat_sizes]
    D = schema.n_cont
    for c, st in enumerate(states):
        if st is None:
            continue
        mix = st.mixing()
        for k in range(st.n_components):
            if D:
                cov = _safe_inverse(st.W[k], "expected covariance") / (st.nu[k] - D - 1.0)
                cov = _symmetrize(cov)
            else:
                cov = np.zeros((0, 0))
            probs = [e[k] / e[k].sum() for e in st.eps]
            comps.append(make_component(st.m[k], cov, probs, c, class_priors[c] * mix[k]))
            ms.append(st.m[k])
            betas.append(st.beta[k])
            nus.append(st.nu[k])
            Ws.append(st.W[k])
            alphas.append(st.alpha[k])
            cls.append(c)
            for d in range(len(cat_sizes)):
                eps[d].append(st.eps[d][k])
    pis = np.array([c.pi for c in comps])
    comps = [c.with_pi(c.pi / pis.sum()) for c in comps]
    n = len(comps)
    so = SecondOrderParams(np.array(ms).reshape(n, D), np.array(betas), np.array(nus),
                           np.array(Ws).reshape(n, D, D),
                           [np.array(e).reshape(n, k) for e, k in zip(eps, cat_sizes)],
                           np.array(alphas), np.array(cls, dtype=int))
    return Classifier(schema, class_priors, comps), so


def fit(data, config=None):
    """Train a classifier on labeled ``data``.

    Returns a :class:`FitResult` that unpacks as ``(classifier, second_order)``
    and also carries the per-iteration trace.
    """
    config = config or TrainingConfig()
    if data.y is None:
        raise SchemaError("training requires labeled data")
    if len(data) == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    schema = data.schema
    C = schema.n_classes
    counts = np.bincount(data.y, minlength=C)
    if np.any(counts == 0):
        missing = [schema.class_labels[c] for c in np.flatnonzero(counts == 0)]
        raise SchemaError(f"classes without training samples: {missing}")
    class_priors = counts / counts.sum()
    avg_var = _average_variance(data.xc)
    rng = np.random.default_rng(config.rng_seed)
    states = []
    for c in range(C):
        idx = np.flatnonzero(data.y == c)
        states.append(init_state(data.xc[idx], data.xk[idx], schema.cat_sizes, config, avg_var, rng))

    trace = []
    for it in range(1, config.max_iterations + 1):
        for st in states:
            if not st.converged:
                vi_iteration(st, config)
        err = None
        if config.track_error:
            clf, _ = assemble(schema, class_priors, states)
            err = float(np.mean(clf.predict(data) != data.y))
        trace.append(TraceRecord(it, sum(s.n_components for s in states),
                                 max(s.convergence for s in states), err,
                                 tuple(s.n_components for s in states)))
        if all(s.converged for s in states):
            break
    converged = all(s.converged for s in states)
    if not converged:
        logger.warning("VI did not converge within %d iterations", config.max_iterations)
    clf, so = assemble(schema, class_priors, states)
    return FitResult(clf, so, trace, converged)


def training_trace(result):
    """Per-iteration records of a fit run as plain dicts."""
    return [asdict(r) for r in result.trace]

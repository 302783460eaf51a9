"""Datasets: CSV ingestion, preprocessing, splitting and synthetic generators."""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, SchemaError
from .model import CATEGORICAL, CLASS, CONTINUOUS, FEATURE, ColumnSchema, Sample, Schema

logger = logging.getLogger(__name__)

IGNORE = "ignore"
_KINDS = {CONTINUOUS, CATEGORICAL, CLASS, IGNORE}


@dataclass(frozen=True)
class Dataset:
    """Typed samples held column-wise.

    ``xc`` has shape ``(N, D_cont)``, ``xk`` holds category indices with
    shape ``(N, D_cat)`` and ``y`` holds class indices (or ``None`` for
    unlabeled data).  Column order inside ``xc``/``xk`` follows the schema.
    """

    schema: Schema
    xc: np.ndarray
    xk: np.ndarray
    y: np.ndarray = None
    provenance: tuple = ()

    def __post_init__(self):
        n = np.asarray(self.xc).shape[0] if np.asarray(self.xc).ndim == 2 else len(self.xk)
        xc = np.asarray(self.xc, dtype=float).reshape(n, self.schema.n_cont)
        xk = np.asarray(self.xk, dtype=int).reshape(n, self.schema.n_cat)
        object.__setattr__(self, "xc", xc)
        object.__setattr__(self, "xk", xk)
        if self.y is not None:
            y = np.asarray(self.y, dtype=int).reshape(n)
            if self.schema.class_column is None:
                raise SchemaError("labels given but schema has no class column")
            if y.size and (y.min() < 0 or y.max() >= self.schema.n_classes):
                raise SchemaError("class index outside the declared classes")
            object.__setattr__(self, "y", y)
        for d, k in enumerate(self.schema.cat_sizes):
            col = xk[:, d]
            if col.size and (col.min() < -1 or col.max() >= k):
                raise SchemaError(f"categorical column {d}: index outside [0, {k})")
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def __len__(self):
        return self.xc.shape[0]

    @property
    def labeled(self):
        return self.y is not None

    def sample(self, n):
        """The ``n``-th row as a :class:`Sample`."""
        label = None if self.y is None else int(self.y[n])
        return Sample(self.xc[n], tuple(self.xk[n]), label)

    def samples(self):
        return [self.sample(n) for n in range(len(self))]

    def subset(self, idx, note=None):
        idx = np.asarray(idx, dtype=int)
        prov = self.provenance + ((note,) if note else ())
        return Dataset(self.schema, self.xc[idx], self.xk[idx],
                       None if self.y is None else self.y[idx], prov)

    def class_subset(self, c):
        return self.subset(np.flatnonzero(self.y == c))

    def with_continuous(self, xc, columns, note):
        """Replace the continuous block (and its column declarations)."""
        cls_col = self.schema.class_column
        cols = tuple(columns) + self.schema.categorical + ((cls_col,) if cls_col else ())
        return Dataset(Schema(cols), xc, self.xk, self.y, self.provenance + (note,))

    def unlabeled(self):
        return Dataset(self.schema.features_only(), self.xc, self.xk, None, self.provenance)


# -- CSV ---------------------------------------------------------------------


def read_schema_declaration(path):
    """Parse a schema declaration file into ``{column: kind}``.

    Accepts JSON (an object mapping, or ``{"columns": ...}``) or plain text
    with one ``name: kind`` / ``name = kind`` / ``name,kind`` per line.
    Kinds: continuous, categorical, class, ignore.
    """
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    decl = {}
    if obj is not None:
        if isinstance(obj, dict) and "columns" in obj:
            obj = obj["columns"]
        if isinstance(obj, dict):
            decl = {str(k): str(v) for k, v in obj.items()}
        elif isinstance(obj, list):
            decl = {str(d["name"]): str(d["kind"]) for d in obj}
        else:
            raise SchemaError(f"{path}: unsupported schema declaration")
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in (":", "=", ","):
                if sep in line:
                    name, kind = (s.strip() for s in line.split(sep, 1))
                    break
            else:
                raise SchemaError(f"{path}:{lineno}: expected 'name: kind'")
            decl[name] = kind
    for name, kind in decl.items():
        if kind not in _KINDS:
            raise SchemaError(f"column {name!r}: unknown kind {kind!r}")
    if sum(k == CLASS for k in decl.values()) > 1:
        raise SchemaError("schema declaration has more than one class column")
    return decl


def load_csv(path, declaration, reference=None, unseen="error", labeled=None):
    """Load a CSV file with a header row.

    Parameters
    ----------
    path : path-like or file object
    declaration : dict or path-like
        Column name -> kind.  Columns absent from the declaration are an
        error; use kind ``ignore`` to skip a column.
    reference : Schema, optional
        Reuse category/class indices from an existing schema (e.g. the
        training set or a trained model).  Categories not in the reference
        follow ``unseen``: ``"error"`` or ``"uniform"`` (index -1).
    labeled : bool, optional
        Require (True) or drop (False) the class column.  Default: use it
        when declared.
    """
    if not isinstance(declaration, dict):
        declaration = read_schema_declaration(declaration)
    if unseen not in ("error", "uniform"):
        raise ValueError(f"unknown unseen-category policy {unseen!r}")
    if hasattr(path, "read"):
        rows = list(csv.reader(path))
        source = getattr(path, "name", "<stream>")
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        source = str(path)
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyInputError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for name, kind in declaration.items():
        if name not in header and not (labeled is False and kind == CLASS):
            raise SchemaError(f"{source}: declared column {name!r} not in header")
    for name in header:
        if name not in declaration:
            raise SchemaError(f"{source}: unknown column {name!r} (declare it or mark it 'ignore')")
    class_name = next((n for n, k in declaration.items() if k == CLASS), None)
    if labeled is True and class_name is None:
        raise SchemaError(f"{source}: labeled load requested but no class column declared")
    if labeled is False:
        class_name = None

    ref_cols = {c.name: c for c in reference.columns} if reference is not None else {}
    cont_names = [h for h in header if declaration[h] == CONTINUOUS]
    cat_names = [h for h in header if declaration[h] == CATEGORICAL]
    col_idx = {h: j for j, h in enumerate(header)}

    xc = np.empty((len(body), len(cont_names)))
    raw_cat = [[None] * len(body) for _ in cat_names]
    raw_cls = [None] * len(body)
    for n, row in enumerate(body):
        rowno = n + 2
        if len(row) != len(header):
            raise SchemaError(f"{source}:{rowno}: expected {len(header)} fields, got {len(row)}")
        for j, name in enumerate(cont_names):
            cell = row[col_idx[name]].strip()
            try:
                xc[n, j] = float(cell)
            except ValueError:
                raise SchemaError(f"{source}:{rowno}: column {name!r}: cannot parse {cell!r} as a number") from None
            if not np.isfinite(xc[n, j]):
                raise SchemaError(f"{source}:{rowno}: column {name!r}: non-finite value")
        for j, name in enumerate(cat_names):
            cell = row[col_idx[name]].strip()
            if not cell:
                raise SchemaError(f"{source}:{rowno}: column {name!r}: missing value")
            raw_cat[j][n] = cell
        if class_name is not None:
            cell = row[col_idx[class_name]].strip()
            if not cell:
                raise SchemaError(f"{source}:{rowno}: missing class label")
            raw_cls[n] = cell

    def encode(name, values, role):
        ref = ref_cols.get(name)
        if ref is not None:
            cats = list(ref.categories)
        else:
            cats = list(dict.fromkeys(values))
        lookup = {c: k for k, c in enumerate(cats)}
        idx = np.empty(len(values), dtype=int)
        for n, v in enumerate(values):
            k = lookup.get(v)
            if k is None:
                if role == CLASS or unseen == "error":
                    raise SchemaError(f"{source}:{n + 2}: column {name!r}: unseen category {v!r}")
                k = -1
            idx[n] = k
        return ColumnSchema(name, CATEGORICAL, role, tuple(cats)), idx

    columns = []
    xk = np.empty((len(body), len(cat_names)), dtype=int)
    cat_cols = {}
    for j, name in enumerate(cat_names):
        col, xk[:, j] = encode(name, raw_cat[j], FEATURE)
        if col.n_categories < 2:
            col = ColumnSchema(name, CATEGORICAL, FEATURE, col.categories + ("__other__",))
        cat_cols[name] = col
    y = None
    cls_col = None
    if class_name is not None:
        cls_col, y = encode(class_name, raw_cls, CLASS)
    for name in header:
        kind = declaration[name]
        if kind == CONTINUOUS:
            columns.append(ColumnSchema(name))
        elif kind == CATEGORICAL:
            columns.append(cat_cols[name])
        elif kind == CLASS and cls_col is not None:
            columns.append(cls_col)
    return Dataset(Schema(tuple(columns)), xc, xk, y, (f"load_csv:{source}",))


def save_csv(dataset, path):
    """Write a dataset as CSV with a header (categories written by label)."""
    s = dataset.schema
    names = [c.name for c in s.columns]
    cont = {c.name: j for j, c in enumerate(s.continuous)}
    cat = {c.name: j for j, c in enumerate(s.categorical)}
    fh = path if hasattr(path, "write") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for n in range(len(dataset)):
            row = []
            for col in s.columns:
                if col.role == CLASS:
                    row.append(col.categories[dataset.y[n]] if dataset.y is not None else "")
                elif col.kind == CONTINUOUS:
                    row.append(repr(float(dataset.xc[n, cont[col.name]])))
                else:
                    k = dataset.xk[n, cat[col.name]]
                    row.append(col.categories[k] if k >= 0 else "")
            w.writerow(row)
    finally:
        if fh is not path:
            fh.close()


def schema_declaration(schema):
    return {c.name: (CLASS if c.role == CLASS else c.kind) for c in schema.columns}


# -- transforms ----------------------------------------------------------------


@dataclass(frozen=True)
class ZTransform:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, dataset):
        xc = (dataset.xc - self.mean) / self.std
        return Dataset(dataset.schema, xc, dataset.xk, dataset.y, dataset.provenance + ("z_normalize",))

    def to_dict(self):
        return {"type": "z", "mean": self.mean.tolist(), "std": self.std.tolist()}


def z_normalize(dataset):
    """Standardize continuous columns; returns ``(dataset, transform)``.

    Zero-variance columns are centered only (std treated as 1) with a warning.
    """
    mean = dataset.xc.mean(axis=0)
    std = dataset.xc.std(axis=0)
    flat = std == 0
    if np.any(flat):
        names = [c.name for c, f in zip(dataset.schema.continuous, flat) if f]
        logger.warning("zero-variance columns passed through unscaled: %s", ", ".join(names))
        std = np.where(flat, 1.0, std)
    t = ZTransform(mean, std)
    return t.apply(dataset), t


@dataclass(frozen=True)
class PCATransform:
    mean: np.ndarray
    basis: np.ndarray  # (D_cont, k), columns are principal axes
    eigenvalues: np.ndarray  # all eigenvalues, descending

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def retained_variance(self):
        total = self.eigenvalues.sum()
        return float(self.eigenvalues[: self.k].sum() / total) if total > 0 else 1.0

    def apply(self, dataset):
        xc = (dataset.xc - self.mean) @ self.basis
        cols = [ColumnSchema(f"pc{j + 1}") for j in range(self.k)]
        return dataset.with_continuous(xc, cols, f"pca:{self.k}")

    def inverse(self, z):
        return z @ self.basis.T + self.mean

    def to_dict(self):
        return {"type": "pca", "mean": self.mean.tolist(), "basis": self.basis.tolist(),
                "eigenvalues": self.eigenvalues.tolist()}


def pca(dataset, k):
    """Project continuous columns onto the top-``k`` covariance eigenvectors.

    Eigenvectors are sign-fixed so that the largest-magnitude entry is
    positive.  Categorical columns pass through untouched.
    """
    d = dataset.schema.n_cont
    if not 1 <= k <= d:
        raise SchemaError(f"pca: k={k} must lie in [1, D_cont={d}]")
    if len(dataset) < 2:
        raise EmptyInputError("pca needs at least two samples")
    mean = dataset.xc.mean(axis=0)
    cov = np.cov(dataset.xc, rowvar=False).reshape(d, d)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    w = np.clip(w, 0.0, None)
    for j in range(d):
        if v[np.argmax(np.abs(v[:, j])), j] < 0:
            v[:, j] = -v[:, j]
    t = PCATransform(mean, v[:, :k].copy(), w)
    return t.apply(dataset), t


# -- splitting -----------------------------------------------------------------


def _class_indices(dataset):
    if dataset.y is None:
        return [np.arange(len(dataset))]
    return [np.flatnonzero(dataset.y == c) for c in range(dataset.schema.n_classes)]


def split(dataset, test_fraction=0.2, seed=0):
    """Stratified train/test split; deterministic for a given seed."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if len(dataset) == 0:
        raise EmptyInputError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx in _class_indices(dataset):
        idx = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    train = np.sort(np.concatenate(train))
    test = np.sort(np.concatenate(test))
    return (dataset.subset(train, f"split:train:{test_fraction}:{seed}"),
            dataset.subset(test, f"split:test:{test_fraction}:{seed}"))


def kfold(dataset, k, seed=0):
    """Stratified k-fold partition; returns a list of ``(train, test)`` pairs."""
    groups = _class_indices(dataset)
    smallest = min(g.size for g in groups if g.size) if len(dataset) else 0
    if k < 2 or k > smallest:
        raise ValueError(f"kfold: k={k} must lie in [2, smallest class size={smallest}]")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(dataset), dtype=int)
    offset = 0
    for idx in groups:
        idx = rng.permutation(idx)
        fold_of[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    out = []
    for f in range(k):
        out.append((dataset.subset(np.flatnonzero(fold_of != f), f"kfold:{k}:{seed}:train{f}"),
                    dataset.subset(np.flatnonzero(fold_of == f), f"kfold:{k}:{seed}:test{f}")))
    return out


# -- construction helpers ------------------------------------------------------


def from_arrays(xc, y=None, xk=None, cont_names=None, cat_categories=None, class_labels=None,
                cat_names=None, class_name="class", note="arrays"):
    """Build a Dataset from numpy arrays."""
    xc = np.asarray(xc, dtype=float)
    if xc.ndim == 1:
        xc = xc[:, None]
    n, d = xc.shape
    cont_names = cont_names or [f"x{j + 1}" for j in range(d)]
    cols = [ColumnSchema(name) for name in cont_names]
    if xk is None:
        xk = np.zeros((n, 0), dtype=int)
    xk = np.asarray(xk, dtype=int)
    if xk.ndim == 1:
        xk = xk[:, None]
    cat_categories = cat_categories or [tuple(str(v) for v in range(int(xk[:, j].max()) + 1)) for j in range(xk.shape[1])]
    cat_names = cat_names or [f"x{d + j + 1}" for j in range(xk.shape[1])]
    cols += [ColumnSchema(nm, CATEGORICAL, FEATURE, tuple(cats)) for nm, cats in zip(cat_names, cat_categories)]
    if y is not None:
        y = np.asarray(y, dtype=int)
        labels = class_labels or tuple(str(c) for c in range(int(y.max()) + 1))
        cols.append(ColumnSchema(class_name, CATEGORICAL, CLASS, tuple(labels)))
    return Dataset(Schema(tuple(cols)), xc, xk, y, (note,))


def two_moons(n=2000, noise=0.1, seed=0):
    """Two interleaving half circles (two classes)."""
    from sklearn.datasets import make_moons

    x, y = make_moons(n_samples=n, noise=noise, random_state=seed)
    return from_arrays(x, y, class_labels=("moon0", "moon1"), note=f"synth:two_moons:{n}:{noise}:{seed}")


def ripley_like(n=1250, seed=0):
    """Two classes, each an equal mixture of two isotropic Gaussians (sd 0.25)."""
    rng = np.random.default_rng(seed)
    centers = {0: [(-0.3, 0.7), (0.4, 0.7)], 1: [(-0.7, 0.3), (0.3, 0.3)]}
    y = rng.integers(0, 2, n)
    which = rng.integers(0, 2, n)
    mu = np.array([centers[c][w] for c, w in zip(y, which)])
    x = mu + 0.25 * rng.standard_normal((n, 2))
    return from_arrays(x, y, note=f"synth:ripley_like:{n}:{seed}")


def clouds_like(n=2000, seed=0):
    """Class 0 one broad Gaussian, class 1 a mixture of two offset Gaussians."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(int)
    x = np.empty((n, 2))
    n0 = int((y == 0).sum())
    x[y == 0] = rng.standard_normal((n0, 2))
    n1 = n - n0
    sub = rng.random(n1) < 0.5
    c1 = np.where(sub[:, None], [2.0, 0.0], [-1.0, 1.5])
    s1 = np.where(sub[:, None], 0.5, 0.3)
    x[y == 1] = c1 + s1 * rng.standard_normal((n1, 2))
    return from_arrays(x, y, note=f"synth:clouds_like:{n}:{seed}")


def mixed_synthetic(n=600, seed=0):
    """Two continuous and two categorical columns with class-dependent distributions."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    means = np.array([[0.0, 0.0], [1.5, 1.0]])
    x = means[y] + rng.standard_normal((n, 2))
    p_a = np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]])
    p_b = np.array([[0.8, 0.2], [0.35, 0.65]])
    xa = np.array([rng.choice(3, p=p_a[c]) for c in y])
    xb = np.array([rng.choice(2, p=p_b[c]) for c in y])
    return from_arrays(x, y, np.column_stack([xa, xb]),
                       cat_categories=[("A", "B", "C"), ("no", "yes")],
                       note=f"synth:mixed:{n}:{seed}")


@dataclass(frozen=True)
class NoveltyStream:
    """Synthetic stream with a single novel regime.

    ``novel_start``/``novel_end`` delimit (half-open) the injection span;
    ``is_novel`` flags samples drawn from the novel cluster.
    """

    data: Dataset
    novel_start: int
    novel_end: int
    is_novel: np.ndarray


def two_regime_stream(n_before=4000, n_novel=1500, n_after=4000, distance=6.0, ratio=0.25, dim=2, seed=0):
    """Background N(0, I); during the novel regime a fraction ``ratio`` of the
    samples comes from N(distance * e_1, I)."""
    rng = np.random.default_rng(seed)
    n = n_before + n_novel + n_after
    x = rng.standard_normal((n, dim))
    flags = np.zeros(n, dtype=bool)
    span = slice(n_before, n_before + n_novel)
    flags[span] = rng.random(n_novel) < ratio
    x[flags, 0] += distance
    data = from_arrays(x, note=f"synth:two_regime:{n_before}:{n_novel}:{n_after}:{distance}:{ratio}:{seed}")
    return NoveltyStream(data, n_before, n_before + n_novel, flags)


def background_training_set(n=2000, dim=2, seed=0):
    """Labeled single-class background sample matching :func:`two_regime_stream`."""
    rng = np.random.default_rng(seed)
    return from_arrays(rng.standard_normal((n, dim)), np.zeros(n, dtype=int),
                       class_labels=("background",), note=f"synth:background:{n}:{seed}")


# -- bundled benchmark data ----------------------------------------------------


DATA_DIR_ENV = "CMMKIT_DATA_DIR"


def _from_sklearn(loader, name):
    bunch = loader()
    labels = tuple(str(t) for t in getattr(bunch, "target_names", np.unique(bunch.target)))
    names = [str(f).replace(" ", "_") for f in bunch.feature_names]
    return from_arrays(bunch.data, bunch.target, cont_names=names, class_labels=labels, note=f"builtin:{name}")


def load_seeds(path=None):
    """UCI seeds (210 x 7, three wheat varieties) from a local copy.

    Looks for ``seeds_dataset.txt`` in ``$CMMKIT_DATA_DIR`` unless a path is
    given.  The file is whitespace separated with the class (1-3) last.
    """
    if path is None:
        root = os.environ.get(DATA_DIR_ENV)
        if not root:
            raise FileNotFoundError(f"seeds data not available: set {DATA_DIR_ENV} to a directory holding seeds_dataset.txt")
        path = Path(root) / "seeds_dataset.txt"
    raw = np.loadtxt(path)
    names = ["area", "perimeter", "compactness", "kernel_length", "kernel_width", "asymmetry", "groove_length"]
    y = raw[:, -1].astype(int) - 1
    return from_arrays(raw[:, :-1], y, cont_names=names, class_labels=("Kama", "Rosa", "Canadian"), note=f"file:{path}")


def load_builtin(name, seed=0):
    """Named benchmark or synthetic dataset."""
    from sklearn import datasets as skd

    if name == "iris":
        return _from_sklearn(skd.load_iris, name)
    if name == "wine":
        return _from_sklearn(skd.load_wine, name)
    if name == "breast_cancer":
        return _from_sklearn(skd.load_breast_cancer, name)
    if name == "digits":
        return _from_sklearn(skd.load_digits, name)
    if name == "seeds":
        return load_seeds()
    if name == "two_moons":
        return two_moons(seed=seed)
    if name == "ripley":
        return ripley_like(seed=seed)
    if name == "clouds":
        return clouds_like(seed=seed)
    if name == "mixed":
        return mixed_synthetic(seed=seed)
    raise KeyError(f"unknown builtin dataset {name!r}")


BUILTIN_NAMES = ("iris", "wine", "breast_cancer", "digits", "seeds", "two_moons", "ripley", "clouds", "mixed")

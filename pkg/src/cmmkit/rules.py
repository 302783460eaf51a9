"""Human-readable rules from diagonal-covariance classifiers.

Each component becomes one rule: a conjunction of univariate Gaussian
premises (one per continuous column) and, per categorical column, a
disjunction of the categories whose probability is strictly above a
threshold (default ``1/K_d``).  Linguistic labels such as "low"/"high" are
presentation only.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtractionError

DEFAULT_IDENTITY_THRESHOLD = 0.01

DEFAULT_VOCABULARY = {
    1: ("medium",),
    2: ("low", "high"),
    3: ("low", "medium", "high"),
    4: ("very low", "low", "high", "very high"),
    5: ("very low", "low", "medium", "high", "very high"),
}


@dataclass(frozen=True)
class ContinuousPremise:
    dim: int
    mean: float
    std: float
    label: str = None


@dataclass(frozen=True)
class Rule:
    continuous: tuple
    categorical: tuple  # ((dim, (category indices...)), ...) for included dims only
    conclusion: int
    component: int

    def __post_init__(self):
        for p in self.continuous:
            if not p.std > 0:
                raise ExtractionError(f"rule for component {self.component}: std must be > 0")
        for d, cats in self.categorical:
            if not cats:
                raise ExtractionError(f"rule for component {self.component}: empty disjunction in dimension {d}")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    omega: tuple  # per categorical dim
    identity_threshold: float
    cont_names: tuple
    cat_names: tuple
    cat_labels: tuple
    class_name: str
    class_labels: tuple
    category_sets: tuple = field(default=(), compare=False)

    @property
    def tau(self):
        return term_counts(self)

    @property
    def average_tau(self):
        t = self.tau
        return float(np.mean(t)) if t else 0.0


def univariate_hellinger(m1, s1, m2, s2):
    """Hellinger distance between N(m1, s1^2) and N(m2, s2^2)."""
    v = s1 * s1 + s2 * s2
    bc = math.sqrt(2.0 * s1 * s2 / v) * math.exp(-((m1 - m2) ** 2) / (4.0 * v))
    return math.sqrt(max(0.0, 1.0 - min(bc, 1.0)))


def _term_groups(premises, threshold):
    """Assign each premise to a term; a premise joins the first earlier term it matches."""
    reps, groups = [], []
    for p in premises:
        for g, r in enumerate(reps):
            if univariate_hellinger(p.mean, p.std, r.mean, r.std) <= threshold:
                groups.append(g)
                break
        else:
            reps.append(p)
            groups.append(len(reps) - 1)
    return reps, groups


def _labels_for(n, vocabulary):
    vocab = vocabulary.get(n)
    return tuple(vocab) if vocab else tuple(f"term{k + 1}" for k in range(n))


def extract_rules(classifier, omega=None, identity_threshold=DEFAULT_IDENTITY_THRESHOLD,
                  vocabulary=None, diag_atol=1e-12):
    """One rule per component.

    ``omega`` is a single threshold or one per categorical column; by
    default ``1/K_d``.  Raises :class:`ExtractionError` if a covariance
    matrix is not diagonal.
    """
    schema = classifier.schema
    vocabulary = vocabulary or DEFAULT_VOCABULARY
    for i, c in enumerate(classifier.components):
        if not c.gaussian.is_diagonal(diag_atol):
            raise ExtractionError(f"component {i} has a non-diagonal covariance matrix")
    sizes = schema.cat_sizes
    if omega is None:
        omegas = tuple(1.0 / k for k in sizes)
    elif np.ndim(omega) == 0:
        omegas = tuple(float(omega) for _ in sizes)
    else:
        omegas = tuple(float(w) for w in omega)
        if len(omegas) != len(sizes):
            raise ValueError("need one omega per categorical column")

    D = schema.n_cont
    cont = [[ContinuousPremise(d, *c.gaussian.marginal(d)) for d in range(D)] for c in classifier.components]
    for d in range(D):
        column = [cont[i][d] for i in range(len(cont))]
        reps, groups = _term_groups(column, identity_threshold)
        order = sorted(range(len(reps)), key=lambda g: (reps[g].mean, g))
        names = _labels_for(len(reps), vocabulary)
        label_of = {g: names[pos] for pos, g in enumerate(order)}
        for i, g in enumerate(groups):
            p = cont[i][d]
            cont[i][d] = ContinuousPremise(p.dim, p.mean, p.std, label_of[g])

    rules, cat_sets = [], []
    for i, c in enumerate(classifier.components):
        sets = []
        cats = []
        for d, (p, w) in enumerate(zip(c.categorical.probs, omegas)):
            chosen = tuple(int(k) for k in np.flatnonzero(p > w))
            sets.append(chosen)
            if chosen and len(chosen) < p.size:
                cats.append((d, chosen))
        cat_sets.append(tuple(sets))
        rules.append(Rule(tuple(cont[i]), tuple(cats), c.class_index, i))
    cls_col = schema.class_column
    return RuleSet(tuple(rules), omegas, float(identity_threshold),
                   tuple(col.name for col in schema.continuous),
                   tuple(col.name for col in schema.categorical),
                   tuple(col.categories for col in schema.categorical),
                   cls_col.name, cls_col.categories, tuple(cat_sets))


def term_count(ruleset, d):
    """Number of distinct terms tau_d for feature dimension ``d``.

    Dimensions are numbered continuous first, then categorical.
    """
    D = len(ruleset.cont_names)
    if d < D:
        premises = [r.continuous[d] for r in ruleset.rules]
        t = ruleset.identity_threshold
        count = 0
        for i, p in enumerate(premises):
            later = premises[i + 1:]
            if not any(univariate_hellinger(p.mean, p.std, q.mean, q.std) <= t for q in later):
                count += 1
        return count
    j = d - D
    if not 0 <= j < len(ruleset.cat_names):
        raise IndexError(f"dimension {d} out of range")
    used = set()
    if ruleset.category_sets:
        for sets in ruleset.category_sets:
            used.update(sets[j])
    else:
        for r in ruleset.rules:
            for dd, cats in r.categorical:
                if dd == j:
                    used.update(cats)
    return len(used)


def term_counts(ruleset):
    n = len(ruleset.cont_names) + len(ruleset.cat_names)
    return [term_count(ruleset, d) for d in range(n)]


# -- rendering ----------------------------------------------------------------------


def _premise_texts(ruleset, rule, fmt):
    parts = []
    for p in rule.continuous:
        name = ruleset.cont_names[p.dim]
        label = p.label or f"~N({p.mean:.3g}, {p.std:.3g}^2)"
        parts.append(f"{name} is {label}")
    for d, cats in rule.categorical:
        name = ruleset.cat_names[d]
        terms = [f"{name} is {ruleset.cat_labels[d][k]}" for k in cats]
        parts.append(terms[0] if len(terms) == 1 else "(" + " or ".join(terms) + ")")
    return parts


def render_rules(ruleset, fmt="text"):
    """Render as ``text``, ``markdown`` or ``json``."""
    if fmt == "json":
        return json.dumps(ruleset_to_dict(ruleset), indent=2)
    if fmt not in ("text", "markdown"):
        raise ValueError(f"unknown rule format {fmt!r}")
    lines = []
    for r in ruleset.rules:
        premise = " and ".join(_premise_texts(ruleset, r, fmt))
        concl = f"{ruleset.class_name} = {ruleset.class_labels[r.conclusion]}"
        if fmt == "text":
            lines.append(f"if {premise}")
            lines.append(f"    then {concl}")
        else:
            lines.append(f"- **if** {premise} **then** {concl}")
    tau = ruleset.tau
    if fmt == "markdown" and tau:
        lines.append("")
        lines.append("| dimension | terms |")
        lines.append("|---|---|")
        for name, t in zip(ruleset.cont_names + ruleset.cat_names, tau):
            lines.append(f"| {name} | {t} |")
    return "\n".join(lines) + "\n"


def ruleset_to_dict(ruleset):
    return {
        "omega": list(ruleset.omega),
        "identity_threshold": ruleset.identity_threshold,
        "continuous_columns": list(ruleset.cont_names),
        "categorical_columns": [{"name": n, "categories": list(c)}
                                for n, c in zip(ruleset.cat_names, ruleset.cat_labels)],
        "class": {"name": ruleset.class_name, "labels": list(ruleset.class_labels)},
        "rules": [
            {
                "component": r.component,
                "conclusion": r.conclusion,
                "continuous": [{"dim": p.dim, "mean": p.mean, "std": p.std, "label": p.label}
                               for p in r.continuous],
                "categorical": [{"dim": d, "categories": list(c)} for d, c in r.categorical],
            }
            for r in ruleset.rules
        ],
        "category_sets": [[list(s) for s in sets] for sets in ruleset.category_sets],
        "tau": term_counts(ruleset),
    }


def ruleset_from_dict(d):
    rules = tuple(
        Rule(tuple(ContinuousPremise(p["dim"], p["mean"], p["std"], p.get("label")) for p in r["continuous"]),
             tuple((c["dim"], tuple(c["categories"])) for c in r["categorical"]),
             r["conclusion"], r["component"])
        for r in d["rules"]
    )
    return RuleSet(rules, tuple(d["omega"]), d["identity_threshold"], tuple(d["continuous_columns"]),
                   tuple(c["name"] for c in d["categorical_columns"]),
                   tuple(tuple(c["categories"]) for c in d["categorical_columns"]),
                   d["class"]["name"], tuple(d["class"]["labels"]),
                   tuple(tuple(tuple(s) for s in sets) for sets in d.get("category_sets", [])))


def parse_rules_json(text):
    return ruleset_from_dict(json.loads(text))

"""Model documents: JSON with ``schema``, ``class_priors``, ``components`` and
an optional ``second_order`` block.

The mixing coefficient ``pi`` of each component is global: it already
includes the prior of the component's class, so the ``pi`` values of all
components sum to one.  ``class_priors`` is kept for reporting.

Floats are written with Python's shortest round-trip representation, so a
save/load cycle reproduces every parameter exactly.
"""

import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .model import Classifier, Schema, make_component
from .training import SecondOrderParams

FORMAT_VERSION = 1


def classifier_to_dict(classifier, second_order=None):
    doc = {
        "format": "cmm-model",
        "version": FORMAT_VERSION,
        "schema": classifier.schema.to_list(),
        "class_priors": [float(v) for v in classifier.class_priors],
        "components": [
            {
                "class": int(c.class_index),
                "pi": float(c.pi),
                "mean": [float(v) for v in c.gaussian.mean],
                "covariance": [float(v) for v in np.ravel(c.gaussian.cov)],
                "categoricals": [[float(v) for v in p] for p in c.categorical.probs],
            }
            for c in classifier.components
        ],
    }
    if second_order is not None:
        doc["second_order"] = second_order.to_dict()
    return doc


def classifier_from_dict(doc):
    """Returns ``(classifier, second_order_or_None)``."""
    try:
        schema = Schema.from_list(doc["schema"])
        D = schema.n_cont
        comps = [
            make_component(np.array(c["mean"], dtype=float).reshape(D),
                           np.array(c["covariance"], dtype=float).reshape(D, D),
                           [np.array(p, dtype=float) for p in c["categoricals"]],
                           int(c["class"]), float(c["pi"]))
            for c in doc["components"]
        ]
        clf = Classifier(schema, doc["class_priors"], comps)
        so = None
        if doc.get("second_order") is not None:
            so = SecondOrderParams.from_dict(doc["second_order"], D, schema.cat_sizes)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc
    return clf, so


def dumps(classifier, second_order=None):
    return json.dumps(classifier_to_dict(classifier, second_order), indent=1)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    return classifier_from_dict(doc)


def save_model(path, classifier, second_order=None):
    Path(path).write_text(dumps(classifier, second_order) + "\n")


def load_model(path):
    return loads(Path(path).read_text())

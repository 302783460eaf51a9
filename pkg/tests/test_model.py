import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmmkit.errors import DegenerateInputError, EmptyInputError, SchemaError, StructuralError
from cmmkit.model import (Classifier, ColumnSchema, GaussianParams, Sample, Schema, class_posterior,
                          classification_error, classify, component_density, evidence, make_component,
                          remove_component, responsibilities)
from cmmkit.data import from_arrays


def schema_1d(n_classes=2, cats=None):
    cols = [ColumnSchema("x")]
    if cats:
        cols.append(ColumnSchema("k", "categorical", "feature", cats))
    cols.append(ColumnSchema("y", "categorical", "class", tuple(f"c{j}" for j in range(n_classes))))
    return Schema(tuple(cols))


def one_d(means, variances, classes, pis, n_classes=2):
    comps = [make_component([m], [[v]], [], c, p) for m, v, c, p in zip(means, variances, classes, pis)]
    priors = np.bincount(classes, weights=pis, minlength=n_classes)
    return Classifier(schema_1d(n_classes), priors / priors.sum(), comps)


def npdf(x, m, v):
    return math.exp(-(x - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)


class TestComponentDensity:
    def test_standard_normal_mode(self):
        c = make_component([0.0], [[1.0]])
        assert component_density(c, Sample([0.0])) == pytest.approx(0.3989422804, rel=1e-9)

    def test_categorical_factor(self):
        c = make_component([0.0], [[1.0]], [[0.5, 0.5]])
        assert component_density(c, Sample([0.0], (0,))) == pytest.approx(0.19947114, rel=1e-7)

    def test_bivariate(self):
        c = make_component([0.0, 0.0], np.eye(2))
        assert component_density(c, Sample([1.0, 1.0])) == pytest.approx(math.exp(-1) / (2 * math.pi), rel=1e-9)

    def test_dimension_mismatch(self):
        c = make_component([0.0, 0.0], np.eye(2))
        with pytest.raises(SchemaError):
            component_density(c, Sample([1.0]))

    def test_cached_cholesky_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = int(rng.integers(1, 6))
            a = rng.standard_normal((d, d))
            cov = a @ a.T + 0.1 * np.eye(d)
            mean = rng.standard_normal(d)
            x = rng.standard_normal(d)
            direct = math.exp(-0.5 * (x - mean) @ np.linalg.inv(cov) @ (x - mean)) / math.sqrt(
                (2 * math.pi) ** d * np.linalg.det(cov))
            got = component_density(make_component(mean, cov), Sample(x))
            assert got == pytest.approx(direct, rel=1e-8)

    def test_non_spd_covariance_rejected(self):
        with pytest.raises(SchemaError):
            GaussianParams([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


class TestEvidenceAndPosterior:
    def test_single_component_evidence(self):
        clf = one_d([1.0], [2.0], [0], [1.0], n_classes=1)
        s = Sample([0.3])
        assert evidence(clf, s) == pytest.approx(component_density(clf.components[0], s), rel=1e-12)

    def test_identical_components(self):
        clf = one_d([0.0, 0.0], [1.0, 1.0], [0, 1], [0.5, 0.5])
        assert evidence(clf, Sample([0.7])) == pytest.approx(npdf(0.7, 0, 1), rel=1e-12)

    def test_brute_force_sum(self):
        clf = one_d([0.0, 1.0, 3.0], [1.0, 0.5, 2.0], [0, 0, 1], [0.2, 0.3, 0.5])
        expected = 0.2 * npdf(0, 0, 1) + 0.3 * npdf(0, 1, 0.5) + 0.5 * npdf(0, 3, 2)
        assert evidence(clf, Sample([0.0])) == pytest.approx(expected, rel=1e-12)

    def test_hand_computed_bayes_rule(self):
        clf = one_d([0.0, 2.0], [1.0, 1.0], [0, 1], [0.3, 0.7])
        a, b = 0.3 * npdf(0.5, 0, 1), 0.7 * npdf(0.5, 2, 1)
        np.testing.assert_allclose(class_posterior(clf, Sample([0.5])), [a / (a + b), b / (a + b)], rtol=1e-12)

    def test_single_class_posterior(self):
        clf = one_d([0.0, 2.0], [1.0, 1.0], [1, 1], [0.5, 0.5])
        np.testing.assert_allclose(class_posterior(clf, Sample([9.0])), [0.0, 1.0])

    def test_symmetric_posterior_and_tie_break(self):
        clf = one_d([-1.0, 1.0], [1.0, 1.0], [0, 1], [0.5, 0.5])
        np.testing.assert_allclose(class_posterior(clf, Sample([0.0])), [0.5, 0.5], atol=1e-15)
        assert classify(clf, Sample([0.0])) == 0

    def test_clear_winner(self):
        clf = one_d([-1.0, 1.0], [1.0, 1.0], [0, 1], [0.5, 0.5])
        assert classify(clf, Sample([-3.0])) == 0
        assert classify(clf, Sample([3.0])) == 1

    def test_degenerate_input_carries_index(self):
        clf = one_d([0.0, 1.0], [1e-4, 1e-4], [0, 1], [0.5, 0.5])
        xs = from_arrays(np.array([[0.0], [1e4]]), np.array([0, 1]))
        with pytest.raises(DegenerateInputError) as info:
            clf.class_posterior_batch(xs)
        assert info.value.sample_index == 1

    def test_responsibilities_cancel_identical_densities(self):
        clf = one_d([0.0, 0.0], [1.0, 1.0], [0, 1], [0.25, 0.75])
        for x in (-3.0, 0.0, 4.0):
            np.testing.assert_allclose(responsibilities(clf, Sample([x])), [0.25, 0.75], rtol=1e-12)

    def test_responsibilities_direct(self):
        clf = one_d([0.0, 1.0, 3.0], [1.0, 0.5, 2.0], [0, 0, 1], [0.2, 0.3, 0.5])
        w = np.array([0.2 * npdf(1.2, 0, 1), 0.3 * npdf(1.2, 1, 0.5), 0.5 * npdf(1.2, 3, 2)])
        np.testing.assert_allclose(responsibilities(clf, Sample([1.2])), w / w.sum(), rtol=1e-12)

    def test_unseen_category_is_uniform(self):
        schema = schema_1d(2, ("u", "v", "w"))
        clf = Classifier(schema, [0.5, 0.5], [make_component([0.0], [[1.0]], [[0.6, 0.3, 0.1]], 0, 0.5),
                                              make_component([1.0], [[1.0]], [[0.1, 0.1, 0.8]], 1, 0.5)])
        ld = clf.log_component_densities((np.array([[0.0]]), np.array([[-1]])))
        np.testing.assert_allclose(np.exp(ld[0]), [npdf(0, 0, 1) / 3, npdf(0, 1, 1) / 3])


@st.composite
def small_models(draw):
    n = draw(st.integers(2, 5))
    means = draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
    variances = draw(st.lists(st.floats(0.1, 4), min_size=n, max_size=n))
    raw = draw(st.lists(st.floats(0.05, 1), min_size=n, max_size=n))
    classes = [0, 1] + draw(st.lists(st.integers(0, 1), min_size=n - 2, max_size=n - 2))
    pis = np.array(raw) / sum(raw)
    return one_d(means, variances, np.array(classes), pis)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(small_models(), st.floats(-6, 6))
    def test_normalization(self, clf, x):
        post = class_posterior(clf, Sample([x]))
        rho = responsibilities(clf, Sample([x]))
        assert abs(post.sum() - 1) <= 1e-9 and abs(rho.sum() - 1) <= 1e-9
        assert np.all((post >= 0) & (post <= 1)) and np.all((rho >= 0) & (rho <= 1))

    @settings(max_examples=60, deadline=None)
    @given(small_models(), st.floats(-6, 6))
    def test_evidence_is_sum_of_class_numerators(self, clf, x):
        s = Sample([x])
        numer = np.zeros(clf.n_classes)
        for c in clf.components:
            numer[c.class_index] += c.pi * component_density(c, s)
        assert evidence(clf, s) == pytest.approx(numer.sum(), rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(small_models(), st.floats(-6, 6), st.floats(0.1, 10))
    def test_scaling_pi_keeps_argmax(self, clf, x, k):
        scaled = [c.with_pi(c.pi * k) for c in clf.components]
        total = sum(c.pi for c in scaled)
        other = clf.with_components([c.with_pi(c.pi / total) for c in scaled])
        assert classify(other, Sample([x])) == classify(clf, Sample([x]))

    @settings(max_examples=60, deadline=None)
    @given(small_models(), st.floats(-6, 6))
    def test_removal_evidence_identity(self, clf, x):
        s = Sample([x])
        for i, c in enumerate(clf.components):
            try:
                reduced = remove_component(clf, i)
            except StructuralError:
                continue
            expected = (evidence(clf, s) - c.pi * component_density(c, s)) / (1 - c.pi)
            assert evidence(reduced, s) == pytest.approx(expected, rel=1e-8)


class TestRemoveComponent:
    def test_renormalization(self):
        clf = one_d([0.0, 1.0, 2.0], [1, 1, 1], [0, 0, 1], [0.2, 0.3, 0.5])
        np.testing.assert_allclose(clf.remove_component(0).pi, [0.375, 0.625])
        np.testing.assert_allclose(clf.pi, [0.2, 0.3, 0.5])

    def test_zero_weight_component(self):
        clf = one_d([0.0, 1.0, 2.0], [1, 1, 1], [0, 0, 1], [0.0, 0.4, 0.6])
        np.testing.assert_allclose(clf.remove_component(0).pi, [0.4, 0.6])

    def test_last_component_of_class(self):
        clf = one_d([0.0, 1.0, 2.0], [1, 1, 1], [0, 0, 1], [0.2, 0.3, 0.5])
        with pytest.raises(StructuralError):
            clf.remove_component(2)

    def test_class_priors_unchanged(self):
        clf = one_d([0.0, 1.0, 2.0], [1, 1, 1], [0, 0, 1], [0.2, 0.3, 0.5])
        np.testing.assert_array_equal(clf.remove_component(1).class_priors, clf.class_priors)


class TestClassificationError:
    def test_separable(self):
        clf = one_d([-2.0, 2.0], [0.5, 0.5], [0, 1], [0.5, 0.5])
        ds = from_arrays(np.array([[-2.0], [-1.5], [1.5], [2.0]]), np.array([0, 0, 1, 1]))
        assert classification_error(clf, ds) == 0.0

    def test_constant_predictor(self):
        clf = one_d([0.0, 0.0], [1.0, 1.0], [0, 1], [0.6, 0.4])
        ds = from_arrays(np.arange(6.0)[:, None], np.array([0, 1] * 3))
        assert classification_error(clf, ds) == 0.5

    def test_empty(self):
        clf = one_d([0.0, 1.0], [1.0, 1.0], [0, 1], [0.5, 0.5])
        ds = from_arrays(np.zeros((0, 1)), np.zeros(0, dtype=int), class_labels=("c0", "c1"))
        with pytest.raises(EmptyInputError):
            classification_error(clf, ds)


class TestValidation:
    def test_pi_must_sum_to_one(self):
        with pytest.raises(SchemaError):
            Classifier(schema_1d(), [0.5, 0.5], [make_component([0.0], [[1.0]], [], 0, 0.5),
                                                 make_component([1.0], [[1.0]], [], 1, 0.4)])

    def test_priors_must_match_classes(self):
        with pytest.raises(SchemaError):
            Classifier(schema_1d(), [1.0], [make_component([0.0], [[1.0]], [], 0, 1.0)])

    def test_category_count_checked(self):
        with pytest.raises(SchemaError):
            Classifier(schema_1d(2, ("u", "v")), [0.5, 0.5],
                       [make_component([0.0], [[1.0]], [[0.2, 0.3, 0.5]], 0, 0.5),
                        make_component([1.0], [[1.0]], [[0.5, 0.5]], 1, 0.5)])

    def test_schema_round_trip(self):
        s = schema_1d(3, ("u", "v"))
        assert Schema.from_list(s.to_list()) == s

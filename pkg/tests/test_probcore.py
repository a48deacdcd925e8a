import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdpsim.probcore import (
    AlphabetMismatch, EmpiricalDist, Kernel, MarkovJoint, Pmf, all_strings, average_empirical,
    conditional_entropy, empirical_type, entropy, information_density, mutual_information,
    string_index, tvd,
)

# frozen from 40-digit mpmath evaluations
H_03 = 0.8812908992306926
I_BSC01_UNIFORM = 0.5310044064107188
H_COND_EXAMPLE = 0.6207550943681299


def pmf_strategy(k_max=4):
    return st.integers(2, k_max).flatmap(
        lambda k: st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k)
        .filter(lambda v: sum(v) > 1e-3)
        .map(lambda v: np.array(v) / sum(v)))


class TestTvd:
    def test_identical(self):
        assert tvd(Pmf.uniform(2), Pmf.uniform(2)) == 0.0

    def test_disjoint(self):
        assert tvd(Pmf.from_probs([1, 0]), Pmf.from_probs([0, 1])) == 1.0

    def test_half_l1(self):
        assert tvd(Pmf.from_probs([0.75, 0.25]), Pmf.uniform(2)) == pytest.approx(0.25, abs=1e-15)

    def test_alphabet_mismatch(self):
        with pytest.raises(AlphabetMismatch):
            tvd(Pmf.uniform(["a", "b"]), Pmf.uniform(["a", "c"]))

    def test_sup_over_events_matches(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            best = max(abs(p[list(s)].sum() - q[list(s)].sum())
                       for r in range(5) for s in itertools.combinations(range(4), r))
            assert tvd(p, q) == pytest.approx(best, abs=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 4).flatmap(lambda k: st.tuples(*[st.lists(
        st.floats(0.01, 1.0), min_size=k, max_size=k)] * 3)))
    def test_metric_axioms(self, triple):
        p, q, r = (np.array(v) / sum(v) for v in triple)
        assert tvd(p, q) == pytest.approx(tvd(q, p), abs=1e-15)
        assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-12
        assert tvd(p, p) == 0.0
        assert 0.0 <= tvd(p, q) <= 1.0


class TestEntropy:
    def test_fair_coin(self):
        assert entropy(Pmf.uniform(2)) == pytest.approx(1.0, abs=1e-15)

    def test_degenerate(self):
        assert entropy(Pmf.from_probs([1, 0])) == 0.0

    def test_bern03(self):
        assert entropy(Pmf.bernoulli(0.3)) == pytest.approx(H_03, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(pmf_strategy())
    def test_bounds(self, p):
        assert -1e-12 <= entropy(p) <= math.log2(len(p)) + 1e-12


class TestMutualInformation:
    def test_product_is_zero(self):
        j = np.outer([0.3, 0.7], [0.2, 0.5, 0.3])
        assert mutual_information(j) == pytest.approx(0.0, abs=1e-14)

    def test_copy_channel(self):
        assert mutual_information(np.diag([0.5, 0.5])) == pytest.approx(1.0, abs=1e-15)

    def test_markov_joint_value(self):
        k = Kernel.from_matrix([[0.9, 0.1], [0.1, 0.9]])
        mj = MarkovJoint(Pmf.uniform(2), k, k)
        assert mj.i_xv() == pytest.approx(I_BSC01_UNIFORM, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 10**6))
    def test_bounds(self, a, b, seed):
        j = np.random.default_rng(seed).dirichlet(np.ones(a * b)).reshape(a, b)
        mi = mutual_information(j)
        assert mi >= 0
        assert mi <= min(entropy(j.sum(1)), entropy(j.sum(0))) + 1e-12


class TestConditionalEntropy:
    def test_deterministic(self):
        assert conditional_entropy(Kernel.identity((0, 1)), Pmf.uniform(2)) == 0.0

    def test_uniform_rows(self):
        k = Kernel.from_matrix([[0.5, 0.5], [0.5, 0.5]])
        assert conditional_entropy(k, Pmf.bernoulli(0.2)) == pytest.approx(1.0, abs=1e-15)

    def test_example(self):
        k = Kernel.from_matrix([[0.9, 0.1], [0.2, 0.8]])
        val = conditional_entropy(k, Pmf.from_probs([0.4, 0.6]))
        assert val == pytest.approx(H_COND_EXAMPLE, abs=1e-14)

    def test_mismatch(self):
        k = Kernel.from_matrix([[1, 0], [0, 1]], input_alphabet=("a", "b"))
        with pytest.raises(AlphabetMismatch):
            conditional_entropy(k, Pmf.uniform(2))


class TestAverageEmpirical:
    def test_opposites(self):
        out = average_empirical([Pmf.from_probs([1, 0]), Pmf.from_probs([0, 1])])
        np.testing.assert_allclose(out.probs, [0.5, 0.5])

    def test_copies(self):
        p = Pmf.from_probs([0.1, 0.2, 0.7])
        np.testing.assert_allclose(average_empirical([p] * 5).probs, p.probs, atol=1e-15)

    def test_mean(self):
        out = average_empirical([Pmf.from_probs([0.2, 0.8]), Pmf.from_probs([0.6, 0.4])])
        np.testing.assert_allclose(out.probs, [0.4, 0.6], atol=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            average_empirical([])


class TestInformationDensity:
    def test_independent(self):
        assert information_density(np.outer([0.3, 0.7], [0.4, 0.6]), 1, 0) == pytest.approx(0, abs=1e-14)

    def test_copy(self):
        assert information_density(np.diag([0.5, 0.5]), 0, 0) == pytest.approx(1.0)

    def test_zero_cell(self):
        assert information_density(np.diag([0.5, 0.5]), 0, 1) == -math.inf

    def test_zero_marginal_raises(self):
        with pytest.raises(ValueError):
            information_density(np.array([[1.0, 0.0], [0.0, 0.0]]), 1, 1)


class TestEmpiricalType:
    def test_counts(self):
        np.testing.assert_array_equal(empirical_type("aab", "ab").counts, [2, 1])
        np.testing.assert_array_equal(empirical_type("bbbb", "ab").counts, [0, 4])

    def test_unknown_symbol(self):
        with pytest.raises(KeyError):
            empirical_type("abc", "ab")

    def test_law_of_large_numbers(self):
        p = Pmf.from_probs([0.2, 0.5, 0.3])
        seq = np.random.default_rng(0).choice(3, size=10**4, p=p.probs)
        assert tvd(empirical_type(seq.tolist(), (0, 1, 2)).to_pmf(), p) < 0.05

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_type([], "ab")
        with pytest.raises(ValueError):
            EmpiricalDist(("a",), [-1])


class TestTypes:
    def test_pmf_validation(self):
        with pytest.raises(ValueError):
            Pmf.from_probs([0.5, 0.6])
        with pytest.raises(ValueError):
            Pmf(("a", "a"), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            Pmf.from_probs([-0.1, 1.1])

    def test_renormalize(self):
        assert Pmf.from_probs([1, 1, 2], renormalize=True).probs[2] == 0.5

    def test_immutable(self):
        p = Pmf.uniform(2)
        with pytest.raises(ValueError):
            p.probs[0] = 1.0

    def test_json_round_trip(self):
        p = Pmf.from_probs([0.1, 0.2, 0.7], ["x", "y", "z"])
        q = Pmf.from_dict(json.loads(json.dumps(p.to_dict())))
        assert q.alphabet == p.alphabet
        np.testing.assert_allclose(q.probs, p.probs, rtol=1e-15)
        k = Kernel.from_matrix([[0.3, 0.7], [1.0, 0.0]])
        k2 = Kernel.from_dict(json.loads(json.dumps(k.to_dict())))
        np.testing.assert_allclose(k2.matrix, k.matrix, rtol=1e-15)
        assert "rows" in k.to_dict()

    def test_kernel_rows_validated(self):
        with pytest.raises(ValueError):
            Kernel.from_matrix([[0.5, 0.4], [0.5, 0.5]])

    def test_strings_round_trip(self):
        s = all_strings(3, 4)
        assert len(s) == 81
        np.testing.assert_array_equal(string_index(s, 3), np.arange(81))
        np.testing.assert_allclose(Pmf.bernoulli(0.3).product(2), [0.49, 0.21, 0.21, 0.09])


def _random_joint(rng, a, b):
    return rng.dirichlet(np.ones(a * b) * rng.uniform(0.2, 2)).reshape(a, b)


class TestTvdInequalities:
    """Data-processing style inequalities for TVD on random instances."""

    def test_marginal_below_joint(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b = rng.integers(2, 5, size=2)
            p, q = _random_joint(rng, a, b), _random_joint(rng, a, b)
            assert tvd(p.sum(1), q.sum(1)) <= tvd(p, q) + 1e-12

    def test_same_kernel_preserves_tvd(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            a, b = rng.integers(2, 5, size=2)
            p, q = rng.dirichlet(np.ones(a)), rng.dirichlet(np.ones(a))
            k = Kernel.from_matrix(rng.dirichlet(np.ones(b), size=a))
            jp = k.joint(Pmf.from_probs(p))
            jq = k.joint(Pmf.from_probs(q))
            assert tvd(jp, jq) == pytest.approx(tvd(p, q), abs=1e-12)

    def test_expectation_gap(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            a = rng.integers(2, 5)
            p, q = rng.dirichlet(np.ones(a)), rng.dirichlet(np.ones(a))
            f = rng.uniform(-5, 5, size=a)
            assert abs(p @ f - q @ f) <= 2 * np.abs(f).max() * tvd(p, q) + 1e-12

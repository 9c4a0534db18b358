"""Tests for assumption spaces, embeddings, parsing and rankings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalsens.estimand import ate_general
from causalsens.exceptions import (
    EmptyEntries,
    EmptySubgroup,
    InfeasibleTheta,
    LabelMismatch,
    SpaceParseError,
    TooFew,
    UnknownCovariate,
)
from causalsens.model import build_grid
from causalsens.scenarios import (
    CovariateSubsetSpace,
    EpsilonSubsetSpace,
    OutcomeSubgroupSpace,
    embed,
    enumerate_spaces,
    parse_space,
    rank_spaces,
    spearman,
)
from conftest import level_effects, make_baseline, random_baseline

seeds = st.integers(0, 2**32 - 1)
SPECS = ["cov:age", "cov:sex", "cov:age,sex", "out:t=0", "out:t=1,sex=2",
         "out:t=0,age=1,sex=0", "eps:age", "eps:sex", "eps:age,sex"]


def _random_theta(space, rng):
    if isinstance(space, CovariateSubsetSpace):
        return rng.dirichlet(np.ones(space.free_dim))
    if isinstance(space, OutcomeSubgroupSpace):
        return rng.uniform(0, 1, space.free_dim)
    return rng.uniform(0.2, 4.0, space.free_dim)


class TestCovariateSubset:
    def test_free_dim_and_degenerate_marginal(self):
        b = random_baseline(np.random.default_rng(0), [2, 2], names=["x1", "x2"])
        space = CovariateSubsetSpace(b, ["x1"])
        assert space.free_dim == 2
        p = space.embed([1.0, 0.0]).px
        assert np.allclose(p, [b.qx[0] / b.qx[:2].sum(), b.qx[1] / b.qx[:2].sum(), 0, 0])

    def test_full_subset_embeds_theta(self, two_cov_baseline):
        space = CovariateSubsetSpace(two_cov_baseline, ["age", "sex"])
        theta = np.random.default_rng(1).dirichlet(np.ones(6))
        assert space.free_dim == two_cov_baseline.grid.d
        assert np.allclose(space.embed(theta).px, theta)

    def test_fallback_on_empty_level(self):
        b = make_baseline(["a", "b"], [2, 2], [0.5] * 4, [0.6, 0.2, 0.5, 0.5],
                          [0.5] * 4, [0.3, 0.7, 0.0, 0.0])
        space = CovariateSubsetSpace(b, ["a"])
        p = space.embed([0.0, 1.0]).px
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(p, [0, 0, 0.3, 0.7])

    def test_unnormalized_theta(self, two_cov_baseline):
        space = CovariateSubsetSpace(two_cov_baseline, ["age"])
        with pytest.raises(InfeasibleTheta):
            space.embed([0.5, 0.4])

    def test_unknown_covariate(self, two_cov_baseline):
        with pytest.raises(UnknownCovariate):
            CovariateSubsetSpace(two_cov_baseline, ["height"])

    def test_coefficients_match_oracle(self, two_cov_baseline):
        for subset, pos in ((["age"], [0]), (["sex"], [1]), (["age", "sex"], [0, 1])):
            space = CovariateSubsetSpace(two_cov_baseline, subset)
            assert np.allclose(space.tau_coef, level_effects(two_cov_baseline, pos), atol=1e-14)

    @given(seeds, st.floats(0, 1))
    def test_affine_in_theta(self, seed, lam):
        rng = np.random.default_rng(seed)
        b = random_baseline(rng, [3, 2])
        space = CovariateSubsetSpace(b, ["x0"])
        p, q = rng.dirichlet(np.ones(3), size=2)
        mix = lam * p + (1 - lam) * q
        mix /= mix.sum()
        assert space.tau(mix) == pytest.approx(lam * space.tau(p) + (1 - lam) * space.tau(q), abs=1e-12)


class TestOutcomeSubgroup:
    def test_free_dim_counts_cells(self):
        b = random_baseline(np.random.default_rng(2), [2, 2, 2, 2])
        space = OutcomeSubgroupSpace(b, 0, {"x0": 1, "x1": 0})
        assert space.free_dim == 4
        grid16 = build_grid(["a", "b", "c", "d"], [2, 2, 2, 2])
        assert grid16.d == 16

    def test_range_violation(self, two_cov_baseline):
        space = OutcomeSubgroupSpace(two_cov_baseline, 1, {"sex": 0})
        theta = space.baseline_theta.copy()
        theta[0] = 1.2
        with pytest.raises(InfeasibleTheta):
            space.embed(theta)

    def test_empty_subgroup(self):
        b = random_baseline(np.random.default_rng(3), [2])
        with pytest.raises(EmptySubgroup):
            OutcomeSubgroupSpace(b, 0, {"x0": 5})

    def test_label(self, two_cov_baseline):
        space = OutcomeSubgroupSpace(two_cov_baseline, 0, {"sex": 1, "age": 0})
        assert space.label == "out:t=0,age=0,sex=1"


class TestEpsilonSubset:
    def test_free_dim(self, two_cov_baseline):
        assert EpsilonSubsetSpace(two_cov_baseline, ["age"]).free_dim == 4
        assert EpsilonSubsetSpace(two_cov_baseline, ["sex"]).free_dim == 6

    def test_zero_eps_rejected(self, two_cov_baseline):
        space = EpsilonSubsetSpace(two_cov_baseline, ["age"])
        with pytest.raises(InfeasibleTheta):
            space.embed([1.0, 1.0, 0.0, 1.0])

    @given(seeds)
    def test_reparam_round_trip(self, seed):
        b = random_baseline(np.random.default_rng(seed), [2, 2])
        space = EpsilonSubsetSpace(b, ["x1"])
        theta = np.random.default_rng(seed + 1).uniform(0.1, 10, space.free_dim)
        assert np.allclose(space.from_reparam(space.to_reparam(theta)), theta)


class TestSpaceInvariants:
    @pytest.mark.parametrize("spec", SPECS)
    def test_baseline_round_trip(self, two_cov_baseline, spec):
        space = parse_space(spec, two_cov_baseline)
        a = embed(space, space.baseline_theta)
        b = two_cov_baseline
        assert np.allclose(a.px, b.qx)
        assert np.allclose(a.mu0, b.mu0) and np.allclose(a.mu1, b.mu1)
        assert np.all(a.eps0 == 1) and np.all(a.eps1 == 1)
        assert abs(space.tau(space.baseline_theta) - b.tau) < 1e-12
        assert space.divergence(space.baseline_theta) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.sampled_from(SPECS))
    def test_batch_matches_generic(self, seed, spec):
        rng = np.random.default_rng(seed)
        b = random_baseline(rng, [2, 3], names=["age", "sex"])
        space = parse_space(spec, b)
        thetas = np.array([_random_theta(space, rng) for _ in range(5)])
        generic = [ate_general(space.embed(th), b.e) for th in thetas]
        assert np.allclose(space.tau_batch(thetas), generic, atol=1e-12)
        single = [space.divergence(th) for th in thetas]
        assert np.allclose(space.divergence_batch(thetas), single, atol=1e-12)
        for th in thetas:
            assert abs(space.embed(th).px.sum() - 1) < 1e-10

    def test_descriptor_round_trip(self, two_cov_baseline):
        for spec in SPECS:
            space = parse_space(spec, two_cov_baseline)
            again = parse_space(space.descriptor(), two_cov_baseline)
            assert again.label == space.label == spec

    @pytest.mark.parametrize("bad", ["cov", "foo:age", "out:age=1", "out:t=x", {"kind": "nope"}])
    def test_parse_errors(self, two_cov_baseline, bad):
        with pytest.raises((SpaceParseError, UnknownCovariate)):
            parse_space(bad, two_cov_baseline)

    def test_enumerate(self, two_cov_baseline):
        assert [s.label for s in enumerate_spaces(two_cov_baseline, 1, "cov")] == ["cov:age", "cov:sex"]
        assert len(enumerate_spaces(two_cov_baseline, 2, "eps")) == 1
        # one space per level of each covariate and per arm
        assert len(enumerate_spaces(two_cov_baseline, 1, "out")) == 2 * (2 + 3)


class TestRanking:
    def test_order(self):
        assert rank_spaces({"A": 0.9, "B": 0.1}).labels == ["A", "B"]
        assert rank_spaces({"B": 0.5, "A": 0.5}).labels == ["A", "B"]

    def test_empty(self):
        with pytest.raises(EmptyEntries):
            rank_spaces({})

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            rank_spaces({"A": 1.5})

    def test_spearman(self):
        a = rank_spaces({"A": 0.9, "B": 0.5, "C": 0.1})
        assert spearman(a, a) == 1.0
        assert spearman(a, rank_spaces({"A": 0.1, "B": 0.5, "C": 0.9})) == -1.0
        b = rank_spaces({"B": 0.9, "A": 0.5, "C": 0.1})
        assert spearman(a, b) == pytest.approx(0.5)

    def test_spearman_errors(self):
        a = rank_spaces({"A": 0.9, "B": 0.5})
        with pytest.raises(LabelMismatch):
            spearman(a, rank_spaces({"A": 0.9, "C": 0.5}))
        with pytest.raises(TooFew):
            spearman(rank_spaces({"A": 1.0}), rank_spaces({"A": 1.0}))

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_turnpike.errors import (
    AssignmentTooLarge,
    DimensionMismatch,
    InvalidMeasure,
    UnequalSupportSize,
)
from mfg_turnpike.measures import (
    EmpiricalMeasure,
    MeasureFlow,
    couple_synchronous,
    gaussian_quantiles,
    moment,
    resample,
    wasserstein,
)

import properties


def U(*pts):
    return EmpiricalMeasure(np.array(pts, dtype=float).reshape(len(pts), -1))


class TestMoment:
    def test_point_mass_at_origin(self):
        assert moment(U(0.0), 2) == 0.0

    def test_symmetric_unit_points(self):
        assert moment(U(-1.0, 1.0), 2) == pytest.approx(1.0)

    def test_first_moment_by_hand(self):
        assert moment(U(0.0, 2.0), 1) == pytest.approx(1.0)


class TestWasserstein:
    def test_identity(self):
        mu = U(0.3, -1.2, 4.0)
        assert wasserstein(mu, mu) == 0.0

    def test_translation_by_one(self):
        assert wasserstein(U(0.0, 1.0), U(1.0, 2.0)) == pytest.approx(1.0)

    def test_collapsed_target(self):
        assert wasserstein(U(0.0, 2.0), U(1.0, 1.0)) == pytest.approx(1.0)

    def test_weighted_one_dimensional(self):
        mu = EmpiricalMeasure([[0.0], [1.0]], [0.25, 0.75])
        # all mass to 0: W2^2 = 0.75
        assert wasserstein(mu, U(0.0)) == pytest.approx(np.sqrt(0.75))

    def test_assignment_matches_brute_force(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        best = min(np.mean(np.sum((a - b[list(p)]) ** 2, 1)) for p in itertools.permutations(range(5)))
        assert wasserstein(EmpiricalMeasure(a), EmpiricalMeasure(b)) == pytest.approx(np.sqrt(best), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            wasserstein(U(0.0), EmpiricalMeasure([[0.0, 1.0]]))

    def test_assignment_cap(self):
        pts = np.zeros((6, 2))
        with pytest.raises(AssignmentTooLarge):
            wasserstein(EmpiricalMeasure(pts), EmpiricalMeasure(pts), cap=5)

    def test_unequal_sizes_in_two_dimensions(self):
        with pytest.raises(UnequalSupportSize):
            wasserstein(EmpiricalMeasure(np.zeros((2, 2))), EmpiricalMeasure(np.zeros((3, 2))))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 9), d=st.sampled_from([1, 2]))
    def test_metric_axioms(self, seed, n, d):
        properties.w2_axioms(seed, n=n, d=d)


class TestCoupling:
    def test_identity_pairing(self):
        assert couple_synchronous(U(1, 2, 3), U(4, 5, 6)) == [(0, 0), (1, 1), (2, 2)]

    def test_monotone_pairing(self):
        pairs = couple_synchronous(U(3, 1, 2), U(10, 30, 20), mode="monotone")
        mu, nu = [3, 1, 2], [10, 30, 20]
        assert sorted((mu[i], nu[j]) for i, j in pairs) == [(1, 10), (2, 20), (3, 30)]

    def test_unequal_sizes(self):
        with pytest.raises(UnequalSupportSize):
            couple_synchronous(U(1, 2), U(1, 2, 3))


class TestEmpiricalMeasure:
    def test_rejects_bad_weights(self):
        with pytest.raises(InvalidMeasure):
            EmpiricalMeasure([[0.0], [1.0]], [0.5, 0.6])
        with pytest.raises(InvalidMeasure):
            EmpiricalMeasure([[0.0], [1.0]], [1.5, -0.5])

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidMeasure):
            EmpiricalMeasure(np.zeros((0, 1)))
        with pytest.raises(InvalidMeasure):
            EmpiricalMeasure([[np.nan]])

    def test_text_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        w = rng.uniform(size=7)
        mu = EmpiricalMeasure(rng.normal(size=(7, 2)), w / w.sum())
        mu.save(tmp_path / "mu.txt")
        back = EmpiricalMeasure.load(tmp_path / "mu.txt")
        assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)

    def test_gaussian_quantiles_moments(self):
        mu = gaussian_quantiles(0.5, 2.0, 4000)
        assert mu.mean()[0] == pytest.approx(0.5, abs=1e-12)
        assert np.sqrt(mu.second_moment() - 0.25) == pytest.approx(2.0, rel=2e-3)

    def test_resample_is_quantile_faithful(self):
        mu = EmpiricalMeasure([[0.0], [1.0]], [0.25, 0.75])
        r = resample(mu, 8)
        assert np.sum(r.points == 0.0) == 2 and r.is_uniform

    def test_flow_indexing(self):
        pts = np.arange(12, dtype=float).reshape(3, 4, 1)
        flow = MeasureFlow(pts)
        assert len(flow) == 3
        assert np.array_equal(flow[1].points, pts[1])
        assert np.allclose(flow.means()[:, 0], pts.mean(1)[:, 0])

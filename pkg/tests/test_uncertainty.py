import numpy as np
import pytest

try:
    from hypothesis import given, settings
    from hypothesis import strategies as st

    HAVE_HYPOTHESIS = True
except ImportError:  # pragma: no cover
    HAVE_HYPOTHESIS = False

from mrselect.data import LabeledDataset
from mrselect.errors import EmptyDataset, GridMismatch, SubsetLargerThanDataset
from mrselect.search import Individual
from mrselect.transforms import HmrChain, TransformSpec
from mrselect.uncertainty import (
    CertaintyProfile,
    ValidityBound,
    default_grid,
    is_valid,
    lower_bound,
    most_uncertain,
    noise_dataset,
    profile,
    profile_from_certainties,
    set_feasibility,
)

from conftest import small_dataset, tiny_model


class TestProfile:
    def test_grid_has_101_points(self):
        grid = default_grid()
        assert len(grid) == 101
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_fraction_at_zero_is_one(self):
        prof = profile_from_certainties([0.1, 0.9, 0.4])
        assert prof.fractions[0] == 1.0

    def test_constant_certainty_step(self):
        prof = profile_from_certainties([0.5, 0.5, 0.5])
        for t, f in zip(prof.grid, prof.fractions):
            assert f == (1.0 if t <= 0.5 else 0.0)

    def test_two_point_counting(self):
        prof = profile_from_certainties([0.3, 0.9])
        idx = np.searchsorted(prof.grid, 0.5)
        assert prof.fractions[idx] == 0.5

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            prof = profile_from_certainties(rng.random(rng.integers(1, 40)))
            assert np.all(np.diff(prof.fractions) <= 1e-12)

    def test_model_profile_no_dropout_matches_counting(self):
        model = tiny_model(seed=1, dropout=0.0)
        data = small_dataset(n=10, seed=2)
        from mrselect.model import predict_batch

        probs, _ = predict_batch(model, data.flat)
        expected = profile_from_certainties(probs.max(axis=1))
        got = profile(model, data, n_samples=5, seed=0)
        assert np.array_equal(got.fractions, expected.fractions)

    def test_empty_dataset_rejected(self):
        empty = LabeledDataset(np.zeros((0, 3, 3, 1)), np.zeros(0, dtype=int), 3)
        with pytest.raises(EmptyDataset):
            profile(tiny_model(), empty, 5, 0)


class TestLowerBound:
    def test_boundary_values(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            u = profile_from_certainties(rng.random(20))
            l = profile_from_certainties(rng.random(20) * 0.5)
            bound = lower_bound(u, l)
            assert bound.bound[0] == 1.0  # (u+l)/2 with both 1 at t=0
            assert bound.bound[-1] == l.fractions[-1]  # C(1) = l(1)

    def test_direct_evaluation(self):
        # t = 0.5, u = 0.8, l = 0.2 -> 0.5*(0.875*0.8 + 1.125*0.2) = 0.4625
        grid = np.array([0.0, 0.5, 1.0])
        u = CertaintyProfile(grid, np.array([1.0, 0.8, 0.0]))
        l = CertaintyProfile(grid, np.array([1.0, 0.2, 0.0]))
        bound = lower_bound(u, l)
        assert bound.bound[1] == pytest.approx(0.4625)

    def test_equal_profiles_fixed_point(self):
        # C with u == l equals u pointwise
        rng = np.random.default_rng(4)
        u = profile_from_certainties(rng.random(30))
        bound = lower_bound(u, u)
        assert np.allclose(bound.bound, u.fractions, atol=1e-12)

    def test_linearity_in_inputs(self):
        grid = default_grid()
        zeros = CertaintyProfile(grid, np.zeros(len(grid)))
        ones = CertaintyProfile(grid, np.ones(len(grid)))
        b_u = lower_bound(ones, zeros).bound
        b_l = lower_bound(zeros, ones).bound
        rng = np.random.default_rng(5)
        uf, lf = rng.random(len(grid)), rng.random(len(grid))
        combined = lower_bound(CertaintyProfile(grid, uf), CertaintyProfile(grid, lf)).bound
        assert np.allclose(combined, uf * b_u + lf * b_l, atol=1e-12)

    def test_grid_mismatch_rejected(self):
        u = CertaintyProfile(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        l = CertaintyProfile(np.array([0.0, 0.5, 1.0]), np.array([1.0, 0.5, 0.0]))
        with pytest.raises(GridMismatch):
            lower_bound(u, l)


class TestIsValid:
    def test_sound_profile_passes_its_own_bound(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            sound_c = rng.random(25) * 0.5 + 0.5
            noise_c = rng.random(25) * 0.3
            u = profile_from_certainties(sound_c)
            l = profile_from_certainties(noise_c)
            bound = lower_bound(u, l)
            # wherever l <= u, C(t) <= u(t), so the sound profile is valid
            if np.all(l.fractions <= u.fractions):
                assert is_valid(u, bound, tolerance=0.0)

    def test_zero_bound_accepts_anything(self):
        grid = default_grid()
        bound = ValidityBound(grid, np.zeros(len(grid)))
        prof = profile_from_certainties([0.01])
        assert is_valid(prof, bound, tolerance=0.0)

    def test_noise_profile_fails_rectified_bound(self):
        grid = np.linspace(0.0, 1.0, 11)
        u = CertaintyProfile(grid, np.linspace(1.0, 0.5, 11))
        l = CertaintyProfile(grid, np.linspace(1.0, 0.0, 11) ** 2)
        bound = lower_bound(u, l)
        assert not is_valid(l, bound, tolerance=0.0)
        assert np.any(bound.bound > l.fractions)

    def test_tolerance_loosens_gate(self):
        grid = np.array([0.0, 1.0])
        bound = ValidityBound(grid, np.array([1.0, 0.5]))
        prof = CertaintyProfile(grid, np.array([1.0, 0.495]))
        assert not is_valid(prof, bound, tolerance=0.0)
        assert is_valid(prof, bound, tolerance=0.01)

    def test_grid_mismatch_rejected(self):
        prof = CertaintyProfile(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        bound = ValidityBound(np.array([0.0, 0.5, 1.0]), np.zeros(3))
        with pytest.raises(GridMismatch):
            is_valid(prof, bound)


class TestSetFeasibility:
    def _loose_bound(self):
        grid = default_grid()
        return ValidityBound(grid, np.zeros(len(grid)))

    def _harsh_bound(self):
        grid = default_grid()
        return ValidityBound(grid, np.ones(len(grid)) * 2.0)

    def test_identity_individual_feasible_even_under_harsh_bound(self):
        model = tiny_model(seed=1, dropout=0.2)
        data = small_dataset(n=6)
        ind = Individual([HmrChain([TransformSpec("rotation", (0.0,))])])
        assert set_feasibility(ind, model, data, self._harsh_bound(), 5, 0)

    def test_one_failing_chain_sinks_the_set(self):
        model = tiny_model(seed=2, dropout=0.2)
        data = small_dataset(n=6)
        ind = Individual(
            [
                HmrChain([TransformSpec("rotation", (0.0,))]),
                HmrChain([TransformSpec("contrast", (1.5,))]),
            ]
        )
        assert not set_feasibility(ind, model, data, self._harsh_bound(), 5, 0)

    def test_valid_chains_pass(self):
        model = tiny_model(seed=3, dropout=0.2)
        data = small_dataset(n=6)
        ind = Individual(
            [
                HmrChain([TransformSpec("contrast", (1.2,))]),
                HmrChain([TransformSpec("translation", (1.0, 0.0))]),
            ]
        )
        assert set_feasibility(ind, model, data, self._loose_bound(), 5, 0)

    def test_cache_replays_verdicts(self):
        model = tiny_model(seed=4, dropout=0.2)
        data = small_dataset(n=6)
        ind = Individual([HmrChain([TransformSpec("blur", (0.8, 0.8))])])
        cache = {}
        first = set_feasibility(ind, model, data, self._loose_bound(), 5, 0, cache=cache)
        assert cache
        again = set_feasibility(ind, model, data, self._loose_bound(), 5, 0, cache=cache)
        assert first == again == set_feasibility(ind, model, data, self._loose_bound(), 5, 0)


class TestMostUncertain:
    def test_p_one_returns_bottom_certainty(self):
        model = tiny_model(seed=5, dropout=0.3)
        data = small_dataset(n=12, seed=6)
        sets = [Individual([HmrChain([TransformSpec("contrast", (1.5,))])])]
        idx = most_uncertain(model, data, sets, p=1.0, subset_size=4, seed=0)
        from mrselect.model import certainty_batch
        from mrselect.transforms import apply_chain_batch

        flats = apply_chain_batch(sets[0].chains[0], data.images).reshape(12, -1)
        scores = certainty_batch(model, flats, 30, 0)
        expected = np.argsort(scores, kind="stable")[:4]
        assert sorted(idx) == sorted(expected.tolist())

    def test_p_zero_is_random_but_sized(self):
        model = tiny_model(seed=7, dropout=0.1)
        data = small_dataset(n=10, seed=8)
        sets = [Individual([HmrChain([TransformSpec("rotation", (5.0,))])])]
        idx = most_uncertain(model, data, sets, p=0.0, subset_size=5, seed=1)
        assert len(idx) == 5
        assert len(set(idx)) == 5

    def test_half_p_includes_most_uncertain_input(self):
        model = tiny_model(seed=9, dropout=0.3)
        data = small_dataset(n=4, seed=10)
        sets = [Individual([HmrChain([TransformSpec("blur", (1.0, 1.0))])])]
        from mrselect.model import certainty_batch
        from mrselect.transforms import apply_chain_batch

        flats = apply_chain_batch(sets[0].chains[0], data.images).reshape(4, -1)
        scores = certainty_batch(model, flats, 30, 0)
        idx = most_uncertain(model, data, sets, p=0.5, subset_size=2, seed=2)
        assert int(np.argmin(scores)) in idx

    def test_subset_larger_than_dataset_rejected(self):
        model = tiny_model()
        data = small_dataset(n=4)
        with pytest.raises(SubsetLargerThanDataset):
            most_uncertain(model, data, [], p=0.5, subset_size=9, seed=0)


class TestNoiseDataset:
    def test_zero_count_rejected(self):
        with pytest.raises(EmptyDataset):
            noise_dataset((3, 3, 1), 0, 0)

    def test_fixed_seed_bit_identical(self):
        a = noise_dataset((3, 3, 1), 5, 7)
        b = noise_dataset((3, 3, 1), 5, 7)
        assert np.array_equal(a.images, b.images)

    def test_pixel_mean_near_half(self):
        data = noise_dataset((8, 8, 1), 200, 0)
        assert abs(data.images.mean() - 0.5) < 0.01


if HAVE_HYPOTHESIS:

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_profile_monotone_property(certainties):
        prof = profile_from_certainties(certainties)
        assert prof.fractions[0] == 1.0
        assert np.all(np.diff(prof.fractions) <= 1e-12)
        assert np.all((prof.fractions >= 0.0) & (prof.fractions <= 1.0))

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=40),
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=40),
    )
    @settings(max_examples=60, deadline=None)
    def test_bound_between_profiles_when_ordered(sound_c, noise_c):
        u = profile_from_certainties(sound_c)
        l = profile_from_certainties(noise_c)
        bound = lower_bound(u, l)
        lo = np.minimum(u.fractions, l.fractions)
        hi = np.maximum(u.fractions, l.fractions)
        # C(t) is a convex combination of u and l with weights in [0, 1] on the grid
        assert np.all(bound.bound >= lo - 1e-12)
        assert np.all(bound.bound <= hi + 1e-12)

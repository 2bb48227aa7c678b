import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wifidiag import dataset, preprocess
from wifidiag.core import ConfigurationError
from wifidiag.dataset import apply_permutation
from wifidiag.preprocess import (
    ALL_FEATURES,
    MODALITY_FEATURES,
    default_sequence_length,
    deviation_level,
    minmax_scale,
)


@pytest.fixture(scope="module")
def fitted(small_corpus):
    _, out, manifest, train, test = small_corpus
    norm = preprocess.fit_normalizer(dataset.iter_samples(out, train), 180, with_sequences=True)
    samples = list(dataset.iter_samples(out))
    return out, manifest, norm, samples


class TestMinMax:
    def test_midpoint(self):
        assert minmax_scale(np.array([15.0]), np.array([10.0]), np.array([20.0]))[0] == 0.5

    def test_out_of_range_clamped(self):
        assert minmax_scale(np.array([25.0]), np.array([10.0]), np.array([20.0]))[0] == 1.0
        assert minmax_scale(np.array([5.0]), np.array([10.0]), np.array([20.0]))[0] == 0.0

    def test_constant_feature_maps_to_half(self):
        assert minmax_scale(np.array([7.0]), np.array([7.0]), np.array([7.0]))[0] == 0.5


class TestFitNormalizer:
    def test_needs_two_samples(self, fitted):
        out, manifest, _, samples = fitted
        with pytest.raises(ConfigurationError):
            preprocess.fit_normalizer(iter(samples[:1]), 180)

    def test_stats_cover_schema(self, fitted):
        _, _, norm, _ = fitted
        assert norm.feature_names == ALL_FEATURES
        assert norm.col_min.shape == norm.col_max.shape == (len(ALL_FEATURES),)
        assert np.all(norm.col_min <= norm.col_max + 1e-12)

    def test_round_trip_via_dict(self, fitted):
        _, _, norm, _ = fitted
        again = preprocess.NormStats.from_dict(norm.to_dict())
        assert np.allclose(again.col_min, norm.col_min)
        assert np.allclose(again.normal_std, norm.normal_std)
        assert again.seq_feature_names == norm.seq_feature_names


class TestAggregateFeatures:
    def test_values_normalized(self, fitted):
        _, _, norm, samples = fitted
        for s in samples[:10]:
            view = preprocess.aggregate_features(s, norm, 180)
            assert np.all(view.vector >= 0.0) and np.all(view.vector <= 1.0)
            assert len(view.vector) == 7 * len(ALL_FEATURES) + 4

    def test_missing_modality_zero_block_with_mask(self, fitted):
        _, manifest, norm, samples = fitted
        incomplete = [s for s in samples if len(s.bundle.present()) < 4]
        assert incomplete, "corpus should contain at least one incomplete sample"
        s = incomplete[0]
        missing = [m for m in ("flow", "packet", "warning", "monitor") if m not in s.bundle.present()][0]
        view = preprocess.aggregate_features(s, norm, 180)
        cols = np.array(view.columns)
        block = view.vector[[i for i, c in enumerate(cols) if c.endswith(tuple(
            f":{f}" for f in MODALITY_FEATURES[missing]))]]
        assert np.all(block == 0.0)
        assert view.vector[view.columns.index(f"mask:{missing}")] == 0.0
        present = s.bundle.present()[0]
        assert view.vector[view.columns.index(f"mask:{present}")] == 1.0

    def test_permutation_equivariance(self, fitted):
        """Oracle: permuting node ids permutes the node-major blocks."""
        _, _, norm, samples = fitted
        s = samples[3]
        perm = [4, 2, 0, 6, 1, 5, 3]
        base = preprocess.aggregate_features(s, norm, 180)
        moved = preprocess.aggregate_features(apply_permutation(s, perm), norm, 180)
        f = len(ALL_FEATURES)
        for node in range(7):
            np.testing.assert_allclose(
                moved.vector[perm[node] * f:(perm[node] + 1) * f],
                base.vector[node * f:(node + 1) * f], atol=1e-12)
        np.testing.assert_allclose(moved.vector[7 * f:], base.vector[7 * f:])


class TestSequences:
    def test_exact_length_no_padding(self, fitted):
        _, _, norm, samples = fitted
        view = preprocess.to_sequence(samples[0], 180, norm, 180, ["packet"])
        assert view.tensor.shape == (180, 7, 6)
        assert view.mask.sum() == 180

    def test_truncation_keeps_prefix(self, fitted):
        _, _, norm, samples = fitted
        full = preprocess.to_sequence(samples[0], 180, norm, 180, ["flow"])
        short = preprocess.to_sequence(samples[0], 120, norm, 180, ["flow"])
        np.testing.assert_allclose(short.tensor, full.tensor[:120])
        assert short.mask.sum() == 120

    def test_padding_masked(self, fitted):
        _, _, norm, samples = fitted
        view = preprocess.to_sequence(samples[0], 240, norm, 180, ["monitor"])
        assert view.mask.sum() == 180
        assert np.all(view.tensor[180:] == 0.0)
        assert np.all(view.mask[180:] == 0.0)

    def test_default_length_rounds_mean(self):
        assert default_sequence_length([180] * 10) == 180
        assert default_sequence_length([173, 178, 181]) == 180
        assert default_sequence_length([94]) == 90


class TestDiscretize:
    @pytest.mark.parametrize("z,expected", [
        (0.0, 0), (0.99, 0), (-0.5, 0),
        (1.0, 1), (1.9, 1), (-1.5, -1),
        (2.0, 2), (2.5, 2), (-2.9, -2),
        (3.0, 3), (8.0, 3), (-4.0, -3),
    ])
    def test_boundary_table(self, z, expected):
        assert deviation_level(10.0 + z * 2.0, 10.0, 2.0) == expected

    def test_zero_variance_rules(self):
        assert deviation_level(5.0, 5.0, 0.0) == 0
        assert deviation_level(5.1, 5.0, 0.0) == 3
        assert deviation_level(4.9, 5.0, 0.0) == -3

    @given(value=st.floats(-1e3, 1e3), mu=st.floats(-1e2, 1e2),
           sigma=st.floats(0.01, 1e2), a=st.floats(0.1, 1e2), b=st.floats(-1e2, 1e2))
    @settings(max_examples=200, deadline=None)
    def test_scale_free(self, value, mu, sigma, a, b):
        from hypothesis import assume
        z = (value - mu) / sigma
        # keep clear of bucket boundaries where float rounding may flip a level
        assume(all(abs(abs(z) - k) > 1e-3 for k in (1.0, 2.0, 3.0)))
        direct = deviation_level(value, mu, sigma)
        scaled = deviation_level(a * value + b, a * mu + b, a * sigma)
        assert direct == scaled

    def test_levels_cover_present_modalities_only(self, fitted):
        _, _, norm, samples = fitted
        incomplete = [s for s in samples if len(s.bundle.present()) < 4][0]
        missing = [m for m in ("flow", "packet", "warning", "monitor")
                   if m not in incomplete.bundle.present()][0]
        view = preprocess.discretize(incomplete, norm, 180)
        assert len(view.levels) == 7
        for entry in view.levels:
            assert not any(f in entry for f in MODALITY_FEATURES[missing])

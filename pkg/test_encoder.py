import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from logic.encoder import (MEASURES, EncoderConfig, ModelParams, ShapeletTransformer, embedding_blocks, encode,
                           encode_backward, init_params, resolve_measures, shapelet_feature)
from logic.errors import ConfigError, ShapeletLengthError


def brute_force_feature(x, s, measure):
    """Materialize every window and evaluate the measure directly"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    length = s.shape[1]
    values = []
    for t in range(x.shape[1] - length + 1):
        window = x[:, t:t + length]
        if measure == "euclidean":
            values.append(np.sqrt(np.sum((window - s) ** 2)))
        elif measure == "cosine":
            total = 0.0
            for a, b in zip(window, s):
                na, nb = np.linalg.norm(a), np.linalg.norm(b)
                total += 0.0 if na < 1e-12 or nb < 1e-12 else a @ b / (na * nb)
            values.append(total)
        else:
            values.append(np.sum(window * s))
    return min(values) if measure == "euclidean" else max(values)


def small_config(n_scales=2, measures=MEASURES, v=2, t=20, d=2, **kw):
    return EncoderConfig(n_scales=n_scales, measures=measures, repr_dim=n_scales * len(measures) * v,
                         series_length=t, n_dims=d, **kw).validate()


def test_feature_examples():
    assert shapelet_feature([1, 2, 3, 4], [2, 3], "euclidean") == pytest.approx(0.0, abs=1e-12)
    assert shapelet_feature([1, 2, 3, 4], [0, 0], "cross_correlation") == 0.0


@pytest.mark.parametrize("measure", MEASURES)
def test_feature_matches_brute_force(measure):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x = rng.standard_normal((2, 12))
        s = rng.standard_normal((2, 5))
        assert shapelet_feature(x, s, measure) == pytest.approx(brute_force_feature(x, s, measure), abs=1e-10)


def test_cross_correlation_matches_numpy_correlate():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 30))
    s = rng.standard_normal((3, 7))
    per_dim = sum(np.correlate(x[j], s[j], mode="valid") for j in range(3))
    assert shapelet_feature(x, s, "cross_correlation") == pytest.approx(per_dim.max(), abs=1e-10)


def test_cosine_zero_shapelet_contributes_nothing():
    assert shapelet_feature(np.arange(6.0), np.zeros(3), "cosine") == 0.0


def test_planted_shapelet_is_found_anywhere():
    rng = np.random.default_rng(2)
    s = rng.standard_normal((2, 6))
    for start in (0, 7, 14):
        x = rng.standard_normal((2, 20)) + 5.0
        x[:, start:start + 6] = s
        assert shapelet_feature(x, s, "euclidean") == pytest.approx(0.0, abs=1e-6)
    x = rng.standard_normal((2, 20))
    assert shapelet_feature(x, s, "euclidean") > 0


def test_exact_match_on_offset_series():
    x = 1e6 + 1e-4 * np.random.default_rng(3).standard_normal((2, 60))
    s = x[:, 40:45].copy()
    assert shapelet_feature(x, s, "euclidean") == 0.0
    assert brute_force_feature(x, s, "euclidean") == 0.0
    transformer = ShapeletTransformer(small_config(n_scales=1, measures=("euclidean",), v=1, t=60,
                                                   l_min_frac=5 / 60, l_max_frac=5 / 60),
                                      ModelParams([[s[None]]]))
    assert transformer.best_match_positions(x)[0]["position"] == 40


def test_shapelet_longer_than_series():
    with pytest.raises(ShapeletLengthError):
        shapelet_feature([1.0, 2.0], [1.0, 2.0, 3.0], "euclidean")


def test_layout_arithmetic():
    cfg = EncoderConfig(n_scales=2, repr_dim=24, series_length=20, n_dims=1).validate()
    assert cfg.n_shapelets == 4
    assert cfg.block_size == 12
    assert cfg.feature_index(1, 0, 0) == 12
    assert cfg.feature_index(1, 2, 3) == 23


def test_uneven_measure_split():
    cfg = EncoderConfig(series_length=100).validate()
    assert cfg.block_size == 40
    assert cfg.shapelet_counts == [14, 13, 13]
    assert [cfg.measure_offset(m) for m in range(3)] == [0, 14, 27]
    params = init_params(cfg, np.random.default_rng(0))
    assert params.n_parameters() == sum(cfg.shapelet_counts[m] * length
                                        for length in cfg.shapelet_lengths() for m in range(3))


def test_shapelet_lengths():
    cfg = EncoderConfig(n_scales=8, series_length=100).validate()
    assert cfg.shapelet_lengths() == [10, 20, 30, 40, 50, 60, 70, 80]
    single = EncoderConfig(n_scales=1, repr_dim=3, series_length=50).validate()
    assert single.shapelet_lengths() == [5]


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(n_scales=3, repr_dim=10, series_length=50).validate()
    with pytest.raises(ConfigError):
        EncoderConfig(n_scales=2, repr_dim=4, series_length=50).validate()
    with pytest.raises(ShapeletLengthError):
        EncoderConfig(n_scales=2, repr_dim=6, series_length=5, l_max_frac=1.5).validate()
    with pytest.raises(ConfigError):
        resolve_measures(["manhattan"])
    assert resolve_measures("cross") == ("cross_correlation",)
    assert resolve_measures(["cosine", "euclid"]) == ("euclidean", "cosine")


def test_scale_range_ablation():
    cfg = EncoderConfig(n_scales=2, repr_dim=6, series_length=100)
    short = cfg.with_scale_range("short").validate()
    assert short.shapelet_lengths() == [10, 40]
    assert cfg.with_scale_range("long").shapelet_lengths() == [50, 80]
    assert cfg.with_scale_range("all") is cfg


def test_single_feature_config_equals_shapelet_feature():
    cfg = EncoderConfig(n_scales=1, measures=["euclidean"], repr_dim=1, series_length=15, n_dims=2).validate()
    rng = np.random.default_rng(3)
    params = init_params(cfg, rng)
    x = rng.standard_normal((2, 15))
    z = encode(x, params, cfg)
    assert z.shape == (1,)
    assert z[0] == pytest.approx(shapelet_feature(x, params.shapelet(0, 0, 0), "euclidean"))


def test_features_land_at_their_index():
    cfg = small_config()
    rng = np.random.default_rng(4)
    params = init_params(cfg, rng)
    x = rng.standard_normal((2, 20))
    z = encode(x, params, cfg)
    for r in range(cfg.n_scales):
        for m, measure in enumerate(cfg.measures):
            for v in range(cfg.shapelet_counts[m]):
                expected = brute_force_feature(x, params.shapelet(r, m, v), measure)
                assert z[cfg.feature_index(r, m, v)] == pytest.approx(expected, abs=1e-10)


def test_batch_equals_per_sample_and_permutes():
    cfg = small_config()
    rng = np.random.default_rng(5)
    params = init_params(cfg, rng)
    batch = rng.standard_normal((5, 2, 20))
    z = encode(batch, params, cfg)
    for i in range(5):
        assert_allclose(z[i], encode(batch[i], params, cfg), atol=1e-12)
    order = rng.permutation(5)
    assert_allclose(encode(batch[order], params, cfg), z[order], atol=1e-12)


def test_block_equals_single_scale_encoder():
    cfg = small_config(n_scales=3, t=30)
    rng = np.random.default_rng(6)
    params = init_params(cfg, rng)
    batch = rng.standard_normal((3, 2, 30))
    blocks = embedding_blocks(encode(batch, params, cfg), cfg.n_scales)
    for r in range(cfg.n_scales):
        length = cfg.shapelet_lengths()[r]
        single = EncoderConfig(n_scales=1, measures=cfg.measures, repr_dim=cfg.block_size,
                               l_min_frac=length / 30, l_max_frac=length / 30, series_length=30, n_dims=2)
        z = encode(batch, ModelParams([params.shapelets[r]]), single)
        assert_allclose(blocks[r], z, atol=1e-12)


def test_zero_upstream_gives_zero_gradients():
    cfg = small_config()
    rng = np.random.default_rng(7)
    params = init_params(cfg, rng)
    x = rng.standard_normal((2, 20))
    grads = encode_backward(x, params, cfg, np.zeros(cfg.repr_dim))
    assert all(np.all(g == 0) for g in grads.arrays())


def test_cross_correlation_gradient_is_best_window():
    cfg = EncoderConfig(n_scales=1, measures=["cross"], repr_dim=1, series_length=12, n_dims=2).validate()
    rng = np.random.default_rng(8)
    params = init_params(cfg, rng)
    x = rng.standard_normal((2, 12))
    transformer = ShapeletTransformer(cfg, params)
    _, cache = transformer.forward(x)
    t_star = int(cache.caches[0][0].best[0, 0])
    grads = encode_backward(x, params, cfg, np.ones(1))
    length = cfg.shapelet_lengths()[0]
    assert_allclose(grads.shapelet(0, 0, 0), x[:, t_star:t_star + length])


@pytest.mark.parametrize("measure", MEASURES)
def test_backward_matches_finite_differences(measure):
    from logic.gradcheck import check_component
    result = check_component(f"encoder.{measure}", seed=3, instances=5)
    assert result.passed, result.max_relative_error


def test_init_from_data_uses_subsequences():
    cfg = small_config(n_scales=1, measures=["euclidean"], v=3, t=20, d=2)
    data = np.random.default_rng(9).standard_normal((4, 2, 20))
    params = init_params(cfg, np.random.default_rng(10), data)
    length = cfg.shapelet_lengths()[0]
    for s in params.shapelets[0][0]:
        assert min(shapelet_feature(x, s, "euclidean") for x in data) == pytest.approx(0.0, abs=1e-6)
        assert s.shape == (2, length)


def test_params_flatten_round_trip():
    cfg = small_config()
    params = init_params(cfg, np.random.default_rng(11))
    back = params.unflatten(params.flatten())
    for a, b in zip(params.arrays(), back.arrays()):
        assert_array_equal(a, b)
    assert params.flatten().size == params.n_parameters()


def test_input_checks():
    cfg = small_config()
    transformer = ShapeletTransformer(cfg, init_params(cfg, np.random.default_rng(12)))
    with pytest.raises(ShapeletLengthError):
        transformer.transform(np.zeros((1, 2, 5)))
    with pytest.raises(ShapeletLengthError):
        transformer.transform(np.zeros((1, 3, 20)))


def test_best_match_positions_report_planted_window():
    cfg = EncoderConfig(n_scales=1, measures=["euclidean"], repr_dim=1, series_length=30, n_dims=1,
                        l_min_frac=0.2).validate()
    params = init_params(cfg, np.random.default_rng(13))
    x = np.full((1, 1, 30), 10.0)
    x[0, 0, 17:23] = params.shapelet(0, 0, 0)[0]
    (record,) = ShapeletTransformer(cfg, params).best_match_positions(x)
    assert record["position"] == 17
    assert record["length"] == 6
    assert record["value"] == pytest.approx(0.0, abs=1e-6)

import math

import pytest

mld = pytest.importorskip("mldepth")


def test_component_and_mixture_evaluation():
    c = mld.LaplaceComponent(center=0.0, scale=1.0)
    assert mld.eval_component(c, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert mld.eval_component(mld.LaplaceComponent(1.0, 1.0), 2.0) == pytest.approx(
        0.5 * math.exp(-1.0), abs=1e-15
    )

    m = mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0), mld.LaplaceComponent(3.0, 1.0)])
    assert mld.eval_intensity(m, 2.0) == pytest.approx(0.5 * math.exp(-1.0))
    assert mld.log_intensity(m, 2.0) == pytest.approx(-math.log(2.0) - 1.0)
    assert mld.argmax_component(m, 0.0) == 0

    peaks = mld.peak_set(m)
    assert [p.depth for p in peaks] == [1.0, 3.0]
    assert peaks[0].intensity == pytest.approx(0.5)


def test_losses_and_gradients():
    m = mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0), mld.LaplaceComponent(3.0, 1.0)])
    assert mld.loss_intensity(m, [1.0, 3.0]) == pytest.approx(2.0 * math.log(2.0))
    far = mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0), mld.LaplaceComponent(5.0, 1.0)])
    assert mld.loss_coverage(far, [1.0]) == pytest.approx(2.0 * math.log(2.0) + 4.0)

    one = mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0)])
    d_center, d_scale = mld.grad_losses(one, [2.0], 1.0, 0.0)
    assert d_center[0] == pytest.approx(-1.0)
    assert d_scale[0] == pytest.approx(0.0, abs=1e-14)

    value, matched, ignored = mld.loss_l1([1.0, 2.0], [1.0, 2.0, 3.0])
    assert value == 0.0 and matched == 2 and ignored == 1
    assert mld.loss_silog([2.0, 4.0], [1.0, 2.0], 1.0) == pytest.approx(0.0, abs=1e-12)


def test_extract_and_suppression():
    merged = mld.extract_layers(
        mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0), mld.LaplaceComponent(1.01, 1.0)])
    )
    assert merged == [1.0]
    kept = mld.extract_layers(
        mld.IntensityMixture([mld.LaplaceComponent(1.0, 1.0), mld.LaplaceComponent(3.0, 1.0)])
    )
    assert kept == [1.0, 3.0]
    assert mld.denormalize([-1.5, 0.0, 1.5], mld.NormParams(2.0, 2.0 / 3.0)) == pytest.approx(
        [1.0, 2.0, 3.0]
    )


def test_scene_raycast_and_metrics():
    params = mld.OverlappingPlanesParams()
    scene = mld.scene_overlapping_planes(params)
    gt = mld.raycast_multilayer(scene)
    assert gt.height == 64 and gt.width == 64
    counts = {gt.layer_count(x, y) for y in range(64) for x in range(64)}
    assert counts == {1, 2, 3}

    tuples = mld.sample_tuples(gt, [(4, mld.TupleSubset.MIXED, 500)], -1.0, 7)
    assert tuples.size == 500 and tuples.shortfall == 0
    report = mld.tuple_accuracy(gt, tuples)
    acc, total = report[(4, "all")]
    assert acc == 1.0 and total == 500

    scale, shift = mld.align_scale_shift([0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
    assert scale == pytest.approx(2.0) and shift == pytest.approx(1.0)

    metrics = mld.point_metrics_per_layer(gt, gt)
    assert metrics[0]["absrel"] == 0.0
    assert metrics[0]["delta1"] == 1.0


def test_normalization_round_trip():
    gt = mld.MultiLayerDepthMap(1, 3)
    gt.set_layers(0, 0, [1.0])
    gt.set_layers(1, 0, [2.0])
    gt.set_layers(2, 0, [3.0])
    normalized, params = mld.normalize_scale_invariant(gt)
    assert params.shift == pytest.approx(2.0)
    assert params.scale == pytest.approx(2.0 / 3.0)
    assert normalized.layers(0, 0)[0] == pytest.approx(-1.5)
    back = mld.denormalize_map(normalized, params)
    assert back.layers(2, 0)[0] == pytest.approx(3.0)


def test_pixel_fit_recovers_two_layers():
    opts = mld.PixelFitOptions()
    opts.steps = 1500
    opts.seed = 3
    mixture, trace, diverged = mld.fit_pixel([-1.0, 1.0], opts)
    assert not diverged
    layers = mld.extract_layers(mixture)
    assert min(abs(l + 1.0) for l in layers) <= 0.02
    assert min(abs(l - 1.0) for l in layers) <= 0.02


def test_file_round_trip(tmp_path):
    gt = mld.MultiLayerDepthMap(2, 2)
    gt.set_layers(0, 0, [1.0, 2.0])
    gt.set_layers(1, 0, [1.5])
    gt.set_layers(0, 1, [2.5])
    gt.set_layers(1, 1, [0.5, 1.25, 4.0])
    path = str(tmp_path / "map.mld")
    mld.write_mld(path, gt)
    back = mld.read_mld(path)
    assert back.to_lists() == gt.to_lists()

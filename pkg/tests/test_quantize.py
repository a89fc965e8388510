import numpy as np
import pytest

from microrelay.infer import infer
from microrelay.passes import PassContext, QuantConfig, quant_annotate, quant_calibrate, quant_realize, quantize, run_pipeline
from microrelay.runtime import interp, random_arguments
from microrelay.utils.errors import CalibrationFailed, MissingRule, PassError, QuantizationError, Uncalibrated
from microrelay.utils.stats import count_ops

from .helpers import calls_to, load_corpus, run_main, typed


def calibration_set(module, rng, size=8):
    return [random_arguments(module, "main", rng) for _ in range(size)]


def annotated(name):
    return infer(quant_annotate(load_corpus(name)))


def test_annotation_wraps_quantizable_inputs():
    module = annotated("mlp.rly")
    sims = calls_to(module, "simulated_quantize")
    assert len(sims) == 4
    assert {c.attrs["site"] for c in sims} == {0, 1, 2, 3}
    assert {c.attrs["kind"] for c in sims} == {"input", "weight"}
    # Uncalibrated sites change nothing.
    x = np.ones((1, 4), np.float32)
    np.testing.assert_array_equal(run_main(module, [x]).array, run_main(load_corpus("mlp.rly"), [x]).array)


def test_missing_rule():
    with pytest.raises(MissingRule):
        quant_annotate(load_corpus("mlp.rly"), ops=["relu"])


def test_calibration_picks_a_covering_power_of_two(rng):
    module = annotated("mlp.rly")
    calibrated = quant_calibrate(module, calibration_set(module, rng))
    scales = {c.attrs["scale"] for c in calls_to(calibrated, "simulated_quantize")}
    assert len(scales) == 1
    (scale,) = scales
    assert scale > 0
    assert float(np.log2(scale)).is_integer()


def test_calibration_needs_inputs():
    with pytest.raises(ValueError):
        quant_calibrate(annotated("mlp.rly"), [])


def test_calibration_fails_without_a_large_enough_scale(rng):
    module = annotated("mlp.rly")
    with pytest.raises(CalibrationFailed):
        quant_calibrate(module, calibration_set(module, rng), scales=[0.5])


def test_realize_requires_calibration():
    with pytest.raises(Uncalibrated):
        quant_realize(annotated("mlp.rly"))


def test_only_nearest_rounding_is_realized(rng):
    module = load_corpus("mlp.rly")
    with pytest.raises(QuantizationError):
        quantize(module, calibration_set(module, rng), qconfig=QuantConfig(rounding="floor"))


def test_bad_quant_config():
    with pytest.raises(ValueError):
        QuantConfig(bits=0)
    with pytest.raises(ValueError):
        QuantConfig(rounding="sideways")


@pytest.mark.parametrize("calibration", ["global", "site"])
@pytest.mark.parametrize("name", ["mlp.rly", "conv_bias_relu.rly", "dense_relu.rly"])
def test_realized_matches_simulated(name, calibration, rng):
    module = load_corpus(name)
    calib = calibration_set(module, rng)
    qconfig = QuantConfig(calibration=calibration)
    simulated = quantize(module, calib, qconfig=qconfig, realize=False)
    realized = infer(quantize(module, calib, qconfig=qconfig))
    assert count_ops(realized, "simulated_quantize") == 0
    assert count_ops(realized, "cast") > 0
    for args in calibration_set(module, rng, 4):
        np.testing.assert_array_equal(run_main(simulated, args).array, run_main(realized, args).array)


def test_integer_operators_accumulate_in_int32(rng):
    module = load_corpus("mlp.rly")
    realized = infer(quantize(module, calibration_set(module, rng)))
    for call in calls_to(realized, "dense"):
        assert call.attrs["out_dtype"] == "int32"
        assert str(call.args[0].checked_type.dtype) == "int8"


def test_quantized_error_is_small(rng):
    module = load_corpus("mlp.rly")
    calib = calibration_set(module, rng)
    realized = infer(quantize(module, calib))
    for args in calib:
        exact = run_main(module, args).array
        approx = run_main(realized, args).array
        assert np.max(np.abs(exact - approx)) < 0.25


def test_quantize_through_the_pipeline():
    ctx = PassContext(options={"quant.bits": 8, "quant.calib_size": 4}, seed=3)
    module = run_pipeline(load_corpus("mlp.rly"), ctx, ["quantize"])
    assert count_ops(module, "simulated_quantize") == 0
    assert count_ops(module, "dense") == 2


def site_peaks(module, calib):
    peaks = {}

    def on_op(decl, attrs, args, result):
        if decl.name == "simulated_quantize":
            site = attrs["site"]
            peaks[site] = max(peaks.get(site, 0.0), float(np.max(np.abs(args[0]))))

    for args in calib:
        interp(module, "main", args, on_op=on_op)
    return peaks


def test_per_site_calibration_covers_each_site(rng):
    module = annotated("mlp.rly")
    calib = calibration_set(module, rng)
    calibrated = quant_calibrate(module, calib, granularity="site")
    sims = calls_to(calibrated, "simulated_quantize")
    scales = {c.attrs["site"]: c.attrs["scale"] for c in sims}
    peaks = site_peaks(calibrated, calib)
    assert set(scales) == set(peaks) == {0, 1, 2, 3}
    for site, scale in scales.items():
        assert float(np.log2(scale)).is_integer()
        assert peaks[site] <= scale
    # Both weight matrices peak at 0.75.
    for call in sims:
        if call.attrs["kind"] == "weight":
            assert call.attrs["scale"] == 1.0


def test_unknown_calibration_mode(rng):
    module = annotated("mlp.rly")
    with pytest.raises(ValueError):
        quant_calibrate(module, calibration_set(module, rng), granularity="channel")
    with pytest.raises(ValueError):
        QuantConfig(calibration="channel")


def test_calibration_mode_through_the_pipeline():
    ctx = PassContext(options={"quant.calibration": "site", "quant.calib_size": 4})
    module = run_pipeline(load_corpus("mlp.rly"), ctx, ["quantize"])
    assert count_ops(module, "simulated_quantize") == 0
    bad = PassContext(options={"quant.calibration": "channel"})
    with pytest.raises(PassError) as info:
        run_pipeline(load_corpus("mlp.rly"), bad, ["quantize"])
    assert isinstance(info.value.cause, QuantizationError)


RANDOM_MLP = """
def @main(%x: Tensor[(1, 16), float32], %w1: Tensor[(32, 16), float32],
          %w2: Tensor[(10, 32), float32]) -> Tensor[(1, 10), float32] {
  dense(relu(dense(%x, %w1)), %w2)
}
"""


def test_random_mlp_accuracy(rng):
    module = typed(RANDOM_MLP)
    w1 = (rng.standard_normal((32, 16)) / 4).astype(np.float32)
    w2 = (rng.standard_normal((10, 32)) / np.sqrt(32)).astype(np.float32)

    def inputs(count):
        return [[rng.standard_normal((1, 16)).astype(np.float32), w1, w2] for _ in range(count)]

    realized = infer(quantize(module, inputs(32), qconfig=QuantConfig(bits=8, calibration="site")))
    assert count_ops(realized, "simulated_quantize") == 0

    fresh = inputs(100)
    exact = np.concatenate([run_main(module, args).array for args in fresh])
    approx = np.concatenate([run_main(realized, args).array for args in fresh])
    assert np.linalg.norm(approx - exact) / np.linalg.norm(exact) < 0.05
    agree = int(np.sum(np.argmax(exact, axis=1) == np.argmax(approx, axis=1)))
    assert agree >= 95

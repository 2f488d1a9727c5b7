import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import maximum_filter, median_filter, minimum_filter

from specklestack.images import QuantizedImage
from specklestack.stackfilter import (
    PositiveBooleanFunction,
    StackingViolationError,
    WindowShape,
    apply_iterated,
    apply_stack_fast,
    apply_stack_reference,
    decompose,
    eval_pbf,
    pbf_from_text,
    pbf_to_text,
    reconstruct,
    threshold,
)


def qimg(rows, levels):
    return QuantizedImage(np.asarray(rows, dtype=np.int32), levels)


def random_pbf(window: WindowShape, rng: np.random.Generator) -> PositiveBooleanFunction:
    """Random antichain: sample masks, keep the minimal ones."""
    n = window.n
    count = int(rng.integers(1, 6))
    masks = sorted(int(m) for m in rng.integers(1, 1 << n, size=count))
    terms = []
    for m in masks:
        if not any(t & m == t for t in terms):
            terms.append(m)
    return PositiveBooleanFunction(window, tuple(terms))


def test_window_shape_validation():
    with pytest.raises(ValueError):
        WindowShape(2, 3)
    with pytest.raises(ValueError):
        WindowShape(7, 5)  # 35 samples > 25 cap
    assert WindowShape(3, 3).n == 9
    assert WindowShape(3, 3).offsets()[0] == (-1, -1)
    assert WindowShape(3, 3).offsets()[4] == (0, 0)


def test_threshold_paper_example():
    # worked 1-D decomposition: X = [2,1,3,2,3]
    x = qimg([[2, 1, 3, 2, 3]], 3)
    np.testing.assert_array_equal(threshold(x, 1), [[1, 1, 1, 1, 1]])
    np.testing.assert_array_equal(threshold(x, 2), [[1, 0, 1, 1, 1]])
    np.testing.assert_array_equal(threshold(x, 3), [[0, 0, 1, 0, 1]])


def test_threshold_range_checks():
    x = qimg([[0, 1]], 3)
    with pytest.raises(ValueError):
        threshold(x, 0)
    with pytest.raises(ValueError):
        threshold(x, 4)
    np.testing.assert_array_equal(threshold(qimg([[0, 0]], 1), 1), [[0, 0]])


def test_reconstruct_paper_example():
    x = qimg([[2, 1, 3, 2, 3]], 3)
    out = reconstruct(decompose(x))
    np.testing.assert_array_equal(out.data, x.data)
    assert out.levels == 3


def test_reconstruct_rejects_unstacked():
    slices = np.zeros((2, 1, 2), dtype=np.uint8)
    slices[1, 0, 0] = 1  # slice 2 above slice 1
    with pytest.raises(StackingViolationError):
        reconstruct(slices)


def test_reconstruct_zeros():
    out = reconstruct(np.zeros((4, 3, 3), dtype=np.uint8))
    assert out.data.sum() == 0 and out.levels == 4


@given(
    levels=st.sampled_from([3, 15, 255]),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=60, deadline=None)
def test_reconstruction_identity_property(levels, seed):
    rng = np.random.default_rng(seed)
    img = qimg(rng.integers(0, levels + 1, size=(16, 16)), levels)
    sliced = decompose(img)
    assert np.all(sliced[:-1] >= sliced[1:])  # stacking of the decomposition
    np.testing.assert_array_equal(reconstruct(sliced).data, img.data)


def test_pbf_antichain_enforced():
    w = WindowShape(3, 1)
    with pytest.raises(ValueError):
        PositiveBooleanFunction(w, (0b001, 0b011))
    with pytest.raises(ValueError):
        PositiveBooleanFunction(w, (0b1000,))  # outside window


def test_eval_pbf_identity_and_all_ones():
    w = WindowShape(3, 1)
    ident = PositiveBooleanFunction.identity(w)
    assert eval_pbf(ident, [0, 1, 0]) == 1
    assert eval_pbf(ident, [1, 0, 1]) == 0
    allvars = PositiveBooleanFunction(w, (0b111,))
    assert eval_pbf(allvars, [1, 1, 1]) == 1
    assert eval_pbf(allvars, [1, 1, 0]) == 0


def test_eval_pbf_majority_truth_table():
    # oracle: enumerate the full truth table of 3-input majority
    w = WindowShape(3, 1)
    maj = PositiveBooleanFunction.from_strings(w, ["110", "101", "011"])
    for bits in itertools.product((0, 1), repeat=3):
        assert eval_pbf(maj, list(bits)) == (1 if sum(bits) >= 2 else 0)


def test_pbf_text_round_trip():
    w = WindowShape(3, 3)
    f = PositiveBooleanFunction(w, (0b000010000, 0b101000001))
    text = pbf_to_text(f)
    assert text.startswith("PBF 3 3 2\n")
    g = pbf_from_text(text)
    assert g == f
    with pytest.raises(ValueError):
        pbf_from_text("PBF 3 3 1\n")
    with pytest.raises(ValueError):
        pbf_from_text("nope")


def test_apply_identity_filter():
    rng = np.random.default_rng(0)
    img = qimg(rng.integers(0, 16, size=(12, 12)), 15)
    ident = PositiveBooleanFunction.identity(WindowShape(3, 3))
    np.testing.assert_array_equal(apply_stack_reference(ident, img).data, img.data)
    np.testing.assert_array_equal(apply_stack_fast(ident, img).data, img.data)


def test_apply_min_max_median_oracles():
    rng = np.random.default_rng(1)
    w = WindowShape(3, 3)
    img = qimg(rng.integers(0, 256, size=(20, 20)), 255)
    # single term ANDing all inputs -> sliding minimum
    f_min = PositiveBooleanFunction(w, ((1 << 9) - 1,))
    oracle_min = minimum_filter(img.data, size=3, mode="nearest")
    np.testing.assert_array_equal(apply_stack_fast(f_min, img).data, oracle_min)
    # OR of singletons -> sliding maximum
    f_max = PositiveBooleanFunction(w, tuple(1 << j for j in range(9)))
    oracle_max = maximum_filter(img.data, size=3, mode="nearest")
    np.testing.assert_array_equal(apply_stack_fast(f_max, img).data, oracle_max)


def majority_pbf(window: WindowShape) -> PositiveBooleanFunction:
    n = window.n
    need = n // 2 + 1
    terms = tuple(
        sum(1 << j for j in comb) for comb in itertools.combinations(range(n), need)
    )
    return PositiveBooleanFunction(window, terms)


def test_apply_median_oracle_many_images():
    w = WindowShape(3, 3)
    maj = majority_pbf(w)
    rng = np.random.default_rng(2)
    for _ in range(40):
        img = qimg(rng.integers(0, 16, size=(16, 16)), 15)
        oracle = median_filter(img.data, size=3, mode="nearest")
        np.testing.assert_array_equal(apply_stack_fast(maj, img).data, oracle)


def test_fast_equals_reference_property():
    rng = np.random.default_rng(3)
    w = WindowShape(3, 3)
    for _ in range(100):
        f = random_pbf(w, rng)
        img = qimg(rng.integers(0, 16, size=(16, 16)), 15)
        ref = apply_stack_reference(f, img)
        fast = apply_stack_fast(f, img)
        np.testing.assert_array_equal(fast.data, ref.data)


def test_monotone_output_property():
    rng = np.random.default_rng(4)
    w = WindowShape(3, 3)
    for _ in range(25):
        f = random_pbf(w, rng)
        a = rng.integers(0, 16, size=(12, 12))
        b = np.minimum(a + rng.integers(0, 4, size=(12, 12)), 15)
        out_a = apply_stack_fast(f, qimg(a, 15))
        out_b = apply_stack_fast(f, qimg(b, 15))
        assert np.all(out_a.data <= out_b.data)


def test_selection_type_output():
    # output value is always one of the window's samples
    rng = np.random.default_rng(5)
    w = WindowShape(3, 3)
    from specklestack.stackfilter import _window_view

    for _ in range(25):
        f = random_pbf(w, rng)
        img = qimg(rng.integers(0, 256, size=(10, 10)), 255)
        out = apply_stack_fast(f, img)
        win = _window_view(img.data, w)
        assert np.all((win == out.data[:, :, None]).any(axis=2))


def test_empty_and_constant_pbf():
    img = qimg([[3, 5], [1, 2]], 7)
    none = PositiveBooleanFunction(WindowShape(1, 1), ())
    np.testing.assert_array_equal(apply_stack_fast(none, img).data, 0)
    np.testing.assert_array_equal(apply_stack_reference(none, img).data, 0)
    # the empty term (AND of nothing) is constant-1: output M everywhere
    top = PositiveBooleanFunction(WindowShape(1, 1), (0,))
    np.testing.assert_array_equal(apply_stack_fast(top, img).data, 7)
    np.testing.assert_array_equal(apply_stack_reference(top, img).data, 7)


def test_apply_iterated():
    rng = np.random.default_rng(6)
    img = qimg(rng.integers(0, 16, size=(10, 10)), 15)
    maj = majority_pbf(WindowShape(3, 3))
    once = apply_stack_fast(maj, img)
    np.testing.assert_array_equal(apply_iterated(maj, img, 1).data, once.data)
    const = qimg(np.full((9, 9), 7), 15)
    np.testing.assert_array_equal(apply_iterated(maj, const, 10).data, const.data)
    ident = PositiveBooleanFunction.identity(WindowShape(3, 3))
    np.testing.assert_array_equal(apply_iterated(ident, img, 5).data, img.data)
    with pytest.raises(ValueError):
        apply_iterated(maj, img, 0)

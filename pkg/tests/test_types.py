import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from demakeup.types import (
    AgeGroupBins,
    AgeNotCoveredError,
    DimensionMismatchError,
    ImageTensor,
    MakeupPair,
    RangeViolationError,
    convert_range,
    default_age_bins,
    validate_image,
)


def test_validate_accepts_valid_image():
    img = ImageTensor(np.full((256, 256, 3), 0.3))
    assert validate_image(img, 256) is img


def test_validate_rejects_wrong_side():
    with pytest.raises(DimensionMismatchError):
        validate_image(ImageTensor(np.zeros((255, 256, 3))), 256)


def test_validate_rejects_out_of_range():
    v = np.zeros((4, 4, 3))
    v[0, 0, 0] = 1.0000001 + 1e-6
    with pytest.raises(RangeViolationError):
        validate_image(ImageTensor(v))
    v[0, 0, 0] = 1.0000001  # within the 1e-6 tolerance
    validate_image(ImageTensor(v))


def test_validate_rejects_nan():
    v = np.zeros((4, 4, 3))
    v[1, 1, 1] = np.nan
    with pytest.raises(RangeViolationError):
        validate_image(ImageTensor(v))


def test_image_tensor_needs_three_channels():
    with pytest.raises(DimensionMismatchError):
        ImageTensor(np.zeros((4, 4, 4)))


def test_image_tensor_is_immutable():
    img = ImageTensor(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        img.values[0, 0, 0] = 1.0


def test_convert_range_points():
    half = ImageTensor(np.full((2, 2, 3), 0.5))
    assert np.all(convert_range(half, "signed").values == 0.0)
    one = ImageTensor(np.ones((2, 2, 3)))
    assert np.all(convert_range(one, "signed").values == 1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 7, 3), elements=st.floats(0, 1)))
def test_convert_range_round_trip(values):
    img = ImageTensor(values)
    back = convert_range(convert_range(img, "signed"), "unit")
    validate_image(convert_range(img, "signed"))
    assert np.max(np.abs(back.values - values)) <= 1e-7


def test_default_bins():
    bins = default_age_bins()
    assert len(bins) == 9
    assert bins.lower == 0 and bins.upper == 69
    assert bins.label(bins.bin_of(17)) == "15-19"
    with pytest.raises(AgeNotCoveredError):
        bins.bin_of(70)


def test_bins_partition_integer_ages():
    bins = default_age_bins()
    for a in range(70):
        hits = [i for i, (lo, hi) in enumerate(bins.edges) if lo <= a <= hi]
        assert hits == [bins.bin_of(a)]


def test_bins_reject_gaps():
    with pytest.raises(ValueError):
        AgeGroupBins(((0, 5), (7, 9)))


def test_pair_invariants():
    a = ImageTensor(np.zeros((4, 4, 3)))
    with pytest.raises(DimensionMismatchError):
        MakeupPair(a, ImageTensor(np.zeros((4, 5, 3))), 20.0)
    with pytest.raises(ValueError):
        MakeupPair(a, a, 130.0)

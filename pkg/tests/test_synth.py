import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wynerci.errors import InvalidSpecError, TooLargeError
from wynerci.metrics import mutual_information
from wynerci.prob import marginalize
from wynerci.synth import (LabeledDataset, SynthSpec, build_joint, build_source_conditional,
                           invertible_spec, inverse_transform, latent_posterior,
                           noninvertible_spec, sample_dataset)


def test_invertible_kernel_layout():
    k = build_source_conditional(invertible_spec())
    assert k.shape == (16, 8)
    for y in range(8):
        expect = np.zeros(16)
        expect[2 * y: 2 * y + 2] = 0.5
        assert np.array_equal(k[:, y], expect)


def test_noninvertible_kernel_wraps():
    k = build_source_conditional(noninvertible_spec())
    for y in range(8):
        nxt = (y + 1) % 8
        assert np.allclose(k[2 * y: 2 * y + 2, y], 0.45)
        assert np.allclose(k[2 * nxt: 2 * nxt + 2, y], 0.05)
        assert k[:, y].sum() == pytest.approx(1.0, abs=1e-12)
    # last column leaks into block 0
    assert np.allclose(k[0:2, 7], 0.05)


def test_tiny_full_shift_kernel():
    k = build_source_conditional(SynthSpec(2, (1.0,), (0.5,)))
    assert np.allclose(k, 0.5)


@settings(max_examples=50)
@given(st.integers(1, 6), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4), st.data())
def test_columns_always_stochastic(ny, raw, data):
    block = np.array(raw) / np.sum(raw)
    if ny * block.size < 2:
        return
    frac = data.draw(st.floats(0.0, 1.0))
    spec = SynthSpec(ny, tuple(block), tuple(frac * block))
    k = build_source_conditional(spec)
    assert np.allclose(k.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(k >= 0)


@pytest.mark.parametrize("kwargs", [
    dict(y_cardinality=8, block=(0.5, 0.5), shift=(0.6, 0.0)),
    dict(y_cardinality=8, block=(0.5, 0.4), shift=(0.0, 0.0)),
    dict(y_cardinality=8, block=(0.5, 0.5), shift=(0.0,)),
    dict(y_cardinality=0, block=(1.0,), shift=(0.0,)),
    dict(y_cardinality=1, block=(1.0,), shift=(0.0,)),
    dict(y_cardinality=8, block=(0.5, 0.5), shift=(0.0, 0.0), num_sources=1),
])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidSpecError):
        SynthSpec(**kwargs)


def test_spec_json_round_trip_and_missing_field():
    s = noninvertible_spec(3)
    assert SynthSpec.from_json(s.to_json()) == s
    with pytest.raises(InvalidSpecError, match="shift"):
        SynthSpec.from_dict({"y_cardinality": 8, "block": [0.5, 0.5], "num_sources": 2})


def test_invertible_joint_blocks():
    p = build_joint(invertible_spec()).probs
    expect = np.zeros((16, 16))
    for y in range(8):
        expect[2 * y: 2 * y + 2, 2 * y: 2 * y + 2] = 1 / 32
    assert np.allclose(p, expect, atol=1e-15)


@pytest.mark.parametrize("spec", [invertible_spec(), noninvertible_spec(), noninvertible_spec(3)])
def test_marginals_match_kernel(spec):
    j = build_joint(spec)
    k = build_source_conditional(spec)
    for i in range(spec.num_sources):
        assert np.allclose(marginalize(j, (i,)), k.sum(axis=1) / spec.y_cardinality, atol=1e-12)


def test_three_source_pairwise_information():
    j = build_joint(invertible_spec(3))
    assert mutual_information(marginalize(j, (0, 1))) == pytest.approx(3.0, abs=1e-12)


def test_size_guard():
    with pytest.raises(TooLargeError):
        build_joint(invertible_spec(7))


def test_latent_posterior_invertible_is_one_hot_on_support():
    spec = invertible_spec()
    post = latent_posterior(spec)
    p = build_joint(spec).probs
    on = p > 0
    assert np.allclose(post[on].max(axis=-1), 1.0)
    assert np.allclose(post[~on], 1 / 8)


def test_inverse_transform_edges():
    cdf = np.array([0.0, 0.5, 0.5, 1.0])
    assert inverse_transform(cdf, np.array([0.0, 0.49, 0.5, 0.99])).tolist() == [1, 1, 3, 3]
    # rounding shortfall in the last cdf entry never indexes past the end
    assert inverse_transform(np.array([0.3, 0.9999999]), np.array([0.99999995])).tolist() == [1]


def test_sampling_is_deterministic_and_frozen():
    a = sample_dataset(invertible_spec(), 5, 7)
    b = sample_dataset(invertible_spec(), 5, 7)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    # regression values for the portable PCG64 stream
    assert a.x.tolist() == [[14, 14], [11, 10], [11, 11], [14, 14], [8, 8]]
    assert a.y.tolist() == [7, 5, 5, 7, 4]


def test_zero_leakage_samples_stay_in_block():
    d = sample_dataset(invertible_spec(3), 2000, 3)
    assert np.all(d.x // 2 == d.y[:, None])


def test_empirical_marginal_within_three_sigma():
    spec = noninvertible_spec()
    n = 10_000
    d = sample_dataset(spec, n, 11)
    p = marginalize(build_joint(spec), (0,))
    counts = np.bincount(d.x[:, 0], minlength=16)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_dataset_csv_round_trip():
    d = sample_dataset(noninvertible_spec(), 50, 1)
    back = LabeledDataset.from_csv(d.to_csv(), d.spec)
    assert np.array_equal(back.x, d.x) and np.array_equal(back.y, d.y)
    assert d.to_csv().splitlines()[0] == "x1,x2,y"
    assert d.samples[0] == (tuple(int(v) for v in d.x[0]), int(d.y[0]))


def test_sample_count_must_be_positive():
    with pytest.raises(InvalidSpecError):
        sample_dataset(invertible_spec(), 0, 1)

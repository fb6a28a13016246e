import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circuit_matrix
from quanvnet.encoders import (
    Encoder,
    ImagePatch,
    ThresholdConfig,
    decode_neqr,
    encode_frqi,
    encode_neqr,
    encode_states,
    encode_threshold,
    frqi_closed_form,
    frqi_states,
    neqr_bitplanes,
    neqr_circuit,
    num_qubits,
    pixels_to_frqi_angles,
)
from quanvnet.errors import ConfigurationError, ContractError, DecodeError
from quanvnet.simulator import GateKind, zero_state


def frqi_oracle(pixels, n):
    """Closed-form FRQI amplitudes with the color qubit above the 2n position bits."""
    q = 2 * n + 1 + (2 * n - 1 if n >= 2 else 0)
    vec = np.zeros(2**q)
    for i, p in enumerate(pixels):
        theta = p / 255 * math.pi / 2
        vec[i] = math.cos(theta) / 2**n
        vec[i + 2 ** (2 * n)] = math.sin(theta) / 2**n
    return vec


def random_patches(seed, n, count=100):
    rng = np.random.default_rng(seed)
    return [ImagePatch(n, rng.integers(0, 256, 4**n)) for _ in range(count)]


# -- patches and qubit budgets -----------------------------------------------------


def test_patch_validation():
    with pytest.raises(ContractError):
        ImagePatch(1, [0, 1, 2])
    with pytest.raises(ContractError):
        ImagePatch(1, [0, 1, 2, 256])
    with pytest.raises(ConfigurationError):
        ImagePatch(0, [0])
    with pytest.raises(ConfigurationError):
        ThresholdConfig(300)
    assert ImagePatch(1, np.array([[1, 2], [3, 4]])).pixels == (1, 2, 3, 4)


@pytest.mark.parametrize(
    "enc, n, q",
    [("threshold", 1, 4), ("threshold", 2, 16), ("frqi", 1, 3), ("frqi", 2, 8), ("neqr", 1, 10), ("neqr", 2, 12)],
)
def test_qubit_budget(enc, n, q):
    assert num_qubits(enc, n) == q


def test_encoder_parse():
    assert Encoder.parse("FRQI") is Encoder.FRQI
    assert Encoder.parse(2) is Encoder.NEQR
    with pytest.raises(ConfigurationError):
        Encoder.parse("qram")


# -- threshold ------------------------------------------------------------------------


def test_threshold_examples():
    c, s = encode_threshold(ImagePatch(1, [0, 200, 50, 255]), ThresholdConfig(127))
    assert s.nonzero()[0].tolist() == [10] and len(c) == 2
    c, s = encode_threshold(ImagePatch(1, [0, 0, 0, 0]), ThresholdConfig(0))
    assert len(c) == 0 and s.nonzero()[0].tolist() == [0]
    c, s = encode_threshold(ImagePatch(2, [255] * 16), ThresholdConfig(127))
    assert len(c) == 16 and all(op.kind is GateKind.X for op in c.ops)
    assert s.nonzero()[0].tolist() == [2**16 - 1]


def test_threshold_default_is_zero():
    _, s = encode_threshold(ImagePatch(1, [0, 1, 0, 0]))
    assert s.nonzero()[0].tolist() == [2]


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 2), t=st.integers(0, 255), data=st.data())
def test_property_threshold_single_basis_state(n, t, data):
    pixels = data.draw(st.lists(st.integers(0, 255), min_size=4**n, max_size=4**n))
    c, s = encode_threshold(ImagePatch(n, pixels), ThresholdConfig(t))
    expect = sum(1 << i for i, p in enumerate(pixels) if p > t)
    assert s.nnz == 1 and s.nonzero()[0].tolist() == [expect]
    assert len(c) == sum(p > t for p in pixels)


# -- FRQI -----------------------------------------------------------------------------------


def test_frqi_angle_examples():
    angles = pixels_to_frqi_angles(ImagePatch(1, [0, 255, 128, 0]))
    assert angles[0] == 0.0
    assert angles[1] == math.pi / 2
    assert angles[2] == pytest.approx(128 / 255 * math.pi / 2, abs=1e-15)


def test_frqi_examples():
    _, s = encode_frqi(ImagePatch(1, [0, 0, 0, 0]))
    np.testing.assert_allclose(s.amplitudes, [0.5] * 4 + [0] * 4, atol=1e-12)
    _, s = encode_frqi(ImagePatch(1, [255] * 4))
    np.testing.assert_allclose(s.amplitudes, [0] * 4 + [0.5] * 4, atol=1e-12)
    _, s = encode_frqi(ImagePatch(1, [0, 255, 0, 0]))
    np.testing.assert_allclose(s.amplitudes, [0.5, 0, 0.5, 0.5, 0, 0.5, 0, 0], atol=1e-12)


def test_frqi_circuit_uses_matrix_oracle():
    p = ImagePatch(1, [10, 99, 180, 250])
    c, s = encode_frqi(p)
    ref = circuit_matrix(c)[:, 0]
    np.testing.assert_allclose(s.amplitudes, ref, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_frqi_matches_closed_form(n):
    for p in random_patches(10 + n, n):
        _, s = encode_frqi(p)
        np.testing.assert_allclose(s.amplitudes, frqi_oracle(p.pixels, n), atol=1e-10)
        np.testing.assert_allclose(frqi_closed_form(p), frqi_oracle(p.pixels, n), atol=1e-15)


def test_frqi_work_qubits_clean():
    for p in random_patches(3, 2, 20):
        _, s = encode_frqi(p)
        amps = s.amplitudes
        idx = np.arange(amps.size)
        dirty = (idx >> 5) != 0
        assert np.sum(np.abs(amps[dirty]) ** 2) < 1e-20


def test_frqi_batched_equals_single():
    patches = random_patches(4, 2, 10)
    for p, s in zip(patches, frqi_states(patches)):
        np.testing.assert_allclose(s.amplitudes, encode_frqi(p)[1].amplitudes, atol=1e-14)


def test_frqi_rejects_unsupported_n():
    p = ImagePatch(3, [0] * 64)
    with pytest.raises(ConfigurationError):
        encode_frqi(p)


# -- NEQR -----------------------------------------------------------------------------------


def test_neqr_examples():
    c, s = encode_neqr(ImagePatch(1, [0] * 4))
    assert [op.kind for op in c.ops] == [GateKind.H, GateKind.H]
    assert sorted(s.nonzero()[0].tolist()) == [0, 1, 2, 3]
    for n in (1, 2):
        c, _ = encode_neqr(ImagePatch(n, [255] * 4**n))
        assert len(c) == 8 + 2 * n
        assert sum(op.kind is GateKind.X and not op.controls for op in c.ops) == 8
    c, s = encode_neqr(ImagePatch(1, [7] * 4))
    kinds = [op.kind for op in c.ops]
    assert kinds == [GateKind.H] * 2 + [GateKind.X] * 3
    assert sorted(op.targets[0] for op in c.ops[2:]) == [2, 3, 4]


def test_neqr_layout_matches_basis_index():
    p = ImagePatch(1, [3, 0, 200, 17])
    _, s = encode_neqr(p)
    expect = sorted(pos + (gray << 2) for pos, gray in enumerate(p.pixels))
    assert s.nonzero()[0].tolist() == expect


@pytest.mark.parametrize("n", [1, 2])
def test_neqr_round_trip_and_magnitudes(n):
    for p in random_patches(20 + n, n):
        _, s = encode_neqr(p)
        assert decode_neqr(s, n) == p
        amp = s.nonzero()[1]
        assert amp.size == 4**n
        np.testing.assert_allclose(np.abs(amp), 2.0**-n, atol=1e-12, rtol=0)


@pytest.mark.parametrize("n", [1, 2])
def test_neqr_minimized_matches_unminimized(n):
    for p in random_patches(30 + n, n, 50):
        _, a = encode_neqr(p, minimize=True)
        _, b = encode_neqr(p, minimize=False)
        np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-12)


def test_neqr_bitplanes_reassemble():
    p = random_patches(1, 2, 1)[0]
    planes = neqr_bitplanes(p)
    assert planes.shape == (8, 4, 4)
    rebuilt = sum(planes[b].astype(int) << b for b in range(8))
    np.testing.assert_array_equal(rebuilt, p.as_array())


def test_decode_errors():
    with pytest.raises(DecodeError):
        decode_neqr(zero_state(10), 1)
    with pytest.raises(DecodeError):
        decode_neqr(zero_state(12), 1)


def test_encoders_deterministic():
    p = random_patches(5, 2, 1)[0]
    assert neqr_circuit(p) == neqr_circuit(p)
    assert encode_frqi(p)[0] == encode_frqi(p)[0]
    assert encode_threshold(p)[0] == encode_threshold(p)[0]


def test_encode_states_dispatch():
    patches = random_patches(6, 1, 3)
    for enc in Encoder:
        states = encode_states(enc, patches)
        assert len(states) == 3 and all(s.num_qubits == num_qubits(enc, 1) for s in states)

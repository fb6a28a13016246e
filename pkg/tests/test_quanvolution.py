import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quanvnet.encoders import ImagePatch, encode_states
from quanvnet.errors import ConfigurationError, ContractError
from quanvnet.quanvolution import (
    Cnot,
    FilterSpec,
    PatchBatch,
    Rotation,
    VariationalCircuitSpec,
    cnot_count,
    extract_patches,
    forward,
    generate_random_circuit,
    parameter_shift_grad,
)
from quanvnet.simulator import QuantumState, apply_circuit, pauli_z_expectations, zero_state


def direct_expectations(state, spec, theta):
    return pauli_z_expectations(apply_circuit(state, spec.circuit(), theta))


def finite_difference(state, spec, upstream, h=1e-4):
    theta = spec.theta
    out = np.zeros(theta.size)
    for j in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        out[j] = upstream @ (direct_expectations(state, spec, up) - direct_expectations(state, spec, down)) / (2 * h)
    return out


def random_dense(rng, q):
    v = rng.normal(size=1 << q) + 1j * rng.normal(size=1 << q)
    return QuantumState(q, dense=v / np.linalg.norm(v))


def single_ry(theta):
    return VariationalCircuitSpec(0, 1, 1, (Rotation("Y", 0, 0),), (theta,))


# -- patches ------------------------------------------------------------------------------


def test_extract_patches_examples():
    img = np.arange(196).reshape(14, 14) % 256
    assert len(extract_patches(img, FilterSpec(2, 1))) == 169
    patches = extract_patches(img, FilterSpec(4, 2))
    assert len(patches) == 36
    np.testing.assert_array_equal(patches[7].as_array(), img[2:6, 2:6])
    tiny = np.array([[1, 2], [3, 4]])
    (only,) = extract_patches(tiny, FilterSpec(2, 1))
    assert only.pixels == (1, 2, 3, 4)
    with pytest.raises(ConfigurationError):
        extract_patches(tiny, FilterSpec(4, 1))
    with pytest.raises(ConfigurationError):
        FilterSpec(3, 1)


def test_patch_order_row_major():
    img = np.arange(16).reshape(4, 4)
    patches = extract_patches(img, FilterSpec(2, 1))
    assert patches[1].pixels == (1, 2, 5, 6)
    assert patches[3].pixels == (4, 5, 8, 9)


# -- random circuits ------------------------------------------------------------------------


def test_cnot_counts():
    assert cnot_count(4) == 2 and cnot_count(10) == 4
    assert [cnot_count(r) for r in (0, 1, 2, 3, 5)] == [0, 0, 1, 1, 2]
    spec = generate_random_circuit(0, 8, 10)
    assert spec.num_cnots == 4 and len(spec.gates) == 14


def test_same_seed_same_spec():
    assert generate_random_circuit(3, 5, 10) == generate_random_circuit(3, 5, 10)
    assert generate_random_circuit(0, 5, 10) != generate_random_circuit(1, 5, 10)


def _reference_generate(seed, q, r):
    """The documented procedure, written out on the raw recurrence."""
    state = seed
    mask = (1 << 64) - 1

    def nxt():
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    gates, angles = [], []
    for slot in range(r):
        axis = "XYZ"[(nxt() * 3) >> 64]
        target = (nxt() * q) >> 64
        angles.append((nxt() >> 11) / 2.0**53 * 2 * math.pi)
        gates.append(("R", axis, target, slot))
    for _ in range(round(0.4 * r + 1e-9)):
        c = (nxt() * q) >> 64
        t = (nxt() * (q - 1)) >> 64
        gates.append(("C", c, t + (t >= c)))
    for i in range(len(gates) - 1, 0, -1):
        j = (nxt() * (i + 1)) >> 64
        gates[i], gates[j] = gates[j], gates[i]
    return gates, angles


@pytest.mark.parametrize("seed, q, r", [(0, 4, 4), (7, 8, 10), (2**63 + 5, 12, 10), (9, 3, 4)])
def test_generation_matches_reference_procedure(seed, q, r):
    spec = generate_random_circuit(seed, q, r)
    gates, angles = _reference_generate(seed, q, r)
    mine = [
        ("R", g.axis, g.target, g.slot) if isinstance(g, Rotation) else ("C", g.control, g.target)
        for g in spec.gates
    ]
    assert mine == gates
    assert list(spec.angles) == angles


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(2, 16), st.integers(0, 12))
def test_property_circuit_invariants(seed, q, r):
    spec = generate_random_circuit(seed, q, r)
    assert spec.num_cnots == cnot_count(r)
    assert len(spec.angles) == r
    for g in spec.gates:
        if isinstance(g, Cnot):
            assert g.control != g.target and 0 <= g.control < q and 0 <= g.target < q
        else:
            assert 0 <= g.target < q and g.axis in ("X", "Y", "Z")
    assert all(0 <= a < 2 * math.pi for a in spec.angles)


def test_cnot_needs_two_qubits():
    with pytest.raises(ConfigurationError):
        generate_random_circuit(0, 1, 4)
    assert generate_random_circuit(0, 1, 1).num_cnots == 0


def test_spec_rejects_bad_angles():
    with pytest.raises(ContractError):
        VariationalCircuitSpec(0, 1, 1, (Rotation("Y", 0, 0),), (math.nan,))
    with pytest.raises(ContractError):
        VariationalCircuitSpec(0, 1, 1, (Rotation("Y", 0, 0),), ())


# -- forward -----------------------------------------------------------------------------------


def test_identity_circuit_on_threshold():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 2, (3, 3)) * 200
    patches = extract_patches(img, FilterSpec(2, 1))
    states = encode_states("threshold", patches)
    fm = forward(states, generate_random_circuit(0, 4, 0), (2, 2))
    for k, p in enumerate(patches):
        r, c = divmod(k, 2)
        expect = [1.0 if v == 0 else -1.0 for v in p.pixels]
        np.testing.assert_array_equal(fm.values[:, r, c], expect)


def test_single_patch_shape_and_range():
    state = random_dense(np.random.default_rng(1), 3)
    fm = forward([state], generate_random_circuit(5, 3, 4), (1, 1))
    assert fm.values.shape == (3, 1, 1)
    assert np.all(np.abs(fm.values) <= 1)


def test_single_ry_forward():
    fm = forward([zero_state(1)], single_ry(0.9), (1, 1))
    assert fm.values[0, 0, 0] == pytest.approx(math.cos(0.9), abs=1e-15)


def test_forward_contract():
    with pytest.raises(ContractError):
        forward([zero_state(3)], generate_random_circuit(0, 3, 4), (1, 2))
    with pytest.raises(ContractError):
        forward([zero_state(4)], generate_random_circuit(0, 3, 4), (1, 1))


def test_flatten_is_channel_major():
    states = [QuantumState.basis(2, b) for b in (0, 1, 2, 3)]
    fm = forward(states, generate_random_circuit(0, 2, 0), (2, 2))
    np.testing.assert_array_equal(fm.flatten(), [1, -1, 1, -1, 1, 1, -1, -1])


@pytest.mark.parametrize("enc, f", [("threshold", 2), ("threshold", 4), ("frqi", 2), ("frqi", 4), ("neqr", 2), ("neqr", 4)])
def test_patch_batch_matches_direct(enc, f):
    rng = np.random.default_rng(f)
    n = f.bit_length() - 1
    patches = [ImagePatch(n, rng.integers(0, 256, f * f) * (rng.random(f * f) < 0.6)) for _ in range(5)]
    states = encode_states(enc, patches)
    q = states[0].num_qubits
    for seed in range(3):
        spec = generate_random_circuit(seed, q, 10)
        got = PatchBatch(states, spec).expectations(spec.theta)
        for k, s in enumerate(states):
            np.testing.assert_allclose(got[k], direct_expectations(s, spec, spec.theta), atol=1e-12)


def test_feature_map_locality():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (5, 5))
    spec = generate_random_circuit(4, 3, 10)
    fs = FilterSpec(2, 1)
    base = forward(encode_states("frqi", extract_patches(img, fs)), spec, (4, 4)).values
    img2 = img.copy()
    img2[0, 0] = 255 - img2[0, 0]
    moved = forward(encode_states("frqi", extract_patches(img2, fs)), spec, (4, 4)).values
    diff = np.any(base != moved, axis=0)
    assert diff[0, 0] and diff.sum() == 1


# -- gradients -------------------------------------------------------------------------------------


def test_parameter_shift_single_ry():
    for theta in (0.0, 0.4, 2.0, 5.5):
        g = parameter_shift_grad(zero_state(1), single_ry(theta), [1.0])
        assert g[0] == pytest.approx(-math.sin(theta), abs=1e-14)


def test_zero_upstream_zero_gradient():
    state = random_dense(np.random.default_rng(0), 4)
    g = parameter_shift_grad(state, generate_random_circuit(2, 4, 6), np.zeros(4))
    np.testing.assert_array_equal(g, np.zeros(6))


def test_upstream_length_checked():
    with pytest.raises(ContractError):
        parameter_shift_grad(zero_state(3), generate_random_circuit(0, 3, 4), [1.0])


@pytest.mark.parametrize("seed", range(10))
def test_shift_matches_fd_four_qubits(seed):
    rng = np.random.default_rng(seed)
    state = random_dense(rng, 4)
    spec = generate_random_circuit(seed, 4, 6)
    upstream = rng.normal(size=4)
    np.testing.assert_allclose(
        parameter_shift_grad(state, spec, upstream), finite_difference(state, spec, upstream), atol=1e-6
    )


@pytest.mark.parametrize("enc", ["threshold", "frqi", "neqr"])
@pytest.mark.parametrize("f", [2, 4])
@pytest.mark.parametrize("r", [4, 10])
def test_shift_matches_fd_every_configuration(enc, f, r):
    rng = np.random.default_rng(f * 100 + r)
    n = f.bit_length() - 1
    for seed in range(10):
        patch = ImagePatch(n, rng.integers(0, 256, f * f) * (rng.random(f * f) < 0.6))
        (state,) = encode_states(enc, [patch])
        spec = generate_random_circuit(seed, state.num_qubits, r)
        upstream = rng.normal(size=state.num_qubits)
        np.testing.assert_allclose(
            parameter_shift_grad(state, spec, upstream),
            finite_difference(state, spec, upstream),
            atol=1e-6,
        )


def test_shift_derivatives_batch_consistent():
    rng = np.random.default_rng(3)
    states = [random_dense(rng, 3) for _ in range(4)]
    spec = generate_random_circuit(1, 3, 5)
    e, de = PatchBatch(states, spec).shift_derivatives(spec.theta)
    assert e.shape == (4, 3) and de.shape == (5, 4, 3)
    for k, s in enumerate(states):
        for q in range(3):
            up = np.eye(3)[q]
            np.testing.assert_allclose(de[:, k, q], parameter_shift_grad(s, spec, up), atol=1e-14)

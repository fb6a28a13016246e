import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quanvnet.accounting import (
    actual_gate_count,
    classical_param_count,
    gate_count,
    mcx_cost,
    neqr_worst_case,
    patch_count,
    qubit_count,
    resources,
)
from quanvnet.encoders import Encoder, ImagePatch, encode_neqr, encode_threshold
from quanvnet.errors import ConfigurationError
from quanvnet.simulator import Circuit

TABLE = {
    # (encoder, F, S, R): (Q, G, P)
    ("frqi", 2, 1, 4): (3, 3380, 5070),
    ("frqi", 4, 2, 10): (8, 9576, 2880),
    ("threshold", 2, 1, 4): (4, 1352, 6760),
    ("threshold", 4, 2, 10): (16, 936, 5760),
    ("neqr", 2, 1, 4): (10, 83486, 16900),
    ("neqr", 4, 2, 10): (12, 421992, 4320),
}


@pytest.mark.parametrize("key", sorted(TABLE))
def test_resource_table(key):
    rc = resources(*key)
    assert (rc.Q, rc.G, rc.P) == TABLE[key]
    assert rc.gate_is_bound == (key[0] == "neqr")


def test_patch_count_examples():
    assert patch_count(14, 14, 2, 1) == 169
    assert patch_count(14, 14, 4, 2) == 36
    assert patch_count(2, 2, 2, 1) == 1
    with pytest.raises(ConfigurationError):
        patch_count(2, 2, 4, 1)


def test_qubit_counts():
    assert [qubit_count(e, n) for e in ("threshold", "frqi", "neqr") for n in (1, 2)] == [4, 16, 3, 8, 10, 12]


def test_param_count_examples():
    assert classical_param_count(169, 10) == 16900
    assert classical_param_count(36, 16) == 5760
    assert classical_param_count(1, 1) == 10


def test_gate_count_examples():
    assert gate_count("frqi", 1, 169, 4)[0] == 3380
    assert gate_count("threshold", 1, 169, 4)[0] == 1352
    assert gate_count("frqi", 2, 36, 10)[0] == 9576
    assert gate_count("threshold", 2, 36, 10)[0] == 936
    assert gate_count("neqr", 1, 169, 4) == (83486, 490)
    assert gate_count("neqr", 2, 36, 10) == (421992, 11712)


def test_worst_case_pieces():
    assert mcx_cost(1) == 15
    assert mcx_cost(2) == 3 * 2**5 - 5
    assert neqr_worst_case(1) == 2 + 8 + 4 * 8 * 15
    assert neqr_worst_case(2) == 0 + 64 + 16 * 8 * 91
    with pytest.raises(ConfigurationError):
        gate_count("frqi", 3, 1, 1)


@given(st.sampled_from(list(Encoder)), st.integers(1, 2), st.integers(0, 200), st.integers(0, 30))
def test_property_monotone(enc, n, N, R):
    g = gate_count(enc, n, N, R)[0]
    assert gate_count(enc, n, N + 1, R)[0] >= g
    assert gate_count(enc, n, N, R + 1)[0] >= g


def test_actual_gate_counts():
    assert actual_gate_count(Circuit(1)) == 0
    assert actual_gate_count(encode_neqr(ImagePatch(1, [255] * 4))[0]) == 10
    assert actual_gate_count(encode_threshold(ImagePatch(2, [255] * 16))[0]) == 16


@pytest.mark.parametrize("n", [1, 2])
def test_minimized_le_unminimized_le_worst_case(n):
    rng = np.random.default_rng(n)
    for _ in range(100):
        p = ImagePatch(n, rng.integers(0, 256, 4**n))
        a = actual_gate_count(encode_neqr(p, True)[0])
        b = actual_gate_count(encode_neqr(p, False)[0])
        assert a <= b <= neqr_worst_case(n)

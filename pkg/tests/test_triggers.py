import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcbsim.triggers import (BlockStructureViolation, DimensionMismatch,
                             DEFAULT_TRIGGERS, TriggerParams,
                             assemble_centralized, centralized_trigger,
                             load_params, node_trigger, validate_params)


def test_no_trigger_at_zero_error():
    for j in range(DEFAULT_TRIGGERS.n_nodes):
        x = np.full(len(DEFAULT_TRIGGERS.index_sets[j]), 3.7)
        assert not node_trigger(j, x, x, DEFAULT_TRIGGERS)


def test_flow_node_scalar_threshold():
    # node 6: fires iff 0.1147 e^2 > 9, i.e. |e| > 8.8577...
    thresh = math.sqrt(9.0 / 0.1147)
    assert thresh == pytest.approx(8.8577, abs=5e-4)
    assert not node_trigger(5, [0.0], [8.85], DEFAULT_TRIGGERS)
    assert node_trigger(5, [0.0], [8.86], DEFAULT_TRIGGERS)
    assert not node_trigger(5, [0.0], [-8.85], DEFAULT_TRIGGERS)
    assert node_trigger(5, [0.0], [-8.86], DEFAULT_TRIGGERS)


def test_height_node_hand_evaluated():
    # node 2 with e = (1, 0), x = (0.1, 0): 0.414 - 0.0503 * 0.01 > 0.24
    x = np.array([0.1, 0.0])
    assert node_trigger(1, x, x + np.array([1.0, 0.0]), DEFAULT_TRIGGERS)
    lhs = 0.414 * 1.0 - 0.0503 * 0.01
    assert lhs == pytest.approx(0.413497, abs=1e-9)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        node_trigger(0, np.zeros(3), np.zeros(3), DEFAULT_TRIGGERS)


def test_centralized_zero_error_never_fires():
    M, N = assemble_centralized(DEFAULT_TRIGGERS)
    x = np.random.default_rng(0).normal(size=15)
    assert not centralized_trigger(np.zeros(15), x, M, N,
                                   DEFAULT_TRIGGERS.epsilon_sq)


def test_centralized_requires_block_structure():
    M, N = assemble_centralized(DEFAULT_TRIGGERS)
    M_bad = M.copy()
    M_bad[0, 1] = 0.5  # couples node 1's x1 with node 2's x1
    with pytest.raises(BlockStructureViolation):
        centralized_trigger(np.ones(15), np.zeros(15), M_bad, N,
                            DEFAULT_TRIGGERS.epsilon_sq,
                            index_sets=DEFAULT_TRIGGERS.index_sets)


def test_centralized_implies_some_node_fires():
    # one-way implication, checked over a large random sample
    M, N = assemble_centralized(DEFAULT_TRIGGERS)
    eps_sq = DEFAULT_TRIGGERS.epsilon_sq
    rng = np.random.default_rng(42)
    n_checked = 0
    for _ in range(100):
        e = rng.normal(0.0, 4.0, size=(1000, 15))
        x = rng.normal(0.0, 4.0, size=(1000, 15))
        central = np.einsum("ki,ij,kj->k", e, M, e) - np.einsum(
            "ki,ij,kj->k", x, N, x) > eps_sq
        for k in np.nonzero(central)[0]:
            n_checked += 1
            fired = any(
                node_trigger(j,
                             x[k, list(DEFAULT_TRIGGERS.index_sets[j])],
                             x[k, list(DEFAULT_TRIGGERS.index_sets[j])]
                             + e[k, list(DEFAULT_TRIGGERS.index_sets[j])],
                             DEFAULT_TRIGGERS)
                for j in range(DEFAULT_TRIGGERS.n_nodes))
            assert fired
    assert n_checked > 100  # the sample actually exercised the implication


def test_node_fire_does_not_imply_centralized():
    # node 6 can fire alone while the centralized sum stays under budget
    e = np.zeros(15)
    e[5] = 9.0  # node 6 err: 0.1147 * 81 = 9.29 > 9
    x = np.zeros(15)
    assert node_trigger(5, [x[5]], [x[5] + e[5]], DEFAULT_TRIGGERS)
    M, N = assemble_centralized(DEFAULT_TRIGGERS)
    assert not centralized_trigger(e, x, M, N, DEFAULT_TRIGGERS.epsilon_sq)


def test_single_node_partition_degenerates():
    M = np.array([[2.0]])
    N = np.array([[0.5]])
    params = TriggerParams(M=(M,), N=(N,), theta=(1.3,), index_sets=((0,),))
    rng = np.random.default_rng(7)
    for _ in range(200):
        x, xh = rng.normal(0, 2, size=2)
        assert node_trigger(0, [x], [xh], params) == centralized_trigger(
            np.array([xh - x]), np.array([x]), M, N, params.epsilon_sq)


@settings(max_examples=200)
@given(st.floats(1e-3, 1e3),
       st.floats(-50, 50), st.floats(-50, 50),
       st.floats(-50, 50), st.floats(-50, 50))
def test_scale_invariance(c, x1, x3, e1, e3):
    j = 4
    x = np.array([x1, x3])
    xh = x + np.array([e1, e3])
    base = node_trigger(j, x, xh, DEFAULT_TRIGGERS)
    scaled = TriggerParams(
        M=tuple(c * m for m in DEFAULT_TRIGGERS.M),
        N=tuple(c * n for n in DEFAULT_TRIGGERS.N),
        theta=tuple(c * t for t in DEFAULT_TRIGGERS.theta),
        index_sets=DEFAULT_TRIGGERS.index_sets)
    assert node_trigger(j, x, xh, scaled) == base


@settings(max_examples=300)
@given(st.integers(0, 9), st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=2))
def test_no_retrigger_after_update(j, vals):
    x = np.array(vals[:len(DEFAULT_TRIGGERS.index_sets[j])])
    assert not node_trigger(j, x, x, DEFAULT_TRIGGERS)


def test_validate_default_parameters_ok():
    assert validate_params(DEFAULT_TRIGGERS) == []
    assert DEFAULT_TRIGGERS.epsilon_sq == pytest.approx(49.972)


def test_validate_catches_indefinite_n():
    bad_n = list(DEFAULT_TRIGGERS.N)
    bad_n[0] = np.diag([-0.1, 0.0])
    params = TriggerParams(M=DEFAULT_TRIGGERS.M, N=tuple(bad_n),
                           theta=DEFAULT_TRIGGERS.theta,
                           index_sets=DEFAULT_TRIGGERS.index_sets)
    assert any("not PSD" in v for v in validate_params(params))


def test_validate_catches_budget_mismatch():
    params = TriggerParams(M=DEFAULT_TRIGGERS.M, N=DEFAULT_TRIGGERS.N,
                           theta=DEFAULT_TRIGGERS.theta,
                           index_sets=DEFAULT_TRIGGERS.index_sets,
                           epsilon_sq_override=DEFAULT_TRIGGERS.epsilon_sq + 1.0)
    assert any("budget mismatch" in v for v in validate_params(params))


def test_validate_catches_overlapping_nodes():
    sets = list(DEFAULT_TRIGGERS.index_sets)
    sets[1] = (0, 11)  # steals node 1's x1
    params = TriggerParams(M=DEFAULT_TRIGGERS.M, N=DEFAULT_TRIGGERS.N,
                           theta=DEFAULT_TRIGGERS.theta, index_sets=tuple(sets))
    assert any("measured by nodes" in v for v in validate_params(params))


def test_validate_catches_asymmetric_m():
    bad_m = list(DEFAULT_TRIGGERS.M)
    bad_m[2] = np.array([[1.0, 0.2], [0.1, 1.0]])
    params = TriggerParams(M=tuple(bad_m), N=DEFAULT_TRIGGERS.N,
                           theta=DEFAULT_TRIGGERS.theta,
                           index_sets=DEFAULT_TRIGGERS.index_sets)
    assert any("M not symmetric" in v for v in validate_params(params))


def test_psd_tolerance_absorbs_rounding():
    n = list(DEFAULT_TRIGGERS.N)
    n[0] = np.diag([1e-13 - 1e-12, 0.0])  # tiny negative within tolerance
    params = TriggerParams(M=DEFAULT_TRIGGERS.M, N=tuple(n),
                           theta=DEFAULT_TRIGGERS.theta,
                           index_sets=DEFAULT_TRIGGERS.index_sets)
    assert validate_params(params) == []


def test_text_file_round_trip(tmp_path):
    path = tmp_path / "triggers.txt"
    lines = []
    for j in range(DEFAULT_TRIGGERS.n_nodes):
        idxs = " ".join(str(i) for i in DEFAULT_TRIGGERS.index_sets[j])
        lines.append(f"node {j + 1} states {idxs}")
        m_rows = " / ".join(" ".join(repr(float(v)) for v in row)
                            for row in DEFAULT_TRIGGERS.M[j])
        n_rows = " / ".join(" ".join(repr(float(v)) for v in row)
                            for row in DEFAULT_TRIGGERS.N[j])
        lines.append(f"M {m_rows}")
        lines.append(f"N {n_rows}")
        lines.append(f"theta {DEFAULT_TRIGGERS.theta[j]!r}")
    path.write_text("\n".join(lines) + "\n")

    loaded = load_params(path)
    assert loaded.theta == DEFAULT_TRIGGERS.theta
    assert loaded.index_sets == DEFAULT_TRIGGERS.index_sets
    for a, b in zip(loaded.M, DEFAULT_TRIGGERS.M):
        assert np.array_equal(a, b)
    for a, b in zip(loaded.N, DEFAULT_TRIGGERS.N):
        assert np.array_equal(a, b)


def test_text_file_rejects_incomplete_block(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("node 1 states 0 10\nM 1 0 / 0 1\ntheta 0.5\n")
    with pytest.raises(ValueError):
        load_params(path)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tems.errors import DimensionError
from tems.hamiltonian import boltzmann_weights, gibbs_state, partition_function, spectral_from_levels
from tems.instrument import (
    build_crooks,
    build_error_free,
    build_jii,
    build_outcome_mixed,
    build_projective,
    random_channel,
)
from tems.operator_core import haar_unitary, max_abs
from tems.protocol import Protocol
from tems.work_stats import (
    JointOutcomeTable,
    WorkDistribution,
    conditional_table,
    exp_average,
    joint_from_conditional,
    joint_table,
    two_point_conditional,
    work_distribution,
)

from .conftest import random_hamiltonian, random_protocol

QUBIT = spectral_from_levels([0.0, 1.0])


def brute_force_joint(p: Protocol, instr0, instr_tau, beta):
    """Independent oracle: sum every Kraus path B^τ_{m,l} U B^0_{n,k} explicitly."""
    rho = gibbs_state(p.h_initial, beta)
    u = p.unitary
    out = np.zeros((len(instr_tau), len(instr0)))
    for m, op_m in enumerate(instr_tau):
        for n, op_n in enumerate(instr0):
            total = 0.0
            for b in op_m.kraus:
                for a in op_n.kraus:
                    path = b @ u @ a
                    total += np.trace(path @ rho @ path.conj().T).real
            out[m, n] = total
    return out


def test_projective_identity_dynamics_table():
    p = Protocol(QUBIT, QUBIT, np.eye(2))
    t = joint_table(p, build_projective(QUBIT), build_projective(QUBIT), np.log(2))
    assert max_abs(t.p - np.diag([2 / 3, 1 / 3])) <= 1e-15


def test_jii_factorization_example():
    rng = np.random.default_rng(0)
    p = random_protocol(3, rng, degenerate=True)
    instr0 = build_error_free(p.h_initial, random_channel(3, 2, rng))
    t = joint_table(p, instr0, build_jii(p.h_final), 0.8)
    p0 = boltzmann_weights(p.h_initial, 0.8)
    expect = np.outer(p.h_final.degeneracies / 3, p0)
    assert max_abs(t.p - expect) <= 1e-12


def test_marginal_matches_first_effects():
    rng = np.random.default_rng(1)
    p = random_protocol(3, rng)
    instr0 = build_outcome_mixed(p.h_initial, 0.1)
    t = joint_table(p, instr0, build_crooks(p.h_final, 0.3), 1.3)
    rho = gibbs_state(p.h_initial, 1.3)
    expect = [np.trace(e @ rho).real for e in instr0.effects()]
    assert max_abs(t.marginal_initial() - expect) <= 1e-12


def test_dimension_mismatch_rejected():
    p = Protocol(QUBIT, QUBIT, np.eye(2))
    h3 = spectral_from_levels([0.0, 1.0, 2.0])
    with pytest.raises(DimensionError):
        joint_table(p, build_projective(h3), build_projective(QUBIT), 1.0)


def test_conditional_zero_off_diagonal_for_error_free_first():
    rng = np.random.default_rng(2)
    p = random_protocol(3, rng)
    instr0 = build_error_free(p.h_initial, random_channel(3, 2, rng))
    cond = conditional_table(p, instr0, build_projective(p.h_final))
    for k in range(3):
        for n in range(3):
            if n != k:
                assert max_abs(cond[:, n, k]) <= 1e-14


def test_conditional_projective_identity():
    h = spectral_from_levels([0.0, 0.4, 1.5])
    cond = conditional_table(Protocol(h, h, np.eye(3)), build_projective(h), build_projective(h))
    expect = np.zeros((3, 3, 3))
    for k in range(3):
        expect[k, k, k] = 1
    assert max_abs(cond - expect) <= 1e-15


def test_conditional_reconstructs_joint():
    rng = np.random.default_rng(3)
    p = random_protocol(4, rng, degenerate=True)
    i0, it = build_crooks(p.h_initial, 0.2, "universal"), build_outcome_mixed(p.h_final, 0.2)
    cond = conditional_table(p, i0, it)
    assert max_abs(cond.sum(axis=(0, 1)) - 1) <= 1e-10
    assert max_abs(joint_from_conditional(cond, p.h_initial, 0.9) - joint_table(p, i0, it, 0.9).p) <= 1e-12


def test_work_point_mass_without_transitions():
    p = Protocol(QUBIT, QUBIT, np.eye(2))
    d = work_distribution(joint_table(p, build_projective(QUBIT), build_projective(QUBIT), 1.0))
    assert list(d.values) == [0.0] and abs(d.probs[0] - 1) <= 1e-15


def test_work_support_jii_qubit():
    h_tau = spectral_from_levels([0.0, 2.0])
    p = Protocol(QUBIT, h_tau, haar_unitary(2, 0))
    beta = 1.0
    d = work_distribution(joint_table(p, build_projective(QUBIT), build_jii(h_tau), beta))
    p0 = np.array([1, np.exp(-beta)]) / (1 + np.exp(-beta))
    # w = e_m(τ) - e_n(0): (m,n)=(0,1) -> -1, (0,0) -> 0, (1,1) -> 1, (1,0) -> 2
    assert np.allclose(d.values, [-1, 0, 1, 2])
    assert max_abs(d.probs - 0.5 * np.array([p0[1], p0[0], p0[1], p0[0]])) <= 1e-12


def test_work_merges_degenerate_values():
    table = JointOutcomeTable(np.array([[0.3, 0.1], [0.2, 0.4]]), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    d = work_distribution(table)
    assert np.allclose(d.values, [-1, 0, 1])
    assert np.allclose(d.probs, [0.1, 0.7, 0.2])


def test_exp_average_point_mass():
    assert exp_average(WorkDistribution(np.array([0.0]), np.array([1.0])), 3.0) == 1.0


def test_exp_average_projective_qubit_closed_form():
    h_tau = spectral_from_levels([0.0, 2.0])
    expect = (1 + np.exp(-2)) / (1 + np.exp(-1))
    for seed in range(5):
        p = Protocol(QUBIT, h_tau, haar_unitary(2, seed))
        table = joint_table(p, build_projective(QUBIT), build_projective(h_tau), 1.0)
        got = exp_average(work_distribution(table), 1.0)
        assert abs(got - expect) <= 1e-14
        # brute-force enumeration over outcome pairs
        enum = sum(table.p[m, n] * np.exp(-(h_tau.energies[m] - QUBIT.energies[n]))
                   for m in range(2) for n in range(2))
        assert abs(enum - expect) <= 1e-14
    assert abs(expect - 0.8299966) <= 1e-7


def test_exp_average_beta_zero():
    d = WorkDistribution(np.array([-1.0, 0.5, 3.0]), np.array([0.2, 0.5, 0.3]))
    assert abs(exp_average(d, 0.0) - 1) <= 1e-15


def test_two_point_identity():
    h = spectral_from_levels([0.0, 1.0, 3.0])
    assert max_abs(two_point_conditional(Protocol(h, h, np.eye(3))) - np.eye(3)) <= 1e-15


def test_two_point_columns_sum_to_one():
    p = random_protocol(3, np.random.default_rng(4))
    assert max_abs(two_point_conditional(p).sum(axis=0) - 1) <= 1e-12


def test_crooks_mixture_identity():
    p = random_protocol(3, np.random.default_rng(5))
    alpha = 0.5
    cond = conditional_table(p, build_crooks(p.h_initial, alpha), build_crooks(p.h_final, alpha))
    p2 = two_point_conditional(p)
    diag = np.stack([cond[:, n, n] for n in range(3)], axis=1)
    expect = (1 - alpha) * p.h_final.degeneracies[:, None] / 3 + alpha * p2
    assert max_abs(diag - expect) <= 1e-10


def test_reporting_copy_clips_noise_only():
    d = WorkDistribution(np.array([0.0, 1.0, 2.0]), np.array([-1e-13, 0.6, 0.4 + 1e-13]))
    r = d.for_reporting()
    assert r.probs[0] == 0.0 and abs(r.total - 1) <= 1e-15
    assert d.probs[0] < 0  # raw values kept


def test_csv_and_json_export():
    d = WorkDistribution(np.array([-0.5, 1.25]), np.array([0.25, 0.75]))
    assert d.to_csv().splitlines() == ["w,p", "-0.5,0.25", "1.25,0.75"]
    back = WorkDistribution.from_json(d.to_json())
    assert np.array_equal(back.values, d.values) and np.array_equal(back.probs, d.probs)
    assert json.loads(d.to_json()) == {"w": [-0.5, 1.25], "p": [0.25, 0.75]}


def _instrument_pair(p, rng, kind):
    if kind == 0:
        return build_projective(p.h_initial), build_projective(p.h_final)
    if kind == 1:
        return build_crooks(p.h_initial, 0.3, "universal"), build_outcome_mixed(p.h_final, 0.1)
    return (build_error_free(p.h_initial, random_channel(p.dim, 2, rng)),
            build_error_free(p.h_final, random_channel(p.dim, 3, rng)))


@settings(max_examples=40, deadline=None)
@given(dim=st.integers(1, 3), seed=st.integers(0, 10_000), kind=st.integers(0, 2),
       beta=st.floats(0.05, 5), degenerate=st.booleans())
def test_brute_force_oracle_equivalence(dim, seed, kind, beta, degenerate):
    rng = np.random.default_rng(seed)
    p = random_protocol(dim, rng, degenerate=degenerate)
    i0, it = _instrument_pair(p, rng, kind)
    t = joint_table(p, i0, it, beta)
    assert max_abs(t.p - brute_force_joint(p, i0, it, beta)) <= 1e-12
    assert abs(t.total - 1) <= 1e-10 and t.p.min() >= -1e-12
    d = work_distribution(t)
    assert abs(d.total - 1) <= 1e-10
    assert np.all(np.diff(d.values) > 0)


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(1, 4), seed=st.integers(0, 10_000), shift=st.floats(-10, 10))
def test_shift_covariance(dim, seed, shift):
    rng = np.random.default_rng(seed)
    p = random_protocol(dim, rng)
    i0, it = build_projective(p.h_initial), build_projective(p.h_final)
    t = joint_table(p, i0, it, 1.0)
    shifted = JointOutcomeTable(t.p, t.e_final + shift, t.e_initial)
    d, ds = work_distribution(t, 1e-9), work_distribution(shifted, 1e-9)
    assert len(d) == len(ds)
    assert np.array_equal(d.probs, ds.probs)
    assert max_abs(ds.values - (d.values + shift)) <= 1e-12 * max(1, abs(shift))


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(1, 4), seed=st.integers(0, 10_000), beta=st.floats(0.05, 5))
def test_jii_factorization_property(dim, seed, beta):
    rng = np.random.default_rng(seed)
    p = random_protocol(dim, rng, degenerate=True)
    t = joint_table(p, build_projective(p.h_initial), build_jii(p.h_final), beta)
    expect = np.outer(p.h_final.degeneracies / dim, boltzmann_weights(p.h_initial, beta))
    assert max_abs(t.p - expect) <= 1e-12


def test_jarzynski_ratio_uses_partition_functions():
    h0, ht = random_hamiltonian(3, np.random.default_rng(9)), random_hamiltonian(3, np.random.default_rng(10))
    p = Protocol(h0, ht, haar_unitary(3, 1))
    d = work_distribution(joint_table(p, build_projective(h0), build_projective(ht), 0.6))
    assert abs(exp_average(d, 0.6) - partition_function(ht, 0.6) / partition_function(h0, 0.6)) <= 1e-12

"""Symplectic sampling, Clifford tableau lift, snapshots and estimator bounds."""

import itertools

import numpy as np
import pytest

from conftest import random_density, random_pauli_letters
from shadowcpd import qcore as qc
from shadowcpd import shadows as sh


def symplectic_form(d):
    # interleaved (x1, z1, x2, z2, ...) pairing
    j = np.zeros((2 * d, 2 * d), dtype=np.int64)
    for k in range(d):
        j[2 * k, 2 * k + 1] = 1
        j[2 * k + 1, 2 * k] = 1
    return j


def is_symplectic(g, d):
    j = symplectic_form(d)
    return np.array_equal((g @ j @ g.T) % 2, j)


def depolarize_one_qubit(mat, k, d):
    """Independent oracle for the single-qubit shadow channel on qubit k.

    rho -> (rho + I_k tensor tr_k rho) / 3, written with axis reshapes so it
    shares no code with the implementation under test.
    """
    a, b = 2**k, 2 ** (d - k - 1)
    t = mat.reshape(a, 2, b, a, 2, b)
    partial = np.trace(t, axis1=1, axis2=4)  # shape (a, b, a, b)
    lifted = np.einsum("ij,akbl->aikbjl", np.eye(2), partial).reshape(mat.shape)
    return (mat + lifted) / 3.0


# ---------------------------------------------------------------------------
# symplectic layer


def test_symplectic_enumeration_sizes():
    assert len(list(sh.enumerate_symplectic(1))) == 6
    assert len(list(sh.enumerate_symplectic(2))) == 720


def test_symplectic_elements_distinct_and_valid():
    for d in (1, 2):
        seen = set()
        for g in sh.enumerate_symplectic(d):
            assert is_symplectic(g, d)
            seen.add(g.tobytes())
        assert len(seen) == (6, 720)[d - 1]


def test_sample_symplectic_hits_whole_group_at_d1():
    rng = np.random.default_rng(0)
    seen = {sh.sample_symplectic(1, rng).tobytes() for _ in range(200)}
    assert len(seen) == 6


def test_sample_symplectic_valid_at_larger_d():
    rng = np.random.default_rng(1)
    for d in (2, 3, 4):
        for _ in range(10):
            assert is_symplectic(sh.sample_symplectic(d, rng), d)


# ---------------------------------------------------------------------------
# tableau lift


def test_clifford_group_sizes_and_unitarity():
    g1 = sh.clifford_group(1)
    assert len(g1) == 24
    for u in g1:
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-10)
    g2 = sh.clifford_group(2)
    assert len(g2) == 11520
    rng = np.random.default_rng(4)
    for i in rng.integers(0, len(g2), size=40):
        u = g2[int(i)]
        assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-10)


def test_clifford_group_distinct_mod_phase():
    def canon(u):
        flat = u.ravel()
        piv = flat[np.argmax(np.abs(flat) > 1e-9)]
        return tuple(np.round(flat / piv * (abs(piv)), 6))

    keys = {canon(u) for u in sh.clifford_group(1)}
    assert len(keys) == 24


def test_clifford_group_rejects_large_d():
    with pytest.raises(ValueError):
        sh.clifford_group(3)


def test_lifted_unitaries_permute_paulis():
    # a Clifford must map each Pauli to a signed Pauli; check U X U^dag for
    # sampled tableaus against the tableau's own row prescription
    rng = np.random.default_rng(9)
    for d in (1, 2):
        for _ in range(5):
            symp = sh.sample_symplectic(d, rng)
            signs = rng.integers(0, 2, size=2 * d)
            u = sh.clifford_unitary_from_tableau(symp, signs)
            for k in range(d):
                letters = ["I"] * d
                letters[k] = "X"
                src = qc.pauli_string("".join(letters)).mat
                image = u @ src @ u.conj().T
                want = sh._pauli_from_vec(symp[2 * k], signs[2 * k])
                assert np.allclose(image, want, atol=1e-9)


def test_sample_clifford_unitary_is_unitary():
    rng = np.random.default_rng(12)
    for d in (1, 2, 3):
        u = sh.sample_clifford_unitary(d, rng)
        assert np.allclose(u @ u.conj().T, np.eye(2**d), atol=1e-9)


# ---------------------------------------------------------------------------
# measurement channel


def test_joint_channel_is_depolarizing():
    rng = np.random.default_rng(21)
    for d in (1, 2):
        rho = qc.DensityMatrix(random_density(rng, d))
        out = sh.exact_channel_apply(rho, "joint")
        want = (rho.mat + np.eye(2**d)) / (2**d + 1.0)
        assert np.abs(out - want).max() < 1e-10


def test_local_channel_matches_per_qubit_oracle():
    rng = np.random.default_rng(22)
    for d in (1, 2):
        rho = qc.DensityMatrix(random_density(rng, d))
        want = rho.mat.copy()
        for k in range(d):
            want = depolarize_one_qubit(want, k, d)
        out = sh.exact_channel_apply(rho, "local")
        assert np.abs(out - want).max() < 1e-10


def test_snapshot_reconstruction_is_unbiased():
    # enumerating settings x outcomes and averaging inverse-mapped snapshots
    # must give back the state exactly
    rng = np.random.default_rng(23)
    for kind, d in (("local", 1), ("local", 2), ("joint", 1)):
        rho = qc.DensityMatrix(random_density(rng, d))
        acc = np.zeros((2**d, 2**d), dtype=complex)
        for setting, w in sh._iter_settings(kind, d):
            u = sh.setting_unitary(setting)
            probs = qc.born_probabilities(rho, u)
            for idx in range(2**d):
                bits = np.array([(idx >> (d - 1 - k)) & 1 for k in range(d)])
                acc += w * probs[idx] * sh.shadow_estimate(setting, bits).mat
        assert np.abs(acc - rho.mat).max() < 1e-10


def test_fast_estimate_matches_dense_snapshot_path():
    rng = np.random.default_rng(31)
    for kind in ("local", "joint"):
        for d in (1, 2, 3):
            rho = qc.DensityMatrix(random_density(rng, d))
            obs = qc.pauli_string(random_pauli_letters(rng, d))
            for _ in range(6):
                setting = sh.sample_setting(kind, d, rng)
                bits = qc.born_sample(rho, sh.setting_unitary(setting), rng)
                fast = sh.estimate_from_setting(setting, bits, obs)
                dense = sh.estimate_observable(sh.shadow_estimate(setting, bits), obs)
                assert abs(fast - dense) <= 1e-8 * max(1.0, abs(dense))


# ---------------------------------------------------------------------------
# estimator bounds and outcome tables


def test_analytic_bounds_closed_forms():
    x = qc.pauli_string("X")
    b = sh.estimator_bounds(x, "local")
    assert (b.lower, b.upper) == (-3.0, 3.0)
    xx = qc.pauli_string("XX")
    b = sh.estimator_bounds(xx, "local")
    assert (b.lower, b.upper) == (-9.0, 9.0)
    xi = qc.pauli_string("XI")
    b = sh.estimator_bounds(xi, "local")  # support size 1
    assert (b.lower, b.upper) == (-3.0, 3.0)
    b = sh.estimator_bounds(x, "joint")
    assert (b.lower, b.upper) == (-3.0, 3.0)
    b = sh.estimator_bounds(xx, "joint")
    assert (b.lower, b.upper) == (-5.0, 5.0)


def test_exhaustive_bounds_contained_in_analytic():
    rng = np.random.default_rng(41)
    for kind, d in (("local", 1), ("local", 2), ("joint", 1), ("joint", 2)):
        obs = qc.pauli_string(random_pauli_letters(rng, d))
        a = sh.estimator_bounds(obs, kind, mode="analytic")
        e = sh.estimator_bounds(obs, kind, mode="exhaustive")
        assert a.lower - 1e-9 <= e.lower <= e.upper <= a.upper + 1e-9


def test_exhaustive_bounds_attained_for_pauli_strings():
    b = sh.estimator_bounds(qc.pauli_string("X"), "local", mode="exhaustive")
    assert b.lower == pytest.approx(-3.0) and b.upper == pytest.approx(3.0)
    b = sh.estimator_bounds(qc.pauli_string("X"), "joint", mode="exhaustive")
    assert b.lower == pytest.approx(-3.0) and b.upper == pytest.approx(3.0)


def test_outcome_distribution_mean_and_support():
    rng = np.random.default_rng(51)
    for kind, d in (("local", 1), ("local", 2), ("joint", 1)):
        rho = qc.DensityMatrix(random_density(rng, d))
        obs = qc.pauli_string(random_pauli_letters(rng, d))
        probs, values = sh.outcome_distribution(rho, [obs], kind)
        assert probs.min() >= -1e-15
        assert abs(probs.sum() - 1.0) < 1e-10
        mean = float(probs @ values[:, 0])
        assert abs(mean - qc.expectation(rho, obs)) < 1e-10
        b = sh.estimator_bounds(obs, kind, mode="exhaustive")
        assert values.min() >= b.lower - 1e-9
        assert values.max() <= b.upper + 1e-9


def test_outcome_distribution_joint_two_qubits():
    rng = np.random.default_rng(52)
    rho = qc.DensityMatrix(random_density(rng, 2))
    obs = qc.pauli_string("XZ")
    probs, values = sh.outcome_distribution(rho, [obs], "joint")
    assert probs.shape == (11520 * 4,)
    assert abs(probs.sum() - 1.0) < 1e-9
    assert abs(float(probs @ values[:, 0]) - qc.expectation(rho, obs)) < 1e-9


def test_sample_estimates_deterministic_and_in_bounds():
    rho = qc.make_theta_state(2, 0.6)
    obs = [qc.pauli_string("XX"), qc.pauli_string("ZI")]
    bounds = [sh.estimator_bounds(o, "local") for o in obs]
    a = [sh.sample_estimates(rho, obs, "local", np.random.default_rng(77)) for _ in range(4)]
    b = [sh.sample_estimates(rho, obs, "local", np.random.default_rng(77)) for _ in range(4)]
    assert np.array_equal(np.array(a), np.array(b))
    rng = np.random.default_rng(78)
    for _ in range(300):
        est = sh.sample_estimates(rho, obs, "local", rng)
        for j, bd in enumerate(bounds):
            assert bd.lower - 1e-9 <= est[j] <= bd.upper + 1e-9


def test_monte_carlo_mean_tracks_expectation():
    rng = np.random.default_rng(61)
    rho = qc.DensityMatrix(random_density(rng, 2))
    obs = qc.pauli_string("YX")
    n = 4000
    draws = np.array([sh.sample_estimates(rho, [obs], "local", rng)[0] for _ in range(n)])
    b = sh.estimator_bounds(obs, "local")
    tol = 4.0 * (b.upper - b.lower) / np.sqrt(n)
    assert abs(draws.mean() - qc.expectation(rho, obs)) < tol


def test_can_enumerate_limits():
    assert sh.can_enumerate("local", 3)
    assert not sh.can_enumerate("local", 4)
    assert sh.can_enumerate("joint", 2)
    assert not sh.can_enumerate("joint", 3)
    with pytest.raises(ValueError):
        sh.can_enumerate("weird", 1)


def test_measurement_setting_validation():
    with pytest.raises(ValueError):
        sh.MeasurementSetting(kind="other")
    with pytest.raises(ValueError):
        sh.MeasurementSetting(kind="local")  # missing bases
    with pytest.raises(ValueError):
        sh.MeasurementSetting(kind="local", local_bases=np.array([0, 5]))
    with pytest.raises(ValueError):
        sh.MeasurementSetting(kind="joint")  # missing unitary
    s = sh.MeasurementSetting(kind="local", local_bases=np.array([0, 1, 2]))
    assert s.d == 3

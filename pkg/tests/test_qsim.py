import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entanglekit import qsim
from entanglekit.errors import CapacityError, DimensionError, DomainError, NormalizationError
from entanglekit.kernels import AMPLITUDE, gram_matrix, kernel_eval
from entanglekit.qsim import StateVector, encode, hadamard_test, shots_required, swap_test_p0

seeds = st.integers(0, 2 ** 32 - 1)


def random_state(n, rng, complex_=True):
    v = rng.standard_normal(2 ** n) + (1j * rng.standard_normal(2 ** n) if complex_ else 0)
    return StateVector(n, v / np.linalg.norm(v))


# ---------------------------------------------------------------- encoding


def test_encode_examples():
    np.testing.assert_array_equal(encode([1.0, 0.0, 0.0, 0.0]).amplitudes, [1, 0, 0, 0])
    s = encode(np.array([1.0, 1.0]) / math.sqrt(2), 1)
    np.testing.assert_allclose(s.amplitudes, [1 / math.sqrt(2)] * 2, atol=1e-16)
    assert encode(np.arange(1.0, 82.0), 7).amplitudes.shape == (128,)


@given(seeds, st.integers(1, 100))
def test_encode_is_normalized_and_real(seed, length):
    s = encode(np.random.default_rng(seed).standard_normal(length))
    assert abs(np.vdot(s.amplitudes, s.amplitudes).real - 1.0) <= 1e-12
    assert np.all(s.amplitudes.imag == 0)


def test_state_vector_validation():
    with pytest.raises(NormalizationError):
        StateVector(1, [1.0, 1.0])
    with pytest.raises(DimensionError):
        StateVector(2, [1.0, 0.0])
    with pytest.raises(NormalizationError):
        encode(np.zeros(4))


# --------------------------------------------------------------- SWAP test


def test_swap_identical_and_orthogonal():
    rng = np.random.default_rng(0)
    psi = random_state(3, rng)
    assert swap_test_p0(psi, psi) == pytest.approx(1.0, abs=1e-12)
    assert swap_test_p0(encode([1.0, 0.0]), encode([0.0, 1.0])) == pytest.approx(0.5, abs=1e-15)


def test_swap_matches_classical_kernel():
    rng = np.random.default_rng(1)
    for n in (1, 3, 6):
        for _ in range(10):
            x, y = rng.standard_normal(2 ** n - 1), rng.standard_normal(2 ** n - 1)
            p0 = swap_test_p0(encode(x, n), encode(y, n))
            assert abs(2 * p0 - 1 - kernel_eval(AMPLITUDE, x, y)) <= 1e-12


def test_swap_register_size():
    rng = np.random.default_rng(2)
    for n in (1, 2, 4):
        _, reg = swap_test_p0(random_state(n, rng), random_state(n, rng), return_register=True)
        assert reg.n == 2 * n + 1
        assert reg.psi.shape == (2,) * (2 * n + 1)
        assert abs(np.sum(np.abs(reg.psi) ** 2) - 1) < 1e-12


def test_swap_size_mismatch_and_capacity():
    rng = np.random.default_rng(3)
    with pytest.raises(DimensionError):
        swap_test_p0(random_state(1, rng), random_state(2, rng))
    big = random_state(10, rng)
    with pytest.raises(CapacityError):
        swap_test_p0(big, big)


# ----------------------------------------------------------- Hadamard test


def test_hadamard_examples():
    rng = np.random.default_rng(4)
    psi = random_state(3, rng)
    assert hadamard_test(psi, psi, "Re") == pytest.approx(1.0, abs=1e-12)
    x, y = encode(rng.standard_normal(8)), encode(rng.standard_normal(8))
    assert hadamard_test(x, y, "Im") == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        hadamard_test(x, y, "Abs")


def test_hadamard_register_size():
    rng = np.random.default_rng(5)
    for n in (1, 3, 5):
        _, reg = hadamard_test(random_state(n, rng), random_state(n, rng), return_register=True)
        assert reg.n == n + 1


@given(seeds, st.integers(1, 6))
@settings(max_examples=40)
def test_hadamard_parts_rebuild_swap_overlap(seed, n):
    rng = np.random.default_rng(seed)
    psi, phi = random_state(n, rng), random_state(n, rng)
    re = 2 * hadamard_test(psi, phi, "Re") - 1
    im = 2 * hadamard_test(psi, phi, "Im") - 1
    overlap = np.vdot(psi.amplitudes, phi.amplitudes)
    assert abs(re - overlap.real) <= 1e-12
    assert abs(im - overlap.imag) <= 1e-12
    assert abs(re * re + im * im - (2 * swap_test_p0(psi, phi) - 1)) <= 1e-12


@given(seeds, st.integers(1, 6))
@settings(max_examples=30)
def test_householder_prep_is_a_unitary_preparing_psi(seed, n):
    rng = np.random.default_rng(seed)
    psi = random_state(n, rng).amplitudes
    U = qsim.householder_prep(psi)
    e0 = np.zeros(2 ** n, dtype=complex)
    e0[0] = 1
    np.testing.assert_allclose(U(e0), psi, atol=1e-14)
    M = np.column_stack([U(col) for col in np.eye(2 ** n, dtype=complex)])
    np.testing.assert_allclose(M.conj().T @ M, np.eye(2 ** n), atol=1e-13)


def test_householder_prep_of_basis_state():
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1j
    U = qsim.householder_prep(psi)
    np.testing.assert_allclose(U(np.eye(4, dtype=complex)[2]), [0, 0, 1j, 0], atol=1e-15)


# ------------------------------------------------------------------- shots


def test_shots_required_values():
    assert shots_required(0.1, 0.05).shots == 185
    assert shots_required(0.05, 0.05).shots == 738
    plan = shots_required(0.2, 0.1)
    assert plan.shots == math.ceil(math.log(20) / 0.08)
    assert (plan.epsilon, plan.delta) == (0.2, 0.1)


@given(st.floats(0.005, 0.5), st.floats(1e-6, 0.5))
def test_shots_scaling(eps, delta):
    base = shots_required(eps, delta).shots
    half = shots_required(eps / 2, delta).shots
    assert 4 * base - 4 <= half <= 4 * base
    assert shots_required(eps, delta / 3).shots >= base


def test_shots_domain_errors():
    for eps, delta in ((0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.5)):
        with pytest.raises(DomainError):
            shots_required(eps, delta)


def test_sampled_kernel_edge_cases():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(8)
    assert qsim.sampled_kernel(x, x, 738, rng) == 1.0
    y = rng.standard_normal(8)
    assert all(qsim.sampled_kernel(x, y, 1, rng) in (0.0, 1.0) for _ in range(50))
    a = qsim.sampled_kernel(x, y, 500, np.random.default_rng(9))
    assert a == qsim.sampled_kernel(x, y, 500, np.random.default_rng(9))
    with pytest.raises(ValueError):
        qsim.sampled_p0(0.5, 0, rng)


def _violation_rate(shots, band, kernel_level, trials=1000, seed=7):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(16), rng.standard_normal(16)
    exact_p0 = swap_test_p0(encode(x), encode(y))
    misses = 0
    for _ in range(trials):
        if kernel_level:
            misses += abs(qsim.sampled_kernel(x, y, shots, rng) - (2 * exact_p0 - 1)) > band
        else:
            misses += abs(qsim.sampled_p0(exact_p0, shots, rng) - exact_p0) > band
    return misses / trials


def test_hoeffding_band_on_p0():
    eps = delta = 0.05
    slack = 3 * math.sqrt(delta * (1 - delta) / 1000)
    assert _violation_rate(shots_required(eps, delta).shots, eps, False) <= delta + slack


def test_hoeffding_band_on_kernel_needs_half_epsilon():
    eps = delta = 0.05
    slack = 3 * math.sqrt(delta * (1 - delta) / 1000)
    # the kernel is 2 p0 - 1, so its error is twice the error on p0
    assert _violation_rate(shots_required(eps / 2, delta).shots, eps, True) <= delta + slack


# ---------------------------------------------------------- kernel identity


def test_circuit_gram_equals_classical_gram():
    X = np.random.default_rng(8).standard_normal((8, 60))
    assert np.max(np.abs(qsim.circuit_gram(X) - gram_matrix(AMPLITUDE, X))) <= 1e-12
    Y = np.random.default_rng(9).standard_normal((3, 60))
    assert np.max(np.abs(qsim.circuit_gram(X, Y) - gram_matrix(AMPLITUDE, X, Y))) <= 1e-12

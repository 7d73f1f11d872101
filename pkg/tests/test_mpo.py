"""Tests for MPO builders, the energy filter, application and observables."""

import numpy as np
import pytest

from micromps.errors import IncompatibleStatesError, InvalidParameterError
from micromps.mpo import (
    FilterOperator,
    Mpo,
    SpinModel,
    apply_mpo,
    build_filter,
    expectation,
    hamiltonian_mpo,
    identity_mpo,
    local_expectations,
    matrix_element,
    mpo_square,
    mpo_to_dense,
    sigma_estimate,
    zz_correlation,
)
from micromps.mps import inner_product, product_mps, random_mps, to_dense
from micromps.rng import derive_stream

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ID = np.eye(2, dtype=complex)


def kron_chain(n, ops):
    """Dense operator with ``ops[site] = matrix`` and identities elsewhere."""
    out = np.array([[1.0 + 0.0j]])
    for i in range(n):
        out = np.kron(out, ops.get(i, ID))
    return out


def dense_heisenberg(n, j, h):
    dim = 2**n
    ham = np.zeros((dim, dim), dtype=complex)
    for i in range(n - 1):
        for p in (SX, SY, SZ):
            ham -= (j / 4.0) * kron_chain(n, {i: p, i + 1: p})
    for i in range(n):
        ham -= h * kron_chain(n, {i: SZ})
    return ham


def dense_tfi(n, j, g):
    dim = 2**n
    ham = np.zeros((dim, dim), dtype=complex)
    for i in range(n - 1):
        ham -= j * kron_chain(n, {i: SZ, i + 1: SZ})
    for i in range(n):
        ham -= g * kron_chain(n, {i: SX})
    return ham


HEIS8 = SpinModel("heisenberg", 8, J=1.0, h=0.3)
TFI8 = SpinModel("transverse_ising", 8, J=1.0, g=1.0)


def test_identity_mpo():
    op = identity_mpo(8)
    assert op.opbond_dims == [1] * 9
    psi = random_mps(derive_stream(20, 0), 8, 2, 4)
    assert abs(expectation(op, psi) - 1.0) <= 1e-12
    assert np.allclose(mpo_to_dense(identity_mpo(4)), np.eye(16))


def test_heisenberg_mpo_bond_and_dense():
    op = hamiltonian_mpo(HEIS8)
    assert op.bulk_bond == 5
    assert op.opbond_dims[1:-1] == [5] * 7
    assert np.max(np.abs(mpo_to_dense(op) - dense_heisenberg(8, 1.0, 0.3))) <= 1e-12


def test_tfi_mpo_bond_and_dense():
    op = hamiltonian_mpo(TFI8)
    assert op.bulk_bond == 3
    assert np.max(np.abs(mpo_to_dense(op) - dense_tfi(8, 1.0, 1.0))) <= 1e-12


@pytest.mark.parametrize("model", [HEIS8, TFI8])
def test_hamiltonians_traceless(model):
    assert abs(np.trace(mpo_to_dense(hamiltonian_mpo(model)))) <= 1e-10


def test_all_up_energy():
    # every bond contributes -J/4 (only the zz part survives on a product
    # state) and every site -h
    n, j, h = 8, 1.0, 0.3
    op = hamiltonian_mpo(SpinModel("heisenberg", n, J=j, h=h))
    all_up = product_mps([0] * n)
    expected = -(n - 1) * j / 4.0 - n * h
    assert abs(expectation(op, all_up) - expected) <= 1e-12


def test_model_validation():
    with pytest.raises(InvalidParameterError):
        SpinModel("xy", 8, J=1.0)
    with pytest.raises(InvalidParameterError):
        SpinModel("heisenberg", 1, J=1.0)
    with pytest.raises(InvalidParameterError):
        SpinModel("heisenberg", 4, J=float("nan"))


def test_mpo_square_dense_and_bond():
    h_op = hamiltonian_mpo(HEIS8)
    h2 = mpo_square(h_op)
    dense = mpo_to_dense(h_op)
    assert np.max(np.abs(mpo_to_dense(h2) - dense @ dense)) <= 1e-8
    assert h2.bulk_bond <= 9


def test_mpo_square_variance_nonnegative():
    h_op = hamiltonian_mpo(HEIS8)
    h2 = mpo_square(h_op)
    for k in range(5):
        psi = random_mps(derive_stream(21, k), 8, 2, 4)
        assert expectation(h2, psi) >= expectation(h_op, psi) ** 2 - 1e-10


def test_sigma_estimate_modes():
    model = SpinModel("heisenberg", 10, J=1.0, h=0.3)
    assert sigma_estimate(model, -3.0, "bound") == pytest.approx(9 * 0.75 + 10 * 0.3 + 3.0)
    assert sigma_estimate(model, -3.0, "paper") == pytest.approx(2 * 10 * 1.0 + 3.0)
    assert sigma_estimate(model, -3.0, "paper-coefficient") == pytest.approx(2 * 10 * 0.3 + 3.0)
    with pytest.raises(InvalidParameterError):
        sigma_estimate(model, 0.0, "wild")


def test_filter_zero_energy_coefficients():
    # at E = 0 the linear term vanishes: G = I - H^2 / sigma^2
    filt = build_filter(HEIS8, 0.0)
    dense = mpo_to_dense(filt.g_mpo)
    h = dense_heisenberg(8, 1.0, 0.3)
    expected = np.eye(2**8) - h @ h / filt.sigma**2
    assert np.max(np.abs(dense - expected)) <= 1e-8


def test_filter_dense_and_spectrum():
    filt = build_filter(HEIS8, -2.0)
    assert filt.positivity_certified
    h = dense_heisenberg(8, 1.0, 0.3)
    expected = np.eye(2**8) - (h - (-2.0) * np.eye(2**8)) @ (h - (-2.0) * np.eye(2**8)) / filt.sigma**2
    dense = mpo_to_dense(filt.g_mpo)
    assert np.max(np.abs(dense - expected)) <= 1e-8
    eigs = np.linalg.eigvalsh(dense)
    assert eigs[0] >= -1e-10
    assert eigs[-1] <= 1.0 + 1e-10


def test_filter_fixes_exact_eigenstate():
    model = SpinModel("heisenberg", 2, J=1.0, h=0.0)
    h = dense_heisenberg(2, 1.0, 0.0)
    eigvals, eigvecs = np.linalg.eigh(h)
    filt = build_filter(model, float(eigvals[0]))
    g = mpo_to_dense(filt.g_mpo)
    v = eigvecs[:, 0]
    assert np.max(np.abs(g @ v - v)) <= 1e-10


def test_filter_invalid_and_uncertified_sigma():
    with pytest.raises(InvalidParameterError):
        build_filter(HEIS8, -2.0, sigma=-1.0)
    with pytest.warns(RuntimeWarning):
        filt = build_filter(HEIS8, -2.0, sigma=0.5)
    assert not filt.positivity_certified


def test_apply_identity_is_lossless():
    psi = random_mps(derive_stream(22, 0), 8, 2, 6)
    out, err = apply_mpo(identity_mpo(8), psi, chi_target=6, tol=1e-12)
    assert err <= 1e-12
    assert np.allclose(to_dense(out), to_dense(psi), atol=1e-10)


def test_apply_matches_dense_product():
    psi = random_mps(derive_stream(22, 1), 8, 2, 4)
    h_op = hamiltonian_mpo(HEIS8)
    out, err = apply_mpo(h_op, psi, chi_target=64, tol=1e-12)
    assert err <= 1e-12
    expected = dense_heisenberg(8, 1.0, 0.3) @ to_dense(psi)
    assert np.max(np.abs(to_dense(out) - expected)) <= 1e-10


def test_apply_then_overlap_equals_expectation():
    psi = random_mps(derive_stream(22, 2), 8, 2, 4)
    h_op = hamiltonian_mpo(HEIS8)
    out, _ = apply_mpo(h_op, psi, chi_target=64, tol=1e-12)
    via_apply = inner_product(psi, out)
    direct = expectation(h_op, psi)
    assert abs(via_apply - direct) <= 1e-10


def test_expectation_matches_dense():
    psi = random_mps(derive_stream(23, 0), 8, 2, 4)
    h_op = hamiltonian_mpo(HEIS8)
    dense_val = np.vdot(to_dense(psi), dense_heisenberg(8, 1.0, 0.3) @ to_dense(psi))
    assert abs(expectation(h_op, psi) - dense_val.real) <= 1e-10


def test_expectation_incompatible():
    with pytest.raises(IncompatibleStatesError):
        expectation(hamiltonian_mpo(HEIS8), product_mps([0, 0]))


def test_hermitian_sandwich():
    h_op = hamiltonian_mpo(HEIS8)
    h2 = mpo_square(h_op)
    g_op = build_filter(HEIS8, -2.0).g_mpo
    for k in range(20):
        phi = random_mps(derive_stream(24, 2 * k), 8, 2, 3)
        psi = random_mps(derive_stream(24, 2 * k + 1), 8, 2, 3)
        for op in (h_op, h2, g_op):
            lhs = matrix_element(op, phi, psi)
            rhs = matrix_element(op, psi, phi)
            assert abs(lhs - np.conj(rhs)) <= 1e-10


def test_filter_sandwich_in_unit_interval():
    g_op = build_filter(HEIS8, -2.0).g_mpo
    for k in range(10):
        psi = random_mps(derive_stream(25, k), 8, 2, 4)
        val = expectation(g_op, psi)
        assert -1e-10 <= val <= 1.0 + 1e-10


def test_local_expectations_product_states():
    all_up = product_mps([0] * 6)
    assert np.allclose(local_expectations(all_up, "z"), np.ones(6), atol=1e-12)
    assert np.allclose(local_expectations(all_up, "x"), np.zeros(6), atol=1e-12)
    with pytest.raises(InvalidParameterError):
        local_expectations(all_up, "q")


def test_local_expectations_match_dense():
    psi = random_mps(derive_stream(26, 0), 8, 2, 4)
    dense = to_dense(psi)
    values = local_expectations(psi, "z")
    for i in range(8):
        op = kron_chain(8, {i: SZ})
        expected = np.vdot(dense, op @ dense).real
        assert abs(values[i] - expected) <= 1e-10


def test_zz_correlation_product_states():
    all_up = product_mps([0] * 8)
    neel = product_mps([0, 1] * 4)
    for j in range(1, 8):
        assert zz_correlation(all_up, j) == pytest.approx(1.0, abs=1e-12)
    assert zz_correlation(neel, 1) == pytest.approx(-1.0, abs=1e-12)
    assert zz_correlation(neel, 2) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        zz_correlation(all_up, 8)


def test_zz_correlation_matches_dense():
    psi = random_mps(derive_stream(26, 1), 8, 2, 4)
    dense = to_dense(psi)
    for j in (1, 3, 5):
        expected = 0.0
        for i in range(8 - j):
            op = kron_chain(8, {i: SZ, i + j: SZ})
            expected += np.vdot(dense, op @ dense).real
        expected /= 8 - j
        assert abs(zz_correlation(psi, j) - expected) <= 1e-10

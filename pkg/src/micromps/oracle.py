"""Dense exact reference for small chains.

Everything here works on explicit vectors and matrices, independent of the
tensor-network code paths, so it can serve as the ground truth when
validating the sampler: spectra, eigenbasis populations, exact filtered
ensemble averages, canonical averages, and a dense replay of the power
method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateWindowError, InvalidParameterError, TooLargeError
from .mpo import PAULI, SpinModel

DIAG_CAP = 1 << 14

_SPARSE_PAULI = {k: sp.csr_matrix(v) for k, v in PAULI.items()}


def _two_site_term(n: int, i: int, a: str, b: str) -> sp.csr_matrix:
    left = sp.identity(2**i, format="csr", dtype=complex)
    mid = sp.kron(_SPARSE_PAULI[a], _SPARSE_PAULI[b], format="csr")
    right = sp.identity(2 ** (n - i - 2), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, mid), right, format="csr")


def site_operator(n: int, i: int, pauli: str) -> sp.csr_matrix:
    """Sparse ``sigma^a`` acting on site ``i`` of an ``n``-site chain."""
    left = sp.identity(2**i, format="csr", dtype=complex)
    right = sp.identity(2 ** (n - i - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, _SPARSE_PAULI[pauli]), right, format="csr")


def sparse_hamiltonian(model: SpinModel) -> sp.csr_matrix:
    """Assemble H for the model conventions used throughout the package."""
    n = model.n_sites
    ham = sp.csr_matrix((2**n, 2**n), dtype=complex)
    if model.kind == "heisenberg":
        for i in range(n - 1):
            for p in ("x", "y", "z"):
                ham = ham - (model.J / 4.0) * _two_site_term(n, i, p, p)
        for i in range(n):
            ham = ham - model.h * site_operator(n, i, "z")
    else:
        for i in range(n - 1):
            ham = ham - model.J * _two_site_term(n, i, "z", "z")
        for i in range(n):
            ham = ham - model.g * site_operator(n, i, "x")
    return ham.real.astype(float).tocsr()


def dense_hamiltonian(model: SpinModel, cap: int = DIAG_CAP) -> np.ndarray:
    dim = 2**model.n_sites
    if dim > cap:
        raise TooLargeError(f"dense Hamiltonian of dimension {dim} exceeds cap {cap}")
    return sparse_hamiltonian(model).toarray()


def magnetization_operator(n: int) -> np.ndarray:
    """Dense per-site average magnetization ``N^-1 sum_i sigma^z_i``."""
    out = sp.csr_matrix((2**n, 2**n), dtype=complex)
    for i in range(n):
        out = out + site_operator(n, i, "z")
    return (out / n).toarray().real


def average_zz_operator(n: int, separation: int) -> np.ndarray:
    """Dense ``(N-j)^-1 sum_i sigma^z_i sigma^z_{i+j}`` over valid pairs."""
    if not 1 <= separation <= n - 1:
        raise InvalidParameterError(f"separation must be in [1, {n - 1}]")
    out = sp.csr_matrix((2**n, 2**n), dtype=complex)
    for i in range(n - separation):
        out = out + site_operator(n, i, "z") @ site_operator(n, i + separation, "z")
    return (out / (n - separation)).toarray().real


def _popcounts(dim: int) -> np.ndarray:
    v = np.arange(dim, dtype=np.int64)
    count = np.zeros(dim, dtype=np.int64)
    while np.any(v):
        count += v & 1
        v >>= 1
    return count


def _site_z_values(n: int, i: int) -> np.ndarray:
    """Diagonal of ``sigma^z_i`` in the computational basis (site 0 leading)."""
    b = np.arange(2**n, dtype=np.int64)
    return 1.0 - 2.0 * ((b >> (n - 1 - i)) & 1)


def magnetization_diagonal(n: int) -> np.ndarray:
    """Diagonal of the average magnetization; the operator is diagonal, so
    passing this to the averaging routines avoids a dense matrix product."""
    return (n - 2.0 * _popcounts(2**n)) / n


def zz_diagonal(n: int, separation: int) -> np.ndarray:
    """Diagonal of the valid-pairs-averaged ``sigma^z sigma^z`` correlator."""
    if not 1 <= separation <= n - 1:
        raise InvalidParameterError(f"separation must be in [1, {n - 1}]")
    acc = np.zeros(2**n)
    for i in range(n - separation):
        acc += _site_z_values(n, i) * _site_z_values(n, i + separation)
    return acc / (n - separation)


@dataclass
class DenseSpectrum:
    """Full eigendecomposition of a spin-chain Hamiltonian."""

    model: SpinModel
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns


def diagonalize(model: SpinModel, cap: int = DIAG_CAP) -> DenseSpectrum:
    """Full eigendecomposition, exploiting magnetization conservation.

    The Heisenberg Hamiltonian (with any longitudinal field) commutes with
    the total sigma^z, so each fixed-popcount sector is diagonalized
    separately; the largest block of an N-site chain has dimension
    ``C(N, N/2)`` instead of ``2^N``, which makes N = 12..14 practical.
    """
    dim = 2**model.n_sites
    if dim > cap:
        raise TooLargeError(f"diagonalization of dimension {dim} exceeds cap {cap}")
    ham = sparse_hamiltonian(model)
    if model.kind != "heisenberg":
        eigenvalues, eigenvectors = np.linalg.eigh(ham.toarray())
        return DenseSpectrum(model, eigenvalues, eigenvectors)
    ups = np.array([bin(i).count("1") for i in range(dim)])
    eigenvalues = np.empty(dim)
    eigenvectors = np.zeros((dim, dim))
    col = 0
    for sector in range(model.n_sites + 1):
        idx = np.flatnonzero(ups == sector)
        block = ham[np.ix_(idx, idx)].toarray()
        w, v = np.linalg.eigh(block)
        eigenvalues[col : col + idx.size] = w
        eigenvectors[np.ix_(idx, np.arange(col, col + idx.size))] = v
        col += idx.size
    order = np.argsort(eigenvalues, kind="stable")
    return DenseSpectrum(model, eigenvalues[order], eigenvectors[:, order])


def populations(state: np.ndarray, spectrum: DenseSpectrum) -> np.ndarray:
    """Squared overlaps with each energy eigenstate."""
    if state.shape[0] != spectrum.eigenvectors.shape[0]:
        raise InvalidParameterError("state dimension does not match the spectrum")
    amps = spectrum.eigenvectors.conj().T @ state
    return np.abs(amps) ** 2


def filter_log_weights(spectrum: DenseSpectrum, energy: float, sigma: float, k: int) -> np.ndarray:
    """``log w_i`` for the exact k-step filter weights ``[1-((E_i-E)/sigma)^2]^(2k)``.

    Working in log space keeps large iteration counts representable; the
    even power makes every weight nonnegative regardless of sign.
    """
    x = (spectrum.eigenvalues - energy) / sigma
    base = np.abs(1.0 - x * x)
    with np.errstate(divide="ignore"):
        return 2.0 * k * np.log(base)


def filtered_average(
    spectrum: DenseSpectrum,
    energy: float,
    sigma: float,
    k: int,
    observable: np.ndarray,
) -> float:
    """Ensemble average under the exact polynomial filter weights.

    Computes ``Tr(O W) / Tr(W)`` with ``W = sum_i w_i |E_i><E_i|`` and
    ``w_i = [1 - ((E_i - E)/sigma)^2]^(2k)`` (no Gaussian approximation).
    ``k = 0`` reproduces the maximally mixed average.
    """
    logw = filter_log_weights(spectrum, energy, sigma, k)
    top = float(np.max(logw))
    if not np.isfinite(top) or top < np.log(1e-300):
        raise DegenerateWindowError(
            f"all filter weights underflow at E={energy}, sigma={sigma}, k={k}"
        )
    w = np.exp(logw - top)
    diag_obs = _eigenbasis_diagonal(spectrum.eigenvectors, observable)
    return float(np.sum(w * diag_obs) / np.sum(w))


def filtered_energy_variance(spectrum: DenseSpectrum, energy: float, sigma: float, k: int) -> float:
    """Energy variance of the exact-weight filtered ensemble."""
    logw = filter_log_weights(spectrum, energy, sigma, k)
    top = float(np.max(logw))
    if not np.isfinite(top) or top < np.log(1e-300):
        raise DegenerateWindowError("all filter weights underflow")
    w = np.exp(logw - top)
    e = spectrum.eigenvalues
    mean = float(np.sum(w * e) / np.sum(w))
    return float(np.sum(w * (e - mean) ** 2) / np.sum(w))


def canonical_average(spectrum: DenseSpectrum, temperature: float, observable: np.ndarray) -> float:
    """``Tr(O exp(-H/T)) / Tr(exp(-H/T))`` with a max-shift for stability."""
    if temperature <= 0.0:
        raise InvalidParameterError("temperature must be positive")
    w = np.exp(-(spectrum.eigenvalues - spectrum.eigenvalues[0]) / temperature)
    diag_obs = _eigenbasis_diagonal(spectrum.eigenvectors, observable)
    return float(np.sum(w * diag_obs) / np.sum(w))


def _eigenbasis_diagonal(eigenvectors: np.ndarray, observable: np.ndarray) -> np.ndarray:
    """``<E_i|O|E_i>`` for each eigenvector.

    A 1-D ``observable`` is interpreted as the diagonal of an operator that
    is diagonal in the computational basis (magnetization, z-z correlators),
    which needs only ``D^2`` work instead of a ``D^3`` matrix product.
    """
    observable = np.asarray(observable)
    if observable.ndim == 1:
        return (np.abs(eigenvectors) ** 2 * observable[:, None]).sum(axis=0).real
    return np.real(np.sum(eigenvectors.conj() * (observable @ eigenvectors), axis=0))


def dense_power_replay(
    initial: np.ndarray,
    model: SpinModel,
    energy: float,
    sigma: float,
    k_max: int,
    cap: int = DIAG_CAP,
) -> np.ndarray:
    """Exact normalized power iteration with G = I - ((H - E)/sigma)^2.

    Returns the energy expectation after each step, index 0 holding the
    initial state's energy (length ``k_max + 1``).
    """
    dim = initial.shape[0]
    if dim > cap:
        raise TooLargeError(f"dense replay of dimension {dim} exceeds cap {cap}")
    ham = sparse_hamiltonian(model)
    v = initial / np.linalg.norm(initial)
    energies = np.empty(k_max + 1)
    hv = ham @ v
    energies[0] = np.vdot(v, hv).real
    for k in range(1, k_max + 1):
        t = hv - energy * v
        t = (ham @ t) - energy * t
        v = v - t / sigma**2
        v = v / np.linalg.norm(v)
        hv = ham @ v
        energies[k] = np.vdot(v, hv).real
    return energies

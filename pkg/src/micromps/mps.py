"""Open-boundary matrix product states.

Site tensors have shape ``(left_bond, phys, right_bond)`` with the first and
last bonds fixed to 1.  The represented vector is

    exp(log_norm) * contraction(tensors)

``log_norm`` keeps the scale of repeatedly renormalized states in log space:
the energy filter shrinks norms geometrically, so after hundreds of
iterations the raw scale would underflow while the tensors themselves stay
well conditioned.
"""

from __future__ import annotations

import struct

import numpy as np

from . import _fit
from .errors import (
    IncompatibleStatesError,
    InvalidParameterError,
    NumericalFailureError,
    TooLargeError,
)
from .rng import RngStream, haar_unit_vector, haar_unitary

DENSE_CAP = 1 << 20

_TAG_CODES = {"none": 0, "left": 1, "right": 2}
_TAG_NAMES = {v: k for k, v in _TAG_CODES.items()}
_MAGIC = b"MMPS0001"


class Mps:
    """Open-boundary MPS with log-scale norm bookkeeping.

    Attributes:
        tensors: per-site complex arrays of shape ``(left, phys, right)``.
        log_norm: log of the scalar prefactor of the represented vector.
        canonical_tag: ``"left"``, ``"right"`` or ``"none"``; when set, every
            bulk site is an isometry of the corresponding kind (boundary
            sites may carry the norm, as usual for open chains).
    """

    def __init__(self, tensors, log_norm: float = 0.0, canonical_tag: str = "none"):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.log_norm = float(log_norm)
        if canonical_tag not in _TAG_CODES:
            raise InvalidParameterError(f"unknown canonical tag {canonical_tag!r}")
        self.canonical_tag = canonical_tag
        self._validate()

    def _validate(self):
        if not self.tensors:
            raise InvalidParameterError("an MPS needs at least one site")
        d = self.tensors[0].shape[1]
        left = 1
        for i, t in enumerate(self.tensors):
            if t.ndim != 3:
                raise InvalidParameterError(f"site {i} tensor must have 3 legs, got {t.ndim}")
            if t.shape[1] != d:
                raise InvalidParameterError(f"site {i} has physical dimension {t.shape[1]} != {d}")
            if t.shape[0] != left:
                raise InvalidParameterError(
                    f"site {i} left bond {t.shape[0]} does not match previous right bond {left}"
                )
            left = t.shape[2]
        if left != 1:
            raise InvalidParameterError(f"last right bond must be 1, got {left}")

    @property
    def site_count(self) -> int:
        return len(self.tensors)

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [t.shape[2] for t in self.tensors]

    def copy(self) -> "Mps":
        return Mps([t.copy() for t in self.tensors], self.log_norm, self.canonical_tag)

    def tensor_norm(self) -> float:
        """Norm of the bare tensor network, excluding the exp(log_norm) scale."""
        return _fit.tensor_list_norm(self.tensors)

    def normalized(self) -> "Mps":
        """Move the tensor-network norm into ``log_norm`` (same represented vector)."""
        tensors, scale = _fit.left_canonicalize_qr(self.tensors)
        if scale == 0.0:
            raise NumericalFailureError("cannot normalize a zero state")
        return Mps(tensors, self.log_norm + np.log(scale), "left")

    def __repr__(self) -> str:
        return (
            f"Mps(sites={self.site_count}, d={self.local_dim}, "
            f"max_bond={max(self.bond_dims)}, log_norm={self.log_norm:.6g}, "
            f"canonical={self.canonical_tag!r})"
        )


def product_mps(levels, local_dim: int = 2) -> Mps:
    """Product state |levels[0] levels[1] ...> as a bond-1 MPS."""
    tensors = []
    for lv in levels:
        t = np.zeros((1, local_dim, 1), dtype=complex)
        t[0, lv, 0] = 1.0
        tensors.append(t)
    return Mps(tensors, 0.0, "left")


def random_mps(stream: RngStream, n_sites: int, local_dim: int, bond_dim: int) -> Mps:
    """Draw one state from the random-MPS ensemble.

    Bulk site tensors are the ``local_dim`` vertically stacked
    ``bond_dim x bond_dim`` blocks of the first ``bond_dim`` columns of an
    independent Haar unitary of dimension ``local_dim * bond_dim``, which
    makes every bulk site exactly left-isometric.  The boundary sites are
    Haar unit vectors of the same dimension split into ``local_dim``
    segments.  The returned state is normalized to unit norm, with the
    normalization recorded in ``log_norm`` (the tensors are the raw blocks).
    """
    if n_sites < 2:
        raise InvalidParameterError("need at least 2 sites")
    if local_dim < 2:
        raise InvalidParameterError("local dimension must be >= 2")
    if bond_dim < 1:
        raise InvalidParameterError("bond dimension must be >= 1")
    d, chi = local_dim, bond_dim
    first = haar_unit_vector(stream, d * chi).reshape(d, chi)
    tensors = [first.reshape(1, d, chi)]
    for _ in range(n_sites - 2):
        u = haar_unitary(stream, d * chi)
        tensors.append(u[:, :chi].reshape(d, chi, chi).transpose(1, 0, 2))
    last = haar_unit_vector(stream, d * chi).reshape(d, chi)
    tensors.append(last.T.reshape(chi, d, 1))
    norm = _fit.tensor_list_norm(tensors)
    return Mps(tensors, -np.log(norm), "left")


def inner_product(bra: Mps, ket: Mps) -> complex:
    """``<bra|ket>`` including both states' ``log_norm`` scales."""
    if bra.site_count != ket.site_count or bra.local_dim != ket.local_dim:
        raise IncompatibleStatesError(
            f"states of {bra.site_count} and {ket.site_count} sites "
            f"(d={bra.local_dim}, {ket.local_dim}) cannot be contracted"
        )
    value = _fit.overlap_with_target(bra.tensors, None, ket.tensors)
    return value * np.exp(bra.log_norm + ket.log_norm)


def to_dense(state: Mps, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense coefficient vector, site 0 as the most significant digit."""
    dim = state.local_dim**state.site_count
    if dim > cap:
        raise TooLargeError(f"dense vector of dimension {dim} exceeds cap {cap}")
    vec = np.ones((1, 1), dtype=complex)
    for t in state.tensors:
        vec = np.tensordot(vec, t, axes=(1, 0)).reshape(-1, t.shape[2])
    return vec[:, 0] * np.exp(state.log_norm)


def canonicalize(state: Mps, direction: str) -> Mps:
    """Gauge the state into left- or right-canonical form.

    The represented vector is unchanged; after the sweep the tensor network
    has unit norm with the scale moved into ``log_norm``.
    """
    if direction not in ("left", "right"):
        raise InvalidParameterError(f"direction must be 'left' or 'right', got {direction!r}")
    if direction == "left":
        tensors, scale = _fit.left_canonicalize_qr(state.tensors)
    else:
        flipped = [t.transpose(2, 1, 0) for t in reversed(state.tensors)]
        tensors, scale = _fit.left_canonicalize_qr(flipped)
        tensors = [t.transpose(2, 1, 0) for t in reversed(tensors)]
    if scale == 0.0:
        raise NumericalFailureError("cannot canonicalize a zero state")
    return Mps(tensors, state.log_norm + np.log(scale), direction)


def compress(state: Mps, chi_target: int, tol: float = 1e-9, max_sweeps: int = 8) -> tuple[Mps, float]:
    """Compress to bond dimension ``chi_target``.

    Initialized by a sequential singular-value truncation sweep, then refined
    by single-site variational sweeps until the overlap with the input
    changes by less than ``tol`` relatively (at most ``max_sweeps`` sweeps).
    Returns ``(compressed, truncation_error)`` with the error defined as
    ``1 - |<out|in>|^2 / ||in||^2`` for the unit-norm output.
    """
    if chi_target < 1:
        raise InvalidParameterError("chi_target must be >= 1")
    for t in state.tensors:
        if not np.all(np.isfinite(t)):
            raise NumericalFailureError("state contains non-finite entries")
    target, scale = _fit.left_canonicalize_qr(state.tensors)
    if scale == 0.0:
        raise NumericalFailureError("cannot compress a zero state")
    if max(t.shape[2] for t in target) <= chi_target:
        # already within budget: the canonical form is exact
        return Mps(target, state.log_norm + np.log(scale), "left"), 0.0
    guess, _ = _fit.truncate_right_sweep(target, chi_target)
    out, overlap = _fit.fit_tensors(guess, None, target, tol, max_sweeps)
    if not np.isfinite(overlap):
        raise NumericalFailureError("variational compression diverged")
    # target has unit norm, out has unit norm: overlap in (0, 1]
    err = max(0.0, 1.0 - overlap * overlap)
    log_norm = state.log_norm + np.log(scale) + np.log(max(overlap, 1e-300))
    return Mps(out, log_norm, "left"), err


def save_mps(state: Mps, path) -> None:
    """Write a state to a binary checkpoint.

    Layout, all little-endian: magic ``MMPS0001``; uint64 site count and
    local dimension; uint64 bond dims (``n_sites + 1`` values); float64
    ``log_norm``; uint8 canonical tag (0 none / 1 left / 2 right); then one
    row-major complex128 tensor per site (float64 re/im pairs).
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", state.site_count, state.local_dim))
        fh.write(struct.pack(f"<{state.site_count + 1}Q", *state.bond_dims))
        fh.write(struct.pack("<d", state.log_norm))
        fh.write(struct.pack("<B", _TAG_CODES[state.canonical_tag]))
        for t in state.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_mps(path) -> Mps:
    """Read a state written by :func:`save_mps`."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise InvalidParameterError(f"{path} is not an MPS checkpoint")
        n, d = struct.unpack("<QQ", fh.read(16))
        bonds = struct.unpack(f"<{n + 1}Q", fh.read(8 * (n + 1)))
        (log_norm,) = struct.unpack("<d", fh.read(8))
        (tag,) = struct.unpack("<B", fh.read(1))
        tensors = []
        for i in range(n):
            count = bonds[i] * d * bonds[i + 1]
            raw = np.frombuffer(fh.read(16 * count), dtype="<c16")
            tensors.append(raw.reshape(bonds[i], d, bonds[i + 1]).astype(complex))
    return Mps(tensors, log_norm, _TAG_NAMES[int(tag)])


def canonical_residuals(state: Mps, direction: str) -> list[float]:
    """Max-entry deviation of each bulk site from the canonical condition."""
    res = []
    for t in state.tensors[1:-1]:
        dl, d, dr = t.shape
        if direction == "left":
            m = t.reshape(dl * d, dr)
            dev = m.conj().T @ m - np.eye(dr)
        else:
            m = t.reshape(dl, d * dr)
            dev = m @ m.conj().T - np.eye(dl)
        res.append(float(np.max(np.abs(dev))))
    return res

"""Deterministic, splittable random streams and Haar-distributed sampling.

Every stochastic object in the package is drawn from an :class:`RngStream`,
which wraps a counter-based Philox generator keyed by a strong 64-bit mix of
``(master_seed, stream_id)``.  Streams derived from the same master seed are
statistically independent, can be created in any order, and reproduce the
same sequence after a process restart, which is what makes sample-level
parallelism safe.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_subseed(master_seed: int, tag: int) -> int:
    """Derive an independent 64-bit seed for a namespaced sub-run.

    Used by parameter sweeps so that every grid point reuses the same master
    seed without colliding with any other point's sample streams.
    """
    return mix64((mix64(master_seed) ^ _GOLDEN) + 2 * tag + 1)


class RngStream:
    """Self-contained random stream identified by ``(master_seed, stream_id)``.

    The Philox key is derived from both fields, so equal pairs give
    byte-identical sequences on every platform and distinct pairs give
    independent streams.  A stream holds mutable generator state: do not
    share one instance between threads; derive one stream per task instead.
    """

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([mix64(self.master_seed), self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def complex_normal(self, shape) -> np.ndarray:
        """Ginibre entries: independent re/im standard normals scaled by 1/sqrt(2)."""
        g = self.generator
        return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / np.sqrt(2.0)


def derive_stream(master_seed: int, sample_index: int) -> RngStream:
    """Derive the stream for one sample.

    Pure function of its arguments.  For a fixed master seed the map
    ``sample_index -> stream_id`` is a bijection on 64-bit integers, so all
    indices below 2**32 (and far beyond) get distinct streams.
    """
    if sample_index < 0:
        raise InvalidParameterError("sample_index must be nonnegative")
    stream_id = mix64((mix64(master_seed) + _GOLDEN + sample_index) & _MASK64)
    return RngStream(master_seed, stream_id)


def haar_unitary(stream: RngStream, dim: int) -> np.ndarray:
    """Draw a Haar-distributed ``dim x dim`` complex unitary matrix.

    QR of a Ginibre matrix with the R-diagonal phases divided out; without
    the phase fix the distribution would depend on the QR convention and
    would not be Haar.
    """
    if dim < 1:
        raise InvalidParameterError(f"unitary dimension must be >= 1, got {dim}")
    z = stream.complex_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return q


def haar_unit_vector(stream: RngStream, dim: int) -> np.ndarray:
    """Draw a Haar-distributed complex unit vector of length ``dim``."""
    if dim < 1:
        raise InvalidParameterError(f"vector dimension must be >= 1, got {dim}")
    z = stream.complex_normal(dim)
    return z / np.linalg.norm(z)

"""Shared sweep machinery for truncating and variationally fitting MPS.

The routines here operate on bare lists of site tensors with shape
``(left_bond, phys, right_bond)``; the public wrappers live in
:mod:`micromps.mps` (state compression) and :mod:`micromps.mpo`
(operator application).

Two implementation notes, both driven by profiling on small bond
dimensions where Python call overhead rivals the BLAS time:

* truncated factorizations come from an eigendecomposition of the Gram
  matrix of the side that must be orthonormal (several times faster than
  ``gesdd`` on the wide mid-chain matrices, and exact via QR when nothing
  is discarded);
* the sandwich contractions used by the variational fit are written as
  explicit reshape/GEMM chains instead of ``tensordot``.
"""

from __future__ import annotations

import numpy as np

_TRIVIAL2 = np.ones((1, 1), dtype=complex)
_TRIVIAL3 = np.ones((1, 1, 1), dtype=complex)


def truncated_factor(m: np.ndarray, keep: int, side: str) -> tuple[np.ndarray, np.ndarray, float]:
    """Factor ``m ~= left @ right`` keeping at most ``keep`` singular directions.

    ``side`` names the factor with orthonormal columns (``"left"``) or rows
    (``"right"``); the other factor carries the singular weights.  Returns
    ``(left, right, kept_fraction)`` where ``kept_fraction`` is the kept share
    of the squared Frobenius norm (1.0 when nothing is discarded).  Ties are
    broken by eigendecomposition order, which is deterministic for a fixed
    BLAS, so repeated runs truncate identically.
    """
    rows, cols = m.shape
    rank_cap = min(rows, cols)
    keep = min(keep, rank_cap)
    if keep >= rank_cap:
        # lossless: plain QR/LQ
        if side == "left":
            q, r = np.linalg.qr(m)
            return q, r, 1.0
        q, r = np.linalg.qr(m.conj().T)
        return r.conj().T, q.conj().T, 1.0
    if side == "left":
        gram = m @ m.conj().T
        w, u = np.linalg.eigh(gram)
        u_k = u[:, : -keep - 1 : -1]  # top-keep eigenvectors, descending
        total = max(np.trace(gram).real, 0.0)
        kept = max(float(np.sum(w[-keep:])), 0.0)
        frac = 1.0 if total == 0.0 else min(kept / total, 1.0)
        return u_k, u_k.conj().T @ m, frac
    gram = m.conj().T @ m
    w, v = np.linalg.eigh(gram)
    v_k = v[:, : -keep - 1 : -1]
    total = max(np.trace(gram).real, 0.0)
    kept = max(float(np.sum(w[-keep:])), 0.0)
    frac = 1.0 if total == 0.0 else min(kept / total, 1.0)
    return m @ v_k, v_k.conj().T, frac


def tensor_list_norm(tensors: list[np.ndarray]) -> float:
    """Euclidean norm of the state represented by a bare tensor list."""
    env = _TRIVIAL2
    for t in tensors:
        tmp = np.tensordot(env, t, axes=(1, 0))  # (x, s, b)
        env = np.tensordot(t.conj(), tmp, axes=([0, 1], [0, 1]))  # (y, b)
    return float(np.sqrt(max(env[0, 0].real, 0.0)))


class SandwichTarget:
    """Fit target ``W|a>`` (or ``|a>`` when ``w_tensors`` is None).

    Precomputes the per-site permutations of the operator tensors that the
    hot kernels consume, so each environment update is a short chain of
    GEMMs on contiguous arrays.
    """

    def __init__(self, w_tensors, a_tensors):
        self.a = a_tensors
        self.w = w_tensors
        self.n = len(a_tensors)
        if w_tensors is None:
            self.w_lr = None
            self.w_rl = None
        else:
            # (w, s, t, v) -> (w t, s v) for left-moving contractions
            self.w_lr = [
                np.ascontiguousarray(t.transpose(0, 2, 1, 3)).reshape(
                    t.shape[0] * t.shape[2], t.shape[1] * t.shape[3]
                )
                for t in w_tensors
            ]
            # (w, s, t, v) -> (t v, w s) for right-moving contractions
            self.w_rl = [
                np.ascontiguousarray(t.transpose(2, 3, 0, 1)).reshape(
                    t.shape[2] * t.shape[3], t.shape[0] * t.shape[1]
                )
                for t in w_tensors
            ]
        self.wdims = [1] * (self.n + 1) if w_tensors is None else [t.shape[0] for t in w_tensors] + [1]

    def trivial_env(self):
        return _TRIVIAL2 if self.w is None else _TRIVIAL3

    def half_left(self, lenv, i):
        """``lenv * W_i * A_i`` with layout ``(x, s, v, b)`` (plain: ``(x, s, b)``)."""
        a = self.a[i]
        al, d, ar = a.shape
        if self.w is None:
            x = lenv.shape[0]
            return (lenv @ a.reshape(al, d * ar)).reshape(x, d, ar)
        w = self.wdims[i]
        v = self.wdims[i + 1]
        x = lenv.shape[0]
        m1 = lenv.reshape(x * w, al) @ a.reshape(al, d * ar)  # (x w, t b)
        m1 = np.ascontiguousarray(m1.reshape(x, w, d, ar).transpose(0, 3, 1, 2))
        m2 = m1.reshape(x * ar, w * d) @ self.w_lr[i]  # (x b, s v)
        return np.ascontiguousarray(m2.reshape(x, ar, d, v).transpose(0, 2, 3, 1))  # (x, s, v, b)

    def half_right(self, renv, i):
        """``W_i * A_i * renv`` with layout ``(w, a, s, y)`` (plain: ``(a, s, y)``)."""
        a = self.a[i]
        al, d, ar = a.shape
        if self.w is None:
            y = renv.shape[0]
            return (a.reshape(al * d, ar) @ renv.T).reshape(al, d, y)
        w = self.wdims[i]
        v = self.wdims[i + 1]
        y = renv.shape[0]
        m1 = a.reshape(al * d, ar) @ renv.reshape(y * v, ar).T  # (a t, y v)
        m1 = np.ascontiguousarray(m1.reshape(al, d, y, v).transpose(0, 2, 1, 3))
        m2 = m1.reshape(al * y, d * v) @ self.w_rl[i]  # (a y, w s)
        return np.ascontiguousarray(m2.reshape(al, y, w, d).transpose(2, 0, 3, 1))  # (w, a, s, y)

    def center_from_left(self, half, renv):
        if self.w is None:
            x, d, ar = half.shape
            return (half.reshape(x * d, ar) @ renv.T).reshape(x, d, -1)
        x, d, v, ar = half.shape
        renv_m = np.ascontiguousarray(renv.transpose(1, 2, 0)).reshape(v * ar, -1)
        return (half.reshape(x * d, v * ar) @ renv_m).reshape(x, d, -1)

    def center_from_right(self, lenv, half):
        if self.w is None:
            al, d, y = half.shape
            return (lenv @ half.reshape(al, d * y)).reshape(-1, d, y)
        w, al, d, y = half.shape
        x = lenv.shape[0]
        return (lenv.reshape(x, w * al) @ half.reshape(w * al, d * y)).reshape(x, d, y)

    def envleft_from_half(self, half, out_t):
        x, s, y = out_t.shape
        if self.w is None:
            return out_t.conj().reshape(x * s, y).T @ half.reshape(x * s, -1)  # (y, b)
        v, ar = half.shape[2], half.shape[3]
        m = out_t.conj().reshape(x * s, y).T @ half.reshape(x * s, v * ar)
        return m.reshape(y, v, ar)

    def envright_from_half(self, half, out_t):
        x, s, y = out_t.shape
        out_c = out_t.conj().reshape(x, s * y)
        if self.w is None:
            al = half.shape[0]
            return out_c @ half.reshape(al, s * y).T  # (x, a)
        w, al = half.shape[0], half.shape[1]
        m = out_c @ half.reshape(w * al, s * y).T  # (x, w a)
        return m.reshape(x, w, al)

    def env_left(self, env, out_t, i):
        return self.envleft_from_half(self.half_left(env, i), out_t)

    def zip_site(self, carry, i):
        """Contract ``carry (k, w, a)`` with site ``i``; returns ``(k d, v b)``."""
        a = self.a[i]
        al, d, ar = a.shape
        k = carry.shape[0]
        if self.w is None:
            m1 = carry.reshape(k, al) @ a.reshape(al, d * ar)
            return m1.reshape(k * d, ar), 1, ar
        w = self.wdims[i]
        v = self.wdims[i + 1]
        m1 = carry.reshape(k * w, al) @ a.reshape(al, d * ar)  # (k w, t b)
        m1 = np.ascontiguousarray(m1.reshape(k, w, d, ar).transpose(0, 3, 1, 2))
        m2 = m1.reshape(k * ar, w * d) @ self.w_lr[i]  # (k b, s v)
        m2 = np.ascontiguousarray(m2.reshape(k, ar, d, v).transpose(0, 2, 3, 1))
        return m2.reshape(k * d, v * ar), v, ar


def overlap_with_target(out_tensors, w_tensors, a_tensors) -> complex:
    """``<out|target>`` where the target is ``a`` or ``w`` applied to ``a``."""
    target = SandwichTarget(w_tensors, a_tensors)
    env = target.trivial_env()
    for i, t in enumerate(out_tensors):
        env = target.env_left(env, t, i)
    return complex(env.reshape(-1)[0])


def env_left_step(env, bra_t, w_t, ket_t):
    """One transfer step of ``<bra| (W) |ket>`` from the left (plain tensordot).

    Used by the observable contractions, which are not hot paths; ``env`` is
    ``(x, a)`` without an operator and ``(x, w, a)`` with one.
    """
    if w_t is None:
        tmp = np.tensordot(env, ket_t, axes=(1, 0))  # (x, s, b)
        return np.tensordot(bra_t.conj(), tmp, axes=([0, 1], [0, 1]))  # (y, b)
    tmp = np.tensordot(env, ket_t, axes=(2, 0))  # (x, w, t, b)
    tmp = np.tensordot(tmp, w_t, axes=([1, 2], [0, 2]))  # (x, b, s, v)
    out = np.tensordot(bra_t.conj(), tmp, axes=([0, 1], [0, 2]))  # (y, b, v)
    return out.transpose(0, 2, 1)  # (y, v, b)


def fit_tensors(out_tensors, w_tensors, a_tensors, tol: float, max_sweeps: int):
    """Variational single-site fit of ``out`` to the (possibly MPO-applied) target.

    ``out_tensors`` must be a right-canonical initial guess; bond dimensions
    stay fixed.  Each full sweep solves every site right-to-left and then
    left-to-right; the fit stops when the overlap readings of the two half
    sweeps agree to ``tol`` relatively, or after ``max_sweeps`` sweeps.
    Returns ``(tensors, overlap)`` with the result left-canonical except for
    the last site, which is normalized to unit norm; ``overlap`` is the real
    positive ``<out|target>``.
    """
    n = len(a_tensors)
    target = SandwichTarget(w_tensors, a_tensors)
    out = list(out_tensors)

    if n == 1:
        b = target.center_from_left(target.half_left(target.trivial_env(), 0), target.trivial_env())
        ov = float(np.linalg.norm(b))
        return [b / ov], ov

    lenvs = [target.trivial_env()] * (n + 1)
    for i in range(n - 1):
        lenvs[i + 1] = target.env_left(lenvs[i], out[i], i)
    renvs = [None] * (n + 1)
    renvs[n] = target.trivial_env()

    overlap = None
    for _ in range(max_sweeps):
        # right-to-left: solve each site, leave it right-isometric
        for i in range(n - 1, 0, -1):
            half = target.half_right(renvs[i + 1], i)
            b = target.center_from_right(lenvs[i], half)
            dl, d, dr = b.shape
            q, _ = np.linalg.qr(b.reshape(dl, d * dr).conj().T)
            out[i] = q.conj().T.reshape(-1, d, dr)
            renvs[i] = target.envright_from_half(half, out[i])
        half = target.half_left(lenvs[0], 0)
        b = target.center_from_left(half, renvs[1])
        mid_overlap = float(np.linalg.norm(b))
        # left-to-right: solve each site, leave it left-isometric
        for i in range(n - 1):
            if i > 0:
                half = target.half_left(lenvs[i], i)
                b = target.center_from_left(half, renvs[i + 1])
            dl, d, dr = b.shape
            q, _ = np.linalg.qr(b.reshape(dl * d, dr))
            out[i] = q.reshape(dl, d, -1)
            lenvs[i + 1] = target.envleft_from_half(half, out[i])
        half = target.half_left(lenvs[n - 1], n - 1)
        b = target.center_from_left(half, renvs[n])
        overlap = float(np.linalg.norm(b))
        out[n - 1] = b / overlap if overlap > 0.0 else b
        if abs(overlap - mid_overlap) <= tol * max(abs(overlap), 1e-300):
            break
    return out, overlap


def truncate_right_sweep(tensors, chi_max: int):
    """Right-to-left truncation to ``chi_max``; returns right-canonical tensors.

    The input is consumed left-canonical (or at least left-normalized enough
    that the dominant weight sits at the right end); afterwards sites
    ``1..n-1`` are right-isometric and site 0 carries the remaining scale.
    The discarded squared-weight fractions are multiplied into the returned
    ``kept_fraction``.
    """
    n = len(tensors)
    out = list(tensors)
    kept_fraction = 1.0
    for i in range(n - 1, 0, -1):
        dl, d, dr = out[i].shape
        keep = min(chi_max, dl, d * dr)
        left, right, frac = truncated_factor(out[i].reshape(dl, d * dr), keep, side="right")
        kept_fraction *= frac
        out[i] = right.reshape(-1, d, dr)
        out[i - 1] = np.tensordot(out[i - 1], left, axes=(2, 0))
    return out, kept_fraction


def left_canonicalize_qr(tensors):
    """Exact left-to-right QR sweep.

    Returns ``(tensors, scale)`` where all sites but the last are
    left-isometric, the last site has unit norm, and ``scale`` is the norm
    that was factored out (the represented vector equals ``scale`` times the
    returned network).
    """
    n = len(tensors)
    out = [None] * n
    carry = _TRIVIAL2
    for i in range(n):
        t = np.tensordot(carry, tensors[i], axes=(1, 0))
        dl, d, dr = t.shape
        q, r = np.linalg.qr(t.reshape(dl * d, dr))
        out[i] = q.reshape(dl, d, -1)
        carry = r
    # carry is 1x1: |carry| is the norm, its phase belongs to the state
    scale = abs(carry[0, 0])
    if scale > 0.0:
        out[n - 1] = out[n - 1] * (carry[0, 0] / scale)
    return out, scale

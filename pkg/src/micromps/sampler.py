"""The power-method microcanonical sampler.

One sample: seed a random MPS from its own derived stream, then iterate

    |psi_{k+1}> = G |psi_k> / || G |psi_k> ||

with the energy filter G, compressing back to the bond budget after every
application and recording observables at checkpoints.  Samples are pure
functions of ``(config, sample_index)``, which is what makes ensemble runs
trivially parallel and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, MicrompsError, SampleFailedError
from .mpo import (
    FilterOperator,
    Mpo,
    SpinModel,
    apply_mpo,
    build_filter,
    expectation,
    hamiltonian_mpo,
    mpo_square,
    sigma_estimate,
)
from .mps import Mps, random_mps
from .rng import derive_stream

VARIANCE_FLOOR = -1e-8


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters of one sampling run."""

    model: SpinModel
    energy: float
    chi: int
    k_max: int
    sigma: float | str = "auto"
    sigma_mode: str = "bound"
    compress_tol: float = 1e-9
    record_every: int = 10
    master_seed: int = 0
    sample_count: int = 1
    energy_density: float | None = None  # set when the run was specified via u = E/N

    def __post_init__(self):
        if self.chi < 1:
            raise InvalidParameterError("chi must be >= 1")
        if self.k_max < 0:
            raise InvalidParameterError("k_max must be >= 0")
        if self.compress_tol <= 0.0:
            raise InvalidParameterError("compress_tol must be positive")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")
        if self.sample_count < 1:
            raise InvalidParameterError("sample_count must be >= 1")
        if not np.isfinite(self.energy):
            raise InvalidParameterError("target energy must be finite")
        bound = self.model.spectral_bound()
        if abs(self.energy) > bound:
            raise InvalidParameterError(
                f"target energy {self.energy} lies outside the spectral bound +-{bound:.6g}"
            )

    def resolved_sigma(self) -> float:
        if isinstance(self.sigma, str):
            return sigma_estimate(self.model, self.energy, self.sigma_mode)
        return float(self.sigma)

    def with_energy_density(self, u: float) -> "SamplerConfig":
        return replace(self, energy=u * self.model.n_sites, energy_density=u)


@dataclass(frozen=True)
class SamplerOperators:
    """The MPOs one run needs, built once and shared across samples."""

    h_mpo: Mpo
    h2_mpo: Mpo
    filter_op: FilterOperator


def build_operators(config: SamplerConfig) -> SamplerOperators:
    h_mpo = hamiltonian_mpo(config.model)
    h2_mpo = mpo_square(h_mpo)
    filter_op = build_filter(
        config.model,
        config.energy,
        sigma=config.sigma,
        sigma_mode=config.sigma_mode,
        h_mpo=h_mpo,
        h2_mpo=h2_mpo,
    )
    return SamplerOperators(h_mpo, h2_mpo, filter_op)


@dataclass
class IterationRecord:
    k: int
    energy: float
    energy_variance: float
    truncation_error: float
    log_norm_decrement: float


@dataclass
class IterationTrace:
    """Per-sample observable records at the recorded iteration counts."""

    sample_index: int
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def ks(self) -> list[int]:
        return [r.k for r in self.records]

    def append(self, record: IterationRecord):
        if self.records and record.k <= self.records[-1].k:
            raise InvalidParameterError("recorded iteration counts must increase")
        self.records.append(record)


def run_sample(
    config: SamplerConfig,
    sample_index: int,
    operators: SamplerOperators | None = None,
) -> tuple[Mps, IterationTrace]:
    """Run the power method for one sample; pure in ``(config, sample_index)``.

    Returns the final state (unit tensor norm, accumulated scale in
    ``log_norm``) and the trace of records at iteration 0, every
    ``record_every`` iterations, and ``k_max``.  Numerical failures raise
    :class:`SampleFailedError` so the ensemble can exclude and count them.
    """
    if operators is None:
        operators = build_operators(config)
    stream = derive_stream(config.master_seed, sample_index)
    trace = IterationTrace(sample_index)
    try:
        psi = random_mps(stream, config.model.n_sites, 2, config.chi).normalized()
        trace.append(_measure(config, operators, psi, 0, 0.0, 0.0, sample_index))
        for k in range(1, config.k_max + 1):
            log_before = psi.log_norm
            psi, trunc_err = apply_mpo(
                operators.filter_op.g_mpo, psi, config.chi, config.compress_tol
            )
            if k % config.record_every == 0 or k == config.k_max:
                decrement = log_before - psi.log_norm
                trace.append(
                    _measure(config, operators, psi, k, trunc_err, decrement, sample_index)
                )
    except SampleFailedError:
        raise
    except MicrompsError as exc:
        raise SampleFailedError(sample_index, str(exc)) from exc
    return psi, trace


def _measure(config, operators, psi, k, trunc_err, decrement, sample_index) -> IterationRecord:
    energy = expectation(operators.h_mpo, psi)
    variance = expectation(operators.h2_mpo, psi) - energy * energy
    if not (np.isfinite(energy) and np.isfinite(variance)):
        raise SampleFailedError(sample_index, f"non-finite observables at iteration {k}")
    if variance < VARIANCE_FLOOR:
        raise SampleFailedError(
            sample_index, f"energy variance {variance:.3e} below the numerical floor at k={k}"
        )
    return IterationRecord(k, float(energy), float(variance), float(trunc_err), float(decrement))


@dataclass
class DiagnosticsReport:
    """Convergence summary of one trace.

    ``variance_exponent`` is the fitted power of variance vs. iteration count
    over the recorded tail (about -1 when the filter argument holds); the two
    model variances record the Gaussian-weight prediction ``sigma^2/(4k)``
    and the alternative ``4 sigma^2/k`` normalization so neither is baked in.
    """

    final_energy: float
    final_energy_offset: float
    measured_final_variance: float
    model_variance: float | None
    model_variance_alt: float | None
    variance_ratio: float | None
    variance_exponent: float | None
    tail_size: int


def convergence_diagnostics(trace: IterationTrace, config: SamplerConfig) -> DiagnosticsReport:
    if not trace.records:
        raise InvalidParameterError("cannot diagnose an empty trace")
    sigma = config.resolved_sigma()
    final = trace.records[-1]
    model = sigma**2 / (4.0 * final.k) if final.k > 0 else None
    model_alt = 4.0 * sigma**2 / final.k if final.k > 0 else None
    ratio = final.energy_variance / model if model else None

    tail_start = max(10, config.k_max // 3)
    tail = [r for r in trace.records if r.k >= tail_start and r.energy_variance > 0.0]
    exponent = None
    if len(tail) >= 3:
        ks = np.log([r.k for r in tail])
        vs = np.log([r.energy_variance for r in tail])
        exponent = float(np.polyfit(ks, vs, 1)[0])
    return DiagnosticsReport(
        final_energy=final.energy,
        final_energy_offset=abs(final.energy - config.energy),
        measured_final_variance=final.energy_variance,
        model_variance=model,
        model_variance_alt=model_alt,
        variance_ratio=ratio,
        variance_exponent=exponent,
        tail_size=len(tail),
    )

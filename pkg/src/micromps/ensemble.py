"""Ensemble orchestration: many samples, aggregation, fits, CSV outputs.

Samples are independent given ``(master_seed, sample_index)``, so they run
on a process pool; aggregation folds the results in sample-index order,
which makes every CSV byte-identical no matter how many workers ran.  BLAS
threading is limited to one thread per process: the per-sample tensor
contractions are too small to gain from threaded BLAS, and a fixed thread
count keeps floating-point reductions identical across runs.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__ as _version
from .errors import InsufficientDataError, RunFailedError, SampleFailedError
from .mpo import local_expectations, zz_correlation
from .rng import derive_subseed
from .sampler import IterationRecord, SamplerConfig, SamplerOperators, build_operators, run_sample

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def _limit_blas_threads():
    if threadpool_limits is not None:
        return threadpool_limits(limits=1)
    import contextlib

    return contextlib.nullcontext()


@dataclass(frozen=True)
class ObservablesRequest:
    """Which per-sample observables to evaluate on the final states."""

    magnetization: bool = True
    correlations: tuple[int, ...] = ()


@dataclass(frozen=True)
class GaussianFit:
    """Moment-matched normal fit of a sample of reals."""

    mean: float
    variance: float
    sample_count: int
    standard_error_mean: float
    ks_statistic: float


def fit_gaussian(samples) -> GaussianFit:
    """Fit by moment matching; the KS statistic against the fitted normal
    reports the fit quality without any binning choices."""
    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {values.size}")
    mean = float(values.mean())
    variance = float(values.var(ddof=1))
    stderr = float(np.sqrt(variance / values.size))
    if variance > 0.0:
        ks = float(stats.kstest(values, "norm", args=(mean, np.sqrt(variance))).statistic)
    else:
        ks = 0.0
    return GaussianFit(mean, variance, values.size, stderr, ks)


@dataclass
class SampleSummary:
    """Everything the aggregator keeps from one finished sample."""

    sample_index: int
    records: list[IterationRecord]
    magnetization: float | None = None
    sz_profile: list[float] | None = None
    correlations: dict[int, float] = field(default_factory=dict)

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy

    @property
    def final_variance(self) -> float:
        return self.records[-1].energy_variance


@dataclass
class EnsembleResult:
    config: SamplerConfig
    request: ObservablesRequest
    samples: list[SampleSummary]
    failed: list[tuple[int, str]]
    checkpoint_fits: dict[int, GaussianFit]
    magnetization: float | None
    magnetization_stderr: float | None
    correlations: list[tuple[int, float, float | None]]
    metadata: dict


def _evaluate_sample(config, request, operators, sample_index) -> SampleSummary:
    state, trace = run_sample(config, sample_index, operators)
    summary = SampleSummary(sample_index, trace.records)
    if request.magnetization:
        profile = local_expectations(state, "z")
        summary.sz_profile = [float(v) for v in profile]
        summary.magnetization = float(profile.mean())
    for j in request.correlations:
        summary.correlations[j] = float(zz_correlation(state, j))
    return summary


_WORKER: dict = {}


def _worker_init(config: SamplerConfig, request: ObservablesRequest):
    _WORKER["limiter"] = _limit_blas_threads()
    _WORKER["config"] = config
    _WORKER["request"] = request
    _WORKER["operators"] = build_operators(config)


def _worker_run(sample_index: int):
    try:
        summary = _evaluate_sample(
            _WORKER["config"], _WORKER["request"], _WORKER["operators"], sample_index
        )
        return ("ok", sample_index, summary)
    except SampleFailedError as exc:
        return ("failed", sample_index, exc.reason)


def _resolve_threads(threads: int | None) -> int:
    if threads is None or threads == 0:
        env = os.environ.get("MICROMPS_THREADS", "")
        if env.strip():
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))


def run_ensemble(
    config: SamplerConfig,
    request: ObservablesRequest | None = None,
    threads: int | None = None,
) -> EnsembleResult:
    """Run ``config.sample_count`` independent samples and aggregate.

    Output is deterministic for a fixed master seed regardless of
    ``threads``; failed samples are excluded from every aggregate and
    reported in the result.  Raises :class:`RunFailedError` if no sample
    survives.
    """
    request = request or ObservablesRequest()
    threads = _resolve_threads(threads)
    started = time.monotonic()
    outcomes: list = [None] * config.sample_count
    indices = range(config.sample_count)
    if threads == 1 or config.sample_count == 1:
        with _limit_blas_threads():
            operators = build_operators(config)
            for i in indices:
                try:
                    outcomes[i] = ("ok", i, _evaluate_sample(config, request, operators, i))
                except SampleFailedError as exc:
                    outcomes[i] = ("failed", i, exc.reason)
    else:
        with ProcessPoolExecutor(
            max_workers=min(threads, config.sample_count),
            initializer=_worker_init,
            initargs=(config, request),
        ) as pool:
            chunk = max(1, config.sample_count // (threads * 4))
            for outcome in pool.map(_worker_run, indices, chunksize=chunk):
                outcomes[outcome[1]] = outcome

    samples = [o[2] for o in outcomes if o[0] == "ok"]
    failed = [(o[1], o[2]) for o in outcomes if o[0] == "failed"]
    if not samples:
        raise RunFailedError(f"all {config.sample_count} samples failed")

    checkpoint_fits: dict[int, GaussianFit] = {}
    if len(samples) >= 2:
        ks = [r.k for r in samples[0].records]
        for pos, k in enumerate(ks):
            energies = [s.records[pos].energy for s in samples]
            checkpoint_fits[k] = fit_gaussian(energies)

    magnetization = magnetization_stderr = None
    if request.magnetization:
        values = np.array([s.magnetization for s in samples])
        magnetization = float(values.mean())
        if values.size >= 2:
            magnetization_stderr = float(values.std(ddof=1) / np.sqrt(values.size))

    correlations: list[tuple[int, float, float | None]] = []
    for j in request.correlations:
        values = np.array([s.correlations[j] for s in samples])
        stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size >= 2 else None
        correlations.append((j, float(values.mean()), stderr))

    operators_info = build_operators(config)
    metadata = {
        "config": dataclasses.asdict(config),
        "observables": dataclasses.asdict(request),
        "sigma_used": config.resolved_sigma(),
        "sigma_mode": config.sigma_mode if isinstance(config.sigma, str) else "explicit",
        "positivity_certified": operators_info.filter_op.positivity_certified,
        "filter_bulk_bond": operators_info.filter_op.g_mpo.bulk_bond,
        "sample_count": config.sample_count,
        "failed_samples": [{"sample_index": i, "reason": r} for i, r in failed],
        "variance_models": {
            "gaussian_weight_sigma2_over_4k": (
                config.resolved_sigma() ** 2 / (4 * config.k_max) if config.k_max else None
            ),
            "alternative_4sigma2_over_k": (
                4 * config.resolved_sigma() ** 2 / config.k_max if config.k_max else None
            ),
        },
        "library_version": _version,
        "threads": threads,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    return EnsembleResult(
        config=config,
        request=request,
        samples=samples,
        failed=failed,
        checkpoint_fits=checkpoint_fits,
        magnetization=magnetization,
        magnetization_stderr=magnetization_stderr,
        correlations=correlations,
        metadata=metadata,
    )


def magnetization_curve(
    config: SamplerConfig,
    energy_density: float,
    h_values,
    threads: int | None = None,
) -> tuple[list[tuple[float, float, float | None]], list[EnsembleResult]]:
    """One ensemble per field value at fixed energy density ``u = E/N``.

    Every grid point reuses the master seed with the grid index mixed into
    the stream derivation, so points are independent yet the whole curve is
    reproducible.  Returns rows sorted by field.
    """
    rows = []
    results = []
    for index, h in enumerate(sorted(h_values)):
        point = replace(
            config,
            model=config.model.replace_field(float(h)),
            master_seed=derive_subseed(config.master_seed, index),
        ).with_energy_density(energy_density)
        result = run_ensemble(point, ObservablesRequest(magnetization=True), threads)
        rows.append((float(h), result.magnetization, result.magnetization_stderr))
        results.append(result)
    return rows, results


def correlation_profile(
    config: SamplerConfig,
    separations,
    threads: int | None = None,
) -> tuple[list[tuple[int, float, float | None]], EnsembleResult]:
    """Ensemble-averaged z-z correlations at the requested separations."""
    request = ObservablesRequest(magnetization=True, correlations=tuple(separations))
    result = run_ensemble(config, request, threads)
    return result.correlations, result


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _atomic_write(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_trace_csv(result: EnsembleResult, path):
    rows = [
        (s.sample_index, r.k, r.energy, r.energy_variance, r.truncation_error)
        for s in result.samples
        for r in s.records
    ]
    _atomic_write(Path(path), _csv_text(
        ["sample_index", "k", "energy", "energy_variance", "truncation_error"], rows
    ))


def write_histogram_csv(result: EnsembleResult, path):
    rows = [
        (r.k, s.sample_index, r.energy)
        for s in result.samples
        for r in s.records
    ]
    rows.sort(key=lambda row: (row[0], row[1]))
    _atomic_write(Path(path), _csv_text(["checkpoint_k", "sample_index", "energy"], rows))


def write_fits_csv(fits: dict[int, GaussianFit], path):
    rows = [
        (k, f.mean, f.variance, f.standard_error_mean, f.ks_statistic, f.sample_count)
        for k, f in sorted(fits.items())
    ]
    _atomic_write(Path(path), _csv_text(
        ["checkpoint_k", "mean", "variance", "stderr_mean", "ks_statistic", "sample_count"], rows
    ))


def write_curve_csv(rows, path):
    _atomic_write(Path(path), _csv_text(["h", "m_z", "stderr"], rows))


def write_corr_csv(rows, path):
    _atomic_write(Path(path), _csv_text(["j", "phi", "stderr"], rows))


def write_run_metadata(metadata: dict, path):
    _atomic_write(Path(path), json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def write_outputs(result: EnsembleResult, out_dir) -> list[Path]:
    """Write the standard output files of a sampling run into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(result, out / "trace.csv")
    write_histogram_csv(result, out / "histogram.csv")
    write_fits_csv(result.checkpoint_fits, out / "fits.csv")
    write_run_metadata(result.metadata, out / "run.json")
    return [out / name for name in ("trace.csv", "histogram.csv", "fits.csv", "run.json")]

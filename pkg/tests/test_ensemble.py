"""Tests for ensemble aggregation, fits, CSV outputs and determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import micromps.ensemble as ensemble_mod
from micromps.ensemble import (
    EnsembleResult,
    ObservablesRequest,
    correlation_profile,
    fit_gaussian,
    magnetization_curve,
    run_ensemble,
    write_outputs,
)
from micromps.errors import InsufficientDataError, RunFailedError, SampleFailedError
from micromps.mpo import SpinModel
from micromps.mps import product_mps
from micromps.oracle import diagonalize, filtered_average, magnetization_operator
from micromps.rng import derive_stream
from micromps.sampler import IterationRecord, IterationTrace, SamplerConfig


def small_config(**overrides):
    base = dict(
        model=SpinModel("heisenberg", 6, J=1.0, h=0.3),
        energy=-1.5,
        chi=8,
        k_max=4,
        compress_tol=1e-10,
        record_every=2,
        master_seed=11,
        sample_count=4,
    )
    base.update(overrides)
    return SamplerConfig(**base)


def test_fit_gaussian_constant():
    fit = fit_gaussian([2.0, 2.0, 2.0])
    assert fit.mean == 2.0
    assert fit.variance == 0.0
    assert fit.standard_error_mean == 0.0
    assert fit.ks_statistic == 0.0


@settings(deadline=None, max_examples=50)
@given(
    st.floats(-100, 100, allow_nan=False),
    st.floats(-100, 100, allow_nan=False),
)
def test_fit_gaussian_two_samples(a, b):
    fit = fit_gaussian([a, b])
    assert fit.mean == pytest.approx((a + b) / 2, abs=1e-9)
    assert fit.variance == pytest.approx((a - b) ** 2 / 2, abs=1e-9, rel=1e-9)


def test_fit_gaussian_recovers_known_normal():
    draws = derive_stream(99, 0).generator.normal(3.0, 2.0, 10_000)
    fit = fit_gaussian(draws)
    assert abs(fit.mean - 3.0) <= 4 * np.sqrt(4.0 / 10_000)
    assert abs(fit.variance - 4.0) <= 0.4
    assert fit.standard_error_mean == pytest.approx(np.sqrt(fit.variance / 10_000))


def test_fit_gaussian_insufficient():
    with pytest.raises(InsufficientDataError):
        fit_gaussian([1.0])


def test_run_ensemble_aggregates():
    config = small_config()
    result = run_ensemble(config, ObservablesRequest(magnetization=True, correlations=(1, 2)), threads=1)
    assert len(result.samples) == 4
    assert not result.failed
    values = [s.magnetization for s in result.samples]
    assert result.magnetization == pytest.approx(np.mean(values))
    assert result.magnetization_stderr == pytest.approx(np.std(values, ddof=1) / 2.0)
    ks = [r.k for r in result.samples[0].records]
    assert ks == [0, 2, 4]
    for k, fit in result.checkpoint_fits.items():
        energies = [s.records[ks.index(k)].energy for s in result.samples]
        assert fit.mean == pytest.approx(np.mean(energies))
    js = [row[0] for row in result.correlations]
    assert js == [1, 2]
    assert result.metadata["positivity_certified"] is True
    assert result.metadata["failed_samples"] == []


def test_single_sample_flags_stderr_absent():
    result = run_ensemble(small_config(sample_count=1), threads=1)
    assert result.magnetization is not None
    assert result.magnetization_stderr is None
    assert result.checkpoint_fits == {}


def test_outputs_identical_across_thread_counts(tmp_path):
    config = small_config(sample_count=6)
    request = ObservablesRequest(magnetization=True, correlations=(1,))
    dirs = {}
    for threads in (1, 2):
        result = run_ensemble(config, request, threads=threads)
        out = tmp_path / f"threads{threads}"
        write_outputs(result, out)
        ensemble_mod.write_curve_csv([(0.3, result.magnetization, result.magnetization_stderr)], out / "curve.csv")
        ensemble_mod.write_corr_csv(result.correlations, out / "corr.csv")
        dirs[threads] = out
    for name in ("trace.csv", "histogram.csv", "fits.csv", "curve.csv", "corr.csv"):
        a = (dirs[1] / name).read_bytes()
        b = (dirs[2] / name).read_bytes()
        assert a == b, f"{name} differs between thread counts"
    assert not list(dirs[1].glob("*.tmp"))


def test_standard_errors_shrink_like_inverse_sqrt():
    base = small_config(k_max=0, sample_count=80, record_every=1)
    small = run_ensemble(base, threads=1)
    big = run_ensemble(small_config(k_max=0, sample_count=320, record_every=1), threads=1)
    ratio = big.magnetization_stderr / small.magnetization_stderr
    assert abs(ratio - 0.5) <= 0.2 * 0.5


def test_failed_samples_excluded(monkeypatch):
    real = ensemble_mod.run_sample

    def flaky(config, sample_index, operators=None):
        if sample_index == 1:
            raise SampleFailedError(sample_index, "synthetic failure")
        return real(config, sample_index, operators)

    monkeypatch.setattr(ensemble_mod, "run_sample", flaky)
    result = run_ensemble(small_config(), threads=1)
    assert [i for i, _ in result.failed] == [1]
    assert [s.sample_index for s in result.samples] == [0, 2, 3]
    assert result.metadata["failed_samples"] == [{"sample_index": 1, "reason": "synthetic failure"}]


def test_all_failed_raises(monkeypatch):
    def always_fail(config, sample_index, operators=None):
        raise SampleFailedError(sample_index, "synthetic")

    monkeypatch.setattr(ensemble_mod, "run_sample", always_fail)
    with pytest.raises(RunFailedError):
        run_ensemble(small_config(), threads=1)


def test_magnetization_curve_points_and_order():
    config = small_config(sample_count=3, k_max=2)
    rows, results = magnetization_curve(config, -0.2, [0.4, 0.0], threads=1)
    assert [row[0] for row in rows] == [0.0, 0.4]
    assert len(results) == 2
    # grid points use distinct derived master seeds
    seeds = {r.config.master_seed for r in results}
    assert len(seeds) == 2
    for r in results:
        assert r.config.energy == pytest.approx(-0.2 * 6)
        assert r.config.energy_density == pytest.approx(-0.2)


def test_correlation_profile_all_up_bypass(monkeypatch):
    # bypass the sampler entirely: a ferromagnetic product state has
    # phi(j) = 1 for every separation
    def fake_run_sample(config, sample_index, operators=None):
        state = product_mps([0] * config.model.n_sites)
        trace = IterationTrace(sample_index, [IterationRecord(0, -1.0, 0.0, 0.0, 0.0)])
        return state, trace

    monkeypatch.setattr(ensemble_mod, "run_sample", fake_run_sample)
    rows, result = correlation_profile(small_config(sample_count=3), [1, 2, 3], threads=1)
    for j, phi, stderr in rows:
        assert phi == pytest.approx(1.0, abs=1e-12)
        assert stderr == pytest.approx(0.0, abs=1e-12)


def test_csv_headers(tmp_path):
    result = run_ensemble(small_config(sample_count=2), ObservablesRequest(correlations=(1,)), threads=1)
    write_outputs(result, tmp_path)
    assert (tmp_path / "trace.csv").read_text().splitlines()[0] == (
        "sample_index,k,energy,energy_variance,truncation_error"
    )
    assert (tmp_path / "histogram.csv").read_text().splitlines()[0] == (
        "checkpoint_k,sample_index,energy"
    )
    assert (tmp_path / "fits.csv").read_text().splitlines()[0] == (
        "checkpoint_k,mean,variance,stderr_mean,ks_statistic,sample_count"
    )
    assert (tmp_path / "run.json").exists()


def test_ensemble_matches_exact_filter_average():
    # chi = 16 is the exact regime at 8 sites, so the sampled ensemble mean
    # must agree with the exact-weight filtered average up to sampling error
    model = SpinModel("heisenberg", 8, J=1.0, h=0.3)
    config = SamplerConfig(
        model=model,
        energy=-2.0,
        chi=16,
        k_max=40,
        compress_tol=1e-10,
        record_every=40,
        master_seed=5,
        sample_count=50,
    )
    result = run_ensemble(config, ObservablesRequest(magnetization=True), threads=2)
    spec = diagonalize(model)
    oracle = filtered_average(spec, -2.0, config.resolved_sigma(), 40, magnetization_operator(8))
    assert abs(result.magnetization - oracle) <= 3 * result.magnetization_stderr


def test_curve_and_correlations_match_oracle_pointwise():
    # sweep the field on a chain small enough for exact bond dimension and
    # compare every magnetization point and every correlation separation
    # with the exact-weight filtered averages
    from micromps.oracle import magnetization_diagonal, zz_diagonal

    n, k = 10, 50
    config = SamplerConfig(
        model=SpinModel("heisenberg", n, J=1.0, h=0.0),
        energy=-0.25 * n,
        chi=32,
        k_max=k,
        compress_tol=1e-10,
        record_every=k,
        master_seed=17,
        sample_count=50,
    )
    rows, results = magnetization_curve(config, -0.25, [0.0, 0.5, 1.0], threads=2)
    for (h, m_z, stderr), point in zip(rows, results):
        spec = diagonalize(SpinModel("heisenberg", n, J=1.0, h=h))
        oracle = filtered_average(
            spec, -0.25 * n, point.config.resolved_sigma(), k, magnetization_diagonal(n)
        )
        assert abs(m_z - oracle) <= 3 * stderr, f"h={h}: {m_z} vs oracle {oracle}"

    afm = SamplerConfig(
        model=SpinModel("heisenberg", n, J=-1.0, h=0.0),
        energy=-0.3 * n,
        chi=32,
        k_max=k,
        compress_tol=1e-10,
        record_every=k,
        master_seed=18,
        sample_count=50,
    )
    corr_rows, _ = correlation_profile(afm, [1, 2, 3], threads=2)
    spec = diagonalize(afm.model)
    for j, phi, stderr in corr_rows:
        oracle = filtered_average(spec, -0.3 * n, afm.resolved_sigma(), k, zz_diagonal(n, j))
        assert abs(phi - oracle) <= 3 * stderr, f"j={j}: {phi} vs oracle {oracle}"

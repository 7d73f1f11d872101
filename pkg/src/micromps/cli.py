"""Command-line front end: sample, sweep, verify, histogram.

Run configurations are YAML files with three sections::

    model:                      # what chain
      kind: heisenberg          # or transverse_ising
      N: 12
      J: 1.0
      h: 0.3                    # g: ... for transverse_ising
    sampler:                    # how to sample
      chi: 32
      E: -3.0                   # exactly one of E (energy) or u (= E/N)
      sigma: auto               # or a number
      iterations: 100
      samples: 100
      compress_tol: 1.0e-9      # optional
      record_every: 10          # optional
    run:                        # bookkeeping
      seed: 42
      output_dir: out
      threads: 0                # 0 = all cores

Precedence for the master seed and thread count: command-line flag, then the
MICROMPS_SEED / MICROMPS_THREADS environment variables, then the config
file, then the defaults (seed 0, all cores).  Exit codes: 0 success,
1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .ensemble import (
    ObservablesRequest,
    _atomic_write,
    correlation_profile,
    fit_gaussian,
    magnetization_curve,
    run_ensemble,
    write_corr_csv,
    write_curve_csv,
    write_fits_csv,
    write_outputs,
    write_run_metadata,
)
from .errors import ConfigError, InvalidParameterError, MicrompsError
from .mpo import SpinModel
from .mps import random_mps, to_dense
from .oracle import (
    DIAG_CAP,
    canonical_average,
    dense_power_replay,
    diagonalize,
    filtered_average,
    magnetization_diagonal,
)
from .rng import derive_stream
from .sampler import SamplerConfig, run_sample

SEED_ENV = "MICROMPS_SEED"
THREADS_ENV = "MICROMPS_THREADS"


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if not isinstance(value, dict):
        raise ConfigError(name, "section missing or not a mapping")
    return value


def _need(section: dict, section_name: str, key: str, kind, *, optional=False, default=None):
    if key not in section:
        if optional:
            return default
        raise ConfigError(f"{section_name}.{key}", "required field missing")
    value = section[key]
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section_name}.{key}", f"expected {kind.__name__}, got {value!r}")
    if isinstance(value, float) and not np.isfinite(value):
        raise ConfigError(f"{section_name}.{key}", "must be finite")
    return value


def load_run_config(path, seed_override=None, sigma_mode=None) -> tuple[SamplerConfig, dict]:
    """Parse and validate a YAML run configuration.

    Returns the sampler configuration plus the run options (output directory,
    threads).  Raises :class:`ConfigError` naming the offending field.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"cannot read {path}")
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")

    model_raw = _section(raw, "model")
    kind = _need(model_raw, "model", "kind", str)
    n = _need(model_raw, "model", "N", int)
    if n < 2:
        raise ConfigError("model.N", "need at least 2 sites")
    j = _need(model_raw, "model", "J", float)
    try:
        if kind == "heisenberg":
            if "g" in model_raw:
                raise ConfigError("model.g", "heisenberg uses h, not g")
            model = SpinModel(kind, n, J=j, h=_need(model_raw, "model", "h", float, optional=True, default=0.0))
        elif kind == "transverse_ising":
            if "h" in model_raw:
                raise ConfigError("model.h", "transverse_ising uses g, not h")
            model = SpinModel(kind, n, J=j, g=_need(model_raw, "model", "g", float, optional=True, default=0.0))
        else:
            raise ConfigError("model.kind", f"unknown kind {kind!r}")
    except InvalidParameterError as exc:
        raise ConfigError("model", str(exc))

    sampler_raw = _section(raw, "sampler")
    has_e = "E" in sampler_raw
    has_u = "u" in sampler_raw
    if has_e == has_u:
        raise ConfigError("sampler.E", "exactly one of E or u must be given")
    sigma_raw = sampler_raw.get("sigma", "auto")
    if isinstance(sigma_raw, str):
        if sigma_raw != "auto":
            raise ConfigError("sampler.sigma", f"must be a number or 'auto', got {sigma_raw!r}")
        sigma = "auto"
    else:
        sigma = _need(sampler_raw, "sampler", "sigma", float)

    run_raw = raw.get("run", {}) or {}
    if not isinstance(run_raw, dict):
        raise ConfigError("run", "section must be a mapping")
    seed = seed_override
    if seed is None:
        env = os.environ.get(SEED_ENV, "").strip()
        if env:
            try:
                seed = int(env)
            except ValueError:
                raise ConfigError("run.seed", f"{SEED_ENV} is not an integer: {env!r}")
    if seed is None:
        seed = _need(run_raw, "run", "seed", int, optional=True, default=0)

    energy_density = None
    if has_u:
        energy_density = _need(sampler_raw, "sampler", "u", float)
        energy = energy_density * n
    else:
        energy = _need(sampler_raw, "sampler", "E", float)
    try:
        config = SamplerConfig(
            model=model,
            energy=energy,
            chi=_need(sampler_raw, "sampler", "chi", int),
            k_max=_need(sampler_raw, "sampler", "iterations", int),
            sigma=sigma,
            sigma_mode=sigma_mode or "bound",
            compress_tol=_need(sampler_raw, "sampler", "compress_tol", float, optional=True, default=1e-9),
            record_every=_need(sampler_raw, "sampler", "record_every", int, optional=True, default=10),
            master_seed=seed,
            sample_count=_need(sampler_raw, "sampler", "samples", int, optional=True, default=1),
            energy_density=energy_density,
        )
    except InvalidParameterError as exc:
        raise ConfigError("sampler", str(exc))

    options = {
        "output_dir": str(run_raw.get("output_dir", "out")),
        "threads": _need(run_raw, "run", "threads", int, optional=True, default=0),
    }
    return config, options


def _resolve_out_threads(args, options) -> tuple[Path, int | None]:
    out_dir = Path(args.out) if args.out else Path(options["output_dir"])
    threads = args.threads
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        threads = int(env) if env else options["threads"]
    return out_dir, (None if not threads else threads)


def _parse_grid(spec: str) -> list[float]:
    spec = spec.strip()
    if not spec:
        raise ConfigError("h-grid", "empty grid")
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError("h-grid", "range format is start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError("h-grid", "need stop >= start and step > 0")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    values = [float(p) for p in spec.split(",") if p.strip()]
    if not values:
        raise ConfigError("h-grid", "empty grid")
    return values


def _parse_separations(spec: str, n_sites: int) -> list[int]:
    spec = spec.strip()
    if ":" in spec:
        lo, hi = (int(p) for p in spec.split(":", 1))
        values = list(range(lo, hi + 1))
    else:
        values = [int(p) for p in spec.split(",") if p.strip()]
    if not values:
        raise ConfigError("corr", "empty separation list")
    for j in values:
        if not 1 <= j <= n_sites - 1:
            raise ConfigError("corr", f"separation {j} outside [1, {n_sites - 1}]")
    return values


def cmd_sample(args) -> int:
    config, options = load_run_config(args.config, args.seed, args.sigma_mode)
    out_dir, threads = _resolve_out_threads(args, options)
    request = ObservablesRequest(magnetization=True)
    result = run_ensemble(config, request, threads)
    write_outputs(result, out_dir)
    print(f"sample: {len(result.samples)} ok, {len(result.failed)} failed -> {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    config, options = load_run_config(args.config, args.seed, args.sigma_mode)
    out_dir, threads = _resolve_out_threads(args, options)
    if config.energy_density is None:
        raise ConfigError("sampler.u", "sweeps hold u = E/N fixed; specify u instead of E")
    grid = _parse_grid(args.h_grid)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.corr:
        if len(grid) != 1:
            raise ConfigError("corr", "correlation mode needs a single-point h grid")
        seps = _parse_separations(args.corr, config.model.n_sites)
        point = replace(config, model=config.model.replace_field(grid[0])).with_energy_density(
            config.energy_density
        )
        rows, result = correlation_profile(point, seps, threads)
        write_corr_csv(rows, out_dir / "corr.csv")
        write_curve_csv(
            [(grid[0], result.magnetization, result.magnetization_stderr)], out_dir / "curve.csv"
        )
        write_run_metadata(result.metadata, out_dir / "run.json")
        print(f"sweep: corr at h={grid[0]} -> {out_dir}")
        return 0
    rows, results = magnetization_curve(config, config.energy_density, grid, threads)
    write_curve_csv(rows, out_dir / "curve.csv")
    write_run_metadata(
        {
            "points": [r.metadata for r in results],
            "h_grid": [row[0] for row in rows],
        },
        out_dir / "run.json",
    )
    print(f"sweep: {len(rows)} points -> {out_dir}")
    return 0


def cmd_verify(args) -> int:
    config, options = load_run_config(args.config, args.seed, args.sigma_mode)
    out_dir, threads = _resolve_out_threads(args, options)
    n = config.model.n_sites
    if 2**n > min(DIAG_CAP, 1 << 12):
        raise ConfigError("model.N", f"verify needs 2^N <= {min(DIAG_CAP, 1 << 12)} (N <= 12)")
    checks = []
    sigma = config.resolved_sigma()
    chi_exact = 2 ** (n // 2)
    spectrum = diagonalize(config.model)

    # dense replay agreement on a few samples at exact bond dimension
    k_replay = min(config.k_max, 40)
    replay_config = replace(
        config, chi=chi_exact, k_max=k_replay, record_every=1, compress_tol=1e-12
    )
    worst = 0.0
    for idx in range(3):
        seed_state = random_mps(derive_stream(config.master_seed, idx), n, 2, chi_exact).normalized()
        replay = dense_power_replay(to_dense(seed_state), config.model, config.energy, sigma, k_replay)
        _, trace = run_sample(replay_config, idx)
        energies = np.array([r.energy for r in trace.records])
        worst = max(worst, float(np.max(np.abs(energies - replay))))
    checks.append({"name": "dense_replay_agreement", "residual": worst, "passed": worst <= 1e-8})

    # sampled ensemble vs exact filtered average
    ens_config = replace(
        config,
        sample_count=min(config.sample_count, 40),
        k_max=min(config.k_max, 60),
        record_every=max(config.record_every, 10),
    )
    result = run_ensemble(ens_config, ObservablesRequest(magnetization=True), threads)
    oracle_mz = filtered_average(
        spectrum, config.energy, sigma, ens_config.k_max, magnetization_diagonal(n)
    )
    stderr = result.magnetization_stderr or 0.0
    gap = abs(result.magnetization - oracle_mz)
    checks.append(
        {
            "name": "filtered_average_agreement",
            "residual": gap,
            "tolerance": 3 * stderr,
            "passed": bool(gap <= 3 * stderr),
        }
    )

    # canonical magnetization stays monotone in the field (the contrast to
    # the microcanonical curve)
    values = []
    for h in np.linspace(0.0, 1.0, 6):
        spec_h = diagonalize(config.model.replace_field(float(h)))
        values.append(canonical_average(spec_h, 1.0, magnetization_diagonal(n)))
    monotone = bool(np.all(np.diff(values) >= -1e-10))
    checks.append({"name": "canonical_monotonicity", "values": values, "passed": monotone})

    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"checks": checks, "all_passed": all(c["passed"] for c in checks)}
    _atomic_write(out_dir / "verify.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        residual = check.get("residual")
        extra = f" residual={residual:.3e}" if residual is not None else ""
        print(f"[{status}] {check['name']}{extra}")
    return 0 if report["all_passed"] else 1


def cmd_histogram(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise ConfigError("input", f"no such file {path}")
    by_checkpoint: dict[int, list[float]] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["checkpoint_k", "sample_index", "energy"]:
            raise ConfigError("input", f"unexpected header {header}")
        for line in fh:
            if not line.strip():
                continue
            k_str, _, e_str = line.strip().split(",")
            by_checkpoint.setdefault(int(k_str), []).append(float(e_str))
    fits = {k: fit_gaussian(v) for k, v in sorted(by_checkpoint.items()) if len(v) >= 2}
    out_dir = Path(args.out) if args.out else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_fits_csv(fits, out_dir / "fits.csv")
    print(f"histogram: {len(fits)} checkpoints -> {out_dir / 'fits.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="micromps",
        description="Sample spin-chain pure states in an energy window with random MPS",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides env/config)")
        p.add_argument("--threads", type=int, default=None, help="worker processes (0 = all cores)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--sigma-mode", choices=["bound", "paper"], default=None,
                       help="sigma estimate: rigorous bound (default) or the 2*N*delta+|E| heuristic")

    p_sample = sub.add_parser("sample", help="run one ensemble, write trace/histogram/fits")
    common(p_sample)
    p_sample.set_defaults(func=cmd_sample)

    p_sweep = sub.add_parser("sweep", help="magnetization curve over a field grid at fixed u")
    common(p_sweep)
    p_sweep.add_argument("--h-grid", required=True, help="field grid: start:stop:step or comma list")
    p_sweep.add_argument("--corr", default=None,
                         help="correlation mode: separations as lo:hi or comma list (single h only)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="oracle-vs-sampler checks at small N")
    common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_hist = sub.add_parser("histogram", help="re-bin an existing histogram.csv into fits.csv")
    p_hist.add_argument("--input", required=True, help="existing histogram.csv")
    p_hist.add_argument("--out", default=None, help="output directory (defaults next to input)")
    p_hist.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MicrompsError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

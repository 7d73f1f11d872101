#!/usr/bin/env python3
"""Magnetization versus field at fixed energy density.

The microcanonical constraint makes the ferromagnetic chain's m_z(h) rise
and then fall: past the peak, higher magnetization can no longer be traded
against exchange energy without leaving the energy window.  One curve per
requested energy density.
"""

import argparse
from pathlib import Path

from micromps.ensemble import magnetization_curve, write_curve_csv
from micromps.mpo import SpinModel
from micromps.sampler import SamplerConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sites", type=int, default=16)
    parser.add_argument("--chi", type=int, default=16)
    parser.add_argument("--densities", default="-0.3,-0.2,-0.1", help="comma list of u = E/N")
    parser.add_argument("--h-max", type=float, default=1.0)
    parser.add_argument("--h-step", type=float, default=0.1)
    parser.add_argument("--samples", type=int, default=200)
    parser.add_argument("--iterations", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=0)
    parser.add_argument("--out", default="out/magnetization")
    args = parser.parse_args()

    grid = [round(i * args.h_step, 10) for i in range(int(args.h_max / args.h_step) + 1)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for u in (float(x) for x in args.densities.split(",")):
        config = SamplerConfig(
            model=SpinModel("heisenberg", args.sites, J=1.0, h=0.0),
            energy=u * args.sites,
            chi=args.chi,
            k_max=args.iterations,
            compress_tol=1e-6,
            record_every=args.iterations,
            master_seed=args.seed,
            sample_count=args.samples,
        )
        rows, _ = magnetization_curve(config, u, grid, threads=args.threads or None)
        path = out / f"curve_u{u:+.2f}.csv"
        write_curve_csv(rows, path)
        peak = max(rows, key=lambda r: r[1])
        print(f"u={u:+.2f}: peak m_z = {peak[1]:.4f} at h = {peak[0]} -> {path}")


if __name__ == "__main__":
    main()

"""Trace the information plane of both solvers on the synthetic sources.

Each solver sweeps its multiplier over a log grid with random restarts.  For
every record we know the common information it extracted, I(X^V;Z), and the
dependence it left behind, the summed conditional MI over bipartitions.  The
lower-left envelope of those points is what a good solver should push down.

    python demos/information_plane.py                 # quick, a few seconds
    python demos/information_plane.py --full          # default 20 x 25 sweep
"""
import argparse

import numpy as np

from wynerci.sweep import SweepConfig, best_feasible, default_grid, pareto_frontier, run_sweep
from wynerci.synth import invertible_spec, noninvertible_spec

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
ap.add_argument("--case", choices=("invertible", "noninvertible"), default="noninvertible")
args = ap.parse_args()

spec = invertible_spec() if args.case == "invertible" else noninvertible_spec()
grid = default_grid() if args.full else tuple(np.geomspace(0.3, 10.0, 6))
restarts = 25 if args.full else 4

for solver in ("bipartite", "vi"):
    cfg = SweepConfig(solver=solver, synth=spec, grid=grid, restarts=restarts, accuracy_samples=2000)
    records = run_sweep(cfg)
    print(f"\n{solver}: {len(records)} records")
    print(f"  {'cond MI':>10}  {'I(X;Z)':>8}  {'grid':>7}")
    for r in pareto_frontier(records):
        print(f"  {r.cond_mi_sum:10.5f}  {r.mi_z_xv:8.4f}  {r.grid_value:7.3f}")
    best = best_feasible(records, 0.01)
    if best is not None:
        print(f"  least information with residual < 0.01 bits: {best.mi_z_xv:.4f} bits")
    acc = [r.accuracy for r in records if r.accuracy is not None]
    print(f"  clustering accuracy over the grid: {min(acc):.3f} .. {max(acc):.3f}")

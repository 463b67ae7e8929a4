#!/usr/bin/env python3
"""Convergence-rate experiment for the augmented Lagrangian outer loop.

Solves a fixture once with geometric penalty growth to get a tight reference
solution, then re-solves with the penalty frozen at each requested value and
prints the error quotients e_{k+1}/e_k along the accepted path.  Larger fixed
penalties should give uniformly smaller quotients; the final line states
whether the medians are strictly decreasing.

Usage:
    python scripts/rate_sweep.py
    python scripts/rate_sweep.py --fixture P4 --x0 0 --y0 0.5 --xi0 0.5
    python scripts/rate_sweep.py --rhos 10,50,250,1250
"""

import argparse
import sys

import numpy as np

from bilevelkit.alm import AlmConfig, ReferenceTooClose, Stalled, alm_solve, rate_diagnostics
from bilevelkit.problem import PrimalDualPoint, UpperMultiplier, fixture


def vector(text, dim):
    if not text:
        return np.zeros(dim)
    vals = np.array([float(p) for p in text.split(",")], dtype=float)
    if vals.size != dim:
        sys.exit(f"expected {dim} components, got {vals.size} in {text!r}")
    return vals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixture", default="P2")
    ap.add_argument("--x0")
    ap.add_argument("--y0")
    ap.add_argument("--mu0")
    ap.add_argument("--xi0")
    ap.add_argument("--rhos", default="10,100,1000")
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args()

    problem = fixture(args.fixture)
    if args.fixture == "P2" and not any([args.x0, args.y0, args.mu0, args.xi0]):
        args.x0, args.y0 = "1,1", "0.3,0.3"

    u0 = PrimalDualPoint(
        x=vector(args.x0, problem.n),
        y=vector(args.y0, problem.m),
        mu=vector(args.mu0, problem.r),
        xi=vector(args.xi0, problem.s),
    )
    lam0 = UpperMultiplier(
        lam_H=np.zeros(problem.p), lam_G=np.zeros(problem.q),
        lam_L=np.zeros(problem.m), lam_h=np.zeros(problem.r),
        lam_g=np.zeros(problem.s),
    )
    rhos = [float(p) for p in args.rhos.split(",")]

    ref = alm_solve(problem, u0, lam0, AlmConfig(outer_tol=args.tol))
    if ref.status != "converged":
        sys.exit(f"reference run did not converge (status {ref.status})")
    print(f"reference solution for {args.fixture}: x={ref.u_final.x} y={ref.u_final.y}")
    print(f"  sigma={ref.sigma_final:.3e} after {len(ref.iterations)} outer rounds\n")

    medians = []
    print(f"{'rho':>8}  {'outers':>6}  {'median q':>10}  quotients")
    for rho in rhos:
        cfg = AlmConfig(rho0=rho, rho_growth=1.0, outer_tol=args.tol)
        try:
            trace = alm_solve(problem, u0, lam0, cfg)
        except Stalled as exc:
            trace = exc.trace
        if trace.status != "converged":
            print(f"{rho:>8g}  {len(trace.iterations):>6}  {'n/a':>10}  (status {trace.status})")
            medians.append(None)
            continue
        try:
            q = rate_diagnostics(trace, ref.u_final, ref.lam_final)
        except ReferenceTooClose:
            print(f"{rho:>8g}  {len(trace.iterations):>6}  {'n/a':>10}  (start is the solution)")
            medians.append(None)
            continue
        med = float(np.median(q))
        medians.append(med)
        tail = ", ".join(f"{v:.3e}" for v in q)
        print(f"{rho:>8g}  {len(trace.iterations):>6}  {med:>10.3e}  [{tail}]")

    usable = [m for m in medians if m is not None]
    monotone = len(usable) == len(medians) and all(
        a > b for a, b in zip(usable, usable[1:])
    )
    print(f"\nmedian quotient strictly decreasing in rho: {'yes' if monotone else 'NO'}")
    return 0 if monotone else 1


if __name__ == "__main__":
    sys.exit(main())

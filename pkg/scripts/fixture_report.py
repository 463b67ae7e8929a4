#!/usr/bin/env python3
"""Structural tour of the built-in fixtures.

For every fixture this prints the problem source, solves the lower level at a
reference upper point, runs the regularity checks, and (where the point is a
reformulation KKT point) the first- and second-order condition checks with
recovered multipliers.  P3 is the deliberately degenerate example: its checks
are expected to fail, and the script shows how the pipeline degrades.

Usage:
    python scripts/fixture_report.py
    python scripts/fixture_report.py --fixture P2
"""

import argparse
import sys

import numpy as np

from bilevelkit.lower import check_jacobian_uniqueness, solve_lower
from bilevelkit.optimality import (
    check_first_order_fp,
    check_mfcq_fp,
    check_second_order_fp,
    recover_multipliers,
)
from bilevelkit.problem import (
    FIXTURE_SOURCES,
    PrimalDualPoint,
    UpperMultiplier,
    fixture,
    format_problem,
)
from bilevelkit.sensitivity import SingularK, StrictComplementarityViolated, implicit_jacobians

REFERENCE_X = {
    "P1": np.array([1.5]),
    "P2": np.array([0.0, 0.0]),
    "P3": np.array([0.0]),
    "P4": np.array([-1.0]),
}


def flag(ok):
    return "ok" if ok else "FAIL"


def report(name):
    problem = fixture(name)
    x = REFERENCE_X[name]
    print("=" * 72)
    print(f"fixture {name}   (n={problem.n} m={problem.m} p={problem.p} "
          f"q={problem.q} r={problem.r} s={problem.s})")
    print("-" * 72)
    print(format_problem(problem).rstrip())
    print("-" * 72)

    y, mu, xi, converged = solve_lower(problem, x, tol=1e-12)
    print(f"lower solve at x={x}: converged={converged} y={y} mu={mu} xi={xi}")
    if not converged:
        print("  (no KKT point found; skipping the condition checks)\n")
        return

    rep = check_jacobian_uniqueness(problem, x, y, mu, xi)
    print(f"regularity: kkt {flag(rep.kkt_ok)}, licq {flag(rep.licq_ok)}, "
          f"strict comp {flag(rep.strict_comp_ok)}, sosc {flag(rep.sosc_ok)}")
    print(f"  min singular (active jacobian) = {rep.min_singular_active:.6g}, "
          f"comp margin = {rep.strict_comp_margin:.6g}, "
          f"reduced hessian min eig = {rep.reduced_hessian_min_eig:.6g}")

    try:
        sr = implicit_jacobians(problem, x, y, mu, xi)
        with np.printoptions(precision=6, suppress=True):
            print(f"sensitivities: Jy =\n{sr.Jy}")
            if problem.r:
                print(f"  Jmu = {sr.Jmu.ravel()}")
            if problem.s:
                print(f"  Jxi = {sr.Jxi.ravel()}")
    except (SingularK, StrictComplementarityViolated) as exc:
        print(f"sensitivities unavailable: {type(exc).__name__}: {exc}")

    u = PrimalDualPoint(x=x, y=y, mu=mu, xi=xi)
    mf = check_mfcq_fp(problem, u)
    print(f"reformulation MFCQ: {flag(mf.holds)} "
          f"(min singular {mf.min_singular_value:.6g})")
    try:
        lam_l, lam_h, lam_g = recover_multipliers(problem, u)
    except (SingularK, StrictComplementarityViolated) as exc:
        print(f"multiplier recovery failed: {type(exc).__name__}: {exc}\n")
        return
    lam = UpperMultiplier(
        lam_H=np.zeros(problem.p), lam_G=np.zeros(problem.q),
        lam_L=lam_l, lam_h=lam_h, lam_g=lam_g,
    )
    fo = check_first_order_fp(problem, u, lam)
    print(f"first order: {flag(fo.holds)} (sigma = {fo.sigma:.3e})")
    so = check_second_order_fp(problem, u, lam, mode="sufficient")
    if so.cone_empty:
        print("second order (sufficient): holds vacuously, critical cone is trivial")
    else:
        print(f"second order (sufficient): {flag(so.holds)} "
              f"(cone dim {so.cone_dimension}, min eig {so.min_eigenvalue:.6g})")
    print()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixture", choices=sorted(FIXTURE_SOURCES), help="only this fixture")
    args = ap.parse_args()
    names = [args.fixture] if args.fixture else sorted(FIXTURE_SOURCES)
    for name in names:
        report(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())

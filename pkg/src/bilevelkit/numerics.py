"""Dense linear algebra kernels, a small bounded-variable LP solver, and
finite differences.

Every system produced by the rest of the package is tiny (tens of rows), so
the implementations favour strict error reporting and predictable behaviour
over asymptotics.  Matrices are plain 2-D numpy arrays in row-major order;
vectors are 1-D arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Matrix = np.ndarray
Vector = np.ndarray

# Relative pivot threshold below which an LU factorization is declared singular.
SINGULAR_REL_TOL = 1e-12


class Singular(ArithmeticError):
    """An elimination pivot fell below the relative singularity threshold."""


class NotSymmetric(ValueError):
    """The input matrix is not symmetric within tolerance."""


class Infeasible(RuntimeError):
    """The LP has no feasible point (phase-1 optimum stayed positive)."""


class NonFinite(ArithmeticError):
    """A finite-difference stencil evaluation produced nan or inf."""


def _as_square(a) -> Matrix:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class LuFactorization:
    """LU factors of a square matrix with partial pivoting.

    `lu` stores L (unit diagonal, below) and U (on and above the diagonal),
    `perm` the row permutation, and `cond_estimate` a cheap pivot-growth
    proxy for the condition number (pivot ratio times element growth).
    """

    lu: Matrix
    perm: np.ndarray
    cond_estimate: float

    def solve(self, b):
        """Solve A x = b for a vector or a matrix of right-hand sides."""
        lu, perm = self.lu, self.perm
        n = lu.shape[0]
        x = np.array(np.asarray(b, dtype=float)[perm], dtype=float)
        if x.shape[0] != n:
            raise ValueError(f"rhs has {x.shape[0]} rows, expected {n}")
        for k in range(n):  # forward substitution, unit lower triangle
            x[k + 1:] -= np.multiply.outer(lu[k + 1:, k], x[k])
        for k in range(n - 1, -1, -1):  # back substitution
            x[k] -= lu[k, k + 1:] @ x[k + 1:]
            x[k] /= lu[k, k]
        return x


def lu_factor(a) -> LuFactorization:
    """Factor a square matrix by Gaussian elimination with partial pivoting.

    Raises Singular when any pivot magnitude drops below
    SINGULAR_REL_TOL times the largest entry of the input.
    """
    a = _as_square(a)
    n = a.shape[0]
    maxabs = float(np.max(np.abs(a))) if a.size else 0.0
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    if n > 0 and maxabs == 0.0:
        raise Singular("zero matrix")
    threshold = SINGULAR_REL_TOL * maxabs
    lu = a.copy()
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < threshold:
            raise Singular(f"pivot {abs(lu[p, k]):.3e} below {threshold:.3e} at column {k}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    if n == 0:
        cond = 1.0
    else:
        piv = np.abs(np.diag(lu))
        growth = float(np.max(np.abs(lu))) / maxabs
        cond = float(piv.max() / piv.min()) * max(growth, 1.0)
    return LuFactorization(lu=lu, perm=perm, cond_estimate=cond)


def lu_solve(a, b):
    """Solve the square system A x = b via LU with partial pivoting."""
    return lu_factor(a).solve(b)


def nullspace_basis(a, tol: float | None = None) -> Matrix:
    """Orthonormal basis of {d : A d = 0}.

    Columns are orthonormal; singular values at or below `tol` are treated
    as zero, so rank(A) + cols(result) = cols(A) at that tolerance and
    every returned column satisfies ||A z||_2 <= tol.  The default tolerance
    is max(shape) * eps * smax, the usual rank cutoff.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rows, cols = a.shape
    if rows == 0 or a.size == 0:
        return np.eye(cols)
    _, s, vt = np.linalg.svd(a)
    if tol is None:
        tol = max(rows, cols) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T.copy()


def min_eig_sym(s, sym_tol: float = 1e-10) -> float:
    """Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.

    Raises NotSymmetric when max|S - S^T| exceeds sym_tol * max(1, ||S||_inf).
    Absolute accuracy is on the order of 1e-12 * ||S||_inf.
    """
    s = _as_square(s)
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty matrix has no eigenvalues")
    scale = max(1.0, float(np.max(np.abs(s))))
    asym = float(np.max(np.abs(s - s.T)))
    if asym > sym_tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {sym_tol * scale:.3e}")
    b = 0.5 * (s + s.T)
    if n == 1:
        return float(b[0, 0])
    for _ in range(100):
        off = float(np.max(np.abs(b - np.diag(np.diag(b)))))
        if off <= 1e-13 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = b[p, q]
                if abs(apq) <= 1e-16 * scale:
                    continue
                theta = (b[q, q] - b[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0 else -1.0
                t = sign / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                bp = c * b[:, p] - sn * b[:, q]
                bq = sn * b[:, p] + c * b[:, q]
                b[:, p], b[:, q] = bp, bq
                bp = c * b[p, :] - sn * b[q, :]
                bq = sn * b[p, :] + c * b[q, :]
                b[p, :], b[q, :] = bp, bq
    return float(np.min(np.diag(b)))


@dataclass(frozen=True)
class LpProblem:
    """maximize objective . x  subject to  eq_matrix x = eq_rhs,
    lower_bounds <= x <= upper_bounds (all bounds finite)."""

    objective: Vector
    eq_matrix: Matrix
    eq_rhs: Vector
    lower_bounds: Vector
    upper_bounds: Vector

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        a = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
        b = np.asarray(self.eq_rhs, dtype=float)
        lo = np.asarray(self.lower_bounds, dtype=float)
        hi = np.asarray(self.upper_bounds, dtype=float)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_matrix", a)
        object.__setattr__(self, "eq_rhs", b)
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)
        n = c.shape[0]
        if a.size == 0:
            a = a.reshape(0, n)
            object.__setattr__(self, "eq_matrix", a)
        if a.shape[1] != n or b.shape[0] != a.shape[0]:
            raise ValueError("inconsistent LP dimensions")
        if lo.shape[0] != n or hi.shape[0] != n:
            raise ValueError("bound vectors must match the variable count")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")


_BASIC, _AT_LOWER, _AT_UPPER = 0, 1, 2


def _simplex(c, a, b, lo, hi, basis, stat, tol, max_iter):
    """Bounded-variable primal simplex with Bland's rule.  Mutates basis/stat."""
    meq, n = a.shape
    for _ in range(max_iter):
        bmat = a[:, basis]
        try:
            fac = lu_factor(bmat)
        except Singular as exc:  # pragma: no cover - guarded by construction
            raise RuntimeError("simplex basis became singular") from exc
        x = np.where(stat == _AT_UPPER, hi, lo)
        x[basis] = 0.0
        xb = fac.solve(b - a @ x)
        x[basis] = xb
        y = lu_factor(bmat.T).solve(c[basis])
        z = c - a.T @ y
        enter = -1
        for j in range(n):
            if stat[j] == _AT_LOWER and z[j] > tol:
                enter = j
                break
            if stat[j] == _AT_UPPER and z[j] < -tol:
                enter = j
                break
        if enter < 0:
            return x, float(c @ x)
        sigma = 1.0 if stat[enter] == _AT_LOWER else -1.0
        w = fac.solve(a[:, enter])
        dxb = -sigma * w
        t_best = hi[enter] - lo[enter]
        leave_row = -1
        leave_to = _AT_LOWER
        for i in range(meq):
            bi = basis[i]
            d = dxb[i]
            if d > 1e-11:
                if not np.isfinite(hi[bi]):
                    continue
                ti = (hi[bi] - xb[i]) / d
                to = _AT_UPPER
            elif d < -1e-11:
                ti = (lo[bi] - xb[i]) / d
                to = _AT_LOWER
            else:
                continue
            ti = max(ti, 0.0)
            if ti < t_best - 1e-13 or (abs(ti - t_best) <= 1e-13 and (leave_row < 0 or bi < basis[leave_row])):
                t_best = ti
                leave_row = i
                leave_to = to
        if not np.isfinite(t_best):
            raise RuntimeError("LP is unbounded, which finite bounds should prevent")
        if leave_row < 0:
            # entering variable runs to its opposite bound
            stat[enter] = _AT_UPPER if stat[enter] == _AT_LOWER else _AT_LOWER
            continue
        stat[basis[leave_row]] = leave_to
        basis[leave_row] = enter
        stat[enter] = _BASIC
    raise RuntimeError("simplex iteration limit reached")


def lp_maximize(p: LpProblem, tol: float = 1e-9, max_iter: int = 20000):
    """Solve a bounded-box LP by two-phase simplex with Bland's rule.

    Returns (optimal value, solution vector).  Raises Infeasible when the
    phase-1 artificial sum cannot be driven below 1e-9.
    """
    c = p.objective
    a = p.eq_matrix
    b = p.eq_rhs
    n = c.shape[0]
    meq = a.shape[0]
    if meq == 0:
        x = np.where(c > 0, p.upper_bounds, p.lower_bounds).astype(float)
        return float(c @ x), x
    r = b - a @ p.lower_bounds
    art_sign = np.where(r >= 0, 1.0, -1.0)
    a1 = np.hstack([a, np.diag(art_sign)])
    lo = np.concatenate([p.lower_bounds, np.zeros(meq)])
    hi = np.concatenate([p.upper_bounds, np.full(meq, np.inf)])
    stat = np.full(n + meq, _AT_LOWER, dtype=int)
    basis = list(range(n, n + meq))
    stat[basis] = _BASIC
    c1 = np.concatenate([np.zeros(n), -np.ones(meq)])
    x, val1 = _simplex(c1, a1, b, lo, hi, basis, stat, tol, max_iter)
    if -val1 > 1e-9:
        raise Infeasible(f"phase-1 optimum {-val1:.3e} stayed positive")
    hi[n:] = 0.0  # freeze artificials at zero for phase 2
    c2 = np.concatenate([c, np.zeros(meq)])
    x, val = _simplex(c2, a1, b, lo, hi, basis, stat, tol, max_iter)
    return float(c @ x[:n]), x[:n].copy()


def fd_jacobian(fn, x, h: float = 1e-5) -> Matrix:
    """Central-difference Jacobian of a vector map, one column per coordinate.

    Raises NonFinite when a stencil evaluation returns nan or inf.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        fp = np.atleast_1d(np.asarray(fn(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fn(x - e), dtype=float))
        if not (np.isfinite(fp).all() and np.isfinite(fm).all()):
            raise NonFinite(f"non-finite stencil value at coordinate {j}")
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


def fd_hessian(grad_fn, x, h: float = 1e-4) -> Matrix:
    """Symmetrized central-difference Jacobian of a gradient map."""
    j = fd_jacobian(grad_fn, x, h=h)
    return 0.5 * (j + j.T)

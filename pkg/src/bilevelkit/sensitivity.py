"""Implicit differentiation of the lower-level KKT map x -> (y(x), mu(x), xi(x)).

At a KKT point with strict complementarity, the semismooth system is smooth
in a neighborhood and its y/mu/xi-block Jacobian K is nonsingular under the
usual regularity; the solution-map Jacobians solve K * J = -B where B stacks
the x-derivatives of the same residual rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lower as _lower
from .lower import ActiveSets, active_sets, kkt_residual, lower_lagrangian
from .numerics import Singular, lu_factor
from .problem import BilevelProblem


class StrictComplementarityViolated(ValueError):
    """Biactive indices present; the projection is not differentiable there."""


class SingularK(ArithmeticError):
    """K could not be factored; the regularity bundle fails at this point."""


class NotKkt(ValueError):
    """Sensitivities were requested at a point that is not KKT within tolerance."""


@dataclass(frozen=True)
class SensitivityResult:
    """Assembled system and solution-map Jacobians at one point.

    W is the diagonal 0/1 projection Jacobian; Jy, Jmu, Jxi are the
    x-derivatives of the implicit primal and dual solutions; cond_estimate is
    the LU growth proxy for K (diagnostic only).
    """

    K: np.ndarray
    W: np.ndarray
    Jy: np.ndarray
    Jmu: np.ndarray
    Jxi: np.ndarray
    cond_estimate: float


def build_w(active: ActiveSets) -> np.ndarray:
    """Diagonal projection Jacobian: 0 on alpha, 1 on gamma; beta forbidden."""
    if active.beta:
        raise StrictComplementarityViolated(
            f"biactive indices {list(active.beta)}; resolve degeneracy first"
        )
    size = len(active.alpha) + len(active.gamma)
    w = np.zeros(size)
    for i in active.gamma:
        w[i] = 1.0
    return np.diag(w)


def build_k(problem: BilevelProblem, x, y, mu, xi, active: ActiveSets) -> np.ndarray:
    """Assemble the (m+r+s)-square KKT-system Jacobian for the given active sets."""
    w = np.diag(build_w(active))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _lower._assemble_k(problem, x, y, np.asarray(mu, float), np.asarray(xi, float), w)


def implicit_jacobians(
    problem: BilevelProblem,
    x,
    y,
    mu,
    xi,
    tau_act: float = _lower.DEFAULT_TAU_ACT,
    kkt_tol: float = 1e-7,
) -> SensitivityResult:
    """Solve K * (Jy; Jmu; Jxi) = -(hess_yx L; Jx h; (I-W) Jx g) at a KKT point.

    Raises NotKkt if the residual exceeds kkt_tol, StrictComplementarityViolated
    on biactive indices, and SingularK if the factorization fails.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n, m, r, s = problem.n, problem.m, problem.r, problem.s

    res = kkt_residual(problem, x, y, mu, xi)
    if res.size and np.linalg.norm(res, np.inf) > kkt_tol:
        raise NotKkt(f"KKT residual {np.linalg.norm(res, np.inf):.3e} exceeds {kkt_tol}")

    active = active_sets(problem, x, y, xi, tau_act)
    w_mat = build_w(active)
    w = np.diag(w_mat)

    k = _lower._assemble_k(problem, x, y, mu, xi, w)

    _, _, _, hess_yx = lower_lagrangian(problem, x, y, mu, xi)
    jxh = _lower._grad_x_stack(problem.h, x, y, n)
    jxg = _lower._grad_x_stack(problem.g, x, y, n)
    rhs = np.vstack([hess_yx, jxh, (1.0 - w)[:, None] * jxg])

    try:
        fac = lu_factor(k)
    except Singular as exc:
        raise SingularK(str(exc)) from exc
    stacked = fac.solve(-rhs)

    return SensitivityResult(
        K=k,
        W=w_mat,
        Jy=stacked[:m].reshape(m, n),
        Jmu=stacked[m:m + r].reshape(r, n),
        Jxi=stacked[m + r:].reshape(s, n),
        cond_estimate=float(fac.cond_estimate),
    )

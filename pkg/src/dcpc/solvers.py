"""Embedded desk-scale solvers: dense simplex, QP and cone operator splitting.

The simplex solver gives vertex-exact LP answers (so canonicalization tests
can assert tight tolerances); the two ADMM solvers cover quadratic and cone
programs where a tableau method does not apply.  Everything is dense and
deterministic: no randomized pivoting, scaling, or restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .reductions.cone import ConeDims, ConeProgramData
from .reductions.framework import Status
from .reductions.qp import LpProgramData, QpProgramData

__all__ = ["SolverSettings", "RawSolution", "solve_lp_simplex",
           "solve_qp_admm", "solve_cone_admm", "project_cone"]

_PIVOT_TOL = 1e-9
_SIGMA = 1e-6  # proximal regularization for the splitting solvers
_EQ_RHO_SCALE = 1e3  # stiffer penalty on equality rows, as splitting solvers do
_DIVERGENCE_LIMIT = 1e8


@dataclass(frozen=True)
class SolverSettings:
    """Iteration and tolerance knobs shared by all embedded solvers."""

    max_iterations: int = 20000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    alpha: float = 1.6
    rho: float = 1.0

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class RawSolution:
    """A standard-form answer: stacked primal and pre-offset objective value."""

    status: Status
    x: np.ndarray
    value: float
    iterations: int = 0
    message: str = ""


def _lp_view(data) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(data, QpProgramData):
        if data.P.any():
            raise ValueError("simplex requires P == 0")
        return data.q, data.G, data.h, data.A, data.b
    if isinstance(data, LpProgramData):
        return data.c, data.G, data.h, data.A, data.b
    raise TypeError(f"not an LP payload: {type(data).__name__}")


def solve_lp_simplex(data, settings: SolverSettings = SolverSettings()) -> RawSolution:
    """Two-phase dense simplex with Bland's anti-cycling rule.

    Free variables are split into nonnegative pairs and inequality rows get
    slacks, giving the equality standard form that the tableau iterates on.
    Phase one minimizes artificial variables; an optimum above 1e-9 certifies
    infeasibility.  Bland's rule (lowest eligible index enters, lowest basic
    index breaks ratio ties) guarantees termination without cycling.
    """
    c, G, h, A, b = _lp_view(data)
    n = c.shape[0]
    mG, mA = G.shape[0], A.shape[0]
    m = mG + mA

    # Columns: [u (n), v (n), slack (mG)], x = u - v, all columns >= 0.
    N = 2 * n + mG
    body = np.zeros((m, N))
    rhs = np.concatenate([h, b]).astype(float)
    if mG:
        body[:mG, :n] = G
        body[:mG, n:2 * n] = -G
        body[:mG, 2 * n:] = np.eye(mG)
    if mA:
        body[mG:, :n] = A
        body[mG:, n:2 * n] = -A
    flip = rhs < 0
    body[flip] *= -1.0
    rhs[flip] *= -1.0

    # Phase 1 tableau with one artificial per row.
    T = np.zeros((m, N + m + 1))
    T[:, :N] = body
    T[:, N:N + m] = np.eye(m)
    T[:, -1] = rhs
    basis = list(range(N, N + m))
    obj = np.zeros(N + m + 1)
    obj[:N] = -T[:, :N].sum(axis=0)
    obj[-1] = -rhs.sum()

    def pivot(T, obj, basis, row, col):
        T[row] /= T[row, col]
        for i in range(T.shape[0]):
            if i != row and abs(T[i, col]) > 0:
                T[i] -= T[i, col] * T[row]
        obj -= obj[col] * T[row]
        basis[row] = col

    def run_phase(T, obj, basis, allowed, budget):
        used = 0
        while used < budget:
            entering = -1
            for j in range(allowed):
                if obj[j] < -_PIVOT_TOL:
                    entering = j
                    break
            if entering < 0:
                return "optimal", used
            leaving, best = -1, math.inf
            for i in range(T.shape[0]):
                coef = T[i, entering]
                if coef > _PIVOT_TOL:
                    ratio = T[i, -1] / coef
                    if ratio < best - _PIVOT_TOL or \
                            (abs(ratio - best) <= _PIVOT_TOL
                             and (leaving < 0 or basis[i] < basis[leaving])):
                        leaving, best = i, ratio
            if leaving < 0:
                return "unbounded", used
            pivot(T, obj, basis, leaving, entering)
            used += 1
        return "limit", used

    outcome, used = run_phase(T, obj, basis, N, settings.max_iterations)
    if outcome == "limit":
        return RawSolution(Status.ITERATION_LIMIT, np.zeros(n), math.nan, used,
                           "phase-1 iteration limit")
    if -obj[-1] > 1e-9:
        return RawSolution(Status.INFEASIBLE, np.zeros(n), math.inf, used,
                           "artificial variables remain positive")

    # Drive leftover (zero-valued) artificials out of the basis.
    keep = []
    for i in range(m):
        if basis[i] >= N:
            col = next((j for j in range(N) if abs(T[i, j]) > _PIVOT_TOL), -1)
            if col < 0:
                continue  # redundant row
            pivot(T, obj, basis, i, col)
        keep.append(i)
    T = T[keep][:, list(range(N)) + [N + m]]
    basis = [basis[i] for i in keep]

    cost = np.concatenate([c, -c, np.zeros(mG)])
    obj = np.zeros(N + 1)
    obj[:N] = cost
    for i, var in enumerate(basis):
        obj -= obj[var] * T[i]

    outcome, used2 = run_phase(T, obj, basis, N, settings.max_iterations - used)
    if outcome == "limit":
        return RawSolution(Status.ITERATION_LIMIT, np.zeros(n), math.nan,
                           used + used2, "phase-2 iteration limit")
    if outcome == "unbounded":
        return RawSolution(Status.UNBOUNDED, np.zeros(n), -math.inf, used + used2,
                           "entering column admits no ratio bound")
    z = np.zeros(N)
    for i, var in enumerate(basis):
        z[var] = T[i, -1]
    x = z[:n] - z[n:2 * n]
    return RawSolution(Status.OPTIMAL, x, float(c @ x), used + used2)


def solve_qp_admm(data: QpProgramData,
                  settings: SolverSettings = SolverSettings()) -> RawSolution:
    """Operator splitting for ``min ½xᵀPx + qᵀx  s.t.  Ax = b, Gx <= h``.

    Each iteration solves one prefactorized quasi-definite KKT system and one
    interval projection, with over-relaxation ``alpha``.  Equality rows carry
    a stiffer penalty than inequality rows, which speeds their convergence
    without changing the fixed points.
    """
    P, q = data.P, data.q
    n = q.shape[0]
    M = np.vstack([data.A, data.G]) if n else np.zeros((0, 0))
    mA = data.A.shape[0]
    m = M.shape[0]
    lower = np.concatenate([data.b, np.full(data.h.shape, -math.inf)])
    upper = np.concatenate([data.b, data.h])

    if n == 0:
        feasible = bool(np.all(lower <= 1e-9) and np.all(upper >= -1e-9))
        status = Status.OPTIMAL if feasible else Status.INFEASIBLE
        return RawSolution(status, np.zeros(0), 0.0 if feasible else math.inf,
                           0, "" if feasible else "empty problem infeasible")

    rho = np.full(m, settings.rho)
    rho[:mA] *= _EQ_RHO_SCALE
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = P + _SIGMA * np.eye(n)
    if m:
        kkt[:n, n:] = M.T
        kkt[n:, :n] = M
        kkt[n:, n:] = -np.diag(1.0 / rho)
    try:
        factor = scipy.linalg.lu_factor(kkt)
    except (scipy.linalg.LinAlgError, ValueError) as err:
        return RawSolution(Status.ERROR, np.zeros(n), math.nan, 0,
                           f"KKT factorization failed: {err}")

    alpha = settings.alpha
    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    for k in range(1, settings.max_iterations + 1):
        rhs = np.concatenate([_SIGMA * x - q, z - y / rho])
        sol = scipy.linalg.lu_solve(factor, rhs)
        x_hat, nu = sol[:n], sol[n:]
        z_hat = z + (nu - y) / rho if m else z
        x = alpha * x_hat + (1.0 - alpha) * x
        z_relax = alpha * z_hat + (1.0 - alpha) * z
        z = np.clip(z_relax + y / rho, lower, upper)
        y = y + rho * (z_relax - z)
        if k % 25 == 0 or k == settings.max_iterations:
            Mx = M @ x
            r_prim = np.max(np.abs(Mx - z)) if m else 0.0
            dual_vec = P @ x + q + (M.T @ y if m else 0.0)
            r_dual = np.max(np.abs(dual_vec))
            scale_p = max(_inf_norm(Mx), _inf_norm(z))
            scale_d = max(_inf_norm(P @ x), _inf_norm(q),
                          _inf_norm(M.T @ y) if m else 0.0)
            if r_prim <= settings.eps_abs + settings.eps_rel * scale_p \
                    and r_dual <= settings.eps_abs + settings.eps_rel * scale_d:
                value = float(0.5 * x @ P @ x + q @ x)
                return RawSolution(Status.OPTIMAL, x, value, k)
    value = float(0.5 * x @ P @ x + q @ x)
    return RawSolution(Status.ITERATION_LIMIT, x, value,
                       settings.max_iterations, "splitting did not converge")


def _inf_norm(v) -> float:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    return float(np.max(np.abs(arr))) if arr.size else 0.0


def project_cone(v: np.ndarray, cones: ConeDims) -> np.ndarray:
    """Euclidean projection onto Zero x NonNeg x SOC(...) blocks of ``v``."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    cursor = cones.zero
    out[:cursor] = 0.0
    out[cursor:cursor + cones.nonneg] = np.maximum(
        v[cursor:cursor + cones.nonneg], 0.0)
    cursor += cones.nonneg
    for size in cones.soc:
        t = v[cursor]
        x = v[cursor + 1:cursor + size]
        nx = float(np.linalg.norm(x))
        if nx <= t:
            out[cursor:cursor + size] = v[cursor:cursor + size]
        elif nx <= -t:
            out[cursor:cursor + size] = 0.0
        else:
            scale = 0.5 * (1.0 + t / nx)
            out[cursor] = scale * nx
            out[cursor + 1:cursor + size] = scale * x
        cursor += size
    return out


def solve_cone_admm(data: ConeProgramData,
                    settings: SolverSettings = SolverSettings()) -> RawSolution:
    """Operator splitting for ``min cᵀx  s.t.  b - Ax ∈ K``.

    With slack ``s = b - Ax`` the iteration alternates a prefactorized
    regularized normal-equations solve for x, a cone projection for s, and a
    dual ascent step; complementarity ``sᵀy = 0`` holds exactly at every
    iterate by the projection's optimality, so convergence is monitored on
    the primal and dual residuals alone.  Unchecked growth of the slack or
    dual iterates signals an infeasible or unbounded problem, reported as an
    error with a diagnostic (these solvers produce no certificates).
    """
    A, b, c = data.A, data.b, data.c
    m, n = A.shape
    if n == 0:
        s = project_cone(b, data.cones)
        if np.max(np.abs(s - b), initial=0.0) <= settings.eps_abs:
            return RawSolution(Status.OPTIMAL, np.zeros(0), 0.0, 0)
        return RawSolution(Status.INFEASIBLE, np.zeros(0), math.inf, 0,
                           "constant rows violate the cone")

    rho, alpha = settings.rho, settings.alpha
    try:
        chol = scipy.linalg.cho_factor(
            _SIGMA * np.eye(n) + rho * (A.T @ A), lower=True)
    except (scipy.linalg.LinAlgError, ValueError) as err:
        return RawSolution(Status.ERROR, np.zeros(n), math.nan, 0,
                           f"normal-equations factorization failed: {err}")

    x = np.zeros(n)
    s = project_cone(b.copy(), data.cones)
    y = np.zeros(m)
    for k in range(1, settings.max_iterations + 1):
        rhs = _SIGMA * x - c + rho * (A.T @ (b - s - y / rho))
        x = scipy.linalg.cho_solve(chol, rhs)
        Ax = A @ x
        v = alpha * Ax + (1.0 - alpha) * (b - s)
        s = project_cone(b - v - y / rho, data.cones)
        y = y + rho * (v + s - b)
        if k % 25 == 0 or k == settings.max_iterations:
            r_prim = _inf_norm(Ax + s - b)
            r_dual = _inf_norm(c + A.T @ y)
            scale_p = max(_inf_norm(Ax), _inf_norm(s), _inf_norm(b))
            scale_d = max(_inf_norm(c), _inf_norm(A.T @ y))
            if r_prim <= settings.eps_abs + settings.eps_rel * scale_p \
                    and r_dual <= settings.eps_abs + settings.eps_rel * scale_d:
                return RawSolution(Status.OPTIMAL, x, float(c @ x), k)
            if max(_inf_norm(s), _inf_norm(y)) > _DIVERGENCE_LIMIT:
                return RawSolution(
                    Status.ERROR, x, math.nan, k,
                    "iterates diverged; problem may be infeasible or unbounded")
    return RawSolution(Status.ITERATION_LIMIT, x, float(c @ x),
                       settings.max_iterations, "splitting did not converge")

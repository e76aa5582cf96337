"""QP-reducibility analysis and quadratic/linear program stuffing.

A problem reduces to a QP when its objective's root-to-leaf label paths land
in the accepting states of a small finite-state machine and its constraints
are piecewise-linear inequalities plus affine equalities.  Accepted problems
are lowered by eliminating the piecewise-linear atoms, moving constraints to
the left-hand side, and extracting the quadratic form of the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import expressions as ex
from .cone import affine_row_data
from .framework import Reduction, ReductionChain, ReductionError
from .standard import EliminatePwlAtoms, MoveToLhs, is_zero_constant

__all__ = [
    "PathNfa", "objective_label_paths", "qp_applicable", "uses_quadratic_atom",
    "quadratic_form", "QpProgramData", "LpProgramData", "StuffQp", "StuffLp",
    "qp_chain", "canonicalize_qp",
]


class PathNfa:
    """The objective-path machine: states q0..q3, accepting q1..q3.

    Edges: q0 -A> q1, q0 -Q> q2, q0 -P> q3, q1 -A> q1, q1 -Q> q2, q2 -P> q3,
    q3 -P> q3.  There are no N edges, so any norm on a path rejects.  Atoms
    carry label *sets* (affine atoms read as A or P), handled by simulating
    the subset construction instead of enumerating labelings.
    """

    STATES = ("q0", "q1", "q2", "q3")
    START = "q0"
    ACCEPTING = frozenset({"q1", "q2", "q3"})
    EDGES = {
        ("q0", "A"): "q1",
        ("q0", "Q"): "q2",
        ("q0", "P"): "q3",
        ("q1", "A"): "q1",
        ("q1", "Q"): "q2",
        ("q2", "P"): "q3",
        ("q3", "P"): "q3",
    }

    def simulate(self, labels) -> frozenset[str]:
        states = {self.START}
        for labelset in labels:
            if isinstance(labelset, str):
                labelset = (labelset,)
            states = {self.EDGES[s, lab]
                      for s in states for lab in labelset
                      if (s, lab) in self.EDGES}
            if not states:
                break
        return frozenset(states)

    def accepts(self, labels) -> bool:
        """True iff some labeling of the path reaches an accepting state.

        The empty path is rejected (q0 is not accepting); callers that treat
        atomless objectives as affine must special-case them.
        """
        return bool(self.simulate(labels) & self.ACCEPTING)


def objective_label_paths(expr: ex.ExpressionNode) -> list[list[frozenset[str]]]:
    """Label sets along each root-to-variable-leaf path, constants skipped.

    Constant-curvature subtrees contribute no paths: they impose no curvature,
    so the machine never sees them.
    """
    paths: list[list[frozenset[str]]] = []

    def walk(node, prefix):
        if node.curvature.is_constant:
            return
        if node.kind == "var":
            paths.append(prefix)
            return
        labels = ex.ATOM_LABELS[node.atom]
        for child in node.children:
            walk(child, prefix + [labels])

    walk(expr, [])
    return paths


def _labels_within(expr: ex.ExpressionNode, allowed: frozenset[str]) -> bool:
    if expr.curvature.is_constant or expr.kind != "atom":
        return True
    if not ex.ATOM_LABELS[expr.atom] <= allowed:
        return False
    return all(_labels_within(c, allowed) for c in expr.children)


_PWL_LABELS = frozenset({"A", "P"})


def uses_quadratic_atom(problem: ex.ProblemForm) -> bool:
    """True when a Q-labeled atom appears outside constant subtrees."""

    def scan(expr):
        if expr.curvature.is_constant or expr.kind != "atom":
            return False
        if "Q" in ex.ATOM_LABELS[expr.atom]:
            return True
        return any(scan(c) for c in expr.children)

    return any(scan(e) for _, e in ex.walk_expressions(problem))


def qp_applicable(problem: ex.ProblemForm) -> bool:
    """QP-reducibility: DCP + PWL constraints + NFA-accepted objective paths."""
    ok, _ = ex.is_dcp(problem)
    if not ok:
        return False
    for c in problem.constraints:
        if c.relation is ex.Relation.EQ:
            if not (c.lhs.curvature.is_affine and c.rhs.curvature.is_affine):
                return False
        else:
            if not (_labels_within(c.lhs, _PWL_LABELS)
                    and _labels_within(c.rhs, _PWL_LABELS)):
                return False
    nfa = PathNfa()
    # A path with zero atoms is a bare variable objective: affine, accepted.
    return all(not path or nfa.accepts(path)
               for path in objective_label_paths(problem.objective))


def _as_rows(parts, width):
    T, Q, k = parts
    return (np.asarray(T, dtype=float), np.asarray(Q, dtype=float),
            np.asarray(k, dtype=float))


def _broadcast_rows(parts, dim):
    T, Q, k = parts
    if T.shape[0] == dim:
        return parts
    return (np.broadcast_to(T, (dim,) + T.shape[1:]),
            np.broadcast_to(Q, (dim,) + Q.shape[1:]),
            np.broadcast_to(k, (dim,)))


def _quad_pieces(expr, var_offsets, width):
    """Per-row quadratic data (T, Q, k): row i equals ½xᵀT_i x + Q_i x + k_i."""
    d = expr.dim
    zero = lambda: (np.zeros((d, width, width)), np.zeros((d, width)),
                    np.zeros(d))
    if expr.kind == "const":
        T, Q, k = zero()
        k[:] = expr.payload
        return T, Q, k
    if expr.kind == "var":
        T, Q, k = zero()
        start, length = var_offsets[expr.var_id]
        Q[np.arange(d), start + np.arange(d)] = 1.0
        return T, Q, k
    if expr.curvature.is_constant:
        T, Q, k = zero()
        k[:] = ex.evaluate(expr, {})
        return T, Q, k
    atom = expr.atom
    if atom in ("square", "sum_squares"):
        y = expr.children[0]
        try:
            M, c = affine_row_data(y, var_offsets, width)
        except ex.NotAffineError as err:
            raise ReductionError(
                f"atom '{err.node.atom}' below a quadratic node has no "
                f"constant-Hessian form") from err
        if atom == "square":
            T = 2.0 * np.einsum("ij,ik->ijk", M, M)
            Q = 2.0 * c[:, None] * M
            return T, Q, c ** 2
        P = 2.0 * M.T @ M
        q = 2.0 * M.T @ c
        return P[None, :, :], q[None, :], np.array([float(c @ c)])
    if atom in ("add", "sub"):
        a = _broadcast_rows(_quad_pieces(expr.children[0], var_offsets, width), d)
        b = _broadcast_rows(_quad_pieces(expr.children[1], var_offsets, width), d)
        sign = 1.0 if atom == "add" else -1.0
        return (a[0] + sign * b[0], a[1] + sign * b[1], a[2] + sign * b[2])
    if atom == "neg":
        T, Q, k = _quad_pieces(expr.children[0], var_offsets, width)
        return -T, -Q, -k
    if atom == "sum":
        T, Q, k = _quad_pieces(expr.children[0], var_offsets, width)
        return (T.sum(axis=0, keepdims=True), Q.sum(axis=0, keepdims=True),
                k.sum(keepdims=True))
    if atom == "index":
        i = expr.param
        T, Q, k = _quad_pieces(expr.children[0], var_offsets, width)
        return T[i:i + 1], Q[i:i + 1], k[i:i + 1]
    if atom == "mul_const":
        const_first = expr.children[0].curvature.is_constant
        cside = expr.children[0] if const_first else expr.children[1]
        other = expr.children[1] if const_first else expr.children[0]
        cval = ex.evaluate(cside, {})
        parts = _broadcast_rows(_quad_pieces(other, var_offsets, width), d)
        scale = np.broadcast_to(cval, (d,))
        return (scale[:, None, None] * parts[0], scale[:, None] * parts[1],
                scale * parts[2])
    raise ReductionError(f"atom '{atom}' has no quadratic form")


def quadratic_form(expr: ex.ExpressionNode,
                   var_offsets: dict[int, tuple[int, int]],
                   width: int) -> tuple[np.ndarray, np.ndarray, float]:
    """(P, q, r) with ``expr == ½xᵀPx + qᵀx + r`` for a scalar expression."""
    if expr.dim != 1:
        raise ReductionError("quadratic extraction needs a scalar expression")
    T, Q, k = _quad_pieces(expr, var_offsets, width)
    P = T[0]
    return 0.5 * (P + P.T), Q[0], float(k[0])


@dataclass(frozen=True)
class QpProgramData:
    """minimize ½xᵀPx + qᵀx + r  subject to  Gx <= h, Ax == b."""

    P: np.ndarray
    q: np.ndarray
    r: float
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    var_offsets: dict[int, tuple[int, int]]
    variables: tuple[ex.VariableDecl, ...]

    @property
    def num_vars(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class LpProgramData:
    """minimize cᵀx + offset  subject to  Gx <= h, Ax == b."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    offset: float
    var_offsets: dict[int, tuple[int, int]]
    variables: tuple[ex.VariableDecl, ...]

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]


def _stack_moved_constraints(problem):
    """(G, h, A, b, var_offsets, width) from a moved-to-LHS problem."""
    var_offsets: dict[int, tuple[int, int]] = {}
    cursor = 0
    for v in problem.variables:
        var_offsets[v.id] = (cursor, v.dim)
        cursor += v.dim
    width = cursor
    ineq_rows, eq_rows = [], []
    for c in problem.constraints:
        M, k = affine_row_data(c.lhs, var_offsets, width)
        if c.lhs.dim != c.dim:  # scalar side of a broadcast constraint
            M = np.broadcast_to(M, (c.dim, width))
            k = np.broadcast_to(k, (c.dim,))
        target = eq_rows if c.relation is ex.Relation.EQ else ineq_rows
        target.append((M, -k))
    def stack(rows):
        if rows:
            return (np.vstack([M for M, _ in rows]),
                    np.concatenate([k for _, k in rows]))
        return np.zeros((0, width)), np.zeros(0)
    G, h = stack(ineq_rows)
    A, b = stack(eq_rows)
    return G, h, A, b, var_offsets, width


def _is_moved_form(problem) -> bool:
    return all(c.relation is not ex.Relation.GE and is_zero_constant(c.rhs)
               and c.lhs.curvature.is_affine for c in problem.constraints)


def _quadratic_tree(expr) -> bool:
    """True when the tree is affine combinations of squares of affine terms."""
    if expr.kind != "atom" or expr.curvature.is_constant:
        return True
    desc = ex.ATOMS[expr.atom]
    if expr.atom in ("square", "sum_squares"):
        return expr.children[0].curvature.is_affine
    if desc.curvature_class is ex.Curvature.AFFINE:
        return all(_quadratic_tree(c) for c in expr.children)
    return False


class StuffQp(Reduction):
    """Stuff a PWL-free, moved-to-LHS problem into QP matrices."""

    name = "stuff_qp"

    def accepts(self, problem) -> bool:
        if not isinstance(problem, ex.ProblemForm) \
                or problem.sense is not ex.Sense.MINIMIZE:
            return False
        return _quadratic_tree(problem.objective) and _is_moved_form(problem)

    def apply(self, problem):
        self._check(problem)
        G, h, A, b, var_offsets, width = _stack_moved_constraints(problem)
        P, q, r = quadratic_form(problem.objective, var_offsets, width)
        data = QpProgramData(P, q, r, G, h, A, b, var_offsets,
                             tuple(problem.variables))
        return data, self._record()

    def retrieve(self, solution, record):
        return solution


class StuffLp(Reduction):
    """Stuff an affine-objective, moved-to-LHS problem into LP matrices."""

    name = "stuff_lp"

    def accepts(self, problem) -> bool:
        if not isinstance(problem, ex.ProblemForm) \
                or problem.sense is not ex.Sense.MINIMIZE:
            return False
        return problem.objective.curvature.is_affine and _is_moved_form(problem)

    def apply(self, problem):
        self._check(problem)
        G, h, A, b, var_offsets, width = _stack_moved_constraints(problem)
        crow, const = affine_row_data(problem.objective, var_offsets, width)
        data = LpProgramData(crow[0], G, h, A, b, float(const[0]),
                             var_offsets, tuple(problem.variables))
        return data, self._record()

    def retrieve(self, solution, record):
        return solution


def qp_chain() -> ReductionChain:
    """The QP lowering pipeline: drop PWL atoms, move to LHS, stuff matrices."""
    return ReductionChain([EliminatePwlAtoms(), MoveToLhs(), StuffQp()])


def canonicalize_qp(problem: ex.ProblemForm):
    """Lower a QP-applicable problem to QpProgramData via the standard chain."""
    if not qp_applicable(problem):
        raise ReductionError("problem is not QP-applicable")
    return qp_chain().apply(problem)

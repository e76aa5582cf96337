"""Conic canonicalization: Smith form, relaxation, graph expansion, stuffing.

The pipeline lowers a DCP problem to ``minimize c'x + offset  s.t.  b - Ax in
K`` where K stacks a zero cone, a nonnegative orthant, and second-order cones,
in that fixed block order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import expressions as ex
from .framework import Reduction, ReductionError, Solution
from .standard import CanonConstraint, CanonStage, smart_sub

__all__ = [
    "SmithProblem", "SmithTransform", "RelaxSmith", "GraphExpand",
    "ConeDims", "ConeProgramData", "StuffCone", "affine_row_data",
]


@dataclass(frozen=True)
class SmithProblem:
    """A problem whose nonlinear atoms all sit in defining constraints t == f.

    ``aux_atoms`` maps each fresh variable id to the atom expression it
    replaced (with already-smithed, affine arguments); ``aux_sigma`` records
    the scaling sign of the replaced occurrence, used to pick the relaxation
    direction.  ``source`` keeps the pre-transform problem for DCP gating.
    """

    problem: ex.ProblemForm
    source: ex.ProblemForm
    aux_atoms: dict[int, ex.ExpressionNode] = field(default_factory=dict)
    aux_sigma: dict[int, int] = field(default_factory=dict)


_ROOT_FLAGS = {
    ex.Relation.LE: (+1, -1),
    ex.Relation.GE: (-1, +1),
    ex.Relation.EQ: (0, 0),
}


class SmithTransform(Reduction):
    """Pull every nonlinear atom application into a ``t == atom(args)`` row.

    Affine subtrees (constants included) are kept intact, so the output is the
    pragmatic Smith form: every atom in the transformed problem has affine
    arguments.  Defining constraints for the objective come first, then each
    user constraint follows its own defining rows; within one expression,
    inner atoms are defined before the atoms that use them.
    """

    name = "smith_transform"

    def accepts(self, problem) -> bool:
        return isinstance(problem, ex.ProblemForm)

    def apply(self, problem):
        self._check(problem)
        names = {v.name for v in problem.variables}
        variables = list(problem.variables)
        state = {"next_id": ex.next_free_ids(problem)}
        aux_atoms: dict[int, ex.ExpressionNode] = {}
        aux_sigma: dict[int, int] = {}

        def replace(expr, sigma, defs):
            if expr.kind != "atom" or expr.curvature.is_affine:
                return expr
            desc = ex.ATOMS[expr.atom]
            nonlinear = desc.curvature_class is not ex.Curvature.AFFINE
            aux = None
            if nonlinear:
                aux = ex.fresh_variable(names, state["next_id"], "_t", expr.dim)
                state["next_id"] += 1
                names.add(aux.name)
                variables.append(aux)
            children = tuple(
                replace(child, sigma * desc.monotonicity(expr.children, i),
                        defs)
                for i, child in enumerate(expr.children))
            if not nonlinear:
                if children == expr.children:
                    return expr
                if expr.atom == "mul_const":
                    return ex.mul(children[0], children[1])
                return ex._apply_atom(expr.atom, children, expr.param)
            body = ex._apply_atom(expr.atom, children, expr.param)
            defs.append((ex.var_ref(aux), ex.Relation.EQ, body))
            aux_atoms[aux.id] = body
            aux_sigma[aux.id] = sigma
            return ex.var_ref(aux)

        root = +1 if problem.sense is ex.Sense.MINIMIZE else -1
        cons: list = []
        objective = replace(problem.objective, root, cons)
        for c in problem.constraints:
            fl, fr = _ROOT_FLAGS[c.relation]
            local: list = []
            lhs = replace(c.lhs, fl, local)
            rhs = replace(c.rhs, fr, local)
            cons.extend(local)
            cons.append((lhs, c.relation, rhs))
        out = ex.make_problem(problem.sense, objective, cons, variables)
        smith = SmithProblem(out, problem, aux_atoms, aux_sigma)
        return smith, self._record(aux=sorted(aux_atoms))

    def retrieve(self, solution, record):
        drop = set(record.payload["aux"])
        primal = {k: v for k, v in solution.primal.items() if k not in drop}
        return Solution(solution.status, solution.value, primal,
                        solution.message)


class RelaxSmith(Reduction):
    """Relax each defining equality ``t == f(args)`` to ``f(args) <= t``.

    Every nonlinear atom in the set is convex, so the epigraph direction is
    the only one needed; it is valid exactly when the replaced occurrence had
    positive scaling, which the DCP gate plus the sigma check enforce.  At an
    optimum the relaxation is tight, so dropping the epigraph variables
    retrieves a solution of the unrelaxed problem.
    """

    name = "relax_smith"

    def accepts(self, smith) -> bool:
        if not isinstance(smith, SmithProblem):
            return False
        ok, _ = ex.is_dcp(smith.source)
        if not ok:
            return False
        return all(sigma == +1 for sigma in smith.aux_sigma.values())

    def apply(self, smith):
        self._check(smith)
        inner = smith.problem
        cons = []
        for c in inner.constraints:
            if c.relation is ex.Relation.EQ and c.lhs.kind == "var" \
                    and c.lhs.var_id in smith.aux_atoms:
                cons.append((c.rhs, ex.Relation.LE, c.lhs))
            else:
                cons.append((c.lhs, c.relation, c.rhs))
        out = ex.make_problem(inner.sense, inner.objective, cons,
                              inner.variables)
        return out, self._record()

    def retrieve(self, solution, record):
        return solution


def _components(e: ex.ExpressionNode) -> list[ex.ExpressionNode]:
    if e.dim == 1:
        return [e]
    return [ex.index(e, i) for i in range(e.dim)]


class GraphExpand(Reduction):
    """Swap each relaxed atom inequality for its cone-constraint graph.

    Affine constraints map directly (EQ to a zero cone, LE/GE to the
    nonnegative orthant); ``abs``/``max`` produce orthant rows, ``norm2`` a
    second-order cone, and ``square``/``sum_squares`` the standard embedding
    ``norm2((2y, 1-t)) <= 1+t``, row by row for the elementwise ``square``.
    """

    name = "graph_expand"

    def accepts(self, problem) -> bool:
        if not isinstance(problem, ex.ProblemForm):
            return False
        if not problem.objective.curvature.is_affine:
            return False
        for c in problem.constraints:
            if c.lhs.curvature.is_affine and c.rhs.curvature.is_affine:
                continue
            if c.relation is ex.Relation.LE and c.lhs.kind == "atom" \
                    and c.rhs.curvature.is_affine \
                    and all(a.curvature.is_affine for a in c.lhs.children):
                continue
            return False
        return True

    def apply(self, problem):
        self._check(problem)
        one = ex.constant(1.0)
        two = ex.constant(2.0)
        cones: list[CanonConstraint] = []

        def emit(kind, *args):
            cones.append(getattr(CanonConstraint, kind)(len(cones), *args))

        for c in problem.constraints:
            if c.lhs.curvature.is_affine and c.rhs.curvature.is_affine:
                if c.relation is ex.Relation.EQ:
                    emit("zero", smart_sub(c.lhs, c.rhs))
                elif c.relation is ex.Relation.LE:
                    emit("nonneg", smart_sub(c.rhs, c.lhs))
                else:
                    emit("nonneg", smart_sub(c.lhs, c.rhs))
                continue
            t, f = c.rhs, c.lhs
            if f.atom == "abs":
                (y,) = f.children
                emit("nonneg", smart_sub(t, y))
                emit("nonneg", ex.add(t, y))
            elif f.atom == "max":
                for y in f.children:
                    emit("nonneg", smart_sub(t, y))
            elif f.atom == "norm2":
                (y,) = f.children
                emit("soc", t, (y,))
            elif f.atom == "sum_squares":
                (y,) = f.children
                emit("soc", ex.add(one, t), (ex.mul(two, y), smart_sub(one, t)))
            elif f.atom == "square":
                (y,) = f.children
                for yi, ti in zip(_components(y), _components(t)):
                    emit("soc", ex.add(one, ti),
                         (ex.mul(two, yi), smart_sub(one, ti)))
            else:  # pragma: no cover - the atom set is closed
                raise ReductionError(
                    f"no graph implementation for atom '{f.atom}'")
        stage = CanonStage(problem.objective, tuple(cones),
                           tuple(problem.variables))
        return stage, self._record()

    def retrieve(self, solution, record):
        return solution


@dataclass(frozen=True)
class ConeDims:
    """Row counts of the stacked cone: zero, nonneg, then SOC dimensions."""

    zero: int
    nonneg: int
    soc: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.zero + self.nonneg + sum(self.soc)


@dataclass(frozen=True)
class ConeProgramData:
    """minimize c'x + offset  subject to  b - Ax in K."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: ConeDims
    offset: float
    var_offsets: dict[int, tuple[int, int]]
    variables: tuple[ex.VariableDecl, ...]

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]


def affine_row_data(expr: ex.ExpressionNode,
                    var_offsets: dict[int, tuple[int, int]],
                    width: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense rows M and constant k with ``expr == M x + k`` over the stack."""
    coeffs, const = ex.affine_coefficients(expr)
    M = np.zeros((expr.dim, width))
    for vid, block in coeffs.items():
        start, length = var_offsets[vid]
        M[:, start:start + length] = block
    return M, const


class StuffCone(Reduction):
    """Stuff a canon stage into dense cone-program matrices.

    Variables stack in declaration-then-creation order; rows stack the zero
    block, then nonneg, then the SOCs (each ``(t, x...)``), every block
    preserving constraint order.  The slack identity is ``s == b - Ax`` with
    ``s`` the constraint expression itself, so zero rows carry ``A = M,
    b = -k`` and the orthant/SOC rows ``A = -M, b = k``.
    """

    name = "stuff_cone"

    def accepts(self, stage) -> bool:
        if not isinstance(stage, CanonStage):
            return False
        if not stage.objective.curvature.is_affine:
            return False
        for cone in stage.constraints:
            exprs = (cone.expr,) if cone.kind != "soc" else (cone.t,) + cone.x
            if not all(e.curvature.is_affine for e in exprs):
                return False
        return True

    def apply(self, stage):
        self._check(stage)
        var_offsets: dict[int, tuple[int, int]] = {}
        cursor = 0
        for v in stage.variables:
            var_offsets[v.id] = (cursor, v.dim)
            cursor += v.dim
        width = cursor

        def rows_of(exprs, sign):
            for e in exprs:
                M, k = affine_row_data(e, var_offsets, width)
                yield sign * M, -sign * k

        zero = [c for c in stage.constraints if c.kind == "zero"]
        nonneg = [c for c in stage.constraints if c.kind == "nonneg"]
        soc = [c for c in stage.constraints if c.kind == "soc"]
        blocks = []
        blocks.extend(rows_of((c.expr for c in zero), +1.0))
        blocks.extend(rows_of((c.expr for c in nonneg), -1.0))
        for cone in soc:
            blocks.extend(rows_of((cone.t,) + cone.x, -1.0))
        if blocks:
            A = np.vstack([M for M, _ in blocks])
            b = np.concatenate([k for _, k in blocks])
        else:
            A = np.zeros((0, width))
            b = np.zeros(0)
        c_row, offset = affine_row_data(stage.objective, var_offsets, width)
        dims = ConeDims(sum(c.expr.dim for c in zero),
                        sum(c.expr.dim for c in nonneg),
                        tuple(1 + c.soc_x_dim for c in soc))
        data = ConeProgramData(c_row[0], A, b, dims, float(offset[0]),
                               var_offsets, tuple(stage.variables))
        return data, self._record()

    def retrieve(self, solution, record):
        return solution

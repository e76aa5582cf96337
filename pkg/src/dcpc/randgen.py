"""Seeded random DCP problem generators for property suites and experiments.

Every generator takes a ``numpy.random.Generator`` so suites are reproducible.
Problems come out bounded and feasible by construction: objectives are
nonnegative combinations of convex pieces, every variable gets box rows, and
extra inequality rows keep the origin feasible.
"""

from __future__ import annotations

import numpy as np

from . import expressions as ex

__all__ = ["random_affine", "random_pwl_problem", "random_qp_problem",
           "random_cone_problem", "grid_oracle_problem"]


def random_affine(rng, variables, allow_constant=True) -> ex.ExpressionNode:
    """A random scalar affine expression with small rounded coefficients."""
    expr = None
    for decl in variables:
        coef = float(np.round(rng.uniform(-2.0, 2.0), 2))
        if abs(coef) < 0.25 and not rng.integers(3):
            continue
        term = ex.var_ref(decl)
        if decl.dim > 1:
            term = ex.index(term, int(rng.integers(decl.dim)))
        if coef != 1.0:
            term = ex.mul(ex.constant(coef), term)
        expr = term if expr is None else ex.add(expr, term)
    if expr is None:
        expr = ex.var_ref(variables[int(rng.integers(len(variables)))])
        if expr.dim > 1:
            expr = ex.index(expr, 0)
    if allow_constant and rng.integers(2):
        expr = ex.add(expr, ex.constant(float(np.round(rng.uniform(-1.5, 1.5), 2))))
    return expr


def _pwl_piece(rng, variables) -> ex.ExpressionNode:
    kind = rng.integers(3)
    if kind == 0:
        return ex.abs_(random_affine(rng, variables))
    if kind == 1:
        args = [random_affine(rng, variables)
                for _ in range(int(rng.integers(2, 4)))]
        return ex.max_(*args)
    return random_affine(rng, variables)


def _quadratic_piece(rng, variables) -> ex.ExpressionNode:
    if rng.integers(2):
        return ex.square(random_affine(rng, variables))
    decl = variables[int(rng.integers(len(variables)))]
    arg = ex.var_ref(decl)
    if rng.integers(2):
        arg = ex.sub(arg, ex.constant(np.round(rng.uniform(-1.0, 1.0, decl.dim), 2)))
    return ex.sum_squares(arg)


def _norm_piece(rng, variables) -> ex.ExpressionNode:
    decl = variables[int(rng.integers(len(variables)))]
    arg = ex.var_ref(decl)
    if rng.integers(2):
        arg = ex.sub(arg, ex.constant(np.round(rng.uniform(-1.0, 1.0, decl.dim), 2)))
    return ex.norm2(arg)


def _combine(rng, pieces) -> ex.ExpressionNode:
    expr = None
    for piece in pieces:
        weight = float(np.round(rng.uniform(0.3, 2.0), 2))
        term = ex.mul(ex.constant(weight), piece)
        expr = term if expr is None else ex.add(expr, term)
    return expr


def _declare(rng, num_vars, vector_ok=False):
    decls = []
    for i in range(num_vars):
        dim = int(rng.choice([1, 1, 2])) if vector_ok else 1
        decls.append(ex.VariableDecl(i, f"x{i}", dim))
    return decls


def _box_and_extras(rng, decls, fixing_ok=True):
    cons = []
    for decl in decls:
        bound = float(rng.integers(2, 5))
        cons.append((ex.var_ref(decl), ex.Relation.LE, ex.constant(np.full(decl.dim, bound))))
        cons.append((ex.var_ref(decl), ex.Relation.GE, ex.constant(np.full(decl.dim, -bound))))
    for _ in range(int(rng.integers(0, 3))):
        row = random_affine(rng, decls, allow_constant=False)
        rhs = float(np.round(abs(rng.normal(scale=2.0)) + 0.5, 2))
        if rng.integers(2):
            cons.append((row, ex.Relation.LE, ex.constant(rhs)))
        else:
            cons.append((row, ex.Relation.GE, ex.constant(-rhs)))
    if fixing_ok and len(decls) > 1 and not rng.integers(3):
        decl = decls[int(rng.integers(len(decls)))]
        val = np.round(rng.uniform(-1.0, 1.0, decl.dim), 2)
        cons.append((ex.var_ref(decl), ex.Relation.EQ, ex.constant(val)))
    if cons and not rng.integers(3):
        cons.append(cons[int(rng.integers(len(cons)))])  # redundant duplicate
    return cons


def _assemble(rng, decls, pieces, maximize):
    objective = _combine(rng, pieces)
    cons = _box_and_extras(rng, decls)
    if maximize:
        objective = ex.neg(objective)
        return ex.make_problem(ex.Sense.MAXIMIZE, objective, cons, decls)
    return ex.make_problem(ex.Sense.MINIMIZE, objective, cons, decls)


def random_pwl_problem(rng, num_vars=2, maximize=False) -> ex.ProblemForm:
    """A bounded, feasible problem in the piecewise-linear (LP) fragment."""
    decls = _declare(rng, num_vars)
    pieces = [_pwl_piece(rng, decls) for _ in range(int(rng.integers(1, 4)))]
    return _assemble(rng, decls, pieces, maximize)


def random_qp_problem(rng, num_vars=2, maximize=False) -> ex.ProblemForm:
    """A bounded, feasible problem whose objective mixes squares and PWL terms."""
    decls = _declare(rng, num_vars, vector_ok=True)
    pieces = [_quadratic_piece(rng, decls)]
    pieces += [_pwl_piece(rng, decls) for _ in range(int(rng.integers(0, 3)))]
    return _assemble(rng, decls, pieces, maximize)


def random_cone_problem(rng, num_vars=2, maximize=False) -> ex.ProblemForm:
    """A bounded, feasible problem using norms, squares, and PWL pieces."""
    decls = _declare(rng, num_vars, vector_ok=True)
    pieces = [_norm_piece(rng, decls)]
    if rng.integers(2):
        pieces.append(_quadratic_piece(rng, decls))
    pieces += [_pwl_piece(rng, decls) for _ in range(int(rng.integers(0, 2)))]
    return _assemble(rng, decls, pieces, maximize)


def grid_oracle_problem(rng, num_vars=None):
    """An unconstrained, coordinate-separable problem with an interior optimum.

    Returns ``(problem, parts)`` where ``parts[i]`` is the convex piece
    depending only on variable i; the objective is their sum.  Each piece has
    a square term centered inside [-1.5, 1.5], so the optimum lies strictly
    inside the [-3, 3]^k box that grid oracles sweep.
    """
    if num_vars is None:
        num_vars = int(rng.integers(1, 4))
    decls = [ex.VariableDecl(i, f"x{i}") for i in range(num_vars)]
    parts = []
    for decl in decls:
        x = ex.var_ref(decl)
        center = float(np.round(rng.uniform(-1.5, 1.5), 2))
        w_sq = float(np.round(rng.uniform(0.3, 1.5), 2))
        piece = ex.mul(ex.constant(w_sq),
                       ex.square(ex.sub(x, ex.constant(center))))
        if rng.integers(2):
            c2 = float(np.round(rng.uniform(-1.5, 1.5), 2))
            w2 = float(np.round(rng.uniform(0.2, 1.0), 2))
            wrap = ex.norm2 if rng.integers(2) else ex.abs_
            piece = ex.add(piece, ex.mul(ex.constant(w2),
                                         wrap(ex.sub(x, ex.constant(c2)))))
        if rng.integers(2):
            args = [ex.sub(x, ex.constant(float(np.round(rng.uniform(-1.5, 1.5), 2)))),
                    ex.sub(ex.constant(float(np.round(rng.uniform(-1.5, 1.5), 2))), x)]
            w3 = float(np.round(rng.uniform(0.2, 0.8), 2))
            piece = ex.add(piece, ex.mul(ex.constant(w3), ex.max_(*args)))
        slope = float(np.round(rng.uniform(-0.2, 0.2) * w_sq, 3))
        if slope:
            piece = ex.add(piece, ex.mul(ex.constant(slope), x))
        parts.append(piece)
    objective = parts[0]
    for piece in parts[1:]:
        objective = ex.add(objective, piece)
    problem = ex.make_problem(ex.Sense.MINIMIZE, objective, [], decls)
    return problem, parts

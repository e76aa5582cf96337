"""Expression trees for desk-scale convex optimization problems.

Variables, constants, and atom applications form immutable trees.  Every node
caches its dimension, curvature, and sign at construction time, so convexity
verification is a table lookup once a problem has been built.  The data model
is deliberately small: scalars and dense real vectors only, eleven atoms, and
three constraint relations.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Curvature",
    "Sign",
    "Sense",
    "Relation",
    "ExpressionError",
    "EvaluationError",
    "NotAffineError",
    "ProblemError",
    "VariableDecl",
    "ExpressionNode",
    "ConstraintDecl",
    "ProblemForm",
    "AtomDescriptor",
    "ATOMS",
    "ATOM_LABELS",
    "constant",
    "var_ref",
    "add",
    "sub",
    "neg",
    "mul",
    "index",
    "sum_",
    "max_",
    "abs_",
    "square",
    "sum_squares",
    "norm2",
    "evaluate",
    "affine_coefficients",
    "is_dcp",
    "make_problem",
    "problem_variable",
    "next_free_ids",
    "fresh_variable",
    "walk_expressions",
    "substitute_variables",
]


class ExpressionError(ValueError):
    """Raised for malformed expression constructions (shape, arity, operands)."""


class EvaluationError(ValueError):
    """Raised when an expression cannot be evaluated under an assignment."""


class NotAffineError(ValueError):
    """Raised when affine coefficients are requested for a nonlinear tree."""

    def __init__(self, node: "ExpressionNode"):
        self.node = node
        super().__init__(f"expression is not affine: atom '{node.atom}' is nonlinear")


class ProblemError(ValueError):
    """Raised for malformed problem constructions."""


class Curvature(Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    @property
    def is_constant(self) -> bool:
        return self is Curvature.CONSTANT

    @property
    def is_affine(self) -> bool:
        # Constant functions are affine under the refinement partial order.
        return self in (Curvature.CONSTANT, Curvature.AFFINE)

    @property
    def is_convex(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONVEX)

    @property
    def is_concave(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONCAVE)


class Sign(Enum):
    ZERO = "zero"
    NONNEGATIVE = "nonnegative"
    NONPOSITIVE = "nonpositive"
    UNKNOWN = "unknown"

    @property
    def is_nonnegative(self) -> bool:
        return self in (Sign.ZERO, Sign.NONNEGATIVE)

    @property
    def is_nonpositive(self) -> bool:
        return self in (Sign.ZERO, Sign.NONPOSITIVE)


def _sign_of_interval(nonneg: bool, nonpos: bool) -> Sign:
    if nonneg and nonpos:
        return Sign.ZERO
    if nonneg:
        return Sign.NONNEGATIVE
    if nonpos:
        return Sign.NONPOSITIVE
    return Sign.UNKNOWN


def _negate_sign(s: Sign) -> Sign:
    if s is Sign.NONNEGATIVE:
        return Sign.NONPOSITIVE
    if s is Sign.NONPOSITIVE:
        return Sign.NONNEGATIVE
    return s


class Sense(Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Relation(Enum):
    LE = "<="
    GE = ">="
    EQ = "=="


@dataclass(frozen=True)
class VariableDecl:
    """A declared optimization variable: scalar (dim 1) or dense real vector."""

    id: int
    name: str
    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ExpressionError(f"variable '{self.name}' needs dim >= 1, got {self.dim}")
        if not self.name:
            raise ExpressionError("variable name must be nonempty")


# Per-argument monotonicity markers used by the composition rule.
_INCREASING = +1
_DECREASING = -1
_NONMONOTONE = 0


@dataclass(frozen=True)
class AtomDescriptor:
    """Static metadata for one atom: shape, curvature class, labels, rules.

    ``monotonicity`` resolves the per-argument direction for a concrete list
    of children (sign-dependent atoms inspect their argument's sign, and
    ``mul_const`` inspects the constant operand).
    """

    name: str
    arity_min: int
    arity_max: int  # -1 means unbounded
    curvature_class: Curvature  # AFFINE or CONVEX in this atom set
    labels: frozenset[str]
    result_dim: Callable[[Sequence["ExpressionNode"], int | None], int]
    sign_rule: Callable[[Sequence["ExpressionNode"]], Sign]
    monotonicity: Callable[[Sequence["ExpressionNode"], int], int]


def _broadcast_dim(children: Sequence["ExpressionNode"], where: str) -> int:
    dims = {c.dim for c in children if c.dim != 1}
    if len(dims) > 1:
        raise ExpressionError(f"dimension mismatch in '{where}': operand dims {sorted(d for d in dims)}")
    return dims.pop() if dims else 1


def _sign_add(children) -> Sign:
    nonneg = all(c.sign.is_nonnegative for c in children)
    nonpos = all(c.sign.is_nonpositive for c in children)
    return _sign_of_interval(nonneg, nonpos)


def _sign_sub(children) -> Sign:
    a, b = children[0].sign, _negate_sign(children[1].sign)
    return _sign_of_interval(
        a.is_nonnegative and b.is_nonnegative,
        a.is_nonpositive and b.is_nonpositive,
    )


def _sign_neg(children) -> Sign:
    return _negate_sign(children[0].sign)


def _sign_mul(children) -> Sign:
    a, b = children[0].sign, children[1].sign
    if a is Sign.ZERO or b is Sign.ZERO:
        return Sign.ZERO
    if a is Sign.UNKNOWN or b is Sign.UNKNOWN:
        return Sign.UNKNOWN
    if a is b:
        return Sign.NONNEGATIVE
    return Sign.NONPOSITIVE


def _sign_passthrough(children) -> Sign:
    return children[0].sign


def _sign_max(children) -> Sign:
    lower_nonneg = any(c.sign.is_nonnegative for c in children)
    upper_nonpos = all(c.sign.is_nonpositive for c in children)
    return _sign_of_interval(lower_nonneg, upper_nonpos)


def _sign_nonneg_image(children) -> Sign:
    # abs, square, sum_squares, norm2: zero exactly when the argument is zero.
    if children[0].sign is Sign.ZERO:
        return Sign.ZERO
    return Sign.NONNEGATIVE


def _mono_increasing(children, i) -> int:
    return _INCREASING


def _mono_sub(children, i) -> int:
    return _INCREASING if i == 0 else _DECREASING


def _mono_decreasing(children, i) -> int:
    return _DECREASING


def _mono_sign_dependent(children, i) -> int:
    # abs/square/sum_squares/norm2 grow away from zero: increasing on a
    # nonnegative argument, decreasing on a nonpositive one.
    s = children[i].sign
    if s.is_nonnegative:
        return _INCREASING
    if s is Sign.NONPOSITIVE:
        return _DECREASING
    return _NONMONOTONE


def _mul_constant_side(children) -> "ExpressionNode":
    if children[0].curvature.is_constant:
        return children[0]
    return children[1]


def _mono_mul(children, i) -> int:
    if children[i].curvature.is_constant:
        return _INCREASING  # irrelevant: constant operands impose nothing
    c = _mul_constant_side(children)
    if c.sign.is_nonnegative:
        return _INCREASING
    if c.sign is Sign.NONPOSITIVE:
        return _DECREASING
    return _NONMONOTONE


def _dim_broadcast(children, param) -> int:
    return _broadcast_dim(children, "broadcast")


def _dim_same(children, param) -> int:
    return children[0].dim


def _dim_scalar(children, param) -> int:
    return 1


def _dim_index(children, param) -> int:
    if param is None or not (0 <= param < children[0].dim):
        raise ExpressionError(
            f"index {param} out of range for dimension {children[0].dim}"
        )
    return 1


ATOMS: dict[str, AtomDescriptor] = {
    "add": AtomDescriptor("add", 2, 2, Curvature.AFFINE, frozenset("AP"),
                          _dim_broadcast, _sign_add, _mono_increasing),
    "sub": AtomDescriptor("sub", 2, 2, Curvature.AFFINE, frozenset("AP"),
                          _dim_broadcast, _sign_sub, _mono_sub),
    "neg": AtomDescriptor("neg", 1, 1, Curvature.AFFINE, frozenset("AP"),
                          _dim_same, _sign_neg, _mono_decreasing),
    "mul_const": AtomDescriptor("mul_const", 2, 2, Curvature.AFFINE, frozenset("AP"),
                                _dim_broadcast, _sign_mul, _mono_mul),
    "index": AtomDescriptor("index", 1, 1, Curvature.AFFINE, frozenset("AP"),
                            _dim_index, _sign_passthrough, _mono_increasing),
    "sum": AtomDescriptor("sum", 1, 1, Curvature.AFFINE, frozenset("AP"),
                          _dim_scalar, _sign_passthrough, _mono_increasing),
    "max": AtomDescriptor("max", 2, -1, Curvature.CONVEX, frozenset("P"),
                          _dim_broadcast, _sign_max, _mono_increasing),
    "abs": AtomDescriptor("abs", 1, 1, Curvature.CONVEX, frozenset("P"),
                          _dim_same, _sign_nonneg_image, _mono_sign_dependent),
    "square": AtomDescriptor("square", 1, 1, Curvature.CONVEX, frozenset("Q"),
                             _dim_same, _sign_nonneg_image, _mono_sign_dependent),
    "sum_squares": AtomDescriptor("sum_squares", 1, 1, Curvature.CONVEX, frozenset("Q"),
                                  _dim_scalar, _sign_nonneg_image, _mono_sign_dependent),
    "norm2": AtomDescriptor("norm2", 1, 1, Curvature.CONVEX, frozenset("N"),
                            _dim_scalar, _sign_nonneg_image, _mono_sign_dependent),
}

ATOM_LABELS: dict[str, frozenset[str]] = {name: d.labels for name, d in ATOMS.items()}


class ExpressionNode:
    """One immutable node of an expression tree.

    ``kind`` is ``"const"``, ``"var"``, or ``"atom"``.  Constants carry a
    read-only float vector in ``payload``; variable references carry the
    declaration's ``var_id``/``var_name``; atom applications carry the atom
    name, the child tuple, and (for ``index``) the integer ``param``.
    """

    __slots__ = ("kind", "dim", "curvature", "sign", "payload", "var_id",
                 "var_name", "atom", "children", "param", "_key", "_hash")

    def __init__(self, kind, dim, curvature, sign, payload=None, var_id=None,
                 var_name=None, atom=None, children=(), param=None):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "curvature", curvature)
        object.__setattr__(self, "sign", sign)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "var_id", var_id)
        object.__setattr__(self, "var_name", var_name)
        object.__setattr__(self, "atom", atom)
        object.__setattr__(self, "children", tuple(children))
        object.__setattr__(self, "param", param)
        object.__setattr__(self, "_key", None)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("ExpressionNode is immutable")

    def structural_key(self):
        """A hashable tuple identifying this tree up to structural equality."""
        key = object.__getattribute__(self, "_key")
        if key is None:
            if self.kind == "const":
                key = ("const", self.dim, self.payload.tobytes())
            elif self.kind == "var":
                key = ("var", self.var_id, self.dim)
            else:
                key = ("atom", self.atom, self.param,
                       tuple(c.structural_key() for c in self.children))
            object.__setattr__(self, "_key", key)
        return key

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, ExpressionNode):
            return NotImplemented
        return self.structural_key() == other.structural_key()

    def __hash__(self):
        h = object.__getattribute__(self, "_hash")
        if h is None:
            h = hash(self.structural_key())
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self):
        if self.kind == "const":
            return f"Const({np.array2string(self.payload, separator=', ')})"
        if self.kind == "var":
            return f"Var({self.var_name}#{self.var_id}:{self.dim})"
        inner = ", ".join(repr(c) for c in self.children)
        if self.atom == "index":
            return f"index({inner}, {self.param})"
        return f"{self.atom}({inner})"


def constant(value) -> ExpressionNode:
    """Build a constant node from a scalar or a 1-D sequence of reals."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ExpressionError(f"constants must be scalars or vectors, got shape {arr.shape}")
    if arr.size < 1:
        raise ExpressionError("constants must have dim >= 1")
    if not np.all(np.isfinite(arr)):
        raise ExpressionError("constants must be finite")
    arr = arr + 0.0  # normalizes -0.0 so structural keys are print-stable
    arr.setflags(write=False)
    nonneg = bool(np.all(arr >= 0.0))
    nonpos = bool(np.all(arr <= 0.0))
    return ExpressionNode("const", arr.size, Curvature.CONSTANT,
                          _sign_of_interval(nonneg, nonpos), payload=arr)


def var_ref(decl: VariableDecl) -> ExpressionNode:
    """Build a reference node for a declared variable."""
    return ExpressionNode("var", decl.dim, Curvature.AFFINE, Sign.UNKNOWN,
                          var_id=decl.id, var_name=decl.name)


def _compose_curvature(desc: AtomDescriptor, children: Sequence[ExpressionNode]) -> Curvature:
    if all(c.curvature.is_constant for c in children):
        return Curvature.CONSTANT
    can_convex = desc.curvature_class in (Curvature.AFFINE, Curvature.CONVEX)
    can_concave = desc.curvature_class is Curvature.AFFINE
    for i, child in enumerate(children):
        if child.curvature.is_affine:
            continue
        m = desc.monotonicity(children, i)
        cc = child.curvature
        if can_convex:
            can_convex = (m == _INCREASING and cc is Curvature.CONVEX) or \
                         (m == _DECREASING and cc is Curvature.CONCAVE)
        if can_concave:
            can_concave = (m == _INCREASING and cc is Curvature.CONCAVE) or \
                          (m == _DECREASING and cc is Curvature.CONVEX)
    if can_convex and can_concave:
        return Curvature.AFFINE
    if can_convex:
        return Curvature.CONVEX
    if can_concave:
        return Curvature.CONCAVE
    return Curvature.UNKNOWN


def _apply_atom(name: str, children: Sequence[ExpressionNode], param: int | None = None) -> ExpressionNode:
    desc = ATOMS[name]
    n = len(children)
    if n < desc.arity_min or (desc.arity_max != -1 and n > desc.arity_max):
        raise ExpressionError(f"atom '{name}' takes "
                              f"{desc.arity_min}{'+' if desc.arity_max == -1 else f'..{desc.arity_max}'}"
                              f" arguments, got {n}")
    dim = desc.result_dim(children, param)
    curvature = _compose_curvature(desc, children)
    sign = desc.sign_rule(children)
    return ExpressionNode("atom", dim, curvature, sign, atom=name,
                          children=children, param=param)


def add(a: ExpressionNode, b: ExpressionNode) -> ExpressionNode:
    return _apply_atom("add", (a, b))


def sub(a: ExpressionNode, b: ExpressionNode) -> ExpressionNode:
    return _apply_atom("sub", (a, b))


def neg(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("neg", (a,))


def mul(a: ExpressionNode, b: ExpressionNode) -> ExpressionNode:
    """Product with at least one constant-curvature operand (elementwise)."""
    if not (a.curvature.is_constant or b.curvature.is_constant):
        raise ExpressionError("non-constant * non-constant product is not allowed")
    const_side = a if a.curvature.is_constant else b
    if np.all(_constant_value(const_side) == 0.0):
        dim = _broadcast_dim((a, b), "mul_const")
        return constant(np.zeros(dim))
    return _apply_atom("mul_const", (a, b))


def index(a: ExpressionNode, k: int) -> ExpressionNode:
    return _apply_atom("index", (a,), param=int(k))


def sum_(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("sum", (a,))


def max_(*args: ExpressionNode) -> ExpressionNode:
    return _apply_atom("max", tuple(args))


def abs_(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("abs", (a,))


def square(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("square", (a,))


def sum_squares(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("sum_squares", (a,))


def norm2(a: ExpressionNode) -> ExpressionNode:
    return _apply_atom("norm2", (a,))


def _constant_value(expr: ExpressionNode) -> np.ndarray:
    """Value of a constant-curvature subtree (no variables consulted)."""
    return evaluate(expr, {})


def evaluate(expr: ExpressionNode, assignment: Mapping[int, object]) -> np.ndarray:
    """Evaluate a tree under ``{var_id: value}``; returns an array of shape (dim,)."""
    if expr.kind == "const":
        return expr.payload
    if expr.kind == "var":
        if expr.var_id not in assignment:
            raise EvaluationError(f"no value assigned to variable '{expr.var_name}' (id {expr.var_id})")
        val = np.atleast_1d(np.asarray(assignment[expr.var_id], dtype=float))
        if val.shape != (expr.dim,):
            raise EvaluationError(
                f"variable '{expr.var_name}' has dim {expr.dim}, got value of shape {val.shape}")
        return val
    args = [evaluate(c, assignment) for c in expr.children]
    name = expr.atom
    if name == "add":
        out = args[0] + args[1]
    elif name == "sub":
        out = args[0] - args[1]
    elif name == "neg":
        out = -args[0]
    elif name == "mul_const":
        out = args[0] * args[1]
    elif name == "index":
        out = args[0][expr.param:expr.param + 1]
    elif name == "sum":
        out = np.array([np.sum(args[0])])
    elif name == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        out = np.broadcast_to(out, (expr.dim,))
    elif name == "abs":
        out = np.abs(args[0])
    elif name == "square":
        out = args[0] * args[0]
    elif name == "sum_squares":
        out = np.array([float(np.dot(args[0], args[0]))])
    elif name == "norm2":
        out = np.array([float(np.linalg.norm(args[0]))])
    else:  # pragma: no cover - the atom table is closed
        raise EvaluationError(f"unknown atom '{name}'")
    return np.asarray(np.broadcast_to(out, (expr.dim,)), dtype=float)


def _affine_pieces(expr: ExpressionNode) -> tuple[dict[int, np.ndarray], np.ndarray]:
    if expr.curvature.is_constant:
        return {}, _constant_value(expr)
    if expr.kind == "var":
        return {expr.var_id: np.eye(expr.dim)}, np.zeros(expr.dim)
    if expr.kind != "atom":  # pragma: no cover
        raise NotAffineError(expr)

    def broadcast(piece, dim):
        coeffs, const = piece
        rows = const.shape[0]
        if rows == dim:
            return coeffs, const
        # rows == 1, broadcast up by tiling
        return ({v: np.repeat(m, dim, axis=0) for v, m in coeffs.items()},
                np.repeat(const, dim, axis=0))

    def combine(dim, pieces, scales):
        coeffs: dict[int, np.ndarray] = {}
        const = np.zeros(dim)
        for piece, scale in zip(pieces, scales):
            pc, pk = broadcast(piece, dim)
            const = const + scale * pk
            for v, m in pc.items():
                cur = coeffs.get(v)
                contrib = scale * m
                coeffs[v] = contrib if cur is None else cur + contrib
        return coeffs, const

    name = expr.atom
    if name == "add":
        return combine(expr.dim, [_affine_pieces(c) for c in expr.children], [1.0, 1.0])
    if name == "sub":
        return combine(expr.dim, [_affine_pieces(c) for c in expr.children], [1.0, -1.0])
    if name == "neg":
        return combine(expr.dim, [_affine_pieces(expr.children[0])], [-1.0])
    if name == "mul_const":
        const_side = _mul_constant_side(expr.children)
        other = expr.children[1] if const_side is expr.children[0] else expr.children[0]
        cval = _constant_value(const_side)
        coeffs, const = _affine_pieces(other)
        if cval.shape[0] == 1:
            return ({v: cval[0] * m for v, m in coeffs.items()}, cval[0] * const)
        if const.shape[0] == 1:
            # vector constant times scalar affine expression
            return ({v: cval[:, None] @ m for v, m in coeffs.items()}, cval * const[0])
        return ({v: cval[:, None] * m for v, m in coeffs.items()}, cval * const)
    if name == "index":
        coeffs, const = _affine_pieces(expr.children[0])
        k = expr.param
        return ({v: m[k:k + 1, :] for v, m in coeffs.items()}, const[k:k + 1])
    if name == "sum":
        coeffs, const = _affine_pieces(expr.children[0])
        return ({v: np.sum(m, axis=0, keepdims=True) for v, m in coeffs.items()},
                np.array([np.sum(const)]))
    raise NotAffineError(expr)


def affine_coefficients(expr: ExpressionNode) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Coefficient matrices and constant vector of an affine expression.

    Returns ``({var_id: M}, k)`` with ``M`` of shape (dim, var_dim) and ``k``
    of shape (dim,) such that the expression equals ``sum_i M_i x_i + k``.
    Raises :class:`NotAffineError` naming the first nonlinear atom otherwise.
    """
    if not expr.curvature.is_affine:
        node = next(n for n in _iter_nodes(expr)
                    if n.kind == "atom" and not n.curvature.is_affine
                    and all(c.curvature.is_affine for c in n.children))
        raise NotAffineError(node)
    coeffs, const = _affine_pieces(expr)
    return coeffs, const


def _iter_nodes(expr: ExpressionNode):
    yield expr
    for c in expr.children:
        yield from _iter_nodes(c)


@dataclass(frozen=True)
class ConstraintDecl:
    """One constraint ``lhs REL rhs`` with a position-stable id."""

    id: int
    relation: Relation
    lhs: ExpressionNode
    rhs: ExpressionNode

    def __post_init__(self):
        if self.lhs.dim != self.rhs.dim and 1 not in (self.lhs.dim, self.rhs.dim):
            raise ProblemError(
                f"constraint {self.id}: sides have dims {self.lhs.dim} and {self.rhs.dim}")

    @property
    def dim(self) -> int:
        return max(self.lhs.dim, self.rhs.dim)


@dataclass(frozen=True)
class ProblemForm:
    """A full problem: sense, scalar objective, constraints, variables."""

    sense: Sense
    objective: ExpressionNode
    constraints: tuple[ConstraintDecl, ...]
    variables: tuple[VariableDecl, ...]

    def variable_map(self) -> dict[int, VariableDecl]:
        return {v.id: v for v in self.variables}


def make_problem(sense: Sense, objective: ExpressionNode,
                 constraints: Sequence[tuple[ExpressionNode, Relation, ExpressionNode] | ConstraintDecl],
                 variables: Sequence[VariableDecl]) -> ProblemForm:
    """Validate and assemble a :class:`ProblemForm`.

    Constraint ids are assigned positionally.  Every variable referenced by an
    expression must appear in ``variables``; ids and names must be unique.
    """
    if objective.dim != 1:
        raise ProblemError(f"objective must be scalar, got dim {objective.dim}")
    ids = [v.id for v in variables]
    names = [v.name for v in variables]
    if len(set(ids)) != len(ids):
        raise ProblemError("duplicate variable ids")
    if len(set(names)) != len(names):
        raise ProblemError("duplicate variable names")
    decl_dims = {v.id: v.dim for v in variables}
    cons = []
    for pos, c in enumerate(constraints):
        if isinstance(c, ConstraintDecl):
            cons.append(ConstraintDecl(pos, c.relation, c.lhs, c.rhs))
        else:
            lhs, rel, rhs = c
            cons.append(ConstraintDecl(pos, rel, lhs, rhs))
    for expr in [objective] + [e for c in cons for e in (c.lhs, c.rhs)]:
        for node in _iter_nodes(expr):
            if node.kind == "var":
                if node.var_id not in decl_dims:
                    raise ProblemError(f"undeclared variable '{node.var_name}' (id {node.var_id})")
                if decl_dims[node.var_id] != node.dim:
                    raise ProblemError(f"variable '{node.var_name}' used with dim {node.dim}, "
                                       f"declared {decl_dims[node.var_id]}")
    return ProblemForm(sense, objective, tuple(cons), tuple(variables))


def problem_variable(problem: ProblemForm, var_id: int) -> VariableDecl:
    for v in problem.variables:
        if v.id == var_id:
            return v
    raise ProblemError(f"no variable with id {var_id}")


def next_free_ids(problem: ProblemForm) -> int:
    """The smallest variable id not used by ``problem``."""
    return max((v.id for v in problem.variables), default=-1) + 1


def fresh_variable(problem_names: set[str], next_id: int, stem: str, dim: int = 1) -> VariableDecl:
    """Allocate a fresh variable whose name cannot collide with existing ones."""
    name = f"{stem}{next_id}"
    while name in problem_names:
        name = "_" + name
    return VariableDecl(next_id, name, dim)


def walk_expressions(problem: ProblemForm):
    """Yield (location, expression) pairs for every tree in the problem."""
    yield "objective", problem.objective
    for i, c in enumerate(problem.constraints):
        yield f"constraint {i}: lhs", c.lhs
        yield f"constraint {i}: rhs", c.rhs


def is_dcp(problem: ProblemForm) -> tuple[bool, list[str]]:
    """Check the discipline: returns (ok, list of violation locations)."""
    violations: list[str] = []
    obj = problem.objective.curvature
    if problem.sense is Sense.MINIMIZE:
        if not obj.is_convex:
            violations.append("objective")
    else:
        if not obj.is_concave:
            violations.append("objective")
    for i, c in enumerate(problem.constraints):
        if c.relation is Relation.LE:
            if not c.lhs.curvature.is_convex:
                violations.append(f"constraint {i}: lhs")
            if not c.rhs.curvature.is_concave:
                violations.append(f"constraint {i}: rhs")
        elif c.relation is Relation.GE:
            if not c.lhs.curvature.is_concave:
                violations.append(f"constraint {i}: lhs")
            if not c.rhs.curvature.is_convex:
                violations.append(f"constraint {i}: rhs")
        else:
            if not c.lhs.curvature.is_affine:
                violations.append(f"constraint {i}: lhs")
            if not c.rhs.curvature.is_affine:
                violations.append(f"constraint {i}: rhs")
    return (not violations), violations


def substitute_variables(expr: ExpressionNode,
                         mapping: Mapping[int, ExpressionNode]) -> ExpressionNode:
    """Rebuild a tree with every referenced variable in ``mapping`` replaced."""
    if expr.kind == "var":
        return mapping.get(expr.var_id, expr)
    if expr.kind == "const":
        return expr
    children = tuple(substitute_variables(c, mapping) for c in expr.children)
    if children == expr.children:
        return expr
    if expr.atom == "mul_const":
        return mul(children[0], children[1])
    return _apply_atom(expr.atom, children, expr.param)

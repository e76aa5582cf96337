"""Property-based checks: serialization, the label machine, projections.

These complement the example-based suites with shrinkable random inputs:
JSON emission is compared against the stdlib decoder, the label machine
against an equivalent regular expression and against brute-force refinement
of label sets, and cone projection against the defining properties of a
Euclidean projection (idempotence, non-expansiveness, Jensen's inequality
for the convex atoms it supports).
"""

import itertools
import json
import re

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from dcpc import expressions as ex
from dcpc.cli import render_json
from dcpc.reductions.cone import ConeDims
from dcpc.reductions.qp import PathNfa
from dcpc.solvers import project_cone

FINITE = st.floats(allow_nan=False, allow_infinity=False, width=64)
BOUNDED = st.floats(min_value=-100.0, max_value=100.0,
                    allow_nan=False, allow_infinity=False)

JSON_VALUES = st.recursive(
    st.none() | st.booleans() | st.integers(-10**9, 10**9) | FINITE
    | st.text(max_size=12),
    lambda inner: (st.lists(inner, max_size=4)
                   | st.dictionaries(st.text(max_size=8), inner, max_size=4)),
    max_leaves=12,
)


# --- JSON emission ---------------------------------------------------------

@given(value=FINITE)
def test_render_json_floats_round_trip(value):
    text = render_json(value)
    assert json.loads(text) == value
    if value == 0.0:
        assert text == "0"  # negative zero is normalized away


@given(doc=JSON_VALUES)
def test_render_json_agrees_with_stdlib_decoder(doc):
    assert json.loads(render_json(doc)) == doc


# --- label machine ---------------------------------------------------------

@given(word=st.text(alphabet="APQ", max_size=10))
def test_label_machine_matches_regular_expression(word):
    expected = re.fullmatch("A+|A*QP*|P+", word)
    assert PathNfa().accepts(word) == (expected is not None)


@given(sets=st.lists(st.sets(st.sampled_from("APQ"), min_size=1, max_size=3),
                     max_size=6))
def test_label_machine_set_simulation_equals_refinement_search(sets):
    nfa = PathNfa()
    via_sets = nfa.accepts([frozenset(s) for s in sets])
    refinements = itertools.product(*sets)
    assert via_sets == any(nfa.accepts("".join(word)) for word in refinements)


# --- cone projection -------------------------------------------------------

@st.composite
def cone_and_points(draw, points=1):
    zero = draw(st.integers(0, 2))
    nonneg = draw(st.integers(0, 3))
    soc = tuple(draw(st.lists(st.integers(2, 5), max_size=2)))
    dims = ConeDims(zero, nonneg, soc)
    total = zero + nonneg + sum(soc)
    vecs = [np.array(draw(st.lists(BOUNDED, min_size=total, max_size=total)))
            for _ in range(points)]
    return (dims, *vecs)


@given(args=cone_and_points())
def test_projection_is_idempotent(args):
    dims, v = args
    p = project_cone(v, dims)
    assert np.max(np.abs(project_cone(p, dims) - p), initial=0.0) <= 1e-9


@given(args=cone_and_points(points=2))
def test_projection_is_nonexpansive(args):
    dims, u, v = args
    pu, pv = project_cone(u, dims), project_cone(v, dims)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-9


# --- convex atom semantics -------------------------------------------------

def _jensen_gap(build, x, y, theta):
    """f(theta*x + (1-theta)*y) - [theta*f(x) + (1-theta)*f(y)], elementwise."""
    decl = ex.VariableDecl(0, "x", len(x))
    expr = build(ex.var_ref(decl))
    mid = theta * x + (1.0 - theta) * y
    f = lambda point: ex.evaluate(expr, {0: point})
    return f(mid) - (theta * f(x) + (1.0 - theta) * f(y))


@given(x=st.lists(BOUNDED, min_size=2, max_size=4),
       y=st.lists(BOUNDED, min_size=2, max_size=4),
       theta=st.floats(0.0, 1.0),
       atom=st.sampled_from(["abs", "square", "norm2", "sum_squares", "max"]))
def test_convex_atoms_satisfy_jensen(x, y, theta, atom):
    n = min(len(x), len(y))
    x, y = np.array(x[:n]), np.array(y[:n])
    builders = {
        "abs": ex.abs_,
        "square": ex.square,
        "norm2": ex.norm2,
        "sum_squares": ex.sum_squares,
        "max": lambda v: ex.max_(v, ex.constant(np.zeros(n))),
    }
    gap = _jensen_gap(builders[atom], x, y, theta)
    scale = 1.0 + max(np.max(np.abs(x)), np.max(np.abs(y))) ** 2
    assert np.max(gap) <= 1e-9 * scale

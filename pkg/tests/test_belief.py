from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probplan.belief import (
    BRUTE_FORCE_LIMIT,
    BeliefState,
    UniverseMismatchError,
    applicability,
    apply_attempt,
    attempt_probs,
    belief_from_json,
    belief_to_json,
    brute_force_attempt,
    from_symbolic,
    goal_distance,
    goal_weights,
    l1_distance,
)
from probplan.checks import random_action, random_universe
from probplan.pddl import Action, AtomUniverse, GroundAtom, apply_discrete
from probplan.planner import discretize_map

CA, CB, ON = GroundAtom("clear", ("a",)), GroundAtom("clear", ("b",)), GroundAtom("on", ("a", "b"))
U3 = AtomUniverse([CA, CB, ON])
UNSTACK = Action("unstack", ("a", "b"), frozenset({0, 2}), frozenset({1}), frozenset({2}))


def joint_oracle(p, action):
    """Exact marginals by summing over every joint state, written out longhand."""
    n = len(p)
    out = [0.0] * n
    for bits in itertools.product((0, 1), repeat=n):
        w = 1.0
        for b, q in zip(bits, p):
            w *= q if b else 1.0 - q
        s = {i for i, b in enumerate(bits) if b}
        if action.pre <= s:
            s = (s - action.delete) | action.add
        for i in s:
            out[i] += w
    return out


def test_worked_example_applicability():
    b = BeliefState([0.6, 0.3, 0.7], U3)
    assert applicability(b, UNSTACK) == pytest.approx(0.42, abs=1e-12)


def test_worked_example_update():
    b = BeliefState([0.6, 0.3, 0.7], U3)
    out = apply_attempt(b, UNSTACK)
    expect = [0.6, 0.594, 0.28]
    np.testing.assert_allclose(out.probs, expect, atol=1e-12, rtol=0)
    np.testing.assert_allclose(joint_oracle(b.probs, UNSTACK), expect, atol=1e-12, rtol=0)
    np.testing.assert_allclose(brute_force_attempt(b, UNSTACK), expect, atol=1e-12, rtol=0)
    assert b.probs.tolist() == [0.6, 0.3, 0.7]  # input untouched


def test_worked_example_distance():
    a = BeliefState([0.6, 0.3, 0.7], U3)
    b = BeliefState([0.6, 0.594, 0.28], U3)
    assert l1_distance(a, b) == pytest.approx(0.714, abs=1e-12)


def test_worked_example_discretization_is_invalid_state():
    # clear(a) and on(a,b) both survive thresholding; clear(b) does not
    s = discretize_map(BeliefState([0.6, 0.3, 0.7], U3))
    assert s == frozenset({0, 2})


def test_from_symbolic_basics():
    assert from_symbolic(set(), U3).probs.tolist() == [0.0, 0.0, 0.0]
    assert from_symbolic({0}, U3).probs.tolist() == [1.0, 0.0, 0.0]
    assert discretize_map(from_symbolic({0, 2}, U3)) == {0, 2}


def test_applicability_edge_cases():
    b = BeliefState([0.0, 0.3, 0.7], U3)
    assert applicability(b, Action("noop", (), frozenset(), frozenset(), frozenset())) == 1.0
    assert applicability(b, UNSTACK) == 0.0
    assert apply_attempt(b, UNSTACK) == b


def test_l1_examples_and_mismatch():
    u2 = random_universe(2)
    assert l1_distance(BeliefState([1, 0], u2), BeliefState([0, 1], u2)) == 2.0
    with pytest.raises(UniverseMismatchError):
        l1_distance(BeliefState([1, 0], u2), BeliefState([0.5, 0.5, 0.5], U3))


def test_belief_validation():
    with pytest.raises(ValueError):
        BeliefState([0.1, 1.2, 0.0], U3)
    with pytest.raises(ValueError):
        BeliefState([0.1, 0.2], U3)
    b = BeliefState([0.1, 0.2, 0.3], U3)
    with pytest.raises(ValueError):
        b.probs[0] = 0.5


def test_json_round_trip_omits_zeros():
    b = BeliefState([0.0, 0.25, 1.0], U3)
    text = belief_to_json(b)
    assert json.loads(text) == {"clear(b)": 0.25, "on(a,b)": 1.0}
    assert belief_from_json(text, U3) == b
    with pytest.raises(Exception):
        belief_from_json('{"on(b,a)": 0.5}', U3)


def test_brute_force_limits_and_identity():
    u = random_universe(BRUTE_FORCE_LIMIT + 1)
    with pytest.raises(ValueError):
        brute_force_attempt(BeliefState(np.full(len(u), 0.5), u), Action("x", (), frozenset(), frozenset(), frozenset()))
    b = BeliefState([0.2, 0.4, 0.9], U3)
    np.testing.assert_allclose(brute_force_attempt(b, Action("x", (), frozenset(), frozenset(), frozenset())), b.probs)


def test_goal_weights_variants():
    g = BeliefState([0.9, 0.5, 0.1], U3)
    assert goal_weights(g).tolist() == [1.0, 1.0, 1.0]
    np.testing.assert_allclose(goal_weights(g, weighted=True), [0.8, 0.0, 0.8])
    assert goal_weights(g, positive_only=True).tolist() == [1.0, 0.0, 0.0]
    b = BeliefState([0.5, 0.5, 0.5], U3)
    assert goal_distance(b, g) == pytest.approx(0.8)


# -- properties ------------------------------------------------------------------

probs = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def belief_and_action(draw, max_atoms=10):
    n = draw(st.integers(1, max_atoms))
    u = random_universe(n)
    p = draw(st.lists(st.one_of(probs, st.sampled_from([0.0, 1.0])), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**32 - 1))
    return BeliefState(p, u), random_action(np.random.default_rng(seed), n)


@settings(max_examples=300, deadline=None)
@given(belief_and_action())
def test_matches_joint_enumeration(case):
    b, a = case
    np.testing.assert_allclose(attempt_probs(b.probs, a), joint_oracle(b.probs, a), atol=1e-12, rtol=0)


@settings(max_examples=500, deadline=None)
@given(belief_and_action(max_atoms=15))
def test_closure(case):
    b, a = case
    out = attempt_probs(b.probs, a)
    assert np.all((out >= 0.0) & (out <= 1.0))


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10), bits=st.integers(0, 2**10 - 1), seed=st.integers(0, 2**32 - 1))
def test_deterministic_reduction(n, bits, seed):
    u = random_universe(n)
    s = frozenset(i for i in range(n) if bits >> i & 1)
    a = random_action(np.random.default_rng(seed), n)
    out = apply_attempt(from_symbolic(s, u), a)
    if a.pre <= s:
        assert out == from_symbolic(apply_discrete(s, a), u)
    else:
        assert out == from_symbolic(s, u)


@settings(max_examples=200, deadline=None)
@given(case=belief_and_action(), bump=st.floats(0.0, 1.0))
def test_applicability_monotone(case, bump):
    b, a = case
    base = applicability(b, a)
    for g in a.pre:
        p = b.probs.copy()
        p[g] = p[g] + bump * (1.0 - p[g])
        assert applicability(b.replace(p), a) >= base - 1e-15


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: st.tuples(*[st.lists(probs, min_size=n, max_size=n)] * 3)))
def test_l1_is_a_metric(triple):
    u = random_universe(len(triple[0]))
    x, y, z = (BeliefState(t, u) for t in triple)
    assert l1_distance(x, x) == 0.0
    assert l1_distance(x, y) == l1_distance(y, x)
    assert l1_distance(x, z) <= l1_distance(x, y) + l1_distance(y, z) + 1e-12

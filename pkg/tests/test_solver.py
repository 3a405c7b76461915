"""Planner search: expansion, evaluation, propagation, extraction, schedules.

The communication tests freeze the expected edge sets of the box-stowing
reunion scene by hand: the robot may tell the human which box is free, or
stand by; a blocked human may ask or wait; a wait forces the inform.
"""

import json

import pytest

from ehatp.dsl import load_instance, load_shipped, parse_domain
from ehatp.kernel import initial_state, state_copresent
from ehatp.model import (
    BeliefBase,
    EhatpError,
    EpistemicState,
    Task,
    World,
    lit,
)
from ehatp.solver import (
    Metrics,
    Policy,
    SearchNode,
    evaluate_state,
    expand,
    extract_joint_solution,
    parallelize,
    propagate_revised_status,
    solve,
    synthesize_communication,
)


@pytest.fixture(scope="module")
def cube():
    return parse_domain(load_shipped("cube_org"))


@pytest.fixture(scope="module")
def p1():
    return load_instance("p1")


@pytest.fixture(scope="module")
def p2():
    return load_instance("p2")


def bel(*atoms):
    return BeliefBase(frozenset(lit(a) for a in atoms))


SCENE = ("at(R,mt)", "at(H,mt)", "main(box_1)", "spare(box_2)",
         "partner(c_r,c_r)", "partner(c_w,c_w)", "any_box(c_r)", "any_box(c_w)")


def reunion_pair():
    """After the hidden stow: human back, holding the wrapped white cube,
    unsure whether the red cube went to the main or the spare box."""
    tn_h = (Task("put_away_h", ("c_w",)), Task("assist_rest"))
    extra = ("holding(H,c_w)", "wrapped(c_w)")
    w1 = World(bel(*SCENE, *extra, "inside(c_r,box_1)", "empty(box_2)"),
               bel(*SCENE, *extra, "inside(c_r,box_1)", "empty(box_2)"),
               bel(*SCENE, *extra, "inside(c_r,box_1)", "empty(box_2)"),
               (), tn_h, ())
    w2 = World(bel(*SCENE, *extra, "inside(c_r,box_2)", "empty(box_1)"),
               bel(*SCENE, *extra, "inside(c_r,box_2)", "empty(box_1)"),
               bel(*SCENE, *extra, "inside(c_r,box_2)", "empty(box_1)"),
               (), tn_h, ())
    return w1, w2


def reunion_state(actor, pending=()):
    w1, w2 = reunion_pair()
    return EpistemicState.make([w1, w2], designated=w1, actor=actor,
                               budget=2, pending=pending)


# ------------------------------------------------------------- communication


def test_synthesize_communication_collapses_split(cube):
    s = reunion_state("H")
    ask, inform = synthesize_communication(cube, s, lit("empty(box_2)"), k=2)
    for out, actor in ((ask, "R"), (inform, "H")):
        assert out.actor == actor
        assert len(out.worlds) == 1
        got = out.designated_world
        assert got.bel_r.entails(lit("inside(c_r,box_1)"))
        assert got.bel_h.entails(lit("empty(box_2)"))
        assert got.bel_rh.entails(lit("empty(box_2)"))
        assert out.pending == ()


def test_synthesize_communication_rejects_settled_fact(cube):
    s = reunion_state("H")
    with pytest.raises(EhatpError):
        synthesize_communication(cube, s, lit("main(box_1)"), k=2)


def test_robot_turn_offers_inform_or_standby(cube, p2):
    _, prob = p2
    s = reunion_state("R")
    children = expand(cube, prob, s)
    assert [label for label, _ in children] == ["inform-empty(box_2)", "noop"]
    inform_child = dict(children)["inform-empty(box_2)"]
    assert len(inform_child.worlds) == 1
    assert inform_child.actor == "H"


def test_blocked_human_asks_or_waits(cube, p2):
    _, prob = p2
    s = reunion_state("H")
    children = expand(cube, prob, s)
    assert [label for label, _ in children] == ["ask-empty(box_2)", "wait"]
    by_label = dict(children)
    ask_child = by_label["ask-empty(box_2)"]
    assert ask_child.actor == "R" and len(ask_child.worlds) == 1
    wait_child = by_label["wait"]
    assert wait_child.actor == "R"
    assert wait_child.pending == (lit("empty(box_2)"),)
    assert len(wait_child.worlds) == 2  # waiting reveals nothing by itself


def test_wait_forces_the_inform(cube, p2):
    _, prob = p2
    s = reunion_state("R", pending=(lit("empty(box_2)"),))
    children = expand(cube, prob, s)
    assert [label for label, _ in children] == ["inform-empty(box_2)"]
    child = children[0][1]
    assert child.pending == ()
    assert len(child.worlds) == 1


def test_unblocked_human_places_without_talking(cube, p2):
    _, prob = p2
    s = reunion_state("H")
    _, inform = synthesize_communication(cube, s, lit("empty(box_2)"), k=2)
    children = expand(cube, prob, inform)
    assert [label for label, _ in children] == ["place_h(c_w,box_2)"]


def test_comm_off_blocked_human_idles(cube, p1):
    _, prob = p1
    s = reunion_state("H")
    children = expand(cube, prob, s)
    assert [label for label, _ in children] == ["noop"]
    assert children[0][1].actor == "R"


def test_no_communication_without_uncertainty(cube, p2):
    _, prob = p2
    w1, _ = reunion_pair()
    s = EpistemicState.make([w1], designated=w1, actor="R", budget=2)
    children = expand(cube, prob, s)
    assert [label for label, _ in children] == ["noop"]


# ---------------------------------------------------------------- evaluation


def test_eval_done_when_everything_decomposed(cube):
    w = World(bel(*SCENE, "inside(c_r,box_1)"), bel(*SCENE, "inside(c_r,box_1)"),
              bel(*SCENE, "inside(c_r,box_1)"), (), (), ())
    s = EpistemicState.make([w], designated=w, actor="H", budget=2)
    assert evaluate_state(cube, s) == "DONE"


def test_eval_done_through_completed_method(cube):
    # assist_rest has a zero-step alternative once no yellow cube remains.
    w = World(bel(*SCENE), bel(*SCENE), bel(*SCENE), (), (Task("assist_rest"),), ())
    s = EpistemicState.make([w], designated=w, actor="H", budget=2)
    assert evaluate_state(cube, s) == "DONE"


def test_eval_dead_when_a_world_doubts_the_robot(cube):
    w1, w2 = reunion_pair()
    doubting = World(w2.bel_r, w2.bel_h, w2.bel_rh,
                     (), (), (Task("put_away", ("c_r",)),))
    finished = World(w1.bel_r, w1.bel_h, w1.bel_rh, (), (), ())
    s = EpistemicState.make([finished, doubting], designated=finished,
                            actor="H", budget=2)
    assert evaluate_state(cube, s) == "DEAD"


def test_eval_dead_when_human_work_remains(cube):
    w1, _ = reunion_pair()
    s = EpistemicState.make([w1], designated=w1, actor="H", budget=2)
    assert evaluate_state(cube, s) == "DEAD"


# -------------------------------------------------------- status propagation


def node(kind, state, children=None):
    n = SearchNode(state=state, kind=kind, depth=0)
    if children is not None:
        n.children = []
        for label, c in children:
            n.children.append((label, c))
            c.parents.append(n)
    return n


def test_propagation_rules(p1):
    dom, prob = p1
    s = initial_state(dom, prob)
    leaf_done = node("AND", s)
    leaf_done.children = []
    leaf_done.status = "DONE"
    leaf_dead = node("AND", s)
    leaf_dead.children = []
    leaf_dead.status = "DEAD"
    pending = node("AND", s)

    or_mixed = node("OR", s, [("a", leaf_done), ("b", pending)])
    and_mixed = node("AND", s, [("a", leaf_done), ("b", pending)])
    and_dead = node("AND", s, [("a", leaf_done), ("b", leaf_dead)])
    root = node("OR", s, [("x", and_mixed), ("y", and_dead)])

    propagate_revised_status(leaf_done)
    propagate_revised_status(leaf_dead)
    assert or_mixed.status == "DONE"  # one resolved alternative suffices
    assert and_mixed.status == "UNKNOWN"
    assert and_dead.status == "DEAD"
    assert root.status == "UNKNOWN"

    pending.status = "DONE"
    propagate_revised_status(pending)
    assert and_mixed.status == "DONE"
    assert root.status == "DONE"


# ----------------------------------------------------------------- extraction


def leaf_node(s):
    n = SearchNode(state=s, kind="AND", depth=0)
    n.children = []
    n.status = "DONE"
    return n


def chain(s, labels, end):
    head = end
    for label in reversed(labels):
        parent = SearchNode(state=s, kind="AND", depth=0, status="DONE")
        parent.children = [(label, head)]
        head.parents.append(parent)
        head = parent
    return head


def test_extraction_prefers_shallow_then_quiet_then_lexicographic(p1):
    dom, prob = p1
    s = initial_state(dom, prob)

    deep = chain(s, ["go", "go"], leaf_node(s))
    shallow = chain(s, ["zz"], leaf_node(s))
    root = SearchNode(state=s, kind="OR", depth=0, status="DONE")
    root.children = [("deep", deep), ("fast", shallow)]
    pol = extract_joint_solution(dom, root)
    assert pol.nodes[0].children and pol.nodes[pol.nodes[0].children[0]].edge == "fast"

    talky = chain(s, ["inform-p"], leaf_node(s))
    quiet = chain(s, ["act"], leaf_node(s))
    root = SearchNode(state=s, kind="OR", depth=0, status="DONE")
    root.children = [("a", talky), ("b", quiet)]
    pol = extract_joint_solution(dom, root)
    assert pol.nodes[pol.nodes[0].children[0]].edge == "b"

    root = SearchNode(state=s, kind="OR", depth=0, status="DONE")
    root.children = [("beta", leaf_node(s)), ("alpha", leaf_node(s))]
    pol = extract_joint_solution(dom, root)
    assert pol.nodes[pol.nodes[0].children[0]].edge == "alpha"


def test_extraction_keeps_all_human_alternatives(p1):
    dom, prob = p1
    s = initial_state(dom, prob)
    and_node = SearchNode(state=s, kind="AND", depth=0, status="DONE")
    and_node.children = [("l", leaf_node(s)), ("r", leaf_node(s))]
    root = SearchNode(state=s, kind="OR", depth=0, status="DONE")
    root.children = [("go", and_node)]
    pol = extract_joint_solution(dom, root)
    and_out = pol.nodes[pol.nodes[0].children[0]]
    assert len(and_out.children) == 2
    assert pol.leaves == 2


# ------------------------------------------------------------- whole problems


def test_p1_policy_shape(p1):
    dom, prob = p1
    res = solve(dom, prob)
    assert res.policy is not None
    assert res.metrics.leaves == 3
    assert res.metrics.maxW == 4
    assert res.metrics.states > 0


def test_p2_policy_shape(p2):
    dom, prob = p2
    res = solve(dom, prob)
    assert res.policy is not None
    assert res.metrics.leaves == 3
    assert res.metrics.maxW == 4
    labels = {n.edge for n in res.policy.nodes if n.edge}
    assert "inform-empty(box_2)" in labels  # opacity forces one exchange


def test_p2_full_graph_contains_both_families(p2):
    dom, prob = p2
    res = solve(dom, prob, exhaust=True)
    edges = {}
    for n in res.all_nodes:
        if n.children:
            edges[n] = sorted(label for label, _ in n.children)
    assert any(e == ["ask-empty(box_2)", "wait"] for e in edges.values())
    wait_parents = [n for n, e in edges.items() if "wait" in e]
    assert wait_parents
    forced = set()
    for n in wait_parents:
        wait_child = dict(n.children)["wait"]
        labels = [l for l, _ in wait_child.children]
        assert len(labels) == 1 and labels[0].startswith("inform-")
        forced.add(labels[0])
    assert "inform-empty(box_2)" in forced
    assert any("inform-empty(box_2)" in e and "noop" in e for e in edges.values())


def test_cooking1_policy_shape():
    dom, prob = load_instance("cooking1")
    res = solve(dom, prob)
    assert res.policy is not None
    assert res.metrics.leaves == 5
    assert res.metrics.maxW == 3


def test_unreachable_goal_fails():
    dom = parse_domain("""
domain stuck {
  place mt
  predicate treasure() inferable
  action grab() by H at mt {
    pre at(H, mt), treasure
    add treasure
  }
  method find_it only_way {
    sub grab()
  }
  method rest none_needed {
  }
}
""")
    prob_text = """
problem impossible {
  domain stuck
  k 1
  communication on
  robot at mt
  human at mt
  task R rest
  task H find_it
  init { }
}
"""
    from ehatp.dsl import parse_problem
    prob = parse_problem(prob_text, dom)
    res = solve(dom, prob)
    assert res.policy is None
    assert res.root.status in ("DEAD", "UNKNOWN")


def test_solver_is_deterministic(p2):
    dom, prob = p2
    a = solve(dom, prob)
    b = solve(dom, prob)
    assert a.policy.to_json() == b.policy.to_json()
    assert (a.metrics.states, a.metrics.maxW, a.metrics.leaves) == \
        (b.metrics.states, b.metrics.maxW, b.metrics.leaves)


# ------------------------------------------------------------ postprocessing


def test_policy_export_shape(p1):
    dom, prob = p1
    res = solve(dom, prob)
    doc = json.loads(res.policy.to_json())
    assert set(doc) == {"nodes"}
    first = doc["nodes"][0]
    assert list(first) == ["id", "kind", "actor", "edge", "copresent", "children"]
    kinds = {n["kind"] for n in doc["nodes"]}
    assert kinds <= {"OR", "AND", "LEAF"}
    ids = [n["id"] for n in doc["nodes"]]
    assert ids == sorted(ids)
    for n in doc["nodes"]:
        for c in n["children"]:
            assert c in ids


def test_parallelize_pairs_separated_segments(p2):
    dom, prob = p2
    res = solve(dom, prob)
    schedule = parallelize(res.policy)
    away = [t for t in schedule.traces
            if any(step.h == "move(mt,ot)" for step in t)]
    assert away
    trace = away[0]
    paired = [s for s in trace if s.r is not None and s.h is not None]
    assert paired
    r_actions = {s.r for s in paired}
    # the robot's whole hidden stint runs alongside the human's trip
    assert {"pick(c_r,mt)", "place(c_r,box_1)"} <= r_actions
    # the hidden-action allowance is smaller than the trip, so part of the
    # stint is spent idling
    assert "noop" in r_actions
    # reunion and the exchange afterwards happen turn by turn
    tail = trace[trace.index(paired[-1]) + 1:]
    assert all(s.r is None or s.h is None for s in tail)
    assert any(s.r == "inform-empty(box_2)" for s in tail)


def test_parallelize_copresent_prefix_stays_sequential(p1):
    dom, prob = p1
    res = solve(dom, prob)
    schedule = parallelize(res.policy)
    assert schedule.traces
    for t in schedule.traces:
        # everything before the human walks out happens turn by turn
        split = next((i for i, s in enumerate(t) if s.h == "move(mt,ot)"), len(t))
        for s in t[:split]:
            assert s.r is None or s.h is None


def test_metrics_csv_round_trip(p1):
    dom, prob = p1
    res = solve(dom, prob)
    line = res.metrics.csv_line()
    fields = line.strip().split(",")
    assert len(fields) == 7
    assert fields[0] == "p1"
    assert fields[1] == "2" and fields[2] == "off"
    assert int(fields[3]) == res.metrics.states
    assert int(fields[4]) == 4 and int(fields[5]) == 3
    assert Metrics.csv_header() == "instance,K,comm,states,maxW,leaves,time_ms"

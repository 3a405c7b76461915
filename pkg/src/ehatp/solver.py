"""Joint planning over epistemic states.

The planner runs a breadth-first AND/OR search: the robot's turns are OR
nodes (it picks one of its options), the human's turns are AND nodes (every
refinement the human might choose must be covered).  Node statuses harden
from the terminals upward — an OR is finished once one alternative is, an
AND once all of them are — and from a finished root a joint policy is
extracted that prefers short, quiet, lexicographically small branches.

A state is finished when every surviving world agrees that nobody has work
left: the robot's real agenda, the human's agenda, and the agenda the human
ascribes to the robot must all reach empty without another action.  The only
edges besides task refinements are the speech acts.  The robot may volunteer
a fact (``inform-p``) when the perspectives have drifted apart or the human
is about to be stuck; a stuck human may raise the question itself
(``ask-p``), or wait, which obliges the robot to answer on its next turn.
"""

import json
import math
import os
import sys
import time
from collections import deque
from dataclasses import dataclass, field, replace

from .dsl import DomainModel, ProblemInstance
from .htn import (
    Refinement,
    alignment_diff,
    effectively_decomposed,
    feasible_refinements,
)
from .kernel import (
    build_epistemic_action,
    initial_state,
    product_update,
    situation_assessment,
    state_copresent,
)
from .model import (
    AlignmentImpossibleError,
    BudgetExceededError,
    DomainError,
    EhatpError,
    EpistemicState,
    Literal,
)

UNKNOWN = "UNKNOWN"
DONE = "DONE"
DEAD = "DEAD"


@dataclass(eq=False)
class SearchNode:
    """One canonical state in the search graph.

    ``children`` stays ``None`` until the node is expanded; a terminal keeps
    an empty list.  Dedup makes this a graph, so a node may have several
    parents, and status updates ripple along them.
    """

    state: EpistemicState
    kind: str  # "OR" (robot to act) or "AND" (human to act)
    depth: int
    status: str = UNKNOWN
    children: "list[tuple[str, SearchNode]] | None" = None
    parents: "list[SearchNode]" = field(default_factory=list)
    nid: int = 0


# --------------------------------------------------------------------------
# State evaluation


def evaluate_state(dom: DomainModel, s: EpistemicState) -> str:
    """DONE iff, in every world, all three agendas can reach empty without
    another action; otherwise DEAD (meaning: not finished as it stands)."""
    for w in s.worlds:
        if not (effectively_decomposed(dom, w.tn_r, w.bel_r, "R")
                and effectively_decomposed(dom, w.tn_h, w.bel_h, "H")
                and effectively_decomposed(dom, w.tn_rh, w.bel_rh, "R")):
            return DEAD
    return DONE


# --------------------------------------------------------------------------
# Communication synthesis


def synthesize_communication(dom: DomainModel, s: EpistemicState, p: Literal,
                             k: int) -> tuple[EpistemicState, EpistemicState]:
    """Settle the truth of ``p`` between the agents.

    The designated world's ground truth decides the answer; every world's
    human-side bases adopt it, worlds whose projected view contradicted it
    are dropped, and the usual assessment runs afterwards.  Returns the
    resulting state twice, once with each agent to move: as the outcome of a
    question (robot answers, robot's turn follows) and of a volunteered fact
    (human's turn follows).  Raises :class:`EhatpError` when the exchange
    would change nothing.
    """
    atom = p if p.positive else p.negate()
    d = s.designated_world
    truth = d.bel_r.entails(atom)

    changed = False
    rebuilt = []
    designated_out = None
    for i, w in enumerate(s.worlds):
        disagree_rh = w.bel_rh.entails(atom) != truth
        disagree_h = w.bel_h.entails(atom) != truth
        changed = changed or disagree_rh or disagree_h
        child = replace(
            w,
            bel_h=w.bel_h.assign(atom, truth),
            bel_rh=w.bel_rh.assign(atom, truth),
            distinguishable=w.distinguishable
            or (i != s.designated and disagree_rh),
        )
        rebuilt.append(child)
        if i == s.designated:
            designated_out = child
    if not changed:
        raise EhatpError(f"nothing to settle: {atom} is already shared")
    assert designated_out is not None

    mid = EpistemicState.make(rebuilt, designated_out, actor=s.actor,
                              budget=s.budget, pending=())
    out = situation_assessment(dom, mid, k)
    return replace(out, actor="R"), replace(out, actor="H")


def _uniform_human_refinements(dom: DomainModel,
                               s: EpistemicState) -> list[Refinement]:
    """Refinements of the human agenda that exist in every world, in the
    designated world's order."""
    per_world = []
    for w in s.worlds:
        try:
            refs = feasible_refinements(dom, w.tn_h, w.bel_h, "H")
        except DomainError:
            refs = ()
        per_world.append({r.key(): r for r in refs})
    common = set(per_world[s.designated])
    for m in per_world:
        common &= set(m)
    return [r for key, r in per_world[s.designated].items() if key in common]


def _blocked_atoms(dom: DomainModel, s: EpistemicState) -> set[Literal]:
    """Facts the worlds disagree on among the preconditions the human would
    have to trust for its actually-available refinements."""
    d = s.designated_world
    try:
        refs = feasible_refinements(dom, d.tn_h, d.bel_h, "H")
    except DomainError:
        refs = ()
    atoms: set[Literal] = set()
    for ref in refs:
        for l in ref.pres:
            atom = l.atom
            if len({w.bel_h.entails(atom) for w in s.worlds}) > 1:
                atoms.add(atom)
    return atoms


def _inform_candidates(dom: DomainModel, s: EpistemicState) -> list[Literal]:
    d = s.designated_world
    atoms: set[Literal] = set()
    for w in s.worlds:
        try:
            diff = alignment_diff(dom, d.bel_r, d.tn_r, w.bel_rh, w.tn_rh)
        except AlignmentImpossibleError:
            continue
        atoms.update(l.atom for l in diff)
    atoms |= _blocked_atoms(dom, s)
    return sorted(atoms, key=str)


# --------------------------------------------------------------------------
# Expansion


def _step(dom: DomainModel, s: EpistemicState, choice: Refinement | None,
          k: int) -> EpistemicState:
    a = build_epistemic_action(dom, s, choice, k)
    return situation_assessment(dom, product_update(dom, s, a), k)


def expand(dom: DomainModel, prob: ProblemInstance,
           s: EpistemicState) -> list[tuple[str, EpistemicState]]:
    """All labeled successor states of ``s``, in a deterministic order:
    speech acts first, then refinements, then standing by."""
    children = _options(dom, prob, s)
    if os.environ.get("EHATP_LOG", "") in ("expand", "all"):
        print(f"EXPAND: {s.actor} |W|={len(s.worlds)} -> "
              + (", ".join(label for label, _ in children) or "(dead end)"),
              file=sys.stderr)
    return children


def _options(dom: DomainModel, prob: ProblemInstance,
             s: EpistemicState) -> list[tuple[str, EpistemicState]]:
    k = prob.k
    co = state_copresent(dom, s)
    children: list[tuple[str, EpistemicState]] = []

    if s.actor == "R":
        if s.pending:
            # An answer is owed before anything else may happen.
            for p in sorted(s.pending, key=str):
                try:
                    _, inform = synthesize_communication(dom, s, p, k)
                except EhatpError:
                    continue
                children.append((f"inform-{p.atom}", inform))
            if children:
                return children
            s = replace(s, pending=())  # the questions settled themselves

        if co and prob.comm_allowed:
            for atom in _inform_candidates(dom, s):
                try:
                    _, inform = synthesize_communication(dom, s, atom, k)
                except EhatpError:
                    continue
                children.append((f"inform-{atom}", inform))

        d = s.designated_world
        ontic: list[tuple[str, EpistemicState]] = []
        if co or s.budget > 0:
            try:
                refs = feasible_refinements(dom, d.tn_r, d.bel_r, "R")
            except DomainError:
                refs = ()
            for ref in refs:
                try:
                    ontic.append((str(ref.first_primitive),
                                  _step(dom, s, ref, k)))
                except (DomainError, BudgetExceededError):
                    continue
        children.extend(ontic)

        # Out of sight the robot may always bide its time; face to face it
        # only stands by when it has nothing of its own left to do.
        if not co or (not ontic and evaluate_state(dom, s) != DONE):
            children.append(("noop", _step(dom, s, None, k)))
        return children

    uniform = _uniform_human_refinements(dom, s)
    for ref in uniform:
        try:
            children.append((str(ref.first_primitive), _step(dom, s, ref, k)))
        except (DomainError, BudgetExceededError):
            continue

    if not uniform and co and prob.comm_allowed:
        asked: list[Literal] = []
        for atom in sorted(_blocked_atoms(dom, s), key=str):
            try:
                ask, _ = synthesize_communication(dom, s, atom, k)
            except EhatpError:
                continue
            children.append((f"ask-{atom}", ask))
            asked.append(atom)
        if asked:
            waiting = EpistemicState.make(
                s.worlds, s.designated_world, actor="R",
                budget=s.budget, pending=tuple(asked))
            children.append(("wait", waiting))

    if not children and evaluate_state(dom, s) != DONE:
        children.append(("noop", _step(dom, s, None, k)))
    return children


# --------------------------------------------------------------------------
# Status propagation


def _combined(n: SearchNode) -> str:
    if not n.children:
        return n.status
    stats = [c.status for _, c in n.children]
    if n.kind == "OR":
        if any(st == DONE for st in stats):
            return DONE
        if all(st == DEAD for st in stats):
            return DEAD
    else:
        if all(st == DONE for st in stats):
            return DONE
        if any(st == DEAD for st in stats):
            return DEAD
    return UNKNOWN


def propagate_revised_status(node: SearchNode) -> None:
    """Push a node's freshly set status to its ancestors; an ancestor whose
    status does not change stops the ripple."""
    work = list(node.parents)
    while work:
        p = work.pop()
        if p.status != UNKNOWN or p.children is None:
            continue
        revised = _combined(p)
        if revised == p.status:
            continue
        p.status = revised
        work.extend(p.parents)


# --------------------------------------------------------------------------
# Policy extraction


@dataclass
class PolicyNode:
    id: int
    kind: str  # "OR", "AND", or "LEAF"
    actor: str
    edge: str | None  # label of the incoming edge; None at the root
    copresent: bool
    children: list[int]
    state: EpistemicState = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class Policy:
    nodes: list[PolicyNode]

    @property
    def leaves(self) -> int:
        return sum(1 for n in self.nodes if n.kind == "LEAF")

    def to_json(self) -> str:
        doc = {"nodes": [{
            "id": n.id,
            "kind": n.kind,
            "actor": n.actor,
            "edge": n.edge,
            "copresent": n.copresent,
            "children": list(n.children),
        } for n in self.nodes]}
        return json.dumps(doc, indent=2)

    def traces(self) -> list[tuple[str, ...]]:
        """Every root-to-leaf sequence of edge labels."""
        out: list[tuple[str, ...]] = []

        def walk(idx: int, acc: tuple[str, ...]) -> None:
            n = self.nodes[idx]
            if not n.children:
                out.append(acc)
                return
            for cid in n.children:
                walk(cid, acc + (self.nodes[cid].edge,))

        walk(0, ())
        return out


def _comm_weight(label: str) -> int:
    return 1 if label.startswith(("inform-", "ask-")) else 0


def _reachable(root: SearchNode) -> list[SearchNode]:
    seen: set[int] = set()
    order: list[SearchNode] = []
    stack = [root]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        order.append(n)
        if n.children:
            stack.extend(c for _, c in reversed(n.children))
    return order


def extract_joint_solution(dom: DomainModel, root: SearchNode) -> Policy:
    """Carve the joint plan out of a finished search graph.

    Every finished node gets a value: the worst-case number of turns to
    completion and the number of speech acts spent on the way.  The robot's
    nodes keep the single child minimizing (turns, speech acts, edge label);
    the human's keep every covered alternative.  The chosen subgraph is then
    unfolded into a tree with preorder ids.
    """
    if root.status != DONE:
        raise EhatpError("no finished joint plan to extract")

    done = [n for n in _reachable(root) if n.status == DONE]
    value: dict[int, tuple[float, float]] = {id(n): (math.inf, math.inf)
                                             for n in done}
    choice: dict[int, tuple[str, SearchNode]] = {}

    changed = True
    while changed:
        changed = False
        for n in done:
            if not n.children:
                new = (0.0, 0.0)
            elif n.kind == "OR":
                best = None
                pick = None
                for i, (label, c) in enumerate(n.children):
                    vc = value.get(id(c))
                    if vc is None or vc[0] == math.inf:
                        continue
                    cand = (vc[0] + 1, vc[1] + _comm_weight(label), label, i)
                    if best is None or cand < best:
                        best = cand
                        pick = (label, c)
                if best is None:
                    continue
                new = (best[0], best[1])
                if choice.get(id(n)) != pick:
                    choice[id(n)] = pick
                    changed = True
            else:
                worst = 0.0
                talk = 0.0
                feasible = True
                for label, c in n.children:
                    vc = value.get(id(c))
                    if vc is None or vc[0] == math.inf:
                        feasible = False
                        break
                    worst = max(worst, vc[0])
                    talk += vc[1] + _comm_weight(label)
                if not feasible:
                    continue
                new = (worst + 1, talk)
            if new != value[id(n)]:
                value[id(n)] = new
                changed = True

    nodes: list[PolicyNode] = []

    def emit(n: SearchNode, edge: str | None) -> int:
        if not n.children:
            keep: list[tuple[str, SearchNode]] = []
        elif n.kind == "OR":
            keep = [choice[id(n)]]
        else:
            keep = list(n.children)
        pn = PolicyNode(
            id=len(nodes),
            kind="LEAF" if not keep else n.kind,
            actor=n.state.actor,
            edge=edge,
            copresent=state_copresent(dom, n.state),
            children=[],
            state=n.state,
        )
        nodes.append(pn)
        for label, c in keep:
            pn.children.append(emit(c, label))
        return pn.id

    emit(root, None)
    return Policy(nodes)


# --------------------------------------------------------------------------
# Parallel execution schedule


@dataclass(frozen=True)
class Step:
    r: str | None
    h: str | None


@dataclass(frozen=True)
class ExecutionSchedule:
    traces: tuple[tuple[Step, ...], ...]


def parallelize(policy: Policy) -> ExecutionSchedule:
    """Overlay each trace's separated stretches.

    While the agents are apart their actions do not interact, so a maximal
    run of edges whose successor state is separated is zipped into joint
    steps, the shorter side padded with "noop".  Everything face to face
    stays strictly turn by turn.
    """
    traces: list[tuple[Step, ...]] = []

    def compile_edges(edges: list[tuple[str, str, bool]]) -> tuple[Step, ...]:
        steps: list[Step] = []
        i = 0
        while i < len(edges):
            label, actor, co = edges[i]
            if co:
                steps.append(Step(r=label if actor == "R" else None,
                                  h=label if actor == "H" else None))
                i += 1
                continue
            rs: list[str] = []
            hs: list[str] = []
            while i < len(edges) and not edges[i][2]:
                l, a, _ = edges[i]
                (rs if a == "R" else hs).append(l)
                i += 1
            width = max(len(rs), len(hs))
            rs += ["noop"] * (width - len(rs))
            hs += ["noop"] * (width - len(hs))
            steps.extend(Step(r=r, h=h) for r, h in zip(rs, hs))
        return tuple(steps)

    def walk(idx: int, acc: list[tuple[str, str, bool]]) -> None:
        n = policy.nodes[idx]
        if not n.children:
            traces.append(compile_edges(acc))
            return
        for cid in n.children:
            c = policy.nodes[cid]
            walk(cid, acc + [(c.edge, n.actor, c.copresent)])

    walk(0, [])
    return ExecutionSchedule(tuple(traces))


# --------------------------------------------------------------------------
# Search driver


@dataclass
class Metrics:
    instance: str
    k: int
    comm: str
    states: int
    maxW: int
    leaves: int
    time_ms: int

    def csv_line(self) -> str:
        return (f"{self.instance},{self.k},{self.comm},{self.states},"
                f"{self.maxW},{self.leaves},{self.time_ms}")

    @staticmethod
    def csv_header() -> str:
        return "instance,K,comm,states,maxW,leaves,time_ms"


@dataclass
class SolveResult:
    policy: Policy | None
    root: SearchNode
    metrics: Metrics
    all_nodes: list[SearchNode]


def solve(dom: DomainModel, prob: ProblemInstance,
          exhaust: bool = False) -> SolveResult:
    """Breadth-first AND/OR search from the problem's initial state.

    Stops as soon as the root's status settles unless ``exhaust`` asks for
    the whole reachable graph (it is finite: the budget caps how far the
    estimated worlds may drift, and states are deduplicated).
    """
    start = time.perf_counter()
    s0 = initial_state(dom, prob)
    root = SearchNode(state=s0, kind="OR" if s0.actor == "R" else "AND",
                      depth=0)
    by_sig = {s0.signature(): root}
    all_nodes = [root]
    queue: deque[SearchNode] = deque([root])
    states = 0
    max_worlds = len(s0.worlds)

    while queue:
        n = queue.popleft()
        states += 1
        if evaluate_state(dom, n.state) == DONE:
            n.children = []
            n.status = DONE
            propagate_revised_status(n)
        else:
            n.children = []
            for label, cs in expand(dom, prob, n.state):
                sig = cs.signature()
                child = by_sig.get(sig)
                if child is None:
                    child = SearchNode(state=cs,
                                       kind="OR" if cs.actor == "R" else "AND",
                                       depth=n.depth + 1, nid=len(all_nodes))
                    by_sig[sig] = child
                    all_nodes.append(child)
                    max_worlds = max(max_worlds, len(cs.worlds))
                    queue.append(child)
                n.children.append((label, child))
                child.parents.append(n)
            if not n.children:
                n.status = DEAD
                propagate_revised_status(n)
            elif n.status == UNKNOWN:
                # Deduplicated children may already be settled.
                revised = _combined(n)
                if revised != UNKNOWN:
                    n.status = revised
                    propagate_revised_status(n)
        if not exhaust and root.status != UNKNOWN:
            break

    policy = extract_joint_solution(dom, root) if root.status == DONE else None
    elapsed = int(round((time.perf_counter() - start) * 1000))
    metrics = Metrics(
        instance=prob.name,
        k=prob.k,
        comm="on" if prob.comm_allowed else "off",
        states=states,
        maxW=max_worlds,
        leaves=policy.leaves if policy else 0,
        time_ms=elapsed,
    )
    return SolveResult(policy, root, metrics, all_nodes)

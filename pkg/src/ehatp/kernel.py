"""Belief dynamics: how joint states evolve when an agent acts.

A state holds the worlds the human cannot tell apart.  When the robot acts
out of the human's sight, every world also runs the action the human *would*
expect there, so the state accumulates one hypothesis per plausible course
of action.  When the human can see the robot, witnessing an action rules out
every hypothesis that cannot produce that same action, and shared
observations are folded back into the human-side belief bases.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

from .dsl import DomainModel, GroundAction, KnowledgeRule, ProblemInstance
from .htn import Refinement, advance, feasible_refinements
from .model import (
    AGENTS,
    BeliefBase,
    BudgetExceededError,
    DomainError,
    EpistemicState,
    InconsistentAdvanceError,
    Literal,
    NoEventError,
    TaskNetwork,
    World,
    is_variable,
)

OBSERVER_SYMBOL = "observer"


def _trace_enabled(channel: str) -> bool:
    flag = os.environ.get("EHATP_LOG", "")
    return flag == channel or flag == "all"


@dataclass(frozen=True, slots=True)
class Event:
    """One possible occurrence: an action (or None for doing nothing) in one
    source world.  ``remainder`` is the acting agent's agenda afterwards."""

    action: GroundAction | None
    source: str  # wid of the source world
    designated: bool
    remainder: TaskNetwork = ()

    def label(self) -> str:
        return "noop" if self.action is None else str(self.action)


@dataclass(frozen=True, slots=True)
class EpistemicAction:
    events: tuple[Event, ...]
    copresence: tuple[Literal, ...]
    actor: str

    def __post_init__(self) -> None:
        if not self.events:
            raise NoEventError("an epistemic action needs at least one event")
        if sum(1 for e in self.events if e.designated) != 1:
            raise NoEventError("exactly one event must be designated")
        if self.actor not in AGENTS:
            raise DomainError(f"unknown actor {self.actor!r}")

    @property
    def designated_event(self) -> Event:
        return next(e for e in self.events if e.designated)


@dataclass(frozen=True, slots=True)
class ObservationContext:
    observer: str = "H"
    observer_place: str | None = None
    co_present: bool = False
    witnessed: GroundAction | None = None


# --------------------------------------------------------------------------
# Conjunction matching over a belief base


def _match_bindings(bel: BeliefBase, literals: Iterable[Literal],
                    binding: dict[str, str] | None = None) -> Iterator[dict[str, str]]:
    """Bindings of the free variables under which ``bel`` entails every literal."""
    solutions = [dict(binding or {})]
    for l in literals:
        nxt: list[dict[str, str]] = []
        for b in solutions:
            g = l.substitute(b)
            free = [a for a in g.args if is_variable(a)]
            if not free:
                if bel.entails(g):
                    nxt.append(b)
            elif g.positive:
                for atom in sorted(bel.atoms, key=str):
                    if atom.pred != g.pred or len(atom.args) != len(g.args):
                        continue
                    trial = dict(b)
                    ok = True
                    for want, got in zip(g.args, atom.args):
                        if is_variable(want):
                            if trial.get(want, got) != got:
                                ok = False
                                break
                            trial[want] = got
                        elif want != got:
                            ok = False
                            break
                    if ok:
                        nxt.append(trial)
            else:
                raise DomainError(
                    f"negative literal {l} leaves variables {free} unbound")
        solutions = nxt
        if not solutions:
            return
    seen: set[tuple] = set()
    for b in solutions:
        key = tuple(sorted(b.items()))
        if key not in seen:
            seen.add(key)
            yield b


def copresent(w: World, rule: tuple[Literal, ...]) -> bool:
    """Whether the agents share each other's presence in ``w`` (ground truth)."""
    return next(_match_bindings(w.bel_r, rule), None) is not None


def state_copresent(dom: DomainModel, s: EpistemicState) -> bool:
    return copresent(s.designated_world, dom.copresence)


# --------------------------------------------------------------------------
# Observability


def _unify_target(target: Literal, atom: Literal) -> dict[str, str] | None:
    if target.pred != atom.pred or len(target.args) != len(atom.args):
        return None
    binding: dict[str, str] = {}
    for want, got in zip(target.args, atom.args):
        if is_variable(want):
            if binding.get(want, got) != got:
                return None
            binding[want] = got
        elif want != got:
            return None
    return binding


def observable(dom: DomainModel, l: Literal, ctx: ObservationContext,
               w: World) -> bool:
    """Can ``ctx.observer`` settle the truth of ``l`` in world ``w``?

    ``w`` supplies the ground truth the knowledge-rule antecedents are judged
    against.  Effects of a witnessed action are settled regardless of the
    predicate's declared visibility.
    """
    atom = l.atom
    if ctx.witnessed is not None:
        touched = {eff.atom for eff in ctx.witnessed.adds}
        touched |= {eff.atom for eff in ctx.witnessed.dels}
        if atom in touched:
            return True
    decl = dom.predicate(atom.pred)
    if decl is None or not decl.observable:
        return False
    for rule in dom.rules:
        binding = _unify_target(rule.target, atom)
        if binding is None:
            continue
        binding[OBSERVER_SYMBOL] = ctx.observer
        if next(_match_bindings(w.bel_r, rule.antecedent, binding), None) is not None:
            return True
    return False


# --------------------------------------------------------------------------
# Building an epistemic action


def initial_state(dom: DomainModel, prob: ProblemInstance) -> EpistemicState:
    """Single-world start: truthful, with the human's stated divergences."""
    hb = prob.initial_bel_h
    w = World(
        bel_r=prob.ground_truth,
        bel_h=hb,
        bel_rh=hb,
        tn_r=(prob.root_task_r,),
        tn_h=(prob.root_task_h,),
        tn_rh=(prob.root_task_r,),
    )
    return EpistemicState.make([w], w, actor="H", budget=prob.k)


def _anticipated(dom: DomainModel, w: World, allow_ontic: bool) -> tuple[Refinement, ...]:
    if not allow_ontic:
        return ()
    try:
        return feasible_refinements(dom, w.tn_rh, w.bel_rh, "R")
    except DomainError:
        return ()


def build_epistemic_action(dom: DomainModel, s: EpistemicState,
                           choice: Refinement | None, k: int) -> EpistemicAction:
    """Lift one concrete choice of the current actor into an epistemic action.

    For the robot, ``choice`` is its real refinement (None to stand by); every
    world additionally contributes the anticipated alternatives the human
    cannot rule out there, plus standing by.  For the human, acting is public
    and uniform, so each world carries the same event.
    """
    events: list[Event] = []
    if s.actor == "H":
        for i, w in enumerate(s.worlds):
            if choice is None:
                events.append(Event(None, w.wid, i == s.designated, w.tn_h))
            else:
                events.append(Event(choice.first_primitive, w.wid,
                                    i == s.designated, choice.remainder))
        return EpistemicAction(tuple(events), dom.copresence, "H")

    d = s.designated_world
    if choice is None:
        events.append(Event(None, d.wid, True, d.tn_r))
    else:
        events.append(Event(choice.first_primitive, d.wid, True, choice.remainder))
    co = state_copresent(dom, s)
    for w in s.worlds:
        for r in _anticipated(dom, w, allow_ontic=co or w.acted < k):
            events.append(Event(r.first_primitive, w.wid, False, r.remainder))
        events.append(Event(None, w.wid, False, w.tn_rh))
    return EpistemicAction(tuple(events), dom.copresence, "R")


# --------------------------------------------------------------------------
# Product update


def _same_act(a: GroundAction | None, b: GroundAction | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.name == b.name and a.args == b.args


def _advance_or_keep(dom: DomainModel, tn: TaskNetwork, act: GroundAction,
                     bel: BeliefBase, actor: str) -> TaskNetwork:
    try:
        return advance(dom, tn, act, bel, actor)
    except (InconsistentAdvanceError, DomainError):
        return tn


def _apply_robot_event(dom: DomainModel, w: World, e: Event) -> World:
    if e.action is None:
        return w
    act = e.action
    bel_rh = w.bel_rh.apply_effects(act.adds, act.dels)
    bel_h = w.bel_h.apply_effects(act.adds, act.dels)
    if e.designated:
        bel_r = w.bel_r.apply_effects(act.adds, act.dels)
        tn_r = e.remainder
        tn_rh = _advance_or_keep(dom, w.tn_rh, act, w.bel_rh, "R")
    else:
        # Hypothetical course: its ground truth is the human's projection.
        bel_r = bel_rh
        tn_r = e.remainder
        tn_rh = e.remainder
    acted = w.acted + (1 if act.ontic else 0)
    return World(bel_r, bel_h, bel_rh, tn_r, w.tn_h, tn_rh, acted)


def _apply_human_event(w: World, e: Event) -> World:
    if e.action is None:
        return w
    act = e.action
    return World(
        w.bel_r.apply_effects(act.adds, act.dels),
        w.bel_h.apply_effects(act.adds, act.dels),
        w.bel_rh.apply_effects(act.adds, act.dels),
        w.tn_r, e.remainder, w.tn_rh, w.acted,
    )


def product_update(dom: DomainModel, s: EpistemicState,
                   a: EpistemicAction) -> EpistemicState:
    """Cross worlds with events; the designated pair tracks what really happens.

    While the agents share a place, witnessing settles the robot's move: a
    successor whose event differs from the designated action is marked for
    removal at the next assessment.  A hidden ontic robot action spends one
    unit of budget; running dry raises :class:`BudgetExceededError`.
    """
    by_wid = {w.wid: w for w in s.worlds}
    d_event = a.designated_event
    d_source = by_wid[d_event.source]
    co = copresent(d_source, a.copresence)

    budget = s.budget
    if (a.actor == "R" and d_event.action is not None
            and d_event.action.ontic and not co):
        if budget <= 0:
            raise BudgetExceededError(
                f"hidden action {d_event.action} with no budget left")
        budget -= 1

    successors: list[World] = []
    new_designated: World | None = None
    for e in a.events:
        w = by_wid[e.source]
        if e.action is not None:
            base = w.bel_h if a.actor == "H" else (
                w.bel_r if e.designated else w.bel_rh)
            if not base.entails_all(e.action.pre):
                if e.designated:
                    raise DomainError(
                        f"designated action {e.action} inapplicable in its world")
                continue
        child = (_apply_human_event(w, e) if a.actor == "H"
                 else _apply_robot_event(dom, w, e))
        if (co and a.actor == "R" and not e.designated
                and not _same_act(e.action, d_event.action)):
            child = replace(child, distinguishable=True)
        successors.append(child)
        if e.designated:
            new_designated = child
    assert new_designated is not None
    other = "H" if a.actor == "R" else "R"
    return EpistemicState.make(successors, new_designated, actor=other,
                               budget=budget, pending=s.pending)


# --------------------------------------------------------------------------
# Situation assessment


def situation_assessment(dom: DomainModel, s: EpistemicState, k: int,
                         ctx: ObservationContext | None = None) -> EpistemicState:
    """Remove worlds the human can now tell apart; share what is in view.

    A world goes when it was marked while being watched, or when it disagrees
    with reality on some atom the human can currently observe.  Observable
    atoms are then folded into the surviving human-side bases, and a reunion
    restores the robot's action budget.
    """
    d = s.designated_world
    co = copresent(d, dom.copresence)
    if ctx is None:
        ctx = ObservationContext("H", d.agent_place.get("H"), co)

    survivors: list[World] = []
    removed: list[tuple[World, str]] = []
    for w in s.worlds:
        if w is d:
            survivors.append(w)
            continue
        if w.distinguishable:
            removed.append((w, "witness"))
            continue
        reason = None
        for atom in sorted(d.bel_r.atoms ^ w.bel_rh.atoms, key=str):
            if observable(dom, atom, ctx, d):
                reason = str(atom)
                break
        if reason is None:
            survivors.append(w)
        else:
            removed.append((w, reason))

    if _trace_enabled("sa"):
        for w, reason in removed:
            print(f"SA: removed {w.wid} reason={reason}", file=sys.stderr)

    if not removed and not ctx.co_present:
        return s

    folded: list[World] = []
    designated_out: World | None = None
    for w in survivors:
        bel_h, bel_rh = w.bel_h, w.bel_rh
        universe = d.bel_r.atoms | w.bel_h.atoms | w.bel_rh.atoms
        for atom in sorted(universe, key=str):
            if observable(dom, atom, ctx, d):
                truth = d.bel_r.entails(atom)
                bel_h = bel_h.assign(atom, truth)
                bel_rh = bel_rh.assign(atom, truth)
        child = World(w.bel_r, bel_h, bel_rh, w.tn_r, w.tn_h, w.tn_rh,
                      0 if ctx.co_present else w.acted)
        folded.append(child)
        if w is d:
            designated_out = child
    assert designated_out is not None
    budget = k if ctx.co_present else s.budget
    return EpistemicState.make(folded, designated_out, actor=s.actor,
                               budget=budget, pending=s.pending)

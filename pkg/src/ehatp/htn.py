"""Task-network decomposition against a single belief base.

A task network is a totally ordered agenda of :class:`~ehatp.model.Task`
instances.  Refining a network means expanding abstract tasks through
methods (binding any free method variables against the belief base) until
an applicable primitive action surfaces at the front.  Every distinct way
of doing so yields one :class:`Refinement` carrying the first primitive,
the agenda that remains once it executes, and the method labels chosen
along the way.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .dsl import DomainModel, GroundAction, MethodSchema
from .model import (
    AlignmentImpossibleError,
    BeliefBase,
    DomainError,
    InconsistentAdvanceError,
    Literal,
    Task,
    TaskNetwork,
    is_variable,
)

# Expansion of one network may not nest methods deeper than this; the
# validator already rejects recursive methods, so hitting it means a bug.
_MAX_DEPTH = 64


@dataclass(frozen=True, slots=True)
class Refinement:
    first_primitive: GroundAction
    remainder: TaskNetwork
    trace: tuple[str, ...]
    # every ground precondition checked on the way to the first primitive
    # (method preconditions along the decomposition path, then the action's)
    pres: tuple[Literal, ...] = ()

    def key(self) -> tuple:
        return (self.first_primitive.name, self.first_primitive.args, self.remainder)

    def __str__(self) -> str:
        rest = ", ".join(str(t) for t in self.remainder)
        return f"{self.first_primitive} :: [{rest}]"


def _method_bindings(dom: DomainModel, m: MethodSchema, args: tuple[str, ...],
                     bel: BeliefBase):
    """Ground ``m`` applied to ``args``: all variable bindings whose
    preconditions the base entails, in a deterministic order."""
    binding = dict(zip((p.name for p in m.params), args))
    solutions = [binding]
    for pre in m.pre:
        nxt = []
        for b in solutions:
            ground = pre.substitute(b)
            free = [a for a in ground.args if is_variable(a)]
            if not free:
                if bel.entails(ground):
                    nxt.append(b)
            elif ground.positive:
                for atom in sorted(bel.atoms, key=str):
                    if atom.pred != ground.pred or len(atom.args) != len(ground.args):
                        continue
                    trial = dict(b)
                    ok = True
                    for want, got in zip(ground.args, atom.args):
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
                    f"method {m.task}/{m.label}: negative precondition {pre} "
                    f"leaves {free} unbound")
        solutions = nxt
        if not solutions:
            return
    seen = set()
    for b in solutions:
        key = tuple(sorted(b.items()))
        if key not in seen:
            seen.add(key)
            yield b


def _substitute_tasks(tasks: tuple[Task, ...], binding: dict[str, str]) -> tuple[Task, ...]:
    return tuple(Task(t.name, tuple(binding.get(a, a) for a in t.args)) for t in tasks)


def feasible_refinements(dom: DomainModel, tn: TaskNetwork, bel: BeliefBase,
                         actor: str) -> tuple[Refinement, ...]:
    """Every way to decompose ``tn`` down to an applicable first action.

    The result is exhaustive over method choices and deterministic; an
    empty tuple means the actor cannot act on this agenda under ``bel``.
    """
    results: dict[tuple, Refinement] = {}
    frontier: list[tuple[TaskNetwork, tuple[str, ...], int, tuple[Literal, ...]]] = [
        (tuple(tn), (), 0, ())]
    while frontier:
        agenda, trace, depth, acc = frontier.pop()
        if not agenda:
            continue
        if depth > _MAX_DEPTH:
            raise DomainError(f"decomposition of {agenda[0]} exceeds depth {_MAX_DEPTH}")
        head, rest = agenda[0], agenda[1:]
        schema = dom.action(head.name)
        if schema is not None:
            if any(is_variable(a) for a in head.args):
                raise DomainError(f"unbound arguments in subtask {head}")
            if schema.actor != actor:
                raise DomainError(
                    f"task decomposes to {head.name!r}, an action of {schema.actor}, "
                    f"while refining for {actor}")
            ground = schema.ground(head.args)
            if all(bel.entails(p) for p in ground.pre):
                ref = Refinement(ground, rest, trace, acc + ground.pre)
                results.setdefault(ref.key(), ref)
            continue
        methods = dom.methods_for(head.name)
        if not methods:
            raise DomainError(f"no method declared for abstract task {head.name!r}")
        for m in methods:
            if len(m.params) != len(head.args):
                continue
            for binding in _method_bindings(dom, m, head.args, bel):
                subs = _substitute_tasks(m.subtasks, binding)
                checked = tuple(p.substitute(binding) for p in m.pre)
                frontier.append((subs + rest, trace + (m.label,), depth + 1,
                                 acc + checked))
    return tuple(sorted(results.values(),
                        key=lambda r: (str(r.first_primitive),
                                       tuple(map(str, r.remainder)), r.trace)))


def is_fully_decomposed(tn: TaskNetwork) -> bool:
    return not tn


def effectively_decomposed(dom: DomainModel, tn: TaskNetwork, bel: BeliefBase,
                           actor: str) -> bool:
    """True iff the agenda can reach empty through zero-primitive methods:
    nothing is left that would require ``actor`` to act under ``bel``."""
    frontier: list[tuple[TaskNetwork, int]] = [(tuple(tn), 0)]
    seen = set()
    while frontier:
        agenda, depth = frontier.pop()
        if not agenda:
            return True
        if depth > _MAX_DEPTH or agenda in seen:
            continue
        seen.add(agenda)
        head, rest = agenda[0], agenda[1:]
        if dom.action(head.name) is not None:
            continue  # a pending primitive: this expansion requires work
        for m in dom.methods_for(head.name):
            if len(m.params) != len(head.args):
                continue
            for binding in _method_bindings(dom, m, head.args, bel):
                frontier.append((_substitute_tasks(m.subtasks, binding) + rest,
                                 depth + 1))
    return False


def advance(dom: DomainModel, tn: TaskNetwork, act: GroundAction, bel: BeliefBase,
            actor: str) -> TaskNetwork:
    """The agenda remaining after executing ``act`` as the first primitive
    of one of ``tn``'s feasible refinements."""
    matches = [r for r in feasible_refinements(dom, tn, bel, actor)
               if r.first_primitive.name == act.name
               and r.first_primitive.args == act.args]
    if not matches:
        raise InconsistentAdvanceError(f"{act} is not derivable from [{', '.join(map(str, tn))}]")
    return matches[0].remainder


def _first_primitive_set(dom: DomainModel, tn: TaskNetwork, bel: BeliefBase,
                         actor: str) -> frozenset[tuple[str, tuple[str, ...]]]:
    try:
        refs = feasible_refinements(dom, tn, bel, actor)
    except DomainError:
        return frozenset()
    return frozenset((r.first_primitive.name, r.first_primitive.args) for r in refs)


def alignment_diff(dom: DomainModel, bel_r: BeliefBase, tn_r: TaskNetwork,
                   bel_rh: BeliefBase, tn_rh: TaskNetwork,
                   actor: str = "R") -> frozenset[Literal]:
    """Minimal facts to transfer from ``bel_r`` into ``bel_rh`` so that both
    perspectives agree on the set of first primitives the robot may take.

    Candidates come from the symmetric difference of the two bases, each
    stated with ``bel_r``'s polarity; subsets are tried in increasing size
    (capped at 4, then falling back to the precondition-relevant part of
    the full difference).  Raises :class:`AlignmentImpossibleError` when no
    transfer can reconcile structurally diverged agendas.
    """
    target = _first_primitive_set(dom, tn_r, bel_r, actor)

    def aligned(base: BeliefBase) -> bool:
        return _first_primitive_set(dom, tn_rh, base, actor) == target

    if aligned(bel_rh):
        return frozenset()

    sym = sorted(bel_r.atoms ^ bel_rh.atoms, key=str)
    candidates = [a if a in bel_r.atoms else a.negate() for a in sym]

    def transfer(subset) -> BeliefBase:
        base = bel_rh
        for l in subset:
            base = base.assign(l.atom, l.positive)
        return base

    if not aligned(transfer(candidates)):
        raise AlignmentImpossibleError(
            "perspectives disagree structurally; no fact transfer aligns them")

    for size in range(1, min(4, len(candidates)) + 1):
        for subset in itertools.combinations(candidates, size):
            if aligned(transfer(subset)):
                return frozenset(subset)

    relevant_atoms = {
        p.atom for base, tn in ((bel_r, tn_r), (bel_rh, tn_rh))
        for r in feasible_refinements(dom, tn, base, actor)
        for p in r.first_primitive.pre}
    fallback = [l for l in candidates if l.atom in relevant_atoms]
    if fallback and aligned(transfer(fallback)):
        return frozenset(fallback)
    return frozenset(candidates)

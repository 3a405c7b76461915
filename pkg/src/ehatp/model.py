"""Ground facts, belief bases, possible worlds, and epistemic states.

Everything here is immutable; the planner shares these structures freely
between search branches.  A belief base stores positive ground atoms only and
answers negative queries by closed-world absence.  Uncertainty is never stored
inside a base: a fact an agent is unsure of appears with different values
across the worlds of an :class:`EpistemicState`.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

AGENTS = ("R", "H")


class EhatpError(Exception):
    """Base class for planner errors."""


class MalformedLiteralError(EhatpError):
    pass


class ConflictingEffectsError(EhatpError):
    pass


class UnsupportedNestingError(EhatpError):
    pass


class DomainError(EhatpError):
    """Structural problem in a domain model (e.g. task with no method)."""


class InconsistentAdvanceError(EhatpError):
    pass


class AlignmentImpossibleError(EhatpError):
    pass


class NoEventError(EhatpError):
    pass


class BudgetExceededError(EhatpError):
    pass


def is_variable(symbol: str) -> bool:
    # Capitalized identifiers are variables, except the two reserved agents.
    return bool(symbol) and symbol[0].isupper() and symbol not in AGENTS


@dataclass(frozen=True, slots=True)
class Literal:
    """A predicate applied to argument symbols, with polarity."""

    pred: str
    args: tuple[str, ...] = ()
    positive: bool = True

    def __str__(self) -> str:
        core = self.pred if not self.args else f"{self.pred}({','.join(self.args)})"
        return core if self.positive else f"not {core}"

    @property
    def atom(self) -> "Literal":
        return self if self.positive else Literal(self.pred, self.args)

    def negate(self) -> "Literal":
        return Literal(self.pred, self.args, not self.positive)

    def is_ground(self) -> bool:
        return not any(is_variable(a) for a in self.args)

    def substitute(self, binding: Mapping[str, str]) -> "Literal":
        return Literal(
            self.pred,
            tuple(binding.get(a, a) for a in self.args),
            self.positive,
        )


def lit(text: str, *args: str, positive: bool = True) -> Literal:
    """Literal shorthand: ``lit("on", "c_r", "mt")`` or ``lit("not on(c_r, mt)")``."""
    if args or ("(" not in text and not text.startswith("not ")):
        return Literal(text, tuple(args), positive)
    s = text.strip()
    if s.startswith("not "):
        positive = False
        s = s[4:].strip()
    m = re.fullmatch(r"(\w+)\s*(?:\(\s*([^()]*?)\s*\))?", s)
    if m is None:
        raise MalformedLiteralError(f"cannot parse literal: {text!r}")
    argstr = m.group(2)
    parts = tuple(a.strip() for a in argstr.split(",")) if argstr else ()
    return Literal(m.group(1), parts, positive)


def _require_ground(l: Literal) -> None:
    if not l.is_ground():
        raise MalformedLiteralError(f"literal is not ground: {l}")


@dataclass(frozen=True, slots=True)
class BeliefBase:
    """A definite set of positive ground atoms under the closed-world reading."""

    atoms: frozenset[Literal] = frozenset()

    def __post_init__(self) -> None:
        for a in self.atoms:
            if not a.positive:
                raise MalformedLiteralError(f"belief bases store positive atoms only: {a}")
            _require_ground(a)

    @classmethod
    def of(cls, *literals: Literal) -> "BeliefBase":
        return cls(frozenset(literals))

    def entails(self, l: Literal) -> bool:
        _require_ground(l)
        return (l.atom in self.atoms) == l.positive

    def entails_all(self, literals: Iterable[Literal]) -> bool:
        return all(self.entails(l) for l in literals)

    def apply_effects(self, adds: Iterable[Literal], dels: Iterable[Literal]) -> "BeliefBase":
        add_atoms = frozenset(a.atom for a in adds)
        del_atoms = frozenset(d.atom for d in dels)
        for group in (add_atoms, del_atoms):
            for a in group:
                _require_ground(a)
        overlap = add_atoms & del_atoms
        if overlap:
            raise ConflictingEffectsError(
                "atoms both added and deleted: " + ", ".join(sorted(map(str, overlap)))
            )
        return BeliefBase((self.atoms - del_atoms) | add_atoms)

    def assign(self, atom: Literal, value: bool) -> "BeliefBase":
        """Force one atom to a definite value (used by communication and SA)."""
        if value:
            return BeliefBase(self.atoms | {atom.atom})
        return BeliefBase(self.atoms - {atom.atom})

    def canonical(self) -> tuple[str, ...]:
        return tuple(sorted(str(a) for a in self.atoms))

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __str__(self) -> str:
        return "{" + ", ".join(self.canonical()) + "}"


# --------------------------------------------------------------------------
# Task agendas


@dataclass(frozen=True, slots=True)
class Task:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return self.name if not self.args else f"{self.name}({','.join(self.args)})"

    def substitute(self, binding: Mapping[str, str]) -> "Task":
        return Task(self.name, tuple(binding.get(a, a) for a in self.args))


TaskNetwork = tuple[Task, ...]


def network_str(tn: TaskNetwork) -> str:
    return "[" + ", ".join(str(t) for t in tn) + "]"


# --------------------------------------------------------------------------
# Worlds and epistemic states


@dataclass(frozen=True, slots=True)
class World:
    """One hypothetical course of the task.

    ``bel_r`` is the ground truth of this hypothesis, ``bel_h`` the human's
    beliefs in it, and ``bel_rh`` the human's model of the robot's beliefs.
    ``acted`` counts the ontic robot actions applied in this world since the
    agents last shared a place; it bounds how far the anticipated robot may
    run ahead.  ``distinguishable`` marks a world the human told apart from
    the designated one while watching the robot act; situation assessment
    removes such worlds.
    """

    bel_r: BeliefBase
    bel_h: BeliefBase
    bel_rh: BeliefBase
    tn_r: TaskNetwork = ()
    tn_h: TaskNetwork = ()
    tn_rh: TaskNetwork = ()
    acted: int = 0
    distinguishable: bool = False

    def key(self) -> str:
        parts = [
            "bel_r=" + ",".join(self.bel_r.canonical()),
            "bel_h=" + ",".join(self.bel_h.canonical()),
            "bel_rh=" + ",".join(self.bel_rh.canonical()),
            "tn_r=" + network_str(self.tn_r),
            "tn_h=" + network_str(self.tn_h),
            "tn_rh=" + network_str(self.tn_rh),
            f"acted={self.acted}",
        ]
        if self.distinguishable:
            parts.append("dist")
        return ";".join(parts)

    @property
    def wid(self) -> str:
        return "w" + hashlib.sha1(self.key().encode()).hexdigest()[:10]

    @property
    def agent_place(self) -> dict[str, str]:
        places: dict[str, str] = {}
        for a in self.bel_r:
            if a.pred == "at" and len(a.args) == 2 and a.args[0] in AGENTS:
                agent, place = a.args
                if agent in places and places[agent] != place:
                    raise MalformedLiteralError(
                        f"agent {agent} is at both {places[agent]} and {place}"
                    )
                places[agent] = place
        return places


@dataclass(frozen=True, slots=True)
class EpistemicState:
    """Worlds the human cannot tell apart, with the one matching reality marked.

    ``actor`` names whose turn it is, ``budget`` the remaining ontic robot
    actions allowed before the next reunion, and ``pending`` the facts the
    human has asked to be told (a forced inform on the robot's next turn).
    """

    worlds: tuple[World, ...]
    designated: int
    actor: str = "R"
    budget: int = 0
    pending: tuple[Literal, ...] = ()

    def __post_init__(self) -> None:
        if not self.worlds:
            raise EhatpError("an epistemic state needs at least one world")
        if not 0 <= self.designated < len(self.worlds):
            raise EhatpError("designated index out of range")
        if self.actor not in AGENTS:
            raise EhatpError(f"unknown actor {self.actor!r}")

    @classmethod
    def make(
        cls,
        worlds: Iterable[World],
        designated: World,
        actor: str,
        budget: int,
        pending: tuple[Literal, ...] = (),
    ) -> "EpistemicState":
        """Canonicalize: deduplicate worlds by content and sort by key."""
        by_key: dict[str, World] = {}
        for w in worlds:
            by_key.setdefault(w.key(), w)
        dkey = designated.key()
        by_key[dkey] = designated
        ordered = sorted(by_key.values(), key=World.key)
        return cls(
            worlds=tuple(ordered),
            designated=next(i for i, w in enumerate(ordered) if w.key() == dkey),
            actor=actor,
            budget=budget,
            pending=tuple(sorted(pending, key=str)),
        )

    @property
    def designated_world(self) -> World:
        return self.worlds[self.designated]

    def signature(self) -> str:
        body = "||".join(w.key() for w in self.worlds)
        pend = ",".join(str(p) for p in self.pending)
        return f"{body}@d={self.designated};actor={self.actor};k={self.budget};pending=[{pend}]"

    def state_id(self) -> str:
        return "s" + hashlib.sha1(self.signature().encode()).hexdigest()[:12]

    def replace_worlds(
        self, worlds: Iterable[World], designated: World
    ) -> "EpistemicState":
        return EpistemicState.make(worlds, designated, self.actor, self.budget, self.pending)


# --------------------------------------------------------------------------
# Epistemic formulas (knowledge nesting capped at two levels)


@dataclass(frozen=True, slots=True)
class FLit:
    literal: Literal


@dataclass(frozen=True, slots=True)
class FNot:
    sub: "Formula"


@dataclass(frozen=True, slots=True)
class FAnd:
    subs: tuple["Formula", ...]


@dataclass(frozen=True, slots=True)
class FOr:
    subs: tuple["Formula", ...]


@dataclass(frozen=True, slots=True)
class FKnows:
    agent: str
    sub: "Formula"


Formula = FLit | FNot | FAnd | FOr | FKnows


def _modal_depth(f: Formula) -> int:
    match f:
        case FLit():
            return 0
        case FNot(sub):
            return _modal_depth(sub)
        case FAnd(subs) | FOr(subs):
            return max((_modal_depth(s) for s in subs), default=0)
        case FKnows(_, sub):
            return 1 + _modal_depth(sub)
    raise TypeError(f"not a formula: {f!r}")


def evaluate(state: EpistemicState, f: Formula) -> bool:
    """Evaluate a formula; bare literals read the designated world's truth.

    ``K_R`` reads the designated world (the robot always knows which world is
    real); ``K_H`` quantifies over every world, reading that world's model of
    whoever the nested formula talks about.
    """
    if _modal_depth(f) > 2:
        raise UnsupportedNestingError("knowledge nesting deeper than two levels")
    return _eval(state, f, None)


def _eval(state: EpistemicState, f: Formula, world: World | None) -> bool:
    match f:
        case FLit(l):
            base = world.bel_rh if world is not None else state.designated_world.bel_r
            return base.entails(l)
        case FNot(sub):
            return not _eval(state, f=sub, world=world)
        case FAnd(subs):
            return all(_eval(state, s, world) for s in subs)
        case FOr(subs):
            return any(_eval(state, s, world) for s in subs)
        case FKnows(agent, sub):
            if agent == "R":
                # Within a hypothetical world, the human models the robot's
                # knowledge by bel_rh; at top level R knows the real world.
                return _eval(state, sub, world)
            if agent == "H":
                return all(_eval(state, sub, w) for w in state.worlds)
            raise EhatpError(f"unknown agent in formula: {agent!r}")
    raise TypeError(f"not a formula: {f!r}")

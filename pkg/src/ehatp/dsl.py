"""Parsing, validation, and pretty-printing of `.ehatp` domain/problem files.

The concrete syntax is a small block-structured language: a `domain { ... }`
block declares types, places, objects, predicates (each tagged `observable`
or `inferable`), knowledge rules, the co-presence formula, actions, and
methods; a `problem { ... }` block selects a domain, the turn budget `k`,
whether communication is allowed, start places, root tasks, the initial
ground truth, and any initially diverging human beliefs.  `#` starts a
comment.  Identifiers beginning with an uppercase letter are variables,
except the reserved agent names `R` and `H`.

Parsing is deterministic and raises :class:`ParseError` (a diagnostic with
file/line/column) on the first syntax or reference error; whole-model checks
that produce warnings live in :func:`validate`.  `pretty_print_domain` /
`pretty_print_problem` emit canonical text that reparses to an equal model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .model import AGENTS, BeliefBase, EhatpError, Literal, Task, is_variable

OBSERVER = "observer"
BUILTIN_TYPES = ("agent", "place")


@dataclass(frozen=True, slots=True)
class Diagnostic:
    file: str
    line: int
    col: int
    severity: str  # error | warning | note
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.severity}: {self.message}"


class ParseError(EhatpError):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


@dataclass(frozen=True, slots=True)
class Param:
    name: str
    type: str

    def __str__(self) -> str:
        return f"{self.name} {self.type}"


@dataclass(frozen=True, slots=True)
class PredicateDecl:
    name: str
    param_types: tuple[str, ...]
    observable: bool

    def __str__(self) -> str:
        sig = self.name if not self.param_types else f"{self.name}({','.join(self.param_types)})"
        return f"{sig} {'observable' if self.observable else 'inferable'}"


@dataclass(frozen=True, slots=True)
class ActionSchema:
    name: str
    actor: str
    params: tuple[Param, ...]
    place: str  # a place constant or a place-typed parameter name
    pre: tuple[Literal, ...]
    adds: tuple[Literal, ...]
    dels: tuple[Literal, ...]
    ontic: bool = True

    def ground(self, args: tuple[str, ...]) -> "GroundAction":
        if len(args) != len(self.params):
            raise EhatpError(f"action {self.name} expects {len(self.params)} args, got {len(args)}")
        binding = {p.name: a for p, a in zip(self.params, args)}
        return GroundAction(
            name=self.name,
            args=args,
            actor=self.actor,
            pre=tuple(l.substitute(binding) for l in self.pre),
            adds=tuple(l.substitute(binding) for l in self.adds),
            dels=tuple(l.substitute(binding) for l in self.dels),
            ontic=self.ontic,
        )


@dataclass(frozen=True, slots=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    actor: str
    pre: tuple[Literal, ...]
    adds: tuple[Literal, ...]
    dels: tuple[Literal, ...]
    ontic: bool = True

    def __str__(self) -> str:
        return self.name if not self.args else f"{self.name}({','.join(self.args)})"


@dataclass(frozen=True, slots=True)
class MethodSchema:
    task: str
    params: tuple[Param, ...]
    label: str
    pre: tuple[Literal, ...]
    subtasks: tuple[Task, ...]


@dataclass(frozen=True, slots=True)
class KnowledgeRule:
    name: str
    target: Literal
    antecedent: tuple[Literal, ...]


@dataclass(frozen=True, slots=True)
class DomainModel:
    name: str
    types: tuple[str, ...]
    places: tuple[str, ...]
    objects: tuple[tuple[str, str], ...]  # (name, type)
    predicates: tuple[PredicateDecl, ...]
    rules: tuple[KnowledgeRule, ...]
    copresence: tuple[Literal, ...]
    actions: tuple[ActionSchema, ...]
    methods: tuple[MethodSchema, ...]

    def predicate(self, name: str) -> PredicateDecl | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def action(self, name: str) -> ActionSchema | None:
        for a in self.actions:
            if a.name == name:
                return a
        return None

    def methods_for(self, task: str) -> tuple[MethodSchema, ...]:
        return tuple(m for m in self.methods if m.task == task)

    def task_names(self) -> frozenset[str]:
        return frozenset(m.task for m in self.methods)

    def objects_of(self, type_name: str) -> tuple[str, ...]:
        if type_name == "agent":
            return AGENTS
        if type_name == "place":
            return self.places
        return tuple(n for n, t in self.objects if t == type_name)

    def constant_type(self, name: str) -> str | None:
        if name in AGENTS:
            return "agent"
        if name in self.places:
            return "place"
        for n, t in self.objects:
            if n == name:
                return t
        return None


@dataclass(frozen=True, slots=True)
class ProblemInstance:
    name: str
    domain_name: str
    k: int
    comm_allowed: bool
    robot_place: str
    human_place: str
    root_task_r: Task
    root_task_h: Task
    ground_truth: BeliefBase
    belief_deltas: tuple[Literal, ...]  # human's initial divergences from truth

    @property
    def initial_bel_h(self) -> BeliefBase:
        base = self.ground_truth
        for d in self.belief_deltas:
            base = base.assign(d, d.positive)
        return base


# --------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # ident | int | punct | eof
    text: str
    line: int
    col: int


_PUNCT = "{}(),:"


def _tokenize(text: str, filename: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            i += 1
            col += 1
        elif c == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif c in _PUNCT:
            tokens.append(_Token("punct", c, line, col))
            i += 1
            col += 1
        elif c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            start, start_col = i, col
            i += 1
            col += 1
            while i < n and text[i].isdigit():
                i += 1
                col += 1
            tokens.append(_Token("int", text[start:i], line, start_col))
        elif c.isalpha() or c == "_":
            start, start_col = i, col
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
                col += 1
            tokens.append(_Token("ident", text[start:i], line, start_col))
        else:
            raise ParseError(Diagnostic(filename, line, col, "error", f"unexpected character {c!r}"))
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str, filename: str):
        self.filename = filename
        self.tokens = _tokenize(text, filename)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, tok: _Token, message: str) -> ParseError:
        return ParseError(Diagnostic(self.filename, tok.line, tok.col, "error", message))

    def expect_ident(self, what: str) -> _Token:
        tok = self.next()
        if tok.kind != "ident":
            raise self.error(tok, f"expected {what}, got {tok.text!r}" if tok.text else f"expected {what}")
        return tok

    def expect_keyword(self, word: str) -> _Token:
        tok = self.next()
        if tok.kind != "ident" or tok.text != word:
            raise self.error(tok, f"expected {word!r}, got {tok.text!r}" if tok.text else f"expected {word!r}")
        return tok

    def expect_punct(self, ch: str) -> _Token:
        tok = self.next()
        if tok.kind != "punct" or tok.text != ch:
            raise self.error(tok, f"expected {ch!r}, got {tok.text!r}" if tok.text else f"expected {ch!r}")
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def at_punct(self, ch: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == ch

    # -- shared pieces -----------------------------------------------------

    def parse_literal(self) -> tuple[Literal, _Token]:
        positive = True
        if self.at_keyword("not"):
            self.next()
            positive = False
        head = self.expect_ident("a predicate name")
        args: list[str] = []
        if self.at_punct("("):
            self.next()
            if not self.at_punct(")"):
                while True:
                    args.append(self.expect_ident("an argument").text)
                    if self.at_punct(","):
                        self.next()
                        continue
                    break
            self.expect_punct(")")
        return Literal(head.text, tuple(args), positive), head

    def parse_literal_list(self) -> list[tuple[Literal, _Token]]:
        out = [self.parse_literal()]
        while self.at_punct(","):
            self.next()
            out.append(self.parse_literal())
        return out

    def parse_task(self) -> tuple[Task, _Token]:
        head = self.expect_ident("a task name")
        args: list[str] = []
        if self.at_punct("("):
            self.next()
            if not self.at_punct(")"):
                while True:
                    args.append(self.expect_ident("an argument").text)
                    if self.at_punct(","):
                        self.next()
                        continue
                    break
            self.expect_punct(")")
        return Task(head.text, tuple(args)), head

    def parse_params(self) -> tuple[Param, ...]:
        params: list[Param] = []
        if self.at_punct("("):
            self.next()
            if not self.at_punct(")"):
                while True:
                    name = self.expect_ident("a parameter name")
                    if not is_variable(name.text):
                        raise self.error(name, f"parameter {name.text!r} must start uppercase")
                    ptype = self.expect_ident("a parameter type")
                    params.append(Param(name.text, ptype.text))
                    if self.at_punct(","):
                        self.next()
                        continue
                    break
            self.expect_punct(")")
        return tuple(params)


# --------------------------------------------------------------------------
# Domain parsing


class _DomainParser(_Parser):
    def __init__(self, text: str, filename: str):
        super().__init__(text, filename)
        # Source position of each declaration, for post-parse reference errors.
        self._decl_pos: dict[str, tuple[int, int]] = {}

    def _remember(self, kind: str, name: str, tok: _Token) -> None:
        self._decl_pos[f"{kind}:{name}"] = (tok.line, tok.col)

    def _ref_error(self, kind: str, name: str, message: str) -> ParseError:
        line, col = self._decl_pos.get(f"{kind}:{name}", (0, 0))
        return ParseError(Diagnostic(self.filename, line, col, "error", message))

    def parse(self) -> DomainModel:
        self.expect_keyword("domain")
        name = self.expect_ident("a domain name")
        self.expect_punct("{")
        types: list[str] = []
        places: list[str] = []
        objects: list[tuple[str, str]] = []
        predicates: list[PredicateDecl] = []
        rules: list[KnowledgeRule] = []
        copresence: tuple[Literal, ...] | None = None
        actions: list[ActionSchema] = []
        methods: list[MethodSchema] = []

        while not self.at_punct("}"):
            tok = self.peek()
            if tok.kind == "eof":
                raise self.error(tok, "unterminated domain block")
            if self.at_keyword("type"):
                self.next()
                types.append(self.expect_ident("a type name").text)
            elif self.at_keyword("place"):
                self.next()
                places.append(self.expect_ident("a place name").text)
            elif self.at_keyword("object"):
                self.next()
                oname = self.expect_ident("an object name")
                otype = self.expect_ident("an object type")
                if otype.text not in types and otype.text not in BUILTIN_TYPES:
                    raise self.error(otype, f"undeclared type {otype.text!r}")
                objects.append((oname.text, otype.text))
            elif self.at_keyword("predicate"):
                self.next()
                pname = self.expect_ident("a predicate name")
                ptypes: list[str] = []
                if self.at_punct("("):
                    self.next()
                    if not self.at_punct(")"):
                        while True:
                            t = self.expect_ident("a type")
                            if t.text not in types and t.text not in BUILTIN_TYPES:
                                raise self.error(t, f"undeclared type {t.text!r}")
                            ptypes.append(t.text)
                            if self.at_punct(","):
                                self.next()
                                continue
                            break
                    self.expect_punct(")")
                klass = self.expect_ident("'observable' or 'inferable'")
                if klass.text not in ("observable", "inferable"):
                    raise self.error(klass, "predicate class must be 'observable' or 'inferable'")
                predicates.append(PredicateDecl(pname.text, tuple(ptypes), klass.text == "observable"))
            elif self.at_keyword("rule"):
                self.next()
                rname = self.expect_ident("a rule name")
                self._remember("rule", rname.text, rname)
                self.expect_punct(":")
                target, _ = self.parse_literal()
                self.expect_keyword("when")
                antecedent = tuple(l for l, _ in self.parse_literal_list())
                rules.append(KnowledgeRule(rname.text, target, antecedent))
            elif self.at_keyword("copresent"):
                tok = self.next()
                self._remember("copresent", "", tok)
                self.expect_keyword("when")
                if copresence is not None:
                    raise self.error(tok, "duplicate copresent rule")
                copresence = tuple(l for l, _ in self.parse_literal_list())
            elif self.at_keyword("action"):
                actions.append(self.parse_action())
            elif self.at_keyword("method"):
                methods.append(self.parse_method())
            else:
                raise self.error(tok, f"unexpected {tok.text!r} in domain block")
        self.expect_punct("}")

        if copresence is None:
            # Default: same place.
            copresence = (Literal("at", ("R", "P")), Literal("at", ("H", "P")))
        if not any(p.name == "at" for p in predicates):
            # Agent positions are framework-level; declare implicitly.
            predicates.insert(0, PredicateDecl("at", ("agent", "place"), False))

        dom = DomainModel(
            name=name.text,
            types=tuple(types),
            places=tuple(places),
            objects=tuple(objects),
            predicates=tuple(predicates),
            rules=tuple(rules),
            copresence=copresence,
            actions=tuple(actions),
            methods=tuple(methods),
        )
        self._check_references(dom)
        return dom

    def parse_action(self) -> ActionSchema:
        self.expect_keyword("action")
        name = self.expect_ident("an action name")
        self._remember("action", name.text, name)
        params = self.parse_params()
        self.expect_keyword("by")
        actor = self.expect_ident("an actor (R or H)")
        if actor.text not in AGENTS:
            raise self.error(actor, f"actor must be R or H, got {actor.text!r}")
        self.expect_keyword("at")
        place = self.expect_ident("a place or place-typed parameter").text
        self.expect_punct("{")
        pre: tuple[Literal, ...] = ()
        adds: tuple[Literal, ...] = ()
        dels: tuple[Literal, ...] = ()
        while not self.at_punct("}"):
            if self.at_keyword("pre"):
                self.next()
                pre = tuple(l for l, _ in self.parse_literal_list())
            elif self.at_keyword("add"):
                self.next()
                adds = tuple(l for l, _ in self.parse_literal_list())
            elif self.at_keyword("del"):
                self.next()
                dels = tuple(l for l, _ in self.parse_literal_list())
            else:
                raise self.error(self.peek(), "expected 'pre', 'add', 'del', or '}' in action body")
        self.expect_punct("}")
        return ActionSchema(name.text, actor.text, params, place, pre, adds, dels)

    def parse_method(self) -> MethodSchema:
        self.expect_keyword("method")
        task = self.expect_ident("a task name")
        params = self.parse_params()
        label = self.expect_ident("a method label")
        self._remember("method", f"{task.text}/{label.text}", task)
        self.expect_punct("{")
        pre: tuple[Literal, ...] = ()
        subtasks: tuple[Task, ...] = ()
        while not self.at_punct("}"):
            if self.at_keyword("pre"):
                self.next()
                pre = tuple(l for l, _ in self.parse_literal_list())
            elif self.at_keyword("sub"):
                self.next()
                subs = [self.parse_task()]
                while self.at_punct(","):
                    self.next()
                    subs.append(self.parse_task())
                subtasks = tuple(t for t, _ in subs)
            else:
                raise self.error(self.peek(), "expected 'pre', 'sub', or '}' in method body")
        self.expect_punct("}")
        return MethodSchema(task.text, params, label.text, pre, subtasks)

    # -- reference/arity checks (hard errors) -------------------------------

    def _check_references(self, dom: DomainModel) -> None:
        def check_literal(l: Literal, kind: str, name: str, where: str, bound: dict[str, str]) -> None:
            decl = dom.predicate(l.pred)
            if decl is None:
                raise self._ref_error(kind, name, f"undeclared predicate {l.pred!r} in {where}")
            if len(l.args) != len(decl.param_types):
                raise self._ref_error(kind, name,
                                      f"arity mismatch for {l.pred!r} in {where}: "
                                      f"expected {len(decl.param_types)}, got {len(l.args)}")
            for arg, want in zip(l.args, decl.param_types):
                if arg == OBSERVER:
                    continue
                if is_variable(arg):
                    have = bound.setdefault(arg, want)
                    if have != want:
                        raise self._ref_error(kind, name,
                                              f"variable {arg!r} used as {want!r} and {have!r} in {where}")
                else:
                    ctype = dom.constant_type(arg)
                    if ctype is None:
                        raise self._ref_error(kind, name, f"unknown object {arg!r} in {where}")
                    if ctype != want:
                        raise self._ref_error(kind, name,
                                              f"object {arg!r} has type {ctype!r}, expected {want!r} in {where}")

        for rule in dom.rules:
            bound: dict[str, str] = {}
            check_literal(rule.target, "rule", rule.name, f"rule {rule.name}", bound)
            for l in rule.antecedent:
                check_literal(l, "rule", rule.name, f"rule {rule.name}", bound)

        bound = {}
        for l in dom.copresence:
            check_literal(l, "copresent", "", "copresent rule", bound)

        for act in dom.actions:
            bound = {p.name: p.type for p in act.params}
            if act.place not in dom.places and bound.get(act.place) != "place":
                raise self._ref_error("action", act.name,
                                      f"action {act.name}: execution place {act.place!r} is neither "
                                      "a place nor a place-typed parameter")
            for group, gname in ((act.pre, "pre"), (act.adds, "add"), (act.dels, "del")):
                for l in group:
                    check_literal(l, "action", act.name, f"action {act.name} {gname}", bound)
                    for arg in l.args:
                        if is_variable(arg) and arg not in (p.name for p in act.params):
                            raise self._ref_error("action", act.name,
                                                  f"variable {arg!r} in action {act.name} is not a parameter")

        task_names = dom.task_names()
        for m in dom.methods:
            mkey = f"{m.task}/{m.label}"
            bound = {p.name: p.type for p in m.params}
            positives_seen: set[str] = set(bound)
            for l in m.pre:
                check_literal(l, "method", mkey, f"method {mkey}", bound)
                if not l.positive:
                    for arg in l.args:
                        if is_variable(arg) and arg not in positives_seen:
                            raise self._ref_error("method", mkey,
                                                  f"variable {arg!r} in a negative precondition of "
                                                  f"{mkey} is not bound by an earlier positive")
                else:
                    positives_seen.update(a for a in l.args if is_variable(a))
            for st in m.subtasks:
                schema = dom.action(st.name)
                if schema is not None:
                    if len(st.args) != len(schema.params):
                        raise self._ref_error("method", mkey,
                                              f"subtask {st.name} in {mkey}: arity mismatch")
                elif st.name not in task_names:
                    raise self._ref_error("method", mkey,
                                          f"subtask {st.name!r} in {mkey} resolves to "
                                          "neither an action nor a method")
                for arg in st.args:
                    if is_variable(arg) and arg not in positives_seen:
                        raise self._ref_error("method", mkey,
                                              f"subtask argument {arg!r} in {mkey} is unbound")


# --------------------------------------------------------------------------
# Problem parsing


class _ProblemParser(_Parser):
    def __init__(self, text: str, dom: DomainModel, filename: str):
        super().__init__(text, filename)
        self.dom = dom

    def parse(self) -> ProblemInstance:
        self.expect_keyword("problem")
        name = self.expect_ident("a problem name")
        self.expect_punct("{")
        domain_name: str | None = None
        k: int | None = None
        comm: bool | None = None
        robot_place: str | None = None
        human_place: str | None = None
        task_r: Task | None = None
        task_h: Task | None = None
        init_atoms: list[Literal] = []
        deltas: list[Literal] = []

        while not self.at_punct("}"):
            tok = self.peek()
            if tok.kind == "eof":
                raise self.error(tok, "unterminated problem block")
            if self.at_keyword("domain"):
                self.next()
                domain_name = self.expect_ident("a domain name").text
                if domain_name != self.dom.name:
                    raise self.error(tok, f"problem references domain {domain_name!r}, "
                                          f"but {self.dom.name!r} was loaded")
            elif self.at_keyword("k"):
                self.next()
                num = self.next()
                if num.kind != "int":
                    raise self.error(num, "expected an integer after 'k'")
                k = int(num.text)
                if k < 0:
                    raise self.error(num, "k must be >= 0")
            elif self.at_keyword("communication"):
                self.next()
                mode = self.expect_ident("'on' or 'off'")
                if mode.text not in ("on", "off"):
                    raise self.error(mode, "communication must be 'on' or 'off'")
                comm = mode.text == "on"
            elif self.at_keyword("robot") or self.at_keyword("human"):
                who = self.next()
                self.expect_keyword("at")
                place = self.expect_ident("a place")
                if place.text not in self.dom.places:
                    raise self.error(place, f"unknown place {place.text!r}")
                if who.text == "robot":
                    robot_place = place.text
                else:
                    human_place = place.text
            elif self.at_keyword("task"):
                self.next()
                actor = self.expect_ident("R or H")
                if actor.text not in AGENTS:
                    raise self.error(actor, "task actor must be R or H")
                t, head = self.parse_task()
                if t.name not in self.dom.task_names() and self.dom.action(t.name) is None:
                    raise self.error(head, f"root task {t.name!r} is not declared in the domain")
                self._check_ground_args(t.args, head)
                if actor.text == "R":
                    task_r = t
                else:
                    task_h = t
            elif self.at_keyword("init"):
                self.next()
                self.expect_punct("{")
                while not self.at_punct("}"):
                    if self.peek().kind == "eof":
                        raise self.error(self.peek(), "unterminated init block")
                    l, head = self.parse_literal()
                    if not l.positive:
                        raise self.error(head, "init atoms must be positive (closed world)")
                    if l.pred == "at" and l.args and l.args[0] in AGENTS:
                        raise self.error(head, "agent positions are set by the "
                                               "'robot at'/'human at' lines, not init")
                    self._check_ground_literal(l, head)
                    init_atoms.append(l)
                    if self.at_punct(","):
                        self.next()
                self.expect_punct("}")
            elif self.at_keyword("believe"):
                self.next()
                l, head = self.parse_literal()
                self._check_ground_literal(l, head)
                deltas.append(l)
            else:
                raise self.error(tok, f"unexpected {tok.text!r} in problem block")
        self.expect_punct("}")

        missing = [label for label, v in (
            ("domain", domain_name), ("k", k), ("communication", comm),
            ("robot place", robot_place), ("human place", human_place),
            ("task R", task_r), ("task H", task_h),
        ) if v is None]
        if missing:
            raise self.error(self.peek(), "problem is missing: " + ", ".join(missing))

        truth = BeliefBase(frozenset(init_atoms)
                           | {Literal("at", ("R", robot_place)), Literal("at", ("H", human_place))})
        return ProblemInstance(
            name=name.text,
            domain_name=domain_name,
            k=k,
            comm_allowed=comm,
            robot_place=robot_place,
            human_place=human_place,
            root_task_r=task_r,
            root_task_h=task_h,
            ground_truth=truth,
            belief_deltas=tuple(sorted(deltas, key=str)),
        )

    def _check_ground_args(self, args: tuple[str, ...], head: _Token) -> None:
        for arg in args:
            if is_variable(arg):
                raise self.error(head, f"problem declarations must be ground, found variable {arg!r}")
            if self.dom.constant_type(arg) is None:
                raise self.error(head, f"unknown object {arg!r}")

    def _check_ground_literal(self, l: Literal, head: _Token) -> None:
        decl = self.dom.predicate(l.pred)
        if decl is None:
            raise self.error(head, f"undeclared predicate {l.pred!r}")
        if len(l.args) != len(decl.param_types):
            raise self.error(head, f"arity mismatch for {l.pred!r}: "
                                   f"expected {len(decl.param_types)}, got {len(l.args)}")
        self._check_ground_args(l.args, head)
        for arg, want in zip(l.args, decl.param_types):
            have = self.dom.constant_type(arg)
            if have != want:
                raise self.error(head, f"object {arg!r} has type {have!r}, expected {want!r}")


def parse_domain(text: str, filename: str = "<domain>") -> DomainModel:
    return _DomainParser(text, filename).parse()


def parse_problem(text: str, dom: DomainModel, filename: str = "<problem>") -> ProblemInstance:
    return _ProblemParser(text, dom, filename).parse()


# --------------------------------------------------------------------------
# Validation (whole-model diagnostics; parse already rejects broken references)


def validate(dom: DomainModel, prob: ProblemInstance | None = None,
             filename: str = "<domain>") -> list[Diagnostic]:
    out: list[Diagnostic] = []

    def err(msg: str) -> None:
        out.append(Diagnostic(filename, 0, 0, "error", msg))

    def warn(msg: str) -> None:
        out.append(Diagnostic(filename, 0, 0, "warning", msg))

    ruled = {r.target.pred for r in dom.rules}
    for p in dom.predicates:
        if p.observable and p.name not in ruled:
            warn(f"observable predicate {p.name!r} has no knowledge rule")
    for r in dom.rules:
        decl = dom.predicate(r.target.pred)
        if decl is not None and not decl.observable:
            err(f"knowledge rule {r.name!r} targets inferable-only predicate {r.target.pred!r}")
    for l in dom.copresence:
        if l.pred != "at":
            warn(f"copresent rule references {l.pred!r}; only agent positions are conventional")

    # Task reachability: every method subtask chain must bottom out at actions.
    task_names = dom.task_names()
    for m in dom.methods:
        for st in m.subtasks:
            if dom.action(st.name) is None and st.name not in task_names:
                err(f"method {m.task}/{m.label}: subtask {st.name!r} is unresolvable")
    for t in sorted(task_names):
        if dom.action(t) is not None:
            err(f"{t!r} is both an action and a method task name")

    # Reject recursive method structure: decomposition must terminate.
    edges: dict[str, set[str]] = {}
    for m in dom.methods:
        edges.setdefault(m.task, set()).update(
            st.name for st in m.subtasks if st.name in task_names)
    done: set[str] = set()
    for start in sorted(edges):
        stack, path = [(start, iter(sorted(edges.get(start, ()))))], [start]
        on_path = {start}
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                on_path.discard(node)
                done.add(node)
                continue
            if nxt in on_path:
                cycle = path[path.index(nxt):] + [nxt]
                err(f"recursive task decomposition: {' -> '.join(cycle)}")
                done.update(on_path)
                stack.clear()
            elif nxt not in done:
                stack.append((nxt, iter(sorted(edges.get(nxt, ())))))
                path.append(nxt)
                on_path.add(nxt)

    if prob is not None:
        for t, label in ((prob.root_task_r, "R"), (prob.root_task_h, "H")):
            if t.name not in task_names and dom.action(t.name) is None:
                err(f"root task for {label} {t.name!r} is unresolvable")
        for d in prob.belief_deltas:
            truth = prob.ground_truth.entails(d)
            if not truth:
                out.append(Diagnostic(filename, 0, 0, "note",
                                      f"initial false belief: human believes {d}"))
    return out


# --------------------------------------------------------------------------
# Canonical pretty-printing (round-trips through the parser)


def _fmt_literals(literals: Iterable[Literal]) -> str:
    return ", ".join(str(l) for l in literals)


def pretty_print_domain(dom: DomainModel) -> str:
    lines = [f"domain {dom.name} {{"]
    for t in dom.types:
        lines.append(f"  type {t}")
    for p in dom.places:
        lines.append(f"  place {p}")
    for name, typ in dom.objects:
        lines.append(f"  object {name} {typ}")
    for p in dom.predicates:
        lines.append(f"  predicate {p}")
    for r in dom.rules:
        lines.append(f"  rule {r.name}: {r.target} when {_fmt_literals(r.antecedent)}")
    lines.append(f"  copresent when {_fmt_literals(dom.copresence)}")
    for a in dom.actions:
        params = "" if not a.params else "(" + ", ".join(str(p) for p in a.params) + ")"
        lines.append(f"  action {a.name}{params} by {a.actor} at {a.place} {{")
        if a.pre:
            lines.append(f"    pre {_fmt_literals(a.pre)}")
        if a.adds:
            lines.append(f"    add {_fmt_literals(a.adds)}")
        if a.dels:
            lines.append(f"    del {_fmt_literals(a.dels)}")
        lines.append("  }")
    for m in dom.methods:
        params = "" if not m.params else "(" + ", ".join(str(p) for p in m.params) + ")"
        lines.append(f"  method {m.task}{params} {m.label} {{")
        if m.pre:
            lines.append(f"    pre {_fmt_literals(m.pre)}")
        if m.subtasks:
            lines.append(f"    sub {', '.join(str(t) for t in m.subtasks)}")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_shipped(name: str) -> str:
    """Text of a bundled ``.ehatp`` file, e.g. ``load_shipped("cube_org")``."""
    return (resources.files("ehatp") / "data" / f"{name}.ehatp").read_text(encoding="utf-8")


def load_instance(name: str) -> tuple[DomainModel, ProblemInstance]:
    """Parse a bundled problem together with the domain it references."""
    text = load_shipped(name)
    m = re.search(r"^\s*domain\s+(\w+)", text, re.MULTILINE)
    if m is None:
        raise ParseError(Diagnostic(f"{name}.ehatp", 1, 1, "error",
                                    "problem file lacks a domain reference"))
    dom = parse_domain(load_shipped(m.group(1)), filename=f"{m.group(1)}.ehatp")
    return dom, parse_problem(text, dom, filename=f"{name}.ehatp")


def pretty_print_problem(prob: ProblemInstance) -> str:
    lines = [f"problem {prob.name} {{"]
    lines.append(f"  domain {prob.domain_name}")
    lines.append(f"  k {prob.k}")
    lines.append(f"  communication {'on' if prob.comm_allowed else 'off'}")
    lines.append(f"  robot at {prob.robot_place}")
    lines.append(f"  human at {prob.human_place}")
    lines.append(f"  task R {prob.root_task_r}")
    lines.append(f"  task H {prob.root_task_h}")
    lines.append("  init {")
    for atom in prob.ground_truth.canonical():
        if not atom.startswith("at(R,") and not atom.startswith("at(H,"):
            lines.append(f"    {atom}")
    lines.append("  }")
    for d in prob.belief_deltas:
        lines.append(f"  believe {d}")
    lines.append("}")
    return "\n".join(lines) + "\n"

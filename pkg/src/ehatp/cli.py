"""Command-line front end.

Three subcommands: ``plan`` synthesizes a joint policy for one instance and
writes it as a self-contained JSON file (the domain and problem sources ride
along, so a policy file can be replayed anywhere); ``simulate`` replays such
a file, either exhaustively over every human alternative or as an
interactive stepper; ``bench`` runs the shipped instances and compares their
structural metrics against the calibration targets.

Exit codes: 0 success, 1 diagnostics (unreadable or malformed input),
2 planning or replay failure.  ``EHATP_LOG=sa|expand|all`` turns on trace
logging on stderr.
"""

import argparse
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from .dsl import (
    DomainModel,
    ParseError,
    ProblemInstance,
    load_instance,
    parse_domain,
    parse_problem,
    validate,
)
from .htn import feasible_refinements
from .kernel import initial_state, state_copresent
from .model import DomainError, EpistemicState
from .solver import (
    DEAD,
    DONE,
    Metrics,
    Policy,
    PolicyNode,
    evaluate_state,
    expand,
    solve,
)

# Calibration targets for the shipped instances: worst-case number of worlds
# held at once, and branch (leaf) count of the extracted policy.  The states
# column is informational — it counts unique canonical states dequeued by
# this solver, which merges duplicates and stops once the root settles, so it
# is not comparable across different counting rules.
BENCH_TARGETS: dict[str, tuple[int, int]] = {
    "p1": (4, 3), "p2": (4, 3),
    "p3": (7, 6), "p4": (7, 6),
    "p5": (14, 5), "p6": (14, 5),
    "cooking1": (3, 5), "cooking2": (4, 5), "cooking3": (5, 5),
}

STATES_NOTE = ("note: states = unique canonical states dequeued "
               "(duplicates merged, search stops once the root settles); "
               "informational only under other counting rules")


# --------------------------------------------------------------------------
# Policy files


def write_policy_file(path: str | Path, dom_text: str, prob_text: str,
                      policy: Policy) -> None:
    doc = {
        "domain": dom_text,
        "problem": prob_text,
        "nodes": json.loads(policy.to_json())["nodes"],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_policy_file(path: str | Path) -> tuple[DomainModel, ProblemInstance, Policy]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    dom = parse_domain(doc["domain"], filename=f"{path}#domain")
    prob = parse_problem(doc["problem"], dom, filename=f"{path}#problem")
    nodes = [PolicyNode(n["id"], n["kind"], n["actor"], n["edge"],
                        n["copresent"], list(n["children"]))
             for n in doc["nodes"]]
    return dom, prob, Policy(nodes)


# --------------------------------------------------------------------------
# Exhaustive replay


@dataclass(frozen=True)
class SimStep:
    actor: str
    action: str
    copresent: bool  # after the action
    worlds: int  # surviving worlds after the action's assessment


@dataclass(frozen=True)
class SimulationTrace:
    steps: tuple[SimStep, ...]
    outcome: str  # DONE | DEAD
    note: str = ""

    def describe(self) -> str:
        line = " | ".join(f"{st.actor}:{st.action}" for st in self.steps)
        tail = f"  [{self.note}]" if self.note else ""
        return f"{self.outcome}: {line}{tail}"


@dataclass(frozen=True)
class SimulationReport:
    traces: tuple[SimulationTrace, ...]

    @property
    def ok(self) -> bool:
        return bool(self.traces) and all(t.outcome == DONE for t in self.traces)


def _is_ontic(label: str) -> bool:
    return label not in ("noop", "wait") and not label.startswith(("inform-", "ask-"))


def _universally_applicable(dom: DomainModel, s: EpistemicState,
                            label: str) -> bool:
    """The human action is a feasible next step under every world's bel_h."""
    for w in s.worlds:
        try:
            refs = feasible_refinements(dom, w.tn_h, w.bel_h, "H")
        except DomainError:
            return False
        if all(str(r.first_primitive) != label for r in refs):
            return False
    return True


def simulate(dom: DomainModel, prob: ProblemInstance,
             policy: Policy) -> SimulationReport:
    """Replay every branch of ``policy`` against the execution semantics.

    Robot turns follow the recorded choice; human turns must cover every
    alternative the semantics actually offers at that state.  Two
    alternatives may share an action label (same first step, different ways
    of pursuing the agenda); branches are paired with offers positionally
    within each label, in offer order.  Each human action is re-checked for
    applicability in all surviving worlds, and the robot's out-of-sight work
    is re-counted against the budget.  Any branch that cannot be driven to a
    finished state becomes a DEAD trace with the reason attached.
    """
    traces: list[SimulationTrace] = []

    def finish(steps: list[SimStep], outcome: str, note: str = "") -> None:
        traces.append(SimulationTrace(tuple(steps), outcome, note))

    def follow(idx: int, s: EpistemicState, steps: list[SimStep],
               hidden: int) -> None:
        node = policy.nodes[idx]
        if not node.children:
            if evaluate_state(dom, s) == DONE:
                finish(steps, DONE)
            else:
                finish(steps, DEAD, "execution stops before the task is finished")
            return
        offered: dict[str, list[EpistemicState]] = {}
        for label, succ in expand(dom, prob, s):
            offered.setdefault(label, []).append(succ)
        if s.actor == "H":
            recorded: dict[str, int] = {}
            for cid in node.children:
                edge = policy.nodes[cid].edge
                recorded[edge] = recorded.get(edge, 0) + 1
            missing = sorted(l for l, succs in offered.items()
                             if recorded.get(l, 0) < len(succs))
            if missing:
                finish(steps, DEAD,
                       f"uncovered human alternative: {missing[0]}")
                return
        consumed: dict[str, int] = {}
        for cid in node.children:
            label = policy.nodes[cid].edge
            pos = consumed.get(label, 0)
            consumed[label] = pos + 1
            succs = offered.get(label, ())
            if pos >= len(succs):
                finish(steps, DEAD, f"recorded action unavailable: {label}")
                continue
            succ = succs[pos]
            if (s.actor == "H" and _is_ontic(label)
                    and not _universally_applicable(dom, s, label)):
                finish(steps, DEAD,
                       f"human action not applicable in every world: {label}")
                continue
            run = hidden
            if (s.actor == "R" and _is_ontic(label)
                    and not state_copresent(dom, s)):
                run += 1
                if run > prob.k:
                    finish(steps, DEAD,
                           f"budget exceeded: {run} unseen actions > K={prob.k}")
                    continue
            if state_copresent(dom, succ):
                run = 0
            step = SimStep(s.actor, label, state_copresent(dom, succ),
                           len(succ.worlds))
            follow(cid, succ, steps + [step], run)

    follow(0, initial_state(dom, prob), [], 0)
    return SimulationReport(tuple(traces))


def communication_edges(policy: Policy) -> list[int]:
    """Ids of the policy nodes entered through a speech act."""
    return [n.id for n in policy.nodes
            if n.edge is not None and n.edge.startswith(("inform-", "ask-"))]


def drop_edge(policy: Policy, node_id: int) -> Policy:
    """A copy of ``policy`` without the edge into ``node_id`` (the subtree
    behind it becomes unreachable)."""
    return Policy([
        PolicyNode(n.id, n.kind, n.actor, n.edge, n.copresent,
                   [c for c in n.children if c != node_id], n.state)
        for n in policy.nodes])


def communication_is_load_bearing(dom: DomainModel, prob: ProblemInstance,
                                  policy: Policy) -> bool:
    """True when removing any single speech-act edge breaks the replay."""
    return all(not simulate(dom, prob, drop_edge(policy, nid)).ok
               for nid in communication_edges(policy))


# --------------------------------------------------------------------------
# Interactive stepper


def _divergence_summary(s: EpistemicState) -> str:
    d = s.designated_world
    gap = sorted(d.bel_h.atoms ^ d.bel_r.atoms, key=str)
    parts = []
    if gap:
        shown = ", ".join(str(a) for a in gap[:4])
        parts.append(f"human belief vs truth: {shown}"
                     + (", ..." if len(gap) > 4 else ""))
    hypos = []
    for i, w in enumerate(s.worlds):
        if w is d:
            continue
        diff = sorted(w.bel_h.atoms ^ d.bel_h.atoms, key=str)
        shown = ", ".join(str(a) for a in diff[:4]) + (", ..." if len(diff) > 4 else "")
        hypos.append(f"world {i} differs on {shown or 'the agenda only'}")
    if hypos:
        parts.append("; ".join(hypos))
    return "; ".join(parts) if parts else "beliefs aligned"


def _status_line(dom: DomainModel, s: EpistemicState) -> str:
    co = "together" if state_copresent(dom, s) else "apart"
    return f"  -> {co}; worlds={len(s.worlds)}; {_divergence_summary(s)}"


def run_interactive(dom: DomainModel, prob: ProblemInstance, policy: Policy,
                    seed: int = 0) -> int:
    """Step through the policy, letting the operator choose the human's move.

    Robot turns play automatically.  At each human turn every alternative
    the semantics offers is listed — ones the policy does not cover are
    marked "off plan", and after taking one the robot improvises with its
    first available option.  An empty reply takes the suggested choice,
    ``q`` stops.  Prints co-presence, the surviving-world count, and a
    belief divergence summary after every move.
    """
    rng = random.Random(seed)
    s = initial_state(dom, prob)
    idx: int | None = 0
    for turn in range(500):
        node = policy.nodes[idx] if idx is not None else None
        if node is not None and not node.children:
            outcome = evaluate_state(dom, s)
            print(f"finished: {outcome}")
            return 0 if outcome == DONE else 2
        if node is None and evaluate_state(dom, s) == DONE:
            print("finished: DONE (off plan)")
            return 0
        # First-wins on duplicate labels, on both sides: the first recorded
        # branch is paired with the first offered alternative of that label.
        offers: dict[str, EpistemicState] = {}
        for label, succ in expand(dom, prob, s):
            offers.setdefault(label, succ)
        if not offers:
            print("no moves left; DEAD")
            return 2
        covered: dict[str, int] = {}
        for c in (node.children if node else ()):
            covered.setdefault(policy.nodes[c].edge, c)
        if s.actor == "R":
            if covered:
                label = policy.nodes[node.children[0]].edge
                if label not in offers:
                    print(f"recorded action unavailable: {label}",
                          file=sys.stderr)
                    return 2
            else:
                label = next(iter(offers))
                print(f"[t{turn}] robot improvises:")
        else:
            options = list(covered) + [l for l in offers if l not in covered]
            print(f"[t{turn}] your move (H):")
            for i, l in enumerate(options, start=1):
                mark = "" if l in covered else "  (off plan)"
                print(f"  {i}) {l}{mark}")
            hint = rng.randrange(len(options)) + 1
            try:
                reply = input(f"choice [{hint}]: ").strip()
            except EOFError:
                print("no input; stopping.")
                return 1
            if reply == "q":
                print("stopped.")
                return 1
            pick = int(reply) if reply.isdigit() else hint
            if not 1 <= pick <= len(options):
                pick = hint
            label = options[pick - 1]
        succ = offers[label]
        who = "robot" if s.actor == "R" else "human"
        print(f"[t{turn}] {who}: {label}")
        print(_status_line(dom, succ))
        s, idx = succ, covered.get(label)
    print("stopping: run exceeded 500 turns", file=sys.stderr)
    return 2


# --------------------------------------------------------------------------
# Subcommands


def cmd_plan(args: argparse.Namespace) -> int:
    try:
        dom_text = Path(args.domain).read_text(encoding="utf-8")
        prob_text = Path(args.problem).read_text(encoding="utf-8")
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        dom = parse_domain(dom_text, args.domain)
        prob = parse_problem(prob_text, dom, args.problem)
    except ParseError as e:
        print(e, file=sys.stderr)
        return 1
    diags = validate(dom, prob, filename=args.domain)
    for d in diags:
        print(d, file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        return 1

    res = solve(dom, prob)
    if res.policy is None:
        print(f"no joint solution for {prob.name}: search settled "
              f"{res.root.status}", file=sys.stderr)
        return 2
    write_policy_file(args.out, dom_text, prob_text, res.policy)
    if args.metrics:
        Path(args.metrics).write_text(
            Metrics.csv_header() + "\n" + res.metrics.csv_line() + "\n",
            encoding="utf-8")
    m = res.metrics
    print(f"{prob.name}: policy with {m.leaves} branches "
          f"(states={m.states}, maxW={m.maxW}) -> {args.out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        dom, prob, policy = read_policy_file(args.policy)
    except (OSError, ParseError, KeyError, TypeError, ValueError) as e:
        print(f"error: cannot load policy: {e}", file=sys.stderr)
        return 1
    if args.interactive:
        return run_interactive(dom, prob, policy, seed=args.seed)
    report = simulate(dom, prob, policy)
    for t in report.traces:
        print(t.describe())
    total = len(report.traces)
    if report.ok:
        print(f"{total} traces, all {DONE}")
        return 0
    failed = sum(1 for t in report.traces if t.outcome != DONE)
    print(f"{failed} of {total} traces failed", file=sys.stderr)
    return 2


def cmd_bench(args: argparse.Namespace) -> int:
    rows: list[Metrics] = []
    suspects: list[str] = []
    for name in sorted(BENCH_TARGETS):
        dom, prob = load_instance(name)
        res = solve(dom, prob)
        rows.append(res.metrics)
        tw, tl = BENCH_TARGETS[name]
        m = res.metrics
        ok = res.policy is not None and m.maxW == tw and m.leaves == tl
        verdict = "ok" if ok else "MISMATCH — review this instance's encoding first"
        print(f"{name}: maxW={m.maxW} (target {tw}), leaves={m.leaves} "
              f"(target {tl}), states={m.states}, time={m.time_ms}ms  [{verdict}]")
        if not ok:
            suspects.append(name)
    if args.out:
        Path(args.out).write_text(
            Metrics.csv_header() + "\n"
            + "".join(m.csv_line() + "\n" for m in rows),
            encoding="utf-8")
    print(STATES_NOTE)
    if suspects:
        print(f"encodings to review: {', '.join(suspects)}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="ehatp",
        description="Plan, replay, and benchmark joint robot-human policies.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("plan", help="synthesize a joint policy for one instance")
    p.add_argument("-d", "--domain", required=True, help="domain file")
    p.add_argument("-p", "--problem", required=True, help="problem file")
    p.add_argument("-o", "--out", required=True, help="policy JSON to write")
    p.add_argument("--metrics", help="also write a one-row metrics CSV")
    p.set_defaults(fn=cmd_plan)

    s = sub.add_parser("simulate", help="replay a policy file")
    s.add_argument("-P", "--policy", required=True, help="policy JSON from plan")
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--exhaustive", action="store_true",
                      help="enumerate every human alternative")
    mode.add_argument("--interactive", action="store_true",
                      help="terminal stepper; you choose the human's moves")
    s.add_argument("--seed", type=int, default=0,
                   help="seed for the interactive default suggestion")
    s.set_defaults(fn=cmd_simulate)

    b = sub.add_parser("bench", help="run the shipped instances and compare "
                                     "structural metrics against targets")
    b.add_argument("--suite", choices=("table1", "all"), default="table1",
                   help="instance suite (both names cover all shipped instances)")
    b.add_argument("-o", "--out", help="metrics CSV to write")
    b.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())

import pytest

from ehatp.model import (
    BeliefBase,
    ConflictingEffectsError,
    EpistemicState,
    FAnd,
    FKnows,
    FLit,
    FNot,
    Literal,
    MalformedLiteralError,
    Task,
    UnsupportedNestingError,
    World,
    evaluate,
    lit,
)


def test_entails_membership():
    base = BeliefBase.of(lit("inside", "c_r", "box_1"))
    assert base.entails(lit("inside", "c_r", "box_1")) is True


def test_entails_closed_world_negative():
    base = BeliefBase.of(lit("inside", "c_r", "box_1"))
    assert base.entails(lit("inside", "c_r", "box_2", positive=False)) is True
    assert base.entails(lit("inside", "c_r", "box_2")) is False


def test_entails_empty_base():
    assert BeliefBase().entails(lit("inside", "c_r", "box_1")) is False


def test_entails_rejects_unbound_variable():
    base = BeliefBase.of(lit("on", "c_r", "mt"))
    with pytest.raises(MalformedLiteralError):
        base.entails(lit("on", "C", "mt"))


def test_base_rejects_negative_members():
    with pytest.raises(MalformedLiteralError):
        BeliefBase.of(lit("on", "c_r", "mt", positive=False))


def test_apply_effects_pick_semantics():
    base = BeliefBase.of(lit("on", "c_r", "mt"))
    out = base.apply_effects(adds=[lit("holding", "R", "c_r")], dels=[lit("on", "c_r", "mt")])
    assert out == BeliefBase.of(lit("holding", "R", "c_r"))


def test_apply_effects_identity():
    base = BeliefBase.of(lit("p"))
    assert base.apply_effects([], []) == base


def test_apply_effects_place_semantics():
    base = BeliefBase.of(lit("holding", "R", "c_y"))
    out = base.apply_effects(
        adds=[lit("inside", "c_y", "box_1")], dels=[lit("holding", "R", "c_y")]
    )
    assert out == BeliefBase.of(lit("inside", "c_y", "box_1"))


def test_apply_effects_conflict():
    with pytest.raises(ConflictingEffectsError):
        BeliefBase().apply_effects(adds=[lit("p")], dels=[lit("p")])


def test_apply_effects_idempotent_when_subsumed():
    base = BeliefBase.of(lit("p"), lit("q"))
    out = base.apply_effects(adds=[lit("p")], dels=[lit("r")])
    assert out == base


def test_assign():
    base = BeliefBase.of(lit("p"))
    assert base.assign(lit("q"), True) == BeliefBase.of(lit("p"), lit("q"))
    assert base.assign(lit("p"), False) == BeliefBase()


def _fig3_like_state() -> EpistemicState:
    # Two hypotheses about one hidden fact; the second is reality.
    w1 = World(
        bel_r=BeliefBase.of(lit("inside", "c_r", "box_2")),
        bel_h=BeliefBase.of(lit("inside", "c_r", "box_2")),
        bel_rh=BeliefBase.of(lit("inside", "c_r", "box_2")),
    )
    w2 = World(
        bel_r=BeliefBase.of(lit("inside", "c_r", "box_1")),
        bel_h=BeliefBase.of(lit("inside", "c_r", "box_1")),
        bel_rh=BeliefBase.of(lit("inside", "c_r", "box_1")),
    )
    return EpistemicState.make([w1, w2], designated=w2, actor="R", budget=1)


def test_evaluate_robot_knows_reality():
    s = _fig3_like_state()
    assert evaluate(s, FKnows("R", FLit(lit("inside", "c_r", "box_1")))) is True


def test_evaluate_human_unsure_either_way():
    s = _fig3_like_state()
    assert evaluate(s, FKnows("H", FLit(lit("inside", "c_r", "box_1")))) is False
    assert evaluate(s, FKnows("H", FLit(lit("inside", "c_r", "box_2")))) is False


def test_evaluate_singleton_accessibility():
    w = World(
        bel_r=BeliefBase.of(lit("p")),
        bel_h=BeliefBase.of(lit("p")),
        bel_rh=BeliefBase.of(lit("p")),
    )
    s = EpistemicState.make([w], designated=w, actor="H", budget=0)
    assert evaluate(s, FKnows("H", FLit(lit("p")))) is True


def test_evaluate_knowledge_is_truthful_for_robot():
    s = _fig3_like_state()
    phi = FLit(lit("inside", "c_r", "box_1"))
    if evaluate(s, FKnows("R", phi)):
        assert evaluate(s, phi)


def test_evaluate_second_order():
    s = _fig3_like_state()
    # In every world, that world's model of R contains the world's own fact,
    # so H knows that R knows *which* box only world-relatively; the nested
    # query about a specific box is false because one world disagrees.
    f = FKnows("H", FKnows("R", FLit(lit("inside", "c_r", "box_1"))))
    assert evaluate(s, f) is False


def test_evaluate_nesting_cap():
    deep = FKnows("H", FKnows("R", FKnows("H", FLit(lit("p")))))
    s = _fig3_like_state()
    with pytest.raises(UnsupportedNestingError):
        evaluate(s, deep)


def test_evaluate_connectives():
    s = _fig3_like_state()
    assert evaluate(s, FNot(FLit(lit("inside", "c_r", "box_2")))) is True
    assert (
        evaluate(
            s,
            FAnd((FLit(lit("inside", "c_r", "box_1")), FNot(FLit(lit("inside", "c_r", "box_2"))))),
        )
        is True
    )


def test_state_dedup_merges_identical_worlds():
    w = World(
        bel_r=BeliefBase.of(lit("p")),
        bel_h=BeliefBase.of(lit("p")),
        bel_rh=BeliefBase.of(lit("p")),
    )
    dup = World(
        bel_r=BeliefBase.of(lit("p")),
        bel_h=BeliefBase.of(lit("p")),
        bel_rh=BeliefBase.of(lit("p")),
    )
    s = EpistemicState.make([w, dup], designated=w, actor="R", budget=2)
    assert len(s.worlds) == 1
    assert s.designated_world.key() == w.key()


def test_state_signature_is_order_insensitive():
    w1 = World(bel_r=BeliefBase.of(lit("p")), bel_h=BeliefBase(), bel_rh=BeliefBase())
    w2 = World(bel_r=BeliefBase.of(lit("q")), bel_h=BeliefBase(), bel_rh=BeliefBase())
    a = EpistemicState.make([w1, w2], designated=w1, actor="R", budget=0)
    b = EpistemicState.make([w2, w1], designated=w1, actor="R", budget=0)
    assert a.signature() == b.signature()


def test_agent_place():
    w = World(
        bel_r=BeliefBase.of(lit("at", "R", "mt"), lit("at", "H", "ot")),
        bel_h=BeliefBase(),
        bel_rh=BeliefBase(),
    )
    assert w.agent_place == {"R": "mt", "H": "ot"}


def test_agent_place_rejects_two_places():
    w = World(
        bel_r=BeliefBase.of(lit("at", "R", "mt"), lit("at", "R", "ot")),
        bel_h=BeliefBase(),
        bel_rh=BeliefBase(),
    )
    with pytest.raises(MalformedLiteralError):
        _ = w.agent_place


def test_world_key_includes_networks_and_acted():
    base = BeliefBase.of(lit("p"))
    w1 = World(bel_r=base, bel_h=base, bel_rh=base, tn_r=(Task("go"),))
    w2 = World(bel_r=base, bel_h=base, bel_rh=base, tn_r=())
    w3 = World(bel_r=base, bel_h=base, bel_rh=base, tn_r=(Task("go"),), acted=1)
    assert len({w1.key(), w2.key(), w3.key()}) == 3


def test_literal_str_forms():
    assert str(lit("handempty", "R")) == "handempty(R)"
    assert str(lit("mixed")) == "mixed"
    assert str(lit("on", "c_r", "mt", positive=False)) == "not on(c_r,mt)"


def test_literal_substitute():
    l = Literal("on", ("C", "mt"))
    assert l.substitute({"C": "c_r"}) == lit("on", "c_r", "mt")

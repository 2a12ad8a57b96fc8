import numpy as np
import pytest

from dpwarden.compiler import compile_policy_set, generate_base_rules, parse_policy_set
from dpwarden.core import (
    ADP,
    AttrIntersects,
    BASE_ATOMS,
    BASE_ATTRS,
    BASE_RANKS,
    HasLabel,
    OrderKey,
    PrivacyUnit,
    Provenance,
    Rule,
    TruePredicate,
    UnitGraph,
    ZCDP,
)
from dpwarden.errors import IncomparableKeys
from dpwarden.poset import (
    build_poset,
    is_non_constraining,
    lower_cover,
    prune,
    prune_with_report,
    rule_leq,
    to_dot,
)

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from _util import hasse_fixture, random_rule_set  # noqa: E402


def _user():
    return UnitGraph([PrivacyUnit("user")])


def attr_rule(rule_id, attrs, eps, unit="user", ranks=()):
    return Rule(
        rule_id,
        AttrIntersects(frozenset(attrs)),
        unit,
        ADP(eps, 1e-7),
        Provenance("t", 0),
        OrderKey(BASE_ATTRS, frozenset(attrs), ranks, unit),
    )


def test_rule_leq_reflexive_and_subset():
    units = _user()
    r1 = attr_rule("r1", {"a1"}, 3.0)
    r2 = attr_rule("r2", {"a1", "a2", "a3"}, 5.0)
    assert rule_leq(r1, r1, units)
    assert rule_leq(r1, r2, units)
    assert not rule_leq(r2, r1, units)


def test_rule_leq_incomparable_units():
    units = UnitGraph([
        PrivacyUnit("user"),
        PrivacyUnit("user-week", ord_above=frozenset({"user"})),
        PrivacyUnit("user-month", ord_above=frozenset({"user"})),
    ])
    week = attr_rule("w", {"a1"}, 3.0, unit="user-week")
    month = attr_rule("m", {"a1"}, 3.0, unit="user-month")
    assert not rule_leq(week, month, units)
    assert not rule_leq(month, week, units)
    user = attr_rule("u", {"a1"}, 3.0, unit="user")
    assert rule_leq(week, user, units) and rule_leq(month, user, units)


def test_rule_leq_mixed_kinds_raise():
    units = _user()
    a = attr_rule("a", {"a1"}, 3.0)
    b = Rule("b", HasLabel("k", "v"), "user", ADP(3, 1e-7), Provenance("t", 0),
             OrderKey(BASE_ATOMS, frozenset({("k", "v")}), (), "user"))
    c = Rule("c", TruePredicate(), "user", ADP(3, 1e-7), Provenance("t", 0),
             OrderKey(BASE_RANKS, (1, 2), (), "user"))
    with pytest.raises(IncomparableKeys):
        rule_leq(a, b, units)
    with pytest.raises(IncomparableKeys):
        rule_leq(b, c, units)
    # everything compares against a top key
    top = Rule("t", TruePredicate(), "user", ADP(9, 1e-7), Provenance("t", 0),
               OrderKey("top", (), (), "user"))
    assert rule_leq(a, top, units) and rule_leq(b, top, units) and rule_leq(c, top, units)


def test_atom_conjunction_superset_is_smaller():
    units = _user()
    narrow = Rule("n", HasLabel("k", "v"), "user", ADP(3, 1e-7), Provenance("t", 0),
                  OrderKey(BASE_ATOMS, frozenset({("k", "v"), ("j", "w")}), (), "user"))
    wide = Rule("w", HasLabel("k", "v"), "user", ADP(3, 1e-7), Provenance("t", 0),
                OrderKey(BASE_ATOMS, frozenset({("k", "v")}), (), "user"))
    assert rule_leq(narrow, wide, units)
    assert not rule_leq(wide, narrow, units)


def test_hasse_fixture_covers():
    rules, units = hasse_fixture()
    poset = build_poset(rules, units)
    by_id = {r.rule_id: r for r in rules}
    assert {r.rule_id for r in lower_cover(poset, by_id["r1"])} == {"r2", "r3", "r4"}
    assert {r.rule_id for r in lower_cover(poset, by_id["r2"])} == {"r5", "r6"}
    assert {r.rule_id for r in lower_cover(poset, by_id["r3"])} == {"r6"}
    assert {r.rule_id for r in lower_cover(poset, by_id["r4"])} == {"r7"}
    assert lower_cover(poset, by_id["r6"]) == []
    assert poset.greatest_index() == poset.index_of("r1")


def test_hasse_fixture_non_constraining():
    rules, units = hasse_fixture()
    poset = build_poset(rules, units)
    assert is_non_constraining(poset, poset.index_of("r2"))
    assert not is_non_constraining(poset, poset.index_of("r6"))


def test_singleton_rule_is_constraining():
    units = _user()
    poset = build_poset([attr_rule("only", {"a1"}, 3.0)], units)
    assert not is_non_constraining(poset, 0)


def test_hasse_fixture_prunes_grey_rules():
    rules, units = hasse_fixture()
    active, records = prune_with_report(build_poset(rules, units))
    assert {r.rule_id for r in active.rules} == {"r1", "r4", "r6"}
    assert {rec.rule_id for rec in records} == {"r2", "r3", "r5", "r7"}
    for rec in records:
        assert rec.pruned_by in {"r1", "r4"}


def test_chain_with_identical_budgets_keeps_only_top():
    units = _user()
    chain = [
        attr_rule("bottom", {"a1"}, 5.0),
        attr_rule("middle", {"a1", "a2"}, 5.0),
        attr_rule("top", {"a1", "a2", "a3"}, 5.0),
    ]
    active = prune(build_poset(chain, units))
    assert [r.rule_id for r in active.rules] == ["top"]


def test_strictly_decreasing_chain_keeps_everything():
    units = _user()
    chain = [
        attr_rule("bottom", {"a1"}, 1.0),
        attr_rule("middle", {"a1", "a2"}, 2.0),
        attr_rule("top", {"a1", "a2", "a3"}, 3.0),
    ]
    active = prune(build_poset(chain, units))
    assert {r.rule_id for r in active.rules} == {"bottom", "middle", "top"}


def test_equal_scope_equal_budget_keeps_exactly_one():
    units = _user()
    twins = [attr_rule("first", {"a1"}, 2.0), attr_rule("second", {"a1"}, 2.0)]
    active = prune(build_poset(twins, units))
    assert [r.rule_id for r in active.rules] == ["first"]


def test_cross_variant_budgets_never_pruned():
    units = _user()
    rules = [
        attr_rule("small", {"a1"}, 2.0),
        Rule("big", AttrIntersects(frozenset({"a1", "a2"})), "user", ZCDP(0.001),
             Provenance("t", 0), OrderKey(BASE_ATTRS, frozenset({"a1", "a2"}), (), "user")),
    ]
    active = prune(build_poset(rules, units))
    assert {r.rule_id for r in active.rules} == {"small", "big"}


def test_cross_unit_domination_uses_declared_factor():
    units = UnitGraph([
        PrivacyUnit("user", group_factor_to={"user-month": 1}),
        PrivacyUnit("user-month", ord_above=frozenset({"user"})),
    ])
    month_rule = attr_rule("month", {"a1"}, 3.0, unit="user-month")
    user_rule = attr_rule("user", {"a1", "a2"}, 3.0, unit="user")
    active = prune(build_poset([month_rule, user_rule], units))
    assert {r.rule_id for r in active.rules} == {"user"}

    # without a declared conversion factor both rules must stay
    units_nofactor = UnitGraph([
        PrivacyUnit("user"),
        PrivacyUnit("user-month", ord_above=frozenset({"user"})),
    ])
    active = prune(build_poset([month_rule, user_rule], units_nofactor))
    assert {r.rule_id for r in active.rules} == {"month", "user"}


def test_prune_idempotent_on_random_posets():
    rng = np.random.default_rng(42)
    for _ in range(200):
        rules, units = random_rule_set(rng)
        once = prune(build_poset(rules, units))
        twice = prune(once)
        assert [r.rule_id for r in once.rules] == [r.rule_id for r in twice.rules]


def test_prune_never_removes_strictly_tighter_rules():
    rng = np.random.default_rng(43)
    for _ in range(200):
        rules, units = random_rule_set(rng)
        poset = build_poset(rules, units)
        active_ids = {r.rule_id for r in prune(poset).rules}
        for i, rule in enumerate(poset.rules):
            dominators = poset.ups[i]
            if not dominators:
                assert rule.rule_id in active_ids
                continue
            strictly_below_all = all(
                rule.budget.epsilon < poset.rules[j].budget.epsilon for j in dominators
            )
            if strictly_below_all:
                assert rule.rule_id in active_ids


def test_comparison_count_within_decomposition_bound():
    cfg_doc = {
        "units": [{"name": "user"}],
        "attributes": [f"a{i}" for i in range(40)],
        "categories": [],
        "base_policies": [
            {
                "type": "custom",
                "name": "global",
                "unit": "user",
                "predicate": {"op": "true"},
                "budget": {"kind": "adp", "epsilon": 10, "delta": 1e-7},
            },
            {
                "type": "per_attribute",
                "name": "attrs",
                "unit": "user",
                "risk_budgets": {"low": {"kind": "adp", "epsilon": 20, "delta": 1e-7}},
                "attributes": {f"a{i}": "low" for i in range(40)},
            },
        ],
        "extension_policies": [
            {
                "name": "ctx",
                "extensions": [
                    {"name": "std", "predicate": {"op": "has_label", "key": "c", "value": "s"},
                     "budget_fn": {"kind": "identity"}, "rank": 0},
                    {"name": "all", "predicate": {"op": "true"},
                     "budget_fn": {"kind": "scale", "factor": 2.0}, "rank": 1},
                ],
            }
        ],
    }
    ps = parse_policy_set(cfg_doc)
    base = generate_base_rules(ps)
    final = compile_policy_set(ps)
    poset = build_poset(final, ps.unit_graph())
    n_base = len(base)
    ext_sizes = [len(ep.extensions) for ep in ps.extension_policies]
    bound = n_base**2 + sum(s**2 for s in ext_sizes)
    assert poset.stats.distinct_base_keys == n_base
    assert poset.stats.base_comparisons <= bound
    # far below the naive all-pairs predicate comparison count
    assert poset.stats.base_comparisons < len(final) * (len(final) - 1)


def test_dot_export_marks_pruned():
    rules, units = hasse_fixture()
    poset = build_poset(rules, units)
    _, records = prune_with_report(poset)
    dot = to_dot(poset, [rec.rule_id for rec in records])
    assert dot.startswith("digraph")
    assert dot.count("grey80") == 4
    assert "->" in dot

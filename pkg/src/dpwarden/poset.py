"""Partial order over rules, cover computation, and non-constraining-rule
pruning.

Rules compare through their decomposed order keys: base-scope part (attribute
sets by subset, admin integer tuples componentwise, conjunctive-atom sets by
superset), one rank per extension policy, and the declared unit order.  The
decomposition lets poset construction memoize base-key comparisons so only
O(|base keys|^2 + sum |extensions|^2) predicate-level comparisons happen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .accounting import group_privacy
from .core import (
    BASE_ATOMS,
    BASE_ATTRS,
    BASE_RANKS,
    BASE_TOP,
    OrderKey,
    PrivacyBudget,
    Rule,
    UnitGraph,
    budget_leq,
    budget_to_dict,
)
from .errors import IncomparableKeys, UnsupportedVariant, ValidationError, VariantMismatch


def _base_leq(kind1: str, val1, kind2: str, val2) -> bool:
    if kind2 == BASE_TOP:
        return True
    if kind1 == BASE_TOP:
        return False
    if kind1 != kind2:
        raise IncomparableKeys(f"cannot order base keys of kinds {kind1!r} and {kind2!r}")
    if kind1 == BASE_ATTRS:
        return val1 <= val2
    if kind1 == BASE_ATOMS:
        # more atoms conjoined = narrower scope
        return val1 >= val2
    if len(val1) != len(val2):
        raise IncomparableKeys("annotation tuples of different lengths")
    return all(a <= b for a, b in zip(val1, val2))


def rule_leq(r1: Rule, r2: Rule, units: UnitGraph) -> bool:
    """True iff r1's scope is contained in r2's and r1's unit is covered by
    r2's.  Raises IncomparableKeys on mixed key kinds."""
    k1, k2 = r1.order_key, r2.order_key
    if k1 is None or k2 is None:
        raise IncomparableKeys("both rules need order keys")
    if len(k1.ext_ranks) != len(k2.ext_ranks):
        raise IncomparableKeys("rules from different compilations (extension rank arity differs)")
    return (
        _base_leq(k1.base_kind, k1.base_value, k2.base_kind, k2.base_value)
        and all(a <= b for a, b in zip(k1.ext_ranks, k2.ext_ranks))
        and units.leq(k1.unit, k2.unit)
    )


@dataclass
class ComparisonStats:
    """Instrumentation: predicate-level (base-key) comparisons performed."""

    base_comparisons: int = 0
    distinct_base_keys: int = 0


class RulePoset:
    """Indexed rule set with its precomputed order relation."""

    def __init__(self, rules: Sequence[Rule], units: UnitGraph, ups: list[set[int]],
                 stats: ComparisonStats):
        self.rules = tuple(rules)
        self.units = units
        self.ups = ups  # ups[i] = indices j != i with rule_i <= rule_j
        self.stats = stats
        self.downs: list[set[int]] = [set() for _ in rules]
        for i, up in enumerate(ups):
            for j in up:
                self.downs[j].add(i)
        self._upper_covers = [self._covers(i, above=True) for i in range(len(rules))]
        self._lower_covers = [self._covers(i, above=False) for i in range(len(rules))]
        # ancestors-first order for traversal (strict up-set only grows downward)
        self._topo = sorted(range(len(rules)), key=lambda i: len(self.strict_ups(i)))

    def __len__(self) -> int:
        return len(self.rules)

    def index_of(self, rule_id: str) -> int:
        for i, r in enumerate(self.rules):
            if r.rule_id == rule_id:
                return i
        raise KeyError(rule_id)

    def leq(self, i: int, j: int) -> bool:
        return i == j or j in self.ups[i]

    def strict_ups(self, i: int) -> set[int]:
        return {j for j in self.ups[i] if i not in self.ups[j]}

    def _covers(self, i: int, above: bool) -> tuple[int, ...]:
        if above:
            strict = self.strict_ups(i)
        else:
            strict = {j for j in self.downs[i] if i not in self.downs[j]}
        keep = []
        for j in strict:
            others = strict - {j}
            if above:
                # minimal strict successors: drop j if some other k lies below it
                if not any(j in self.ups[k] and k not in self.ups[j] for k in others):
                    keep.append(j)
            else:
                # maximal strict predecessors: drop j if some other k lies above it
                if not any(k in self.ups[j] and j not in self.ups[k] for k in others):
                    keep.append(j)
        return tuple(sorted(keep))

    def upper_cover_indices(self, i: int) -> tuple[int, ...]:
        return self._upper_covers[i]

    def lower_cover_indices(self, i: int) -> tuple[int, ...]:
        return self._lower_covers[i]

    def topo_order(self) -> list[int]:
        """Indices ordered so every rule appears after all rules above it."""
        return list(self._topo)

    def maximal_indices(self) -> list[int]:
        return [i for i in range(len(self.rules)) if not self.strict_ups(i)]

    def greatest_index(self) -> int | None:
        tops = [i for i in range(len(self.rules)) if all(self.leq(j, i) for j in range(len(self.rules)))]
        return tops[0] if len(tops) == 1 else None


def build_poset(rules: Sequence[Rule], units: UnitGraph) -> RulePoset:
    """Compute the order relation with memoized base-key comparisons."""
    keys: list[OrderKey] = []
    for r in rules:
        if r.order_key is None:
            raise ValidationError(f"rule {r.rule_id!r} has no order key")
        if r.order_key.unit not in units:
            raise ValidationError(f"rule {r.rule_id!r} uses undeclared unit {r.order_key.unit!r}")
        keys.append(r.order_key)
    arities = {len(k.ext_ranks) for k in keys}
    if len(arities) > 1:
        raise ValidationError("rules compiled with different extension-policy counts")

    stats = ComparisonStats()
    base_ids: dict[tuple, int] = {}
    which: list[int] = []
    for k in keys:
        bk = (k.base_kind, k.base_value)
        if bk not in base_ids:
            base_ids[bk] = len(base_ids)
        which.append(base_ids[bk])
    uniq = list(base_ids)
    stats.distinct_base_keys = len(uniq)

    cache: dict[tuple[int, int], bool] = {}

    def base_leq_cached(a: int, b: int) -> bool:
        if a == b:
            return True
        got = cache.get((a, b))
        if got is None:
            stats.base_comparisons += 1
            k1, v1 = uniq[a]
            k2, v2 = uniq[b]
            try:
                got = _base_leq(k1, v1, k2, v2)
            except IncomparableKeys:
                got = False
            cache[(a, b)] = got
        return got

    n = len(rules)
    ups: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        ki = keys[i]
        for j in range(n):
            if i == j:
                continue
            kj = keys[j]
            if not all(a <= b for a, b in zip(ki.ext_ranks, kj.ext_ranks)):
                continue
            if not units.leq(ki.unit, kj.unit):
                continue
            if base_leq_cached(which[i], which[j]):
                ups[i].add(j)
    return RulePoset(rules, units, ups, stats)


def lower_cover(poset: RulePoset, rule: Rule | int) -> list[Rule]:
    """Maximal strict predecessors of a rule in the poset."""
    i = rule if isinstance(rule, int) else poset.index_of(rule.rule_id)
    return [poset.rules[j] for j in poset.lower_cover_indices(i)]


def _dominating_budget(poset: RulePoset, i: int, j: int) -> PrivacyBudget | None:
    """Budget of rule j expressed in rule i's unit, if it is at most rule i's
    budget (making rule i non-constraining); else None."""
    ri, rj = poset.rules[i], poset.rules[j]
    budget = rj.budget
    if rj.unit != ri.unit:
        k = poset.units.group_factor(rj.unit, ri.unit)
        if k is None:
            return None
        try:
            budget = group_privacy(budget, k)
        except UnsupportedVariant:
            return None
    try:
        if not budget_leq(budget, ri.budget):
            return None
        if i in poset.ups[j]:
            # scope-equivalent pair: with equal budgets only the earlier rule
            # survives, so the later one may not act as a witness
            if budget_leq(ri.budget, rj.budget) and j > i:
                return None
    except VariantMismatch:
        return None
    return budget


def is_non_constraining(poset: RulePoset, rule: Rule | int) -> bool:
    """A rule is non-constraining when some other rule contains its scope and
    unit with an equal-or-stricter budget; removing it cannot change any
    decision."""
    i = rule if isinstance(rule, int) else poset.index_of(rule.rule_id)
    return any(_dominating_budget(poset, i, j) is not None for j in poset.ups[i])


@dataclass(frozen=True)
class PruneRecord:
    rule_id: str
    pruned_by: str
    implied_budget: PrivacyBudget

    def to_dict(self) -> dict:
        return {
            "rule": self.rule_id,
            "pruned_by": self.pruned_by,
            "implied_budget": budget_to_dict(self.implied_budget),
        }


def prune_with_report(poset: RulePoset) -> tuple[RulePoset, list[PruneRecord]]:
    """Deactivate every non-constraining rule, with a witness per pruned rule.

    Walking the relation transitively once is equivalent to the recursive
    descent from the greatest element with implied-budget propagation: a rule
    is deactivated exactly when some rule above it carries an equal-or-
    stricter budget (expressed in the rule's own unit), and witnesses are
    never deactivated without a surviving dominator of their own.
    """
    records: list[PruneRecord] = []
    active: list[int] = []
    for i in range(len(poset.rules)):
        witness: tuple[int, PrivacyBudget] | None = None
        for j in sorted(poset.ups[i]):
            implied = _dominating_budget(poset, i, j)
            if implied is not None:
                witness = (j, implied)
                break
        if witness is None:
            active.append(i)
        else:
            j, implied = witness
            records.append(PruneRecord(poset.rules[i].rule_id, poset.rules[j].rule_id, implied))
    sub = build_poset([poset.rules[i] for i in active], poset.units)
    return sub, records


def prune(poset: RulePoset) -> RulePoset:
    """The poset restricted to constraining (active) rules."""
    sub, _ = prune_with_report(poset)
    return sub


def to_dot(poset: RulePoset, pruned_ids: Iterable[str] = ()) -> str:
    """Cover graph in DOT format; pruned rules render grey."""
    pruned = set(pruned_ids)
    lines = ["digraph rules {", "  rankdir=TB;", "  node [shape=box];"]
    for i, r in enumerate(poset.rules):
        label = f"{r.rule_id}\\n{budget_to_dict(r.budget)}"
        style = ' style=filled fillcolor="grey80"' if r.rule_id in pruned else ""
        lines.append(f'  n{i} [label="{label}"{style}];')
    for i in range(len(poset.rules)):
        for j in poset.lower_cover_indices(i):
            lines.append(f"  n{i} -> n{j};")
    lines.append("}")
    return "\n".join(lines)

"""Desk-scale workload simulator for the three risk scenarios.

Scenario ``s1`` (context) relaxes budgets for black-box ML releases via an
extension policy; ``s2`` (scope) tracks 150 per-attribute and 10 category
budgets; ``s3`` (time units) adds a user-month budget next to the global
user budget.  Each scenario runs either against the compiled policy rules
(``dpolicy`` mode) or against a single global user-level filter
(``baseline`` mode), allocating greedily by utility under gradual budget
unlocking.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .accounting import calibrate_gaussian_rho, gaussian_curve, pure_curve
from .compiler import MapTable, MembershipLevel, compile_policy_set, parse_policy_set
from .core import (
    ADP,
    AttrIntersects,
    DEFAULT_ALPHA_ORDERS,
    BASE_TOP,
    HasLabel,
    LabelSet,
    Mechanism,
    OrderKey,
    Predicate,
    Provenance,
    RDP,
    ReleaseRequest,
    Rule,
    TruePredicate,
    eval_predicate,
)
from .decision import BlockDomain, DecisionPoint, TimeAxis
from .errors import ConfigError
from .poset import build_poset, prune

SCENARIOS = ("s1", "s2", "s3")

# Budget relaxation for black-box ML contexts: standard bound -> total bound.
S1_BUDGET_TABLE: tuple[tuple[float, float], ...] = (
    (1.7, 3.0), (1.8, 5.0), (1.9, 7.0), (2.0, 10.0), (2.3, 15.0), (2.5, 20.0),
)

DEFAULT_MECHANISMS: dict[str, dict] = {
    "gaussian": {"levels": [0.05, 0.2, 0.75], "pa_beta": [1.0, 10.0], "family": "gaussian", "ml": False},
    "laplace": {"levels": [0.01, 0.1, 0.25], "pa_beta": [1.0, 10.0], "family": "pure", "ml": False},
    "svt": {"levels": [0.01, 0.1, 0.25], "pa_beta": [1.0, 0.5], "family": "pure", "ml": False},
    "rand_resp": {"levels": [0.01, 0.1, 0.25], "pa_beta": [1.0, 0.5], "family": "pure", "ml": False},
    "dpsgd": {"levels": [0.05, 0.2, 0.75], "pa_beta": [2.0, 2.0], "family": "gaussian", "ml": True},
    "pate": {"levels": [0.05, 0.2, 0.75], "pa_beta": [2.0, 2.0], "family": "gaussian", "ml": True},
}


@dataclass
class WorkloadConfig:
    """Simulator knobs; defaults reproduce the desk-scale setup."""

    scenario: str = "s2"
    total_epsilon: float = 10.0
    rounds: int = 10
    requests_per_round: float = 50.0
    unlock_rounds: int = 6
    pa_domain_size: int = 2048
    pa_range_unit: int = 100
    delta_budget: float = 1e-7
    delta_request: float = 1e-9
    utility_alpha: float = 1.0
    utility_beta: float = 2.0
    n_attributes: int = 150
    n_categories: int = 10
    attr_zipf_exponent: float = 1.0
    cat_zipf_exponent: float = 0.1
    attr_continue_prob: float = 0.75
    cat_continue_prob: float = 0.6
    blackbox_rate: float = 0.8
    time_request_fraction: float = 0.5
    month_budget_epsilon: float = 3.0
    month_window: int = 7
    rounds_per_month: int = 8
    start_month: int = 6
    current_month_prob: float = 1.0 / 3.0
    rng_seed: int = 0
    mechanisms: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MECHANISMS.items()})

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        for name, value in (
            ("rounds", self.rounds),
            ("unlock_rounds", self.unlock_rounds),
            ("pa_domain_size", self.pa_domain_size),
            ("pa_range_unit", self.pa_range_unit),
            ("n_attributes", self.n_attributes),
            ("n_categories", self.n_categories),
        ):
            if value < 1:
                raise ConfigError(f"{name} must be positive")
        if self.requests_per_round <= 0 or self.total_epsilon <= 0:
            raise ConfigError("request rate and total budget must be positive")
        for name, p in (
            ("attr_continue_prob", self.attr_continue_prob),
            ("cat_continue_prob", self.cat_continue_prob),
            ("blackbox_rate", self.blackbox_rate),
            ("time_request_fraction", self.time_request_fraction),
            ("current_month_prob", self.current_month_prob),
        ):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.start_month < self.month_window - 1:
            raise ConfigError("start_month must cover the selection window")

    @classmethod
    def desk_scale(cls, scenario: str, total_epsilon: float, rng_seed: int = 0) -> "WorkloadConfig":
        """Desk-scale preset: 2,048 blocks, 50 requests/round, 10 rounds.

        Block selections are widened (pa_range_unit) to keep per-block
        composition depth in the regime where a single global budget starts
        to concentrate risk, compensating for the ~20x smaller request
        volume.
        """
        return cls(
            scenario=scenario,
            total_epsilon=total_epsilon,
            pa_range_unit=2400,
            rng_seed=rng_seed,
        )

    @classmethod
    def paper_scale(cls, scenario: str, total_epsilon: float, rng_seed: int = 0) -> "WorkloadConfig":
        """Published-evaluation dimensions; slow, for reference runs only."""
        return cls(
            scenario=scenario,
            total_epsilon=total_epsilon,
            rounds=20,
            requests_per_round=504.0,
            unlock_rounds=12,
            pa_domain_size=204_800,
            rounds_per_month=4,
            rng_seed=rng_seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def s1_standard_epsilon(total_epsilon: float) -> float:
    """Standard-context bound implied by a total budget under the relaxation
    table (inverse map, interpolating between knots)."""
    return MapTable(S1_BUDGET_TABLE).inverse().map_value(total_epsilon)


# ---------------------------------------------------------------------------
# Schema: attributes, categories, membership
# ---------------------------------------------------------------------------

@dataclass
class WorkloadSchema:
    attributes: tuple[str, ...]
    attr_probs: np.ndarray
    attr_risk: dict[str, str]
    categories: tuple[str, ...]
    cat_probs: np.ndarray
    category_risk: dict[str, str]
    membership: dict[str, dict[str, MembershipLevel]]

    def high_risk_attributes(self) -> list[str]:
        return [a for a in self.attributes if self.attr_risk[a] == "high"]

    def category_attrs(self, cat: str, levels: Iterable[MembershipLevel]) -> frozenset[str]:
        wanted = set(levels)
        return frozenset(a for a, row in self.membership.items() if row.get(cat) in wanted)

    def connected_categories(self, attrs: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for a in attrs:
            out.update(self.membership.get(a, {}))
        return frozenset(out)


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1) ** exponent
    return weights / weights.sum()


def _stop_count(rng: np.random.Generator, continue_prob: float) -> int:
    """Trials until the first stop, inclusive; mean 1/(1 - continue_prob)."""
    k = 1
    while rng.random() < continue_prob:
        k += 1
    return k


def sample_attribute_set(rng: np.random.Generator, cfg: WorkloadConfig, schema: WorkloadSchema) -> list[str]:
    """k+1 distinct attributes, k geometric over the continuation probability,
    drawn without replacement by selection probability."""
    count = min(_stop_count(rng, cfg.attr_continue_prob) + 1, cfg.n_attributes)
    idx = rng.choice(cfg.n_attributes, size=count, replace=False, p=schema.attr_probs)
    return [schema.attributes[i] for i in idx]


def sample_category_assignment(
    rng: np.random.Generator, cfg: WorkloadConfig, probs: np.ndarray
) -> dict[int, MembershipLevel]:
    """Category associations for one attribute: the first draw is a member,
    later draws alternate strong/weak connections."""
    count = min(_stop_count(rng, cfg.cat_continue_prob) + 1, cfg.n_categories)
    idx = rng.choice(cfg.n_categories, size=count, replace=False, p=probs)
    out: dict[int, MembershipLevel] = {}
    for pos, cat in enumerate(idx):
        if pos == 0:
            out[int(cat)] = MembershipLevel.MEMBER
        elif pos % 2 == 1:
            out[int(cat)] = MembershipLevel.STRONG
        else:
            out[int(cat)] = MembershipLevel.WEAK
    return out


def build_schema(cfg: WorkloadConfig) -> WorkloadSchema:
    rng = np.random.default_rng([cfg.rng_seed, 11])
    attributes = tuple(f"a{i:03d}" for i in range(1, cfg.n_attributes + 1))
    attr_probs = _zipf_probs(cfg.n_attributes, cfg.attr_zipf_exponent)
    # risk levels spread evenly across the selection-probability ranks:
    # within each run of ten ranks, eight low, one medium, one high
    attr_risk = {}
    for i, a in enumerate(attributes):
        pos = i % 10
        attr_risk[a] = "medium" if pos == 8 else "high" if pos == 9 else "low"
    categories = tuple(f"c{i:02d}" for i in range(1, cfg.n_categories + 1))
    cat_probs = _zipf_probs(cfg.n_categories, cfg.cat_zipf_exponent)
    n_high = 1
    n_medium = min(4, max(cfg.n_categories - n_high, 0))
    category_risk = {}
    for i, c in enumerate(categories):
        category_risk[c] = "high" if i < n_high else "medium" if i < n_high + n_medium else "low"
    membership = {
        a: {categories[ci]: lvl for ci, lvl in sample_category_assignment(rng, cfg, cat_probs).items()}
        for a in attributes
    }
    return WorkloadSchema(attributes, attr_probs, attr_risk, categories, cat_probs, category_risk, membership)


# ---------------------------------------------------------------------------
# Policy documents per scenario
# ---------------------------------------------------------------------------

def _adp(eps: float, delta: float) -> dict:
    return {"kind": "adp", "epsilon": eps, "delta": delta}


def build_policy_document(cfg: WorkloadConfig, schema: WorkloadSchema) -> dict:
    """Scenario policy set as a plain JSON-able document."""
    delta = cfg.delta_budget
    units = [{"name": "user", "above": [], "group_factor_to": {}}]
    base: list[dict] = [
        {
            "type": "custom",
            "name": "global",
            "unit": "user",
            "predicate": {"op": "true"},
            "budget": _adp(cfg.total_epsilon, delta),
        }
    ]
    extensions: list[dict] = []
    doc: dict = {"attributes": [], "categories": []}

    if cfg.scenario == "s1":
        base[0]["budget"] = _adp(s1_standard_epsilon(cfg.total_epsilon), delta)
        extensions.append(
            {
                "name": "context",
                "extensions": [
                    {
                        "name": "standard",
                        "predicate": {"op": "has_label", "key": "context", "value": "standard"},
                        "budget_fn": {"kind": "identity"},
                        "rank": 0,
                    },
                    {
                        "name": "total",
                        "predicate": {"op": "true"},
                        "budget_fn": {"kind": "map_table", "knots": [list(k) for k in S1_BUDGET_TABLE]},
                        "rank": 1,
                    },
                ],
            }
        )
    elif cfg.scenario == "s2":
        doc["attributes"] = list(schema.attributes)
        doc["categories"] = list(schema.categories)
        base.append(
            {
                "type": "per_attribute",
                "name": "attr_risk",
                "unit": "user",
                "risk_budgets": {
                    "low": _adp(20.0, delta),
                    "medium": _adp(9.0, delta),
                    "high": _adp(3.0, delta),
                },
                "attributes": {a: schema.attr_risk[a] for a in schema.attributes},
            }
        )
        base.append(
            {
                "type": "category",
                "name": "cat_risk",
                "unit": "user",
                "risk_budgets": {
                    "high": _adp(5.0, delta),
                    "medium": _adp(10.0, delta),
                    "low": _adp(12.0, delta),
                },
                "categories": dict(schema.category_risk),
                "membership": {
                    a: {c: lvl.value for c, lvl in row.items()}
                    for a, row in schema.membership.items()
                    if row
                },
                "level_functions": {
                    "strong": {"kind": "scale", "factor": 1.5},
                    "weak": {"kind": "scale", "factor": 2.0},
                },
            }
        )
    else:  # s3
        units = [
            {"name": "user", "above": [], "group_factor_to": {"user-month": 1}},
            {"name": "user-month", "above": ["user"], "group_factor_to": {}},
        ]
        base.append(
            {
                "type": "custom",
                "name": "monthly",
                "unit": "user-month",
                "predicate": {"op": "has_label", "key": "data", "value": "time"},
                "budget": _adp(cfg.month_budget_epsilon, delta),
            }
        )

    doc.update({"units": units, "base_policies": base, "extension_policies": extensions,
                "per_release_policies": []})
    return doc


# ---------------------------------------------------------------------------
# Request generation
# ---------------------------------------------------------------------------

_COST_CACHE: dict[tuple, RDP] = {}


def request_cost_curve(family: str, epsilon: float, delta: float,
                       orders: tuple[float, ...] = DEFAULT_ALPHA_ORDERS) -> RDP:
    """RDP curve for one mechanism invocation at a stated epsilon level.

    Gaussian-family mechanisms get a rho*alpha curve calibrated so the curve
    converts back to the stated epsilon at the request delta; pure-DP
    mechanisms get a constant curve.
    """
    key = (family, epsilon, delta, orders)
    curve = _COST_CACHE.get(key)
    if curve is None:
        if family == "gaussian":
            curve = gaussian_curve(calibrate_gaussian_rho(epsilon, delta, orders), orders)
        elif family == "pure":
            curve = pure_curve(epsilon, orders)
        else:
            raise ConfigError(f"unknown mechanism family {family!r}")
        _COST_CACHE[key] = curve
    return curve


def month_of_round(cfg: WorkloadConfig, round_no: int) -> int:
    return cfg.start_month + (round_no - 1) // cfg.rounds_per_month


def sample_month(rng: np.random.Generator, cfg: WorkloadConfig, current: int) -> int:
    """Current month with elevated probability, else uniform over the six
    preceding months."""
    if rng.random() < cfg.current_month_prob:
        return current
    back = int(rng.integers(1, cfg.month_window))
    return max(0, current - back)


def tracked_months(cfg: WorkloadConfig) -> list[int]:
    last = month_of_round(cfg, cfg.rounds)
    return list(range(max(0, cfg.start_month - cfg.month_window + 1), last + 1))


def generate_workload(cfg: WorkloadConfig, schema: WorkloadSchema | None = None) -> list[list[ReleaseRequest]]:
    """Per-round request batches; deterministic in the configured seed."""
    schema = schema or build_schema(cfg)
    rng = np.random.default_rng([cfg.rng_seed, 23])
    mech_names = sorted(cfg.mechanisms)
    rounds: list[list[ReleaseRequest]] = []
    for r in range(1, cfg.rounds + 1):
        current = month_of_round(cfg, r)
        batch: list[ReleaseRequest] = []
        n = int(rng.poisson(cfg.requests_per_round))
        for j in range(n):
            name = mech_names[int(rng.integers(len(mech_names)))]
            spec = cfg.mechanisms[name]
            epsilon = float(spec["levels"][int(rng.integers(len(spec["levels"])))])
            a, b = spec["pa_beta"]
            length = int(rng.beta(a, b) * cfg.pa_range_unit)
            start = int(rng.integers(cfg.pa_domain_size))
            sel = tuple((start + k) % cfg.pa_domain_size for k in range(min(length, cfg.pa_domain_size)))

            attrs = sample_attribute_set(rng, cfg, schema)
            labels: dict[str, list[str]] = {
                "attr": attrs,
                "mech": [name],
                "cat": sorted(schema.connected_categories(attrs)),
            }
            if cfg.scenario == "s1" and spec.get("ml") and rng.random() < cfg.blackbox_rate:
                labels["context"] = ["blackbox-ml"]
            else:
                labels["context"] = ["standard"]

            time_step = None
            if cfg.scenario == "s3":
                if rng.random() < cfg.time_request_fraction:
                    labels["data"] = ["time"]
                    time_step = sample_month(rng, cfg, current)
                else:
                    labels["data"] = ["static"]

            curve = request_cost_curve(spec["family"], epsilon, cfg.delta_request)
            cost = {"user": curve}
            if cfg.scenario == "s3":
                cost["user-month"] = curve
            utility = float(
                rng.beta(0.25, 0.25)
                * epsilon ** cfg.utility_beta
                * (len(sel) / cfg.pa_domain_size) ** cfg.utility_alpha
            )
            batch.append(
                ReleaseRequest(
                    f"r{r:02d}-{j:03d}",
                    (Mechanism(LabelSet(labels), cost),),
                    sel,
                    time_step,
                    utility,
                )
            )
        rounds.append(batch)
    return rounds


# ---------------------------------------------------------------------------
# Scenario runs and reports
# ---------------------------------------------------------------------------

@dataclass
class ScopeCost:
    cumulative_epsilon: float
    bound: float | None
    violation: bool


@dataclass
class RoundReport:
    round: int
    utility: float
    cumulative_utility: float
    scopes: dict[str, ScopeCost]


@dataclass
class ScenarioResult:
    config: WorkloadConfig
    mode: str
    reports: list[RoundReport]

    @property
    def total_utility(self) -> float:
        return self.reports[-1].cumulative_utility if self.reports else 0.0

    def final_scopes(self) -> dict[str, ScopeCost]:
        return self.reports[-1].scopes if self.reports else {}

    def violation_count(self) -> int:
        return sum(1 for rep in self.reports for sc in rep.scopes.values() if sc.violation)

    def summary(self) -> dict:
        return {
            "scenario": self.config.scenario,
            "mode": self.mode,
            "total_epsilon": self.config.total_epsilon,
            "rng_seed": self.config.rng_seed,
            "rounds": len(self.reports),
            "total_utility": self.total_utility,
            "violation_rounds": self.violation_count(),
            "final": {
                name: {
                    "cumulative_epsilon": sc.cumulative_epsilon,
                    "bound": sc.bound,
                    "violation": sc.violation,
                }
                for name, sc in sorted(self.final_scopes().items())
            },
        }


class _Scope:
    """Post-hoc per-scope accounting, independent of the decision point."""

    def __init__(self, name: str, predicate: Predicate, unit: str, bound: float | None,
                 cfg: WorkloadConfig, month: int | None = None):
        self.name = name
        self.predicate = predicate
        self.unit = unit
        self.bound = bound
        self.month = month
        self._acc: np.ndarray | None = None
        self._cfg = cfg
        self._orders = np.asarray(DEFAULT_ALPHA_ORDERS)
        self._conv = math.log(1.0 / cfg.delta_budget) / (self._orders - 1.0)

    def add(self, request: ReleaseRequest) -> None:
        if self.month is not None and request.time_step != self.month:
            return
        if not request.pa_selection:
            return
        sel = np.asarray(request.pa_selection, dtype=np.intp)
        for mech in request.mechanisms:
            if not eval_predicate(self.predicate, mech.labels):
                continue
            cost = mech.cost_by_unit.get(self.unit)
            if cost is None:
                continue
            if self._acc is None:
                self._acc = np.zeros((self._cfg.pa_domain_size, len(self._orders)))
            self._acc[sel] += np.asarray(cost.curve)

    def report(self) -> ScopeCost:
        if self._acc is None:
            eps = 0.0
        else:
            eps = float((self._acc + self._conv).min(axis=1).max())
        violation = self.bound is not None and eps > self.bound + 1e-9
        return ScopeCost(eps, self.bound, violation)


def _build_scopes(cfg: WorkloadConfig, schema: WorkloadSchema) -> list[_Scope]:
    scopes: list[_Scope] = []
    if cfg.scenario == "s1":
        scopes.append(_Scope("combined", TruePredicate(), "user", cfg.total_epsilon, cfg))
        scopes.append(
            _Scope("standard", HasLabel("context", "standard"), "user",
                   s1_standard_epsilon(cfg.total_epsilon), cfg)
        )
    elif cfg.scenario == "s2":
        scopes.append(_Scope("global", TruePredicate(), "user", cfg.total_epsilon, cfg))
        high_cats = [c for c, r in schema.category_risk.items() if r == "high"]
        for cat in high_cats:
            member = schema.category_attrs(cat, [MembershipLevel.MEMBER])
            strong = member | schema.category_attrs(cat, [MembershipLevel.STRONG])
            weak = strong | schema.category_attrs(cat, [MembershipLevel.WEAK])
            scopes.append(_Scope(f"cat.{cat}.member", AttrIntersects(member), "user", 5.0, cfg))
            scopes.append(_Scope(f"cat.{cat}.strong", AttrIntersects(strong), "user", 7.5, cfg))
            scopes.append(_Scope(f"cat.{cat}.weak", AttrIntersects(weak), "user", 10.0, cfg))
        for attr in schema.high_risk_attributes():
            scopes.append(_Scope(f"attr.{attr}", AttrIntersects(frozenset({attr})), "user", 3.0, cfg))
    else:
        scopes.append(_Scope("global", TruePredicate(), "user", cfg.total_epsilon, cfg))
        for m in tracked_months(cfg):
            scopes.append(
                _Scope(f"month.{m:02d}", HasLabel("data", "time"), "user-month",
                       cfg.month_budget_epsilon, cfg, month=m)
            )
    return scopes


def _baseline_rules(cfg: WorkloadConfig) -> list[Rule]:
    return [
        Rule(
            "global_filter",
            TruePredicate(),
            "user",
            ADP(cfg.total_epsilon, cfg.delta_budget),
            Provenance("global_filter", 0),
            OrderKey(BASE_TOP, (), (), "user"),
        )
    ]


def run_scenario(cfg: WorkloadConfig, mode: str = "dpolicy") -> ScenarioResult:
    """Simulate one scenario end to end and report per-round scope costs."""
    if mode not in ("dpolicy", "baseline"):
        raise ConfigError(f"mode must be 'dpolicy' or 'baseline', got {mode!r}")
    schema = build_schema(cfg)
    policy = parse_policy_set(build_policy_document(cfg, schema))
    units = policy.unit_graph()
    if mode == "dpolicy":
        poset = prune(build_poset(compile_policy_set(policy), units))
    else:
        poset = build_poset(_baseline_rules(cfg), units)

    time_axis = (
        TimeAxis("user-month", cfg.month_window, cfg.start_month)
        if cfg.scenario == "s3"
        else None
    )
    domain = BlockDomain(("pa",), cfg.pa_domain_size, time_axis)
    point = DecisionPoint(poset, policy.per_release, domain)
    scopes = _build_scopes(cfg, schema)

    reports: list[RoundReport] = []
    cumulative_utility = 0.0
    for round_no, batch in enumerate(generate_workload(cfg, schema), start=1):
        if time_axis is not None:
            month = month_of_round(cfg, round_no)
            if month > point.state.now:
                point.advance_time(month)
        unlocked = min(1.0, round_no / cfg.unlock_rounds)
        round_utility = 0.0
        for request in sorted(batch, key=lambda q: -q.utility):
            decision = point.process(request, budget_scale=unlocked)
            if decision.accepted:
                round_utility += request.utility
                for scope in scopes:
                    scope.add(request)
        cumulative_utility += round_utility
        reports.append(
            RoundReport(
                round_no,
                round_utility,
                cumulative_utility,
                {s.name: s.report() for s in scopes},
            )
        )
    return ScenarioResult(cfg, mode, reports)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("round", "scope", "cumulative_epsilon", "bound", "violation", "round_utility")


def emit_report(result: ScenarioResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write rounds.csv (one row per round per scope) and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "rounds.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in result.reports:
            for name in sorted(rep.scopes):
                sc = rep.scopes[name]
                writer.writerow(
                    [
                        rep.round,
                        name,
                        f"{sc.cumulative_epsilon:.9f}",
                        "" if sc.bound is None else f"{sc.bound:.9f}",
                        int(sc.violation),
                        f"{rep.utility:.9f}",
                    ]
                )
    summary_path = out / "summary.json"
    summary = result.summary()
    summary["config"] = result.config.to_dict()
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return csv_path, summary_path

"""
Detection-efficiency linear programs.

Given an experiment, its tallied frequencies q and an objective scenario,
``build`` produces the LP whose optimum is the critical efficiency f*:

    columns   x̃_j (one per category, in code order), v_s, PDet_ik, dmin_i,
              and dsym when a minimum over observers is maximized
    norm                        Σ_j x̃_j = 1
    couple[s][d]                Σ_{P_s(j)=d} x̃_j - q_sd v_s = 0
    pdet[i][k]                  PDet_ik - Σ_{j_ik detected} x̃_j = 0
    dmin[i][k]                  dmin_i - PDet_ik <= 0
    dsym[i]                     dsym - dmin_i <= 0       (observers in the subset)
    fix[i]                      dmin_i >= value          (fixed observers)

The full frequencies q̃ are never columns; Σ_{P_s(j)=r} x̃_j recovers them.

``build_pinned`` is the objective-free feasibility program used by
certificates: only x̃ and v columns, with the detection probabilities
pinned row by row.
"""
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .logging import DebugLogger, ErrorContext
from .lp import (
    LinearProgram,
    LpNumericalError,
    LpSolution,
    FarkasError,
    FarkasRay,
    LpStatus,
    Relation,
    extract_farkas,
    solve,
)
from .model import (
    ExperimentSpec,
    FullFrequencies,
    Setting,
    TalliedFrequencies,
    detect_mask,
    enumerate_outcomes,
    enumerate_settings,
    outcome_codes,
    outcome_index,
    outcome_label,
    setting_label,
)
from .types import ScenarioConfig, SolverTolerances


class ScenarioError(ValueError):
    """Objective scenario inconsistent with the experiment."""


class ModelInvariantError(LpNumericalError):
    """A local-realist model read back from a solve breaks its invariants."""


class ScenarioInfeasible(Exception):
    """The scenario LP has no solution; ``ray`` proves it."""

    def __init__(
        self,
        message: str,
        ray: Optional[FarkasRay] = None,
        scenario: Optional["ObjectiveScenario"] = None,
    ):
        super().__init__(message)
        self.ray = ray
        self.scenario = scenario


@dataclass(frozen=True)
class ObjectiveScenario:
    """What to maximize and which observers are held at fixed detection levels.

    Attributes:
        maximize: Observers whose minimum dmin is maximized; a single observer
            means maximize that observer's dmin
        kind: "dsym" (minimum over ``maximize``) or "dmin" (one observer)
        fixed: (observer, value) pairs imposing dmin_i >= value
    """
    maximize: Tuple[str, ...]
    kind: str = "dsym"
    fixed: Tuple[Tuple[str, float], ...] = ()

    @classmethod
    def dsym(cls, observers: Sequence[str], fixed: Optional[Mapping[str, float]] = None) -> "ObjectiveScenario":
        return cls(tuple(observers), "dsym", tuple((fixed or {}).items()))

    @classmethod
    def dmin(cls, observer: str, fixed: Optional[Mapping[str, float]] = None) -> "ObjectiveScenario":
        return cls((observer,), "dmin", tuple((fixed or {}).items()))

    @classmethod
    def parse(cls, spec: ExperimentSpec, objective: str, fixes: Sequence[str] = ()) -> "ObjectiveScenario":
        """Parse "dsym", "dsym:Alice,Bob" or "dmin:Alice" plus "Observer=value" fixes.

        Plain "dsym" ranges over every observer that is not fixed.
        """
        fixed: Dict[str, float] = {}
        for item in fixes:
            name, sep, raw = item.partition("=")
            if not sep:
                raise ScenarioError(f"--fix expects Observer=value, got {item!r}")
            name = name.strip()
            if name in fixed:
                raise ScenarioError(f"observer {name} fixed twice")
            try:
                fixed[name] = float(raw)
            except ValueError:
                raise ScenarioError(f"--fix {item!r}: {raw!r} is not a number") from None
        kind, _, rest = objective.strip().partition(":")
        if kind == "dsym":
            if rest:
                subset = tuple(o.strip() for o in rest.split(","))
            else:
                subset = tuple(o for o in spec.observers if o not in fixed)
            scenario = cls(subset, "dsym", tuple(fixed.items()))
        elif kind == "dmin":
            if not rest:
                raise ScenarioError("dmin objective needs an observer: dmin:<observer>")
            scenario = cls((rest.strip(),), "dmin", tuple(fixed.items()))
        else:
            raise ScenarioError(f"objective must be dsym or dmin:<observer>, got {objective!r}")
        scenario.validate(spec)
        return scenario

    @property
    def fixed_map(self) -> Dict[str, float]:
        return dict(self.fixed)

    def validate(self, spec: ExperimentSpec) -> None:
        if self.kind not in ("dsym", "dmin"):
            raise ScenarioError(f"unknown objective kind {self.kind!r}")
        if not self.maximize:
            raise ScenarioError("objective must name at least one observer")
        if self.kind == "dmin" and len(self.maximize) != 1:
            raise ScenarioError("dmin objective takes exactly one observer")
        if len(set(self.maximize)) != len(self.maximize):
            raise ScenarioError("objective repeats an observer")
        names = [n for n, _ in self.fixed]
        if len(set(names)) != len(names):
            raise ScenarioError("an observer is fixed twice")
        for name in list(self.maximize) + names:
            if name not in spec.observers:
                raise ScenarioError(f"unknown observer {name!r}; declared {list(spec.observers)}")
        overlap = set(self.maximize) & set(names)
        if overlap:
            raise ScenarioError(f"observers both maximized and fixed: {sorted(overlap)}")
        for name, value in self.fixed:
            if not 0.0 <= value <= 1.0:
                raise ScenarioError(f"fixed dmin for {name} must lie in [0, 1], got {value}")

    @property
    def label(self) -> str:
        if self.kind == "dmin":
            head = f"dmin:{self.maximize[0]}"
        else:
            head = "dsym:" + ",".join(self.maximize)
        if self.fixed:
            head += " | " + ",".join(f"{n}={v:g}" for n, v in self.fixed)
        return head


# ---------------------------------------------------------------------------
# LP assembly


def _x_name(code: int) -> str:
    return f"x[{code}]"


def _add_coupling(lp: LinearProgram, spec: ExperimentSpec, q: TalliedFrequencies, v_cols: Dict[Setting, int]) -> None:
    for s in enumerate_settings(spec):
        codes = outcome_codes(spec, s)
        s_label = setting_label(spec, s)
        for d in enumerate_outcomes(spec, s, "tallied"):
            members = np.flatnonzero(codes == outcome_index(spec, s, d))
            lp.add_constraint(
                f"couple[{s_label}][{outcome_label(spec, s, d)}]",
                np.append(members, v_cols[s]),
                np.append(np.ones(len(members)), -q.values[s][d]),
                Relation.EQ,
                0.0,
            )


def _check_inputs(spec: ExperimentSpec, q: TalliedFrequencies, scenario: Optional[ObjectiveScenario]) -> None:
    q.validate(spec)
    if scenario is not None:
        scenario.validate(spec)


def build(spec: ExperimentSpec, q: TalliedFrequencies, scenario: ObjectiveScenario) -> LinearProgram:
    """The detection-efficiency LP for one scenario (see module docstring)."""
    _check_inputs(spec, q, scenario)
    lp = LinearProgram(f"detlp {scenario.label}")
    n_cat = spec.n_categories
    for code in range(n_cat):
        lp.add_variable(_x_name(code))

    settings = enumerate_settings(spec)
    v_cols = {s: lp.add_variable(f"v[{setting_label(spec, s)}]") for s in settings}
    pdet_cols = {
        (i, k): lp.add_variable(f"pdet[{spec.measurements[i][k]}]", 0.0, 1.0)
        for i, k in spec.positions
    }
    dmin_cols = [lp.add_variable(f"dmin[{name}]", 0.0, 1.0) for name in spec.observers]
    dsym_col = lp.add_variable("dsym", 0.0, 1.0) if scenario.kind == "dsym" else None

    lp.add_constraint("norm", np.arange(n_cat), np.ones(n_cat), Relation.EQ, 1.0)
    _add_coupling(lp, spec, q, v_cols)

    for (i, k), col in pdet_cols.items():
        members = np.flatnonzero(detect_mask(spec, i, k))
        lp.add_constraint(
            f"pdet[{spec.measurements[i][k]}]",
            np.append(col, members),
            np.append(1.0, -np.ones(len(members))),
            Relation.EQ,
            0.0,
        )
    for (i, k), col in pdet_cols.items():
        lp.add_constraint(
            f"dmin[{spec.observers[i]}][{spec.measurements[i][k]}]",
            [dmin_cols[i], col], [1.0, -1.0], Relation.LE, 0.0,
        )
    if dsym_col is not None:
        for name in scenario.maximize:
            i = spec.observer_index(name)
            lp.add_constraint(f"dsym[{name}]", [dsym_col, dmin_cols[i]], [1.0, -1.0], Relation.LE, 0.0)
        lp.set_objective({dsym_col: 1.0})
    else:
        lp.set_objective({dmin_cols[spec.observer_index(scenario.maximize[0])]: 1.0})
    for name, value in scenario.fixed:
        lp.add_constraint(f"fix[{name}]", [dmin_cols[spec.observer_index(name)]], [1.0], Relation.GE, value)

    lp.metadata.update({
        "kind": "scenario",
        "spec": spec,
        "frequencies": q,
        "scenario": scenario,
        "n_categories": n_cat,
        "v_columns": v_cols,
        "pdet_columns": pdet_cols,
        "dmin_columns": dmin_cols,
        "dsym_column": dsym_col,
    })
    return lp


def pinned_levels(
    spec: ExperimentSpec, scenario: ObjectiveScenario, efficiency: Optional[float]
) -> List[Tuple[str, float]]:
    """(observer, level) pairs pinned by a certificate program, in declared observer order."""
    levels = scenario.fixed_map
    if efficiency is not None:
        for name in scenario.maximize:
            levels[name] = efficiency
    return [(name, levels[name]) for name in spec.observers if name in levels]


def pin_rows(spec: ExperimentSpec, scenario: ObjectiveScenario, efficiency: Optional[float]) -> List[Tuple[str, int, int, float]]:
    """(row label, observer, measurement, level) for every pinned detection row."""
    rows = []
    for name, level in pinned_levels(spec, scenario, efficiency):
        i = spec.observer_index(name)
        for k in range(spec.k(i)):
            rows.append((f"pin[{name}][{spec.measurements[i][k]}]", i, k, level))
    return rows


def build_pinned(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    efficiency: Optional[float],
) -> LinearProgram:
    """Feasibility program: is there an LR model with the scenario's observers at ``efficiency``?

    Rows are ``norm``, every ``couple[s][d]`` and one ``pin[observer][measurement]``
    row Σ_{j detected} x̃_j >= level per pinned (observer, measurement). The
    maximized observers are pinned at ``efficiency`` (omitted when None) and
    fixed observers at their fixed values.
    """
    _check_inputs(spec, q, scenario)
    if efficiency is not None and not 0.0 <= efficiency <= 1.0:
        raise ScenarioError(f"pinned efficiency must lie in [0, 1], got {efficiency}")
    lp = LinearProgram(f"detlp pinned {scenario.label} @ {efficiency}")
    n_cat = spec.n_categories
    for code in range(n_cat):
        lp.add_variable(_x_name(code))
    v_cols = {s: lp.add_variable(f"v[{setting_label(spec, s)}]") for s in enumerate_settings(spec)}

    lp.add_constraint("norm", np.arange(n_cat), np.ones(n_cat), Relation.EQ, 1.0)
    _add_coupling(lp, spec, q, v_cols)
    for label, i, k, level in pin_rows(spec, scenario, efficiency):
        members = np.flatnonzero(detect_mask(spec, i, k))
        lp.add_constraint(label, members, np.ones(len(members)), Relation.GE, level)
    lp.set_objective({})
    lp.metadata.update({
        "kind": "pinned",
        "spec": spec,
        "frequencies": q,
        "scenario": scenario,
        "efficiency": efficiency,
        "n_categories": n_cat,
        "v_columns": v_cols,
    })
    return lp


# ---------------------------------------------------------------------------
# Models


@dataclass
class LrModel:
    """A local-realist model with imperfect detection.

    Attributes:
        x: Probability per category code
        v: Tally probability per setting
        q_full: q̃ recomputed from x for every outcome
        pdet: Detection probability per (observer, measurement) index pair
        dmin: min_k PDet_ik per observer
        dsym: min_i dmin_i
    """
    x: np.ndarray
    v: Dict[Setting, float]
    q_full: FullFrequencies
    pdet: Dict[Tuple[int, int], float]
    dmin: Dict[str, float]
    dsym: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x > 0.0)

    @property
    def min_v(self) -> float:
        return min(self.v.values())


def model_from_solution(
    spec: ExperimentSpec, x: np.ndarray, v: Mapping[Setting, float], clean_tol: float = 0.0
) -> LrModel:
    """Derive q̃, PDet, dmin and dsym from x̃ and v.

    Entries of x in [-clean_tol, 0) are set to 0 before anything is derived.
    """
    x = np.asarray(x, dtype=float).copy()
    if clean_tol > 0.0:
        x[(x < 0.0) & (x >= -clean_tol)] = 0.0
    q_full = {}
    for s in enumerate_settings(spec):
        size = int(np.prod([spec.z(i, k) + 1 for i, k in enumerate(s.indices)]))
        q_full[s] = np.bincount(outcome_codes(spec, s), weights=x, minlength=size)
    pdet = {(i, k): float(x[detect_mask(spec, i, k)].sum()) for i, k in spec.positions}
    dmin = {
        name: min(pdet[(i, k)] for k in range(spec.k(i)))
        for i, name in enumerate(spec.observers)
    }
    return LrModel(x, dict(v), FullFrequencies(q_full), pdet, dmin, min(dmin.values()))


def validate_model(
    model: LrModel,
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    tol: float = 1e-8,
    scenario: Optional[ObjectiveScenario] = None,
) -> List[str]:
    """Return every violated model invariant as a message (empty list when valid)."""
    problems = []
    if model.x.shape != (spec.n_categories,):
        return [f"x has shape {model.x.shape}, expected ({spec.n_categories},)"]
    total = float(model.x.sum())
    if abs(total - 1.0) > tol:
        problems.append(f"probabilities sum to {total!r}")
    if model.x.min() < -tol:
        problems.append(f"negative probability {model.x.min()!r} at category {int(model.x.argmin())}")
    for s in enumerate_settings(spec):
        v = model.v[s]
        label = setting_label(spec, s)
        if v < -tol:
            problems.append(f"v[{label}] = {v!r} is negative")
        row = model.q_full.values[s]
        if abs(float(row.sum()) - 1.0) > tol:
            problems.append(f"q̃[{label}] sums to {float(row.sum())!r}")
        for d, qsd in q.values[s].items():
            got = float(row[outcome_index(spec, s, d)])
            if abs(got - qsd * v) > tol:
                problems.append(
                    f"q̃[{label}][{outcome_label(spec, s, d)}] = {got!r} but q·v = {qsd * v!r}"
                )
    for i, name in enumerate(spec.observers):
        for k in range(spec.k(i)):
            if model.dmin[name] > model.pdet[(i, k)] + tol:
                problems.append(f"dmin[{name}] exceeds pdet[{spec.measurements[i][k]}]")
        if model.dsym > model.dmin[name] + tol:
            problems.append(f"dsym exceeds dmin[{name}]")
    if scenario is not None:
        for name, value in scenario.fixed:
            if model.dmin[name] < value - tol:
                problems.append(f"dmin[{name}] = {model.dmin[name]!r} below fixed {value!r}")
    return problems


def extract_model(
    lp: LinearProgram,
    sol: LpSolution,
    spec: ExperimentSpec,
    tol: float = 1e-8,
) -> LrModel:
    """Read the LR model back from an optimal solve of ``build`` or ``build_pinned``."""
    if sol.status != LpStatus.OPTIMAL:
        raise ModelInvariantError(f"cannot extract a model from a {sol.status.value} solve")
    n_cat = spec.n_categories
    v = {s: float(sol.x[col]) for s, col in lp.metadata["v_columns"].items()}
    model = model_from_solution(spec, sol.x[:n_cat], v, clean_tol=tol)
    problems = validate_model(model, spec, lp.metadata["frequencies"], tol, lp.metadata.get("scenario"))
    if problems:
        raise ModelInvariantError("; ".join(problems))
    return model


# ---------------------------------------------------------------------------
# Scenario solving


@dataclass
class ScenarioResult:
    """Critical efficiency of one scenario and its witnessing model.

    Attributes:
        value: f*, recomputed from the model's PDet values
        degenerate_settings: Settings with v_s below the degenerate threshold
    """
    value: float
    model: LrModel
    scenario: ObjectiveScenario
    status: LpStatus
    iterations: int
    lp_objective: float
    min_v: float
    degenerate_settings: List[str] = field(default_factory=list)


def scenario_value(model: LrModel, scenario: ObjectiveScenario) -> float:
    return min(model.dmin[name] for name in scenario.maximize)


def solve_scenario(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    tolerances: Optional[SolverTolerances] = None,
    config: Optional[ScenarioConfig] = None,
    logger: Optional[DebugLogger] = None,
) -> ScenarioResult:
    """Maximize the scenario objective over all LR models; raises ScenarioInfeasible with a ray."""
    config = config or ScenarioConfig()
    lp = build(spec, q, scenario)
    sol = solve(lp, tolerances, logger)
    if sol.status == LpStatus.INFEASIBLE:
        try:
            ray = extract_farkas(lp, sol)
        except FarkasError as e:
            if logger is not None:
                ErrorContext.log_operation_error(logger, "solve_scenario", e, {"scenario": scenario.label})
            ray = None
        raise ScenarioInfeasible(f"scenario {scenario.label} has no LR model", ray, scenario)
    if sol.status == LpStatus.UNBOUNDED:
        raise LpNumericalError(f"scenario {scenario.label} reported unbounded; the LP is bounded by construction")

    model = extract_model(lp, sol, spec, config.model_tolerance)
    value = scenario_value(model, scenario)
    degenerate = [setting_label(spec, s) for s, v in model.v.items() if v < config.degenerate_v]
    result = ScenarioResult(
        value=value,
        model=model,
        scenario=scenario,
        status=sol.status,
        iterations=sol.iterations,
        lp_objective=sol.objective,
        min_v=model.min_v,
        degenerate_settings=degenerate,
    )
    if logger is not None:
        logger.info("scenario_solved", {
            "scenario": scenario.label, "value": value, "lp_objective": sol.objective,
            "iterations": sol.iterations, "min_v": result.min_v,
        })
        if degenerate:
            logger.warning("degenerate_settings", {"scenario": scenario.label, "settings": degenerate})
    return result


def solve_lexicographic(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    order: Sequence[str],
    tolerances: Optional[SolverTolerances] = None,
    config: Optional[ScenarioConfig] = None,
    logger: Optional[DebugLogger] = None,
    fixed: Optional[Mapping[str, float]] = None,
) -> List[ScenarioResult]:
    """Maximize dmin of each observer in turn, pinning earlier ones just below their maxima."""
    if not order:
        raise ScenarioError("lexicographic order must name at least one observer")
    config = config or ScenarioConfig()
    pins: Dict[str, float] = dict(fixed or {})
    results = []
    for name in order:
        scenario = ObjectiveScenario.dmin(name, pins)
        result = solve_scenario(spec, q, scenario, tolerances, config, logger)
        results.append(result)
        pins[name] = max(0.0, result.value - config.pinning_slack)
    return results


def scenario_table(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenarios: Sequence[ObjectiveScenario],
    tolerances: Optional[SolverTolerances] = None,
    config: Optional[ScenarioConfig] = None,
    logger: Optional[DebugLogger] = None,
    jobs: int = 1,
    skip_infeasible: bool = False,
) -> List[Optional[ScenarioResult]]:
    """Solve independent scenarios, optionally on a thread pool; results keep input order.

    With skip_infeasible, an infeasible scenario yields None instead of raising.
    """
    def one(sc: ObjectiveScenario) -> Optional[ScenarioResult]:
        try:
            return solve_scenario(spec, q, sc, tolerances, config, logger)
        except ScenarioInfeasible:
            if not skip_infeasible:
                raise
            return None

    if jobs <= 1 or len(scenarios) <= 1:
        return [one(sc) for sc in scenarios]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, scenarios))


def standard_scenarios(spec: ExperimentSpec) -> List[ObjectiveScenario]:
    """All-observer dsym, then every way of fixing a proper nonempty subset at 1.

    Two observers give 3 scenarios, three observers give 7.
    """
    out = [ObjectiveScenario.dsym(spec.observers)]
    n = spec.n_observers
    for n_fixed in range(1, n):
        for fixed in itertools.combinations(spec.observers, n_fixed):
            rest = [o for o in spec.observers if o not in fixed]
            pins = {o: 1.0 for o in fixed}
            if len(rest) == 1:
                out.append(ObjectiveScenario.dmin(rest[0], pins))
            else:
                out.append(ObjectiveScenario.dsym(rest, pins))
    return out

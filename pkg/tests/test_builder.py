"""
Tests for LP assembly and scenario solving in detlp/builder.py.

Tests cover:
- Objective scenario parsing, validation and labels
- Row and column layout of scenario and pinned programs
- Critical efficiencies of the built-in quantum experiments
- Lexicographic solves and scenario tables
- LR model extraction and invariant checks
"""
import numpy as np
import pytest
from scipy.optimize import linprog

from detlp.builder import (
    ModelInvariantError,
    ObjectiveScenario,
    ScenarioError,
    ScenarioInfeasible,
    build,
    build_pinned,
    extract_model,
    model_from_solution,
    pin_rows,
    pinned_levels,
    scenario_table,
    solve_lexicographic,
    solve_scenario,
    standard_scenarios,
    validate_model,
)
from detlp.lp import INF, LpSolution, LpStatus, Relation, solve
from detlp.model import enumerate_settings
from detlp.types import ScenarioConfig, SolverTolerances
from tests.conftest import random_frequencies

TABLE_TOL = 1e-4
EXACT_TOL = 1e-6


def _highs_optimum(lp):
    A = lp.matrix().toarray()
    b = lp.rhs()
    rel = lp.relations()
    eq = [i for i, r in enumerate(rel) if r == Relation.EQ]
    le = [i for i, r in enumerate(rel) if r == Relation.LE]
    ge = [i for i, r in enumerate(rel) if r == Relation.GE]
    lo, hi = lp.bounds()
    res = linprog(
        -lp.objective_vector(),
        A_ub=np.vstack([A[le], -A[ge]]), b_ub=np.concatenate([b[le], -b[ge]]),
        A_eq=A[eq], b_eq=b[eq],
        bounds=[(l, None if h == INF else h) for l, h in zip(lo, hi)],
        method="highs",
    )
    assert res.status == 0
    return -res.fun


class TestObjectiveScenario:
    """Test scenario parsing and validation."""

    @pytest.mark.unit
    def test_parse_plain_dsym(self, ghz):
        spec, _ = ghz
        sc = ObjectiveScenario.parse(spec, "dsym")
        assert sc.maximize == ("Alice", "Bob", "Charlie")
        assert sc.kind == "dsym"

    @pytest.mark.unit
    def test_parse_dsym_skips_fixed(self, ghz):
        spec, _ = ghz
        sc = ObjectiveScenario.parse(spec, "dsym", ["Charlie=1"])
        assert sc.maximize == ("Alice", "Bob")
        assert sc.fixed_map == {"Charlie": 1.0}
        assert sc.label == "dsym:Alice,Bob | Charlie=1"

    @pytest.mark.unit
    def test_parse_dmin(self, archetype):
        sc = ObjectiveScenario.parse(archetype, " dmin:Bob ", ["Alice=0.95"])
        assert sc == ObjectiveScenario.dmin("Bob", {"Alice": 0.95})
        assert sc.label == "dmin:Bob | Alice=0.95"

    @pytest.mark.unit
    def test_parse_dsym_subset(self, ghz):
        spec, _ = ghz
        assert ObjectiveScenario.parse(spec, "dsym:Alice, Charlie").maximize == ("Alice", "Charlie")

    @pytest.mark.unit
    @pytest.mark.parametrize("objective,fixes,match", [
        ("dmin", [], "needs an observer"),
        ("max", [], "dsym or dmin"),
        ("dsym", ["Alice"], "Observer=value"),
        ("dsym", ["Alice=high"], "not a number"),
        ("dmin:Bob", ["Alice=1", "Alice=0.5"], "fixed twice"),
        ("dmin:Carol", [], "unknown observer"),
        ("dmin:Bob", ["Alice=1.5"], r"\[0, 1\]"),
        ("dsym:Alice,Bob", ["Alice=1"], "both maximized and fixed"),
        ("dsym:Alice,Alice", [], "repeats"),
        ("dsym", ["Alice=1", "Bob=1"], "at least one observer"),
    ])
    def test_parse_errors(self, archetype, objective, fixes, match):
        with pytest.raises(ScenarioError, match=match):
            ObjectiveScenario.parse(archetype, objective, fixes)

    @pytest.mark.unit
    def test_dmin_takes_one_observer(self, archetype):
        with pytest.raises(ScenarioError, match="exactly one"):
            ObjectiveScenario(("Alice", "Bob"), "dmin").validate(archetype)

    @pytest.mark.unit
    def test_standard_scenarios(self, ghz, archetype):
        spec, _ = ghz
        labels = [sc.label for sc in standard_scenarios(spec)]
        assert labels == [
            "dsym:Alice,Bob,Charlie",
            "dsym:Bob,Charlie | Alice=1",
            "dsym:Alice,Charlie | Bob=1",
            "dsym:Alice,Bob | Charlie=1",
            "dmin:Charlie | Alice=1,Bob=1",
            "dmin:Bob | Alice=1,Charlie=1",
            "dmin:Alice | Bob=1,Charlie=1",
        ]
        assert len(standard_scenarios(archetype)) == 3


class TestProgramLayout:
    """Test rows and columns of the assembled programs."""

    @pytest.mark.unit
    def test_archetype_dsym_program(self, optimized_bell):
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
        assert lp.n_variables == 81 + 4 + 4 + 2 + 1
        assert lp.n_constraints == 1 + 16 + 4 + 4 + 2
        assert lp.variables[0].name == "x[0]"
        assert lp.variables[lp.index_of("pdet[A1]")].upper == 1.0
        assert lp.index_of("v[A1,B1]") == 81
        assert lp.row_of("norm") == 0
        assert lp.constraints[lp.row_of("couple[A1,B1][U,D]")].relation == Relation.EQ
        assert lp.constraints[lp.row_of("dmin[Alice][A2]")].relation == Relation.LE
        assert lp.constraints[lp.row_of("dsym[Bob]")].relation == Relation.LE
        c = lp.objective_vector()
        assert c[lp.index_of("dsym")] == 1.0
        assert c.sum() == 1.0

    @pytest.mark.unit
    def test_coupling_row_coefficients(self, optimized_bell):
        """Each couple row holds 9 category columns and -q on its v column."""
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
        row = lp.constraints[lp.row_of("couple[A1,B2][U,U]")]
        v_col = lp.index_of("v[A1,B2]")
        assert len(row.indices) == 10
        assert row.values[list(row.indices).index(v_col)] == pytest.approx(-0.375)
        assert row.rhs == 0.0

    @pytest.mark.unit
    def test_dmin_program_with_fix(self, optimized_bell):
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dmin("Bob", {"Alice": 1.0}))
        assert "dsym" not in [v.name for v in lp.variables]
        fix = lp.constraints[lp.row_of("fix[Alice]")]
        assert fix.relation == Relation.GE
        assert fix.rhs == 1.0
        assert lp.objective_vector()[lp.index_of("dmin[Bob]")] == 1.0

    @pytest.mark.unit
    def test_mermin_and_ghz_sizes(self, mermin, ghz):
        for (spec, q), couples in ((mermin, 36), (ghz, 64)):
            lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
            assert spec.n_categories == 729
            assert sum(r.name.startswith("couple[") for r in lp.constraints) == couples

    @pytest.mark.unit
    def test_pinned_program(self, optimized_bell):
        spec, q = optimized_bell
        sc = ObjectiveScenario.dsym(spec.observers)
        lp = build_pinned(spec, q, sc, 0.95)
        assert lp.n_variables == 81 + 4
        assert lp.n_constraints == 1 + 16 + 4
        pin = lp.constraints[lp.row_of("pin[Bob][B2]")]
        assert pin.relation == Relation.GE
        assert pin.rhs == 0.95
        assert not lp.objective_vector().any()

    @pytest.mark.unit
    def test_pinned_levels_and_rows(self, ghz):
        spec, _ = ghz
        sc = ObjectiveScenario.dmin("Bob", {"Charlie": 1.0})
        assert pinned_levels(spec, sc, 0.6) == [("Bob", 0.6), ("Charlie", 1.0)]
        assert pinned_levels(spec, sc, None) == [("Charlie", 1.0)]
        assert [r[0] for r in pin_rows(spec, sc, None)] == ["pin[Charlie][C1]", "pin[Charlie][C2]"]

    @pytest.mark.unit
    def test_pinned_efficiency_range(self, optimized_bell):
        spec, q = optimized_bell
        with pytest.raises(ScenarioError, match=r"\[0, 1\]"):
            build_pinned(spec, q, ObjectiveScenario.dsym(spec.observers), 1.2)

    @pytest.mark.unit
    def test_scenario_checked_against_spec(self, optimized_bell):
        spec, q = optimized_bell
        with pytest.raises(ScenarioError):
            build(spec, q, ObjectiveScenario.dsym(("Alice", "Charlie")))


class TestCriticalEfficiencies:
    """Test computed critical efficiencies of the built-in experiments."""

    @pytest.mark.unit
    def test_optimized_bell_symmetric(self, optimized_bell):
        spec, q = optimized_bell
        result = solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers))
        assert result.status == LpStatus.OPTIMAL
        assert result.value == pytest.approx(0.9, abs=EXACT_TOL)
        assert result.value == pytest.approx(result.lp_objective, abs=1e-7)
        assert result.model.dsym == pytest.approx(result.value)

    @pytest.mark.unit
    @pytest.mark.parametrize("observer,other", [("Bob", "Alice"), ("Alice", "Bob")])
    def test_optimized_bell_asymmetric(self, optimized_bell, observer, other):
        spec, q = optimized_bell
        result = solve_scenario(spec, q, ObjectiveScenario.dmin(observer, {other: 1.0}))
        assert result.value == pytest.approx(0.8, abs=EXACT_TOL)
        assert result.model.dmin[other] >= 1.0 - 1e-8

    @pytest.mark.unit
    def test_cross_check_with_highs(self, optimized_bell):
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
        assert solve(lp).objective == pytest.approx(_highs_optimum(lp), abs=1e-7)

    @pytest.mark.unit
    def test_mermin(self, mermin):
        spec, q = mermin
        assert solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers)).value == pytest.approx(
            0.8333, abs=TABLE_TOL
        )
        assert solve_scenario(spec, q, ObjectiveScenario.dmin("Bob", {"Alice": 1.0})).value == pytest.approx(
            0.6667, abs=TABLE_TOL
        )

    @pytest.mark.unit
    def test_mermin_asymmetric_matches_highs(self, mermin):
        """A heavily degenerate program: pinned Alice leaves Bob's objective flat for many pivots."""
        spec, q = mermin
        lp = build(spec, q, ObjectiveScenario.dmin("Bob", {"Alice": 1.0}))
        sol = solve(lp, SolverTolerances(max_iterations=10000))
        assert sol.status == LpStatus.OPTIMAL
        assert sol.objective == pytest.approx(_highs_optimum(lp), abs=1e-7)

    @pytest.mark.unit
    def test_product_state_reaches_one(self, product):
        """Local data needs no loophole: every observer can detect always."""
        spec, q = product
        assert solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers)).value == pytest.approx(1.0)

    @pytest.mark.slow
    def test_ghz_standard_scenarios(self, ghz):
        spec, q = ghz
        values = [r.value for r in scenario_table(spec, q, standard_scenarios(spec))]
        assert values == pytest.approx([5 / 6, 0.75, 0.75, 0.75, 0.5, 0.5, 0.5], abs=EXACT_TOL)

    @pytest.mark.slow
    def test_ghz_degenerate_scenarios_finish(self, ghz):
        spec, q = ghz
        scenarios = [
            ObjectiveScenario.dsym(spec.observers),
            ObjectiveScenario.dsym(("Bob", "Charlie"), {"Alice": 1.0}),
            ObjectiveScenario.dmin("Alice", {"Bob": 1.0, "Charlie": 1.0}),
        ]
        tolerances = SolverTolerances(max_iterations=10000)
        values = [solve_scenario(spec, q, sc, tolerances=tolerances).value for sc in scenarios]
        assert values[0] == pytest.approx(5 / 6, abs=1e-4)
        assert values[1:] == pytest.approx([0.75, 0.5], abs=1e-6)

    @pytest.mark.unit
    @pytest.mark.mock
    def test_scenario_logging(self, optimized_bell, mock_logger):
        spec, q = optimized_bell
        solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers), logger=mock_logger)
        events = [c.args[0] for c in mock_logger.info.call_args_list]
        assert events[-1] == "scenario_solved"
        assert "lp_solved" in events

    @pytest.mark.unit
    def test_degenerate_settings_reported(self, optimized_bell):
        """A huge threshold flags every setting."""
        spec, q = optimized_bell
        result = solve_scenario(
            spec, q, ObjectiveScenario.dsym(spec.observers), config=ScenarioConfig(degenerate_v=2.0)
        )
        assert result.degenerate_settings == ["A1,B1", "A1,B2", "A2,B1", "A2,B2"]


class TestLexicographic:
    """Test lexicographic maximization."""

    @pytest.mark.unit
    def test_optimized_bell_alice_then_bob(self, optimized_bell):
        spec, q = optimized_bell
        results = solve_lexicographic(spec, q, ["Alice", "Bob"])
        assert [r.value for r in results] == pytest.approx([1.0, 0.8], abs=EXACT_TOL)
        assert results[1].scenario.fixed_map["Alice"] == pytest.approx(1.0 - 1e-9)

    @pytest.mark.unit
    def test_mermin_alice_then_bob(self, mermin):
        spec, q = mermin
        results = solve_lexicographic(spec, q, ["Alice", "Bob"])
        assert [r.value for r in results] == pytest.approx([1.0, 0.6667], abs=TABLE_TOL)

    @pytest.mark.unit
    def test_empty_order(self, optimized_bell):
        spec, q = optimized_bell
        with pytest.raises(ScenarioError):
            solve_lexicographic(spec, q, [])


class TestScenarioTable:
    """Test batches of scenarios."""

    @pytest.mark.unit
    def test_threads_keep_order(self, optimized_bell):
        spec, q = optimized_bell
        scenarios = standard_scenarios(spec)
        serial = [r.value for r in scenario_table(spec, q, scenarios)]
        threaded = [r.value for r in scenario_table(spec, q, scenarios, jobs=3)]
        assert serial == threaded

    @pytest.mark.unit
    @pytest.mark.mock
    def test_skip_infeasible(self, optimized_bell, mocker):
        spec, q = optimized_bell
        real = solve_scenario
        scenarios = standard_scenarios(spec)

        def fake(spec_, q_, sc, *args):
            if sc is scenarios[1]:
                raise ScenarioInfeasible("no model")
            return real(spec_, q_, sc, *args)

        mocker.patch("detlp.builder.solve_scenario", side_effect=fake)
        results = scenario_table(spec, q, scenarios, skip_infeasible=True)
        assert results[1] is None
        assert results[0].value == pytest.approx(0.9, abs=TABLE_TOL)
        with pytest.raises(ScenarioInfeasible):
            scenario_table(spec, q, scenarios)

    @pytest.mark.unit
    @pytest.mark.mock
    def test_infeasible_solve_without_ray(self, optimized_bell, mocker):
        spec, q = optimized_bell
        empty = LpSolution(LpStatus.INFEASIBLE, np.zeros(0), np.zeros(0), np.zeros(0), -INF, -INF, 3)
        mocker.patch("detlp.builder.solve", return_value=empty)
        with pytest.raises(ScenarioInfeasible) as info:
            solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers))
        assert info.value.ray is None
        assert info.value.scenario == ObjectiveScenario.dsym(spec.observers)


class TestModels:
    """Test LR model extraction and validation."""

    @pytest.mark.unit
    @pytest.mark.parametrize("seed", range(5))
    def test_random_frequencies_give_valid_models(self, archetype, seed):
        """Any normalized q, signaling or not, has an LR model that validates."""
        q = random_frequencies(archetype, np.random.default_rng(seed))
        result = solve_scenario(archetype, q, ObjectiveScenario.dsym(archetype.observers))
        assert validate_model(result.model, archetype, q) == []
        assert 0.0 <= result.value <= 1.0

    @pytest.mark.unit
    def test_model_derivations(self, optimized_bell):
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
        sol = solve(lp)
        model = extract_model(lp, sol, spec)
        assert model.x.sum() == pytest.approx(1.0)
        for s in enumerate_settings(spec):
            assert model.q_full.values[s].sum() == pytest.approx(1.0)
        assert model.dsym == min(model.dmin.values())
        assert model.min_v == min(model.v.values())
        assert set(model.support) == set(np.flatnonzero(model.x > 0))

    @pytest.mark.unit
    def test_clean_tol_zeroes_tiny_negatives(self, archetype):
        x = np.full(archetype.n_categories, 1.0 / archetype.n_categories)
        x[0] -= 1e-12
        x[1] = -1e-12
        v = {s: 0.25 for s in enumerate_settings(archetype)}
        assert model_from_solution(archetype, x, v, clean_tol=1e-10).x[1] == 0.0
        assert model_from_solution(archetype, x, v).x[1] == -1e-12

    @pytest.mark.unit
    def test_validate_model_reports_problems(self, optimized_bell):
        spec, q = optimized_bell
        result = solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers))
        model = result.model
        broken = model_from_solution(spec, model.x * 2.0, model.v)
        problems = validate_model(broken, spec, q)
        assert any("sum to" in p for p in problems)
        short = model_from_solution(spec, model.x, model.v)
        short.x = short.x[:10]
        assert "shape" in validate_model(short, spec, q)[0]

    @pytest.mark.unit
    def test_validate_model_checks_fixed_levels(self, optimized_bell):
        spec, q = optimized_bell
        model = solve_scenario(spec, q, ObjectiveScenario.dsym(spec.observers)).model
        problems = validate_model(model, spec, q, scenario=ObjectiveScenario.dmin("Bob", {"Alice": 1.0}))
        assert any("below fixed" in p for p in problems)

    @pytest.mark.unit
    def test_extract_needs_optimal(self, optimized_bell):
        spec, q = optimized_bell
        lp = build(spec, q, ObjectiveScenario.dsym(spec.observers))
        bad = LpSolution(LpStatus.UNBOUNDED, np.zeros(lp.n_variables), np.zeros(0), np.zeros(0), INF, INF, 0)
        with pytest.raises(ModelInvariantError, match="unbounded"):
            extract_model(lp, bad, spec)

"""LP construction, the simplex engine, evaluators, and relaxation theorems."""

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.sparse import csc_matrix

from gmclp import (
    Instance,
    Customer,
    build_lp_relaxation,
    coverage_slack,
    dominance_gap_lower_bound,
    evaluate_aggregated_relaxed_objective,
    evaluate_relaxed_objective,
    isomorphic_aggregate,
    presolve_pipeline,
    simplex_solve,
    write_lp_format,
)
from gmclp.lp import LpMode, apply_dominance_optimality_condition, extract_point
from gmclp.presolve import build_dominance_pairs, PresolveOptions

from conftest import (
    dominance_example,
    gap_example,
    random_fractional_y,
    random_instance,
    two_customer_example,
)


def lp_optimum(inst, **kwargs):
    model = build_lp_relaxation(inst, **kwargs)
    sol = simplex_solve(model)
    assert sol.status == "optimal"
    return sol.objective


class TestBuildStructure:
    def test_plain_gap_example_rows(self, ex_gap):
        model = build_lp_relaxation(ex_gap)
        tags = [r.tag for r in model.rows]
        assert tags == ["cardinality", "cover-pos"] + ["cover-neg"] * 4

    def test_dominance_example_model_shape(self, ex_dom):
        model = build_lp_relaxation(ex_dom, dominance_pairs=[(0, 1)])
        tags = [r.tag for r in model.rows]
        assert tags == ["cardinality", "cover-pos", "cover-neg", "cover-neg",
                        "cover-neg", "dominance"]

    def test_aggregated_mode_collapses_neg_rows(self, ex_gap):
        model = build_lp_relaxation(ex_gap, mode=LpMode(aggregated_neg_rows=True))
        tags = [r.tag for r in model.rows]
        assert tags == ["cardinality", "cover-pos", "cover-aggregated"]
        agg = model.rows_tagged("cover-aggregated")[0]
        # p * x_j - sum of y over the coverage set >= 0
        assert dict(agg.coeffs)[model.x_index(1)] == ex_gap.p

    def test_exactly_one_cardinality_row(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            inst = random_instance(rng)
            model = build_lp_relaxation(inst)
            assert len(model.rows_tagged("cardinality")) == 1

    def test_lp_format_export(self, tmp_path, ex_dom):
        model = build_lp_relaxation(ex_dom)
        out = tmp_path / "model.lp"
        write_lp_format(model, out)
        text = out.read_text()
        assert text.startswith("Maximize")
        assert "Subject To" in text and "Bounds" in text


class TestSimplex:
    def test_gap_example_bound(self, ex_gap):
        assert lp_optimum(ex_gap) == pytest.approx(1.0, abs=1e-9)

    def test_dominance_example_bounds(self, ex_dom):
        assert lp_optimum(ex_dom) == pytest.approx(0.5, abs=1e-9)
        assert lp_optimum(ex_dom, dominance_pairs=[(0, 1)]) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_two_customer_example_bounds(self, ex_two):
        assert lp_optimum(ex_two) == pytest.approx(0.5, abs=1e-9)
        assert lp_optimum(ex_two, two_customer_pairs=[(0, 1)]) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_deterministic_pivoting(self, ex_two):
        model = build_lp_relaxation(ex_two)
        a = simplex_solve(model)
        b = simplex_solve(model)
        assert a.iterations == b.iterations
        assert np.array_equal(a.values, b.values)

    def test_warm_start_reaches_same_optimum(self, ex_two):
        model = build_lp_relaxation(ex_two)
        cold = simplex_solve(model)
        override = {model.y_index(4): (1.0, 1.0)}
        warm = simplex_solve(model, warm_start=cold.basis, bound_overrides=override)
        fresh = simplex_solve(model, bound_overrides=override)
        assert warm.status == fresh.status == "optimal"
        assert warm.objective == pytest.approx(fresh.objective, abs=1e-8)

    def test_infeasible_detected(self):
        # fixing two facilities open with p=1 contradicts the cardinality row
        inst = Instance(3, (Customer(1, (1, 2)),), 1)
        model = build_lp_relaxation(inst)
        sol = simplex_solve(
            model,
            bound_overrides={
                model.y_index(1): (1.0, 1.0),
                model.y_index(2): (1.0, 1.0),
            },
        )
        assert sol.status == "infeasible"

    def test_matches_external_solver_on_random_lps(self):
        # independent cross-check of the engine against HiGHS
        rng = np.random.default_rng(99)
        for _ in range(25):
            inst = random_instance(rng)
            model = build_lp_relaxation(inst)
            mine = simplex_solve(model)
            A, b, lower, upper, llog, ulog = model.compile()
            n = model.n_cols
            rows_ub = []
            rhs_ub = []
            rows_eq = []
            rhs_eq = []
            dense = A.toarray()
            for k, row in enumerate(model.rows):
                if row.rel == ">=":
                    rows_ub.append(-dense[k])
                    rhs_ub.append(-row.rhs)
                elif row.rel == "<=":
                    rows_ub.append(dense[k])
                    rhs_ub.append(row.rhs)
                else:
                    rows_eq.append(dense[k])
                    rhs_eq.append(row.rhs)
            ref = linprog(
                c=-np.array(model.objective),
                A_ub=np.array(rows_ub) if rows_ub else None,
                b_ub=np.array(rhs_ub) if rhs_ub else None,
                A_eq=np.array(rows_eq) if rows_eq else None,
                b_eq=np.array(rhs_eq) if rhs_eq else None,
                bounds=list(zip(lower, upper)),
                method="highs",
            )
            assert ref.status == 0
            assert mine.status == "optimal"
            assert mine.objective == pytest.approx(-ref.fun, abs=1e-7)

    def test_sampled_points_never_beat_the_optimum(self):
        rng = np.random.default_rng(55)
        for _ in range(10):
            inst = random_instance(rng)
            best = lp_optimum(inst)
            for _ in range(20):
                y = random_fractional_y(rng, inst.facility_count, inst.p)
                assert evaluate_relaxed_objective(inst, y) <= best + 1e-6


class TestEvaluators:
    def test_gap_example_uniform_point(self, ex_gap):
        y = [0.25] * 4
        assert evaluate_relaxed_objective(ex_gap, y) == pytest.approx(1.0)

    def test_integral_point_matches_integer_objective(self, ex_two):
        from gmclp import evaluate_integer_objective

        y = (0, 0, 0, 1)
        assert evaluate_relaxed_objective(ex_two, y) == evaluate_integer_objective(
            ex_two, y
        )

    def test_dominance_example_half_point(self, ex_dom):
        assert evaluate_relaxed_objective(ex_dom, (0.5, 0.5, 0.0)) == pytest.approx(0.5)

    def test_rejects_bad_points(self, ex_gap):
        with pytest.raises(ValueError):
            evaluate_relaxed_objective(ex_gap, (2.0, -1.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            evaluate_relaxed_objective(ex_gap, (0.5, 0.5, 0.0, 0.5))

    def test_coverage_slack_values(self, ex_gap):
        y = [0.25] * 4
        assert coverage_slack(ex_gap, 0, y) == pytest.approx(0.75)
        assert coverage_slack(ex_gap, 0, (1, 0, 0, 0)) == 0
        inst = Instance(3, (Customer(1, (2,)),), 1)
        for y in ((1, 0, 0), (0.3, 0.5, 0.2)):
            assert coverage_slack(inst, 0, y) == 0

    def test_empty_coverage_slack_is_zero(self):
        inst = Instance(2, (Customer(1, ()),), 1)
        assert coverage_slack(inst, 0, (0.5, 0.5)) == 0

    def test_aggregated_evaluator_on_merged_example(self, ex_gap):
        _, aggmap = isomorphic_aggregate(ex_gap)
        y = [0.25] * 4
        assert evaluate_aggregated_relaxed_objective(aggmap, y) == pytest.approx(0.25)


class TestAggregationIdentity:
    def test_identity_on_random_points(self):
        # exact decomposition of the bound tightening into weighted slacks
        rng = np.random.default_rng(21)
        for _ in range(30):
            inst = random_instance(rng)
            reduced, aggmap = isomorphic_aggregate(inst)
            for _ in range(10):
                y = random_fractional_y(rng, inst.facility_count, inst.p)
                z = evaluate_relaxed_objective(inst, y)
                z_agg = evaluate_aggregated_relaxed_objective(aggmap, y)
                expected = 0.0
                for k, w in enumerate(aggmap.merged_weights):
                    slack = coverage_slack(reduced, k, y)
                    if w < 0:
                        expected += abs(float(aggmap.pos_mass[k])) * slack
                    else:
                        expected += abs(float(aggmap.neg_mass[k])) * slack
                assert z - z_agg == pytest.approx(expected, abs=1e-9)
                assert z - z_agg >= -1e-9

    def test_single_sign_instances_bound_unchanged(self):
        rng = np.random.default_rng(33)
        for sign in ("nonneg", "negative"):
            for _ in range(8):
                inst = random_instance(rng, sign=sign)
                reduced, _ = isomorphic_aggregate(inst)
                assert lp_optimum(inst) == pytest.approx(
                    lp_optimum(reduced), abs=1e-6
                )


class TestDominanceTheorems:
    def test_full_pair_rows_equal_cross_pair_rows(self):
        # adding rows for every nested pair changes nothing beyond the
        # nonnegative-to-negative ones
        rng = np.random.default_rng(61)
        checked = 0
        for _ in range(40):
            inst = random_instance(rng)
            reduced, _ = isomorphic_aggregate(inst)
            ds = build_dominance_pairs(reduced)
            if not ds.all_pairs:
                continue
            checked += 1
            full = lp_optimum(reduced, dominance_pairs=sorted(ds.all_pairs))
            cross = lp_optimum(reduced, dominance_pairs=sorted(ds.cross_pairs))
            assert full == pytest.approx(cross, abs=1e-6)
        assert checked >= 10

    def test_dominance_rows_never_raise_the_bound(self):
        rng = np.random.default_rng(63)
        for _ in range(15):
            inst = random_instance(rng)
            reduced, _ = isomorphic_aggregate(inst)
            ds = build_dominance_pairs(reduced)
            plain = lp_optimum(reduced)
            with_rows = lp_optimum(reduced, dominance_pairs=sorted(ds.cross_pairs))
            assert with_rows <= plain + 1e-6

    def test_constraint_reduction_keeps_lp_value(self):
        # removals plus their paired rows leave the cross-pair bound intact
        rng = np.random.default_rng(67)
        checked = 0
        for _ in range(40):
            inst = random_instance(rng)
            reduced, artifacts, _ = presolve_pipeline(
                inst, PresolveOptions(strengthen_nested=False, substitute_singletons=False)
            )
            ds = artifacts.dominance
            if not ds.selected_negative_pairs:
                continue
            checked += 1
            base = lp_optimum(reduced, dominance_pairs=sorted(ds.cross_pairs))
            reduced_lp = build_lp_relaxation(
                reduced,
                artifacts,
                LpMode(dominance_rows=True, apply_substitutions=False,
                       apply_strengthening=False),
            )
            got = simplex_solve(reduced_lp)
            assert got.status == "optimal"
            assert got.objective == pytest.approx(base, abs=1e-6)
        assert checked >= 8

    def test_gap_bound_at_reported_point(self, ex_dom):
        # the dominance-augmented relaxation admits the symmetric point
        # x = (1/3, 1/3), y = (1/3, 1/3, 1/3); the guaranteed improvement
        # evaluates to exactly 1/3 there
        x = (1 / 3, 1 / 3)
        y = (1 / 3, 1 / 3, 1 / 3)
        bound = dominance_gap_lower_bound(ex_dom, [(0, 1)], x, y)
        assert bound == pytest.approx(1 / 3, abs=1e-9)

    def test_gap_bound_zero_without_pairs(self, ex_two):
        sol = simplex_solve(build_lp_relaxation(ex_two))
        x, y = extract_point(build_lp_relaxation(ex_two), sol, ex_two)
        assert dominance_gap_lower_bound(ex_two, [], x, y) == 0.0

    def test_gap_bound_nonnegative_and_zero_on_integral(self):
        rng = np.random.default_rng(71)
        integral_seen = 0
        for _ in range(40):
            inst = random_instance(rng)
            reduced, _ = isomorphic_aggregate(inst)
            ds = build_dominance_pairs(reduced)
            model = build_lp_relaxation(
                reduced, dominance_pairs=sorted(ds.cross_pairs)
            )
            sol = simplex_solve(model)
            assert sol.status == "optimal"
            x, y = extract_point(model, sol, reduced)
            x_fixed = apply_dominance_optimality_condition(
                reduced, ds.cross_pairs, x, y
            )
            bound = dominance_gap_lower_bound(reduced, ds.cross_pairs, x_fixed, y)
            assert bound >= -1e-9
            plain = lp_optimum(reduced)
            assert plain - sol.objective >= bound - 1e-6
            if np.all(np.minimum(y, 1 - y) < 1e-9):
                integral_seen += 1
                assert bound == pytest.approx(0.0, abs=1e-9)
        assert integral_seen >= 3

    def test_optimality_condition_preserves_value_and_feasibility(self):
        rng = np.random.default_rng(73)
        for _ in range(25):
            inst = random_instance(rng)
            reduced, _ = isomorphic_aggregate(inst)
            ds = build_dominance_pairs(reduced)
            model = build_lp_relaxation(
                reduced, dominance_pairs=sorted(ds.cross_pairs)
            )
            sol = simplex_solve(model)
            x, y = extract_point(model, sol, reduced)
            x_new = apply_dominance_optimality_condition(
                reduced, ds.cross_pairs, x, y
            )
            value = sum(
                float(c.weight) * x_new[j] for j, c in enumerate(reduced.customers)
            )
            assert value == pytest.approx(sol.objective, abs=1e-7)
            for j, r in ds.cross_pairs:
                assert x_new[j] <= x_new[r] + 1e-9


class TestModeMonotonicity:
    def test_disaggregated_at_least_as_tight_as_aggregated(self):
        # the ordering is guaranteed once p reaches the largest coverage set:
        # p * x_j >= |coverage| * x_j >= sum of y over the coverage set, so
        # every point feasible for the per-facility rows satisfies the
        # aggregated row (for small p the aggregated row can be tighter)
        rng = np.random.default_rng(81)
        for _ in range(15):
            inst = random_instance(rng)
            max_cov = max((len(c.coverage) for c in inst.customers), default=1)
            if max_cov > inst.facility_count - 1:
                continue
            inst = Instance(inst.facility_count, inst.customers, max(inst.p, max_cov))
            disagg = lp_optimum(inst)
            agg = lp_optimum(inst, mode=LpMode(aggregated_neg_rows=True))
            assert disagg <= agg + 1e-6

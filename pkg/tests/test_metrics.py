"""Graph encodings, edit distance solvers and the closed-form measures."""

import random

import pytest

from policylab import experiments, hfsm, metrics
from policylab.core import ValidationError
from policylab.metrics import (
    GedCostModel,
    PolicyGraph,
    apply_script,
    brute_force_ged,
    cyclomatic,
    effort,
    effort_m,
    formula_estimates,
    fully_connected_elements,
    ged_anchored,
    ged_exact,
    ged_hfsm_formula,
    isomorphic,
)


def random_graph(rng, max_vertices=7):
    n = rng.randint(2, max_vertices)
    vertices = {i: rng.choice("abc") for i in range(n)}
    edges = set()
    for _ in range(rng.randint(0, 2 * n)):
        edges.add((rng.randrange(n), rng.randrange(n), rng.choice("xy")))
    return PolicyGraph(vertices=vertices, edges=edges)


def path_graph(n):
    return PolicyGraph(
        vertices={i: "v" for i in range(n)},
        edges={(i, i + 1, "e") for i in range(n - 1)},
    )


class TestEncoders:
    def test_tree_graph_counts(self, fetch_tree):
        graph = metrics.bt_to_graph(fetch_tree)
        assert (graph.order(), graph.size()) == (14, 13)
        assert graph.kind == "bt"
        assert len(graph.sinks) == 8  # leaves: four conditions, four actions

    def test_machine_graph_counts(self, fetch_machine):
        graph = metrics.fsm_to_graph(fetch_machine)
        assert (graph.order(), graph.size()) == (6, 18)
        assert graph.sinks == frozenset(fetch_machine.outcome_ids())

    def test_sequential_machine_graph(self):
        graph = metrics.fsm_to_graph(experiments.fetch_fsm_sequential())
        assert (graph.order(), graph.size()) == (5, 4)

    def test_nested_machine_graphs(self):
        cases = {
            experiments.fetch_bt: (17, 44),
            lambda: experiments.bt_with_tuck(experiments.fetch_bt()): (20, 53),
            lambda: experiments.bt_with_safe_move(experiments.fetch_bt()): (18, 47),
            lambda: experiments.bt_with_dock(experiments.fetch_bt()): (21, 57),
            lambda: experiments.bt_with_recharge(experiments.fetch_bt()): (21, 57),
        }
        for builder, expected in cases.items():
            graph = metrics.hfsm_to_graph(hfsm.from_bt(builder()))
            assert (graph.order(), graph.size()) == expected

    def test_single_vertex_graph(self):
        graph = PolicyGraph(vertices={0: "x"}, edges=set())
        assert (graph.order(), graph.size()) == (1, 0)

    def test_edges_must_reference_vertices(self):
        with pytest.raises(ValidationError, match="missing vertex"):
            PolicyGraph(vertices={0: "x"}, edges={(0, 1, "e")})


class TestExactDistance:
    def test_identity_is_zero(self, fetch_tree):
        graph = metrics.bt_to_graph(fetch_tree)
        result = ged_exact(graph, graph)
        assert result.distance == 0 and result.complete

    def test_forced_path_extension(self):
        result = ged_exact(path_graph(3), path_graph(4))
        assert result.distance == 2  # one vertex plus one edge

    def test_symmetry_on_sampled_pairs(self):
        rng = random.Random(7)
        for _ in range(25):
            g1, g2 = random_graph(rng), random_graph(rng)
            assert ged_exact(g1, g2).distance == ged_exact(g2, g1).distance

    def test_lower_bound_respected(self):
        rng = random.Random(11)
        for _ in range(25):
            g1, g2 = random_graph(rng), random_graph(rng)
            bound = abs(g1.order() - g2.order()) + abs(g1.size() - g2.size())
            assert ged_exact(g1, g2).distance >= bound

    def test_oracle_agreement(self):
        rng = random.Random(13)
        for _ in range(60):
            g1, g2 = random_graph(rng, max_vertices=6), random_graph(rng, max_vertices=6)
            assert ged_exact(g1, g2).distance == brute_force_ged(g1, g2)

    def test_scripts_reproduce_the_target(self):
        rng = random.Random(17)
        for _ in range(40):
            g1, g2 = random_graph(rng), random_graph(rng)
            result = ged_exact(g1, g2)
            assert isomorphic(apply_script(g1, result.script), g2)

    def test_budget_exhaustion_is_flagged_not_wrong(self, fetch_tree):
        g1 = metrics.bt_to_graph(fetch_tree)
        g2 = metrics.bt_to_graph(experiments.bt_with_tuck(experiments.fetch_bt()))
        result = ged_exact(g1, g2, budget=0.0)
        assert not result.complete
        assert result.distance >= 6  # an upper bound on the true distance

    def test_label_sensitive_model_charges_substitutions(self):
        g1 = PolicyGraph(vertices={0: "a"}, edges=set())
        g2 = PolicyGraph(vertices={0: "b"}, edges=set())
        assert ged_exact(g1, g2).distance == 0
        assert ged_exact(g1, g2, cost=metrics.LABEL_SENSITIVE).distance == 1

    def test_negative_costs_rejected(self):
        with pytest.raises(ValidationError):
            GedCostModel(node_insert=-1)


class TestAnchoredDistance:
    def test_identity_graphs(self, fetch_tree):
        graph = metrics.bt_to_graph(fetch_tree)
        assert ged_anchored(graph, graph).distance == 0

    def test_upper_bounds_exact_on_the_fixture_pairs(self, fetch_tree):
        base = metrics.bt_to_graph(fetch_tree)
        for recipe in (experiments.bt_with_tuck, experiments.bt_with_safe_move,
                       experiments.bt_with_dock, experiments.bt_with_recharge):
            other = metrics.bt_to_graph(recipe(experiments.fetch_bt()))
            anchored = ged_anchored(base, other).distance
            exact = ged_exact(base, other).distance
            assert anchored >= exact

    def test_scalability_distances(self):
        bt_pair = (metrics.bt_to_graph(experiments.scalability_bt()),
                   metrics.bt_to_graph(experiments.scalability_bt_with_recharge()))
        fsm_pair = (metrics.fsm_to_graph(experiments.scalability_fsm()),
                    metrics.fsm_to_graph(experiments.scalability_fsm_with_recharge()))
        assert ged_anchored(*bt_pair).distance == 6
        assert ged_anchored(*fsm_pair).distance == 26

    def test_non_injective_anchor_rejected(self):
        g = path_graph(3)
        with pytest.raises(ValidationError, match="two ids"):
            ged_anchored(g, g, anchor={0: 1, 1: 1, 2: 2})

    def test_anchored_script_applies(self, fetch_tree):
        base = metrics.bt_to_graph(fetch_tree)
        other = metrics.bt_to_graph(experiments.bt_with_recharge(experiments.fetch_bt()))
        result = ged_anchored(base, other)
        assert isomorphic(apply_script(base, result.script), other)
        assert result.script.n_star == 4


def test_brute_force_size_limit():
    with pytest.raises(ValidationError, match="limited"):
        brute_force_ged(path_graph(8), path_graph(3))


class TestScalarMetrics:
    def test_cyclomatic_of_machines(self, fetch_machine):
        assert cyclomatic(metrics.fsm_to_graph(fetch_machine)) == 14
        recharge = experiments.fsm_with_recharge(experiments.fetch_fsm())
        assert cyclomatic(metrics.fsm_to_graph(recharge)) == 20

    def test_every_tree_scores_one(self):
        for builder in (experiments.fetch_bt, experiments.scalability_bt,
                        experiments.development_bt, experiments.compact_fetch_bt):
            assert cyclomatic(metrics.bt_to_graph(builder())) == 1

    def test_effort_examples(self):
        assert effort(4, 0) == 15
        assert effort(0, 0) == 3
        assert effort(4, 1) == effort_m(5, 1) == 22

    def test_effort_forms_agree_on_a_grid(self):
        for sequential in range(21):
            for connected in range(21):
                assert effort(sequential, connected) == \
                    effort_m(sequential + connected, connected)

    def test_hfsm_distance_formula(self):
        assert ged_hfsm_formula(1, 1, 1) == 12
        assert ged_hfsm_formula(0, 0, 0) == 0
        assert ged_hfsm_formula(1, 1, 2) == 17
        with pytest.raises(ValidationError):
            ged_hfsm_formula(-1, 0, 0)

    def test_formula_estimates_match_the_built_baselines(self, fetch_tree, fetch_machine):
        from policylab import bt as bt_mod, fsm as fsm_mod
        tree_estimate = formula_estimates("bt", 4)
        tree_counts = bt_mod.count_elements(fetch_tree)
        assert tree_estimate["graphical"] == tree_counts["graphical"] == 27
        assert tree_estimate["active"] == tree_counts["active"] == 14

        machine_estimate = formula_estimates("fsm", 4)
        machine_counts = fsm_mod.count_elements(fetch_machine)
        assert machine_estimate["graphical"] == machine_counts["graphical"] == 24

    def test_machine_estimate_is_approximate_within_one(self):
        from policylab import fsm as fsm_mod
        machine = experiments.fsm_with_recharge(experiments.fetch_fsm())
        actual = fsm_mod.count_elements(machine)["graphical"]
        estimate = formula_estimates("fsm", 5, 1)["graphical"]
        assert estimate == 33 and actual == 32
        assert abs(estimate - actual) <= 1

    def test_fully_connected_alternative(self):
        assert fully_connected_elements(5) == 20
        assert formula_estimates("hfsm", 4) == {"graphical": 141, "active": 113}

    def test_structure_counts_consistency(self):
        counts = metrics.StructureCounts(actions=5, connected=1)
        assert counts.t_fc == 4
        assert counts.s == 5 * 5 + 4 + 4
        with pytest.raises(ValidationError):
            metrics.StructureCounts(actions=1, connected=2)

"""Backtracking leaf search against an exhaustive oracle.

Trees here are generated directly with random structure rather than trained,
so the search is exercised on shapes (skewed, deep, tiny) that training would
rarely produce. The oracle scans every leaf and takes the minimum descriptor
distance; a search allowed to visit every leaf must reproduce it exactly.
"""

import numpy as np
import pytest

from relocforest.config import ForestConfig
from relocforest.errors import InvalidInputError
from relocforest.features import descriptor_distance
from relocforest.forest.batch import flatten_tree, predict_batch
from relocforest.forest.samples import TrainingSample
from relocforest.forest.tree import (
    LeafNode,
    RegressionTree,
    SplitNode,
    WeakLearnerParams,
    predict_backtracking,
    predict_greedy,
)
from relocforest.modes import ForestMode

DIM = 64


def random_tree(rng, leaf_count, dim=DIM):
    """Random split structure with the requested number of leaves."""

    def grow(leaves, depth):
        if leaves == 1:
            return LeafNode(
                mean_position=rng.normal(scale=3.0, size=3),
                mean_descriptor=rng.normal(size=dim),
                sample_count=int(rng.integers(1, 50)),
            )
        left = int(rng.integers(1, leaves))
        params = WeakLearnerParams(tau=float(rng.normal()),
                                   dim=int(rng.integers(0, dim)))
        return SplitNode(
            params=params,
            left=grow(left, depth + 1),
            right=grow(leaves - left, depth + 1),
            depth=depth,
            objective_id=0,
        )

    return RegressionTree(root=grow(leaf_count, 0),
                          mode=ForestMode.OUTDOOR_RGB,
                          config=ForestConfig())


def oracle_best(tree, descriptor):
    leaves = tree.leaves()
    distances = [descriptor_distance(descriptor, leaf.mean_descriptor)
                 for leaf in leaves]
    best = int(np.argmin(distances))
    return distances[best], leaves[best].mean_position


class TestOracleEquivalence:
    def test_full_budget_matches_exhaustive_scan(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            leaf_count = int(rng.integers(2, 80))
            tree = random_tree(rng, leaf_count)
            for _ in range(5):
                query = TrainingSample(pixel=np.zeros(2),
                                       descriptor=rng.normal(size=DIM))
                expected_distance, expected_point = oracle_best(
                    tree, query.descriptor)
                result = predict_backtracking(tree, query, leaf_count)
                assert result.descriptor_distance == expected_distance
                np.testing.assert_array_equal(result.world_point,
                                              expected_point)
                assert result.leaves_examined == leaf_count

    def test_budget_beyond_leaf_count_is_harmless(self):
        rng = np.random.default_rng(8)
        tree = random_tree(rng, 12)
        query = TrainingSample(pixel=np.zeros(2),
                               descriptor=rng.normal(size=DIM))
        expected_distance, _ = oracle_best(tree, query.descriptor)
        result = predict_backtracking(tree, query, 10_000)
        assert result.descriptor_distance == expected_distance
        assert result.leaves_examined == 12

    def test_distance_never_increases_with_budget(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            tree = random_tree(rng, 40)
            query = TrainingSample(pixel=np.zeros(2),
                                   descriptor=rng.normal(size=DIM))
            previous = np.inf
            for n_max in (1, 2, 4, 8, 16, 32, 40):
                result = predict_backtracking(tree, query, n_max)
                assert result.descriptor_distance <= previous
                assert result.leaves_examined == min(n_max, 40)
                previous = result.descriptor_distance

    def test_single_leaf_budget_equals_greedy_descent(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            tree = random_tree(rng, 25)
            query = TrainingSample(pixel=np.zeros(2),
                                   descriptor=rng.normal(size=DIM))
            greedy = predict_greedy(tree, query)
            budget_one = predict_backtracking(tree, query, 1)
            assert greedy.descriptor_distance == budget_one.descriptor_distance
            np.testing.assert_array_equal(greedy.world_point,
                                          budget_one.world_point)
            assert greedy.leaves_examined == budget_one.leaves_examined == 1

    def test_zero_budget_rejected(self):
        tree = random_tree(np.random.default_rng(0), 4)
        query = TrainingSample(pixel=np.zeros(2), descriptor=np.zeros(DIM))
        with pytest.raises(InvalidInputError):
            predict_backtracking(tree, query, 0)


def leaf(position, distance_to_origin_query):
    """Leaf whose descriptor distance to the all-zeros query is given."""
    descriptor = np.zeros(DIM)
    descriptor[3] = distance_to_origin_query
    return LeafNode(mean_position=np.asarray(position, dtype=np.float64),
                    mean_descriptor=descriptor, sample_count=1)


class TestTieOrdering:
    def tie_tree(self):
        """Every pending sibling carries priority key 0 for the zero query.

        Visit order then depends purely on queue discipline: siblings must
        pop in the order they were inserted (root sibling before the deeper
        one), giving the sequence A, C, B, D for the leaves below.
        """
        leaf_a = leaf((1.0, 0.0, 0.0), 3.0)
        leaf_b = leaf((2.0, 0.0, 0.0), 1.0)
        leaf_c = leaf((3.0, 0.0, 0.0), 2.0)
        leaf_d = leaf((4.0, 0.0, 0.0), 0.5)
        left = SplitNode(params=WeakLearnerParams(tau=0.0, dim=1),
                         left=leaf_a, right=leaf_b, depth=1, objective_id=1)
        right = SplitNode(params=WeakLearnerParams(tau=0.0, dim=2),
                          left=leaf_c, right=leaf_d, depth=1, objective_id=1)
        root = SplitNode(params=WeakLearnerParams(tau=0.0, dim=0),
                         left=left, right=right, depth=0, objective_id=0)
        return RegressionTree(root=root, mode=ForestMode.OUTDOOR_RGB,
                              config=ForestConfig())

    def test_equal_keys_pop_in_insertion_order(self):
        tree = self.tie_tree()
        query = TrainingSample(pixel=np.zeros(2), descriptor=np.zeros(DIM))
        # budgets 1..4 reveal the visit sequence through the best-so-far
        # point; a stack or reversed queue would visit B before C and give
        # x = 2.0 at budget 2
        expected_x = [1.0, 3.0, 2.0, 4.0]
        for n_max, x in zip(range(1, 5), expected_x):
            result = predict_backtracking(tree, query, n_max)
            assert result.world_point[0] == x, f"budget {n_max}"

    def test_batch_search_follows_the_same_tie_order(self):
        tree = self.tie_tree()
        flat = flatten_tree(tree)
        query = np.zeros((1, DIM))
        expected_x = [1.0, 3.0, 2.0, 4.0]
        for n_max, x in zip(range(1, 5), expected_x):
            world, _, examined = predict_batch(flat, query, n_max)
            assert world[0, 0] == x
            assert examined[0] == n_max

    def test_equal_distances_keep_first_visited_leaf(self):
        first = leaf((1.0, 0.0, 0.0), 2.0)
        second = leaf((9.0, 0.0, 0.0), 2.0)
        root = SplitNode(params=WeakLearnerParams(tau=0.0, dim=0),
                         left=first, right=second, depth=0, objective_id=0)
        tree = RegressionTree(root=root, mode=ForestMode.OUTDOOR_RGB,
                              config=ForestConfig())
        query = TrainingSample(pixel=np.zeros(2), descriptor=np.zeros(DIM))
        result = predict_backtracking(tree, query, 2)
        assert result.world_point[0] == 1.0
        assert result.leaves_examined == 2


class TestScalarBatchLockstep:
    def test_generated_trees_outdoor(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            tree = random_tree(rng, int(rng.integers(3, 60)))
            flat = flatten_tree(tree)
            queries = rng.normal(size=(20, DIM))
            for n_max in (1, 3, 9):
                world, distances, examined = predict_batch(flat, queries, n_max)
                for i in range(queries.shape[0]):
                    scalar = predict_backtracking(
                        tree,
                        TrainingSample(pixel=np.zeros(2),
                                       descriptor=queries[i]),
                        n_max,
                    )
                    np.testing.assert_array_equal(world[i],
                                                  scalar.world_point)
                    assert distances[i] == scalar.descriptor_distance
                    assert examined[i] == scalar.leaves_examined

    def test_trained_tree_indoor(self):
        from relocforest.forest.tree import build_tree
        from test_tree_build import make_indoor_set

        samples = make_indoor_set(n=220, seed=3)
        config = ForestConfig(max_depth=8, balanced_depth_limit=3,
                              candidates_per_node=12,
                              thresholds_per_candidate=6)
        tree = build_tree(samples, config, np.random.default_rng(4))
        flat = flatten_tree(tree)
        sub = np.arange(0, 220, 7)
        for n_max in (1, 4, 16):
            world, distances, examined = predict_batch(
                flat, samples.descriptors[sub], n_max,
                frames_rgb=samples.frames_rgb,
                frame_idx=samples.frame_idx[sub],
                us=samples.us[sub], vs=samples.vs[sub],
                depth_at=samples.depth_at[sub],
            )
            for row, i in enumerate(sub):
                scalar = predict_backtracking(tree, samples.sample(int(i)),
                                              n_max)
                np.testing.assert_array_equal(world[row], scalar.world_point)
                assert distances[row] == scalar.descriptor_distance
                assert examined[row] == scalar.leaves_examined

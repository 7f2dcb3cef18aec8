import numpy as np
import pytest

from lib.errors import ConfigurationError, EmptyInputError
from lib.gcn import LevelState, ViewSelector
from lib.sampling import furthest_point_sampling, neighborhood, pick_most_confident, selective_view_sample
from lib.tensor import Tensor
from lib.viewpoints import cube_viewpoints
from lib.ViewGraph import knn_indices


def greedy_oracle(coords, m, seed_index):
    """Exhaustive max-min selection with lowest-index ties."""
    d = np.round(np.linalg.norm(coords[:, None] - coords[None], axis=-1), 9)
    chosen = [seed_index]
    while len(chosen) < m:
        best, best_distance = None, -1.0
        for candidate in range(len(coords)):
            if candidate in chosen:
                continue
            distance = min(d[candidate, c] for c in chosen)
            if distance > best_distance:
                best, best_distance = candidate, distance
        chosen.append(best)
    return chosen


def test_cube_two_samples_are_opposite_corners():
    assert furthest_point_sampling(cube_viewpoints(), 2, 0) == [0, 7]


def test_cube_four_samples():
    assert furthest_point_sampling(cube_viewpoints(), 4, 0) == [0, 7, 1, 2]


def test_all_samples():
    assert sorted(furthest_point_sampling(cube_viewpoints(), 8, 3)) == list(range(8))


@pytest.mark.parametrize("n", range(1, 11))
def test_matches_greedy_oracle(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        coords = rng.normal(size=(n, 3))
        m = int(rng.integers(1, n + 1))
        seed_index = int(rng.integers(n))
        assert furthest_point_sampling(coords, m, seed_index) == greedy_oracle(coords, m, seed_index)


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 13))
def test_matches_greedy_oracle_exhaustively(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(200):
        coords = rng.normal(size=(n, 3))
        for m in range(1, n + 1):
            for seed_index in range(n):
                expected = greedy_oracle(coords, m, seed_index)
                assert furthest_point_sampling(coords, m, seed_index) == expected, (m, seed_index)


@pytest.mark.parametrize("m, seed_index", [(9, 0), (0, 0), (2, 8)])
def test_out_of_range(m, seed_index):
    with pytest.raises(ConfigurationError):
        furthest_point_sampling(cube_viewpoints(), m, seed_index)


def test_neighborhood_includes_center_sorted():
    assert neighborhood(cube_viewpoints(), 7, 3) == [3, 5, 6, 7]
    assert neighborhood(np.zeros((1, 3)), 0, 0) == [0]


def test_pick_most_confident():
    assert pick_most_confident(np.array([0.9, 0.4]), [3, 5]) == 3
    assert pick_most_confident(np.array([0.25, 0.25, 0.25]), [2, 4, 6]) == 2
    with pytest.raises(EmptyInputError):
        pick_most_confident(np.array([]), [])


def test_selection_matches_brute_force(rng):
    coords = cube_viewpoints()
    features = Tensor(rng.normal(size=(8, 16)))
    selectors = [ViewSelector(16, 8, 5, rng) for _ in range(4)]
    centres = furthest_point_sampling(coords, 4, 0)
    state = LevelState(0, features, coords, Tensor(np.eye(8)))

    selection = selective_view_sample(state, centres, selectors, 3)

    nearest = knn_indices(coords, 3)
    for slot, (center, selector) in enumerate(zip(centres, selectors)):
        best, best_score = None, -1.0
        for q in sorted([center, *nearest[center].tolist()]):
            logits = selector(features[[q]]).data[0].astype(np.float64)
            score = np.max(np.exp(logits - logits.max()) / np.exp(logits - logits.max()).sum())
            if score > best_score:
                best, best_score = q, score
        assert selection.indices[slot] == best
        assert selection.neighborhoods[slot] == sorted([center, *nearest[center].tolist()])
    np.testing.assert_array_equal(selection.coords, coords[selection.indices])
    assert sum(len(logits) for logits in selection.selector_logits) == 16


def test_equal_probabilities_select_lowest_index(rng):
    coords = cube_viewpoints()
    selector = ViewSelector(4, 4, 3, rng)
    selector.out.weight.data[...] = 0.0
    state = LevelState(0, Tensor(rng.normal(size=(8, 4))), coords, Tensor(np.eye(8)))
    selection = selective_view_sample(state, [7], [selector], 3)
    assert selection.indices == [3]

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiermarket.hierarchy import (
    HierarchyParams,
    HierarchyTree,
    backward_pass,
    children,
    counts,
    forward_pass,
    leaf_vectors,
    local_opinion,
    parent,
)
from hiermarket.roles import TraderRole

from oracles import build_nested, level_order_states, recursive_backward, recursive_forward

O, P, F = (int(r) for r in TraderRole)


def tree_with(roles, L, k, **kw):
    params = HierarchyParams(L=L, k=k, **kw)
    return HierarchyTree.build(params, np.array(roles, dtype=np.int8)), params


@pytest.mark.parametrize("L, k, expected", [(5, 5, (625, 156)), (2, 2, (2, 1)), (3, 2, (4, 3)), (4, 3, (27, 13))])
def test_counts(L, k, expected):
    assert counts(HierarchyParams(L=L, k=k)) == expected


@given(st.integers(2, 7), st.integers(2, 7))
def test_count_identity(L, k):
    n_t, n_c = counts(HierarchyParams(L=L, k=k))
    assert n_t + n_c == sum(k**level for level in range(L))
    assert n_t == k ** (L - 1)


def test_counts_rejects_huge_trees():
    with pytest.raises(OverflowError):
        counts(HierarchyParams(L=40, k=10))


@pytest.mark.parametrize("bad", [dict(L=1), dict(k=1), dict(L=2.5), dict(phi=-0.1), dict(b=float("nan"))])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        HierarchyParams(**bad)


def test_parent_child_arithmetic():
    k = 3
    for i in range(1, 40):
        assert i in children(parent(i, k), k)
    with pytest.raises(ValueError):
        parent(0, k)


def test_level_slices_partition_nodes():
    tree, _ = tree_with([F] * 27, L=4, k=3)
    sizes = [tree.level_slice(level) for level in range(3)]
    assert [s.start for s in sizes] == [0, 1, 4]
    assert [s.stop - s.start for s in sizes] == [1, 3, 9]


def test_homogeneous_community():
    tree, params = tree_with([O] * 5, L=2, k=5)
    backward_pass(tree, params)
    np.testing.assert_array_equal(tree.nodes[0], [1.0, 0.0, 0.0])


def test_mixed_community_average():
    tree, params = tree_with([O, P, F, F, O], L=2, k=5)
    backward_pass(tree, params)
    np.testing.assert_allclose(tree.nodes[0], [0.4, 0.2, 0.4], rtol=0, atol=1e-15)


def test_two_level_root_is_mean_of_communities():
    roles = [O, O, P, F]
    tree, params = tree_with(roles, L=3, k=2)
    backward_pass(tree, params)
    np.testing.assert_allclose(tree.nodes[1], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(tree.nodes[2], [0.0, 0.5, 0.5])
    np.testing.assert_allclose(tree.nodes[0], [0.5, 0.25, 0.25])


def _forward_case(child, parent_state, phi):
    tree, params = tree_with([F] * 4, L=3, k=2, phi=phi)
    tree.nodes[0] = parent_state
    tree.nodes[1] = child
    tree.nodes[2] = child
    forward_pass(tree, params)
    return tree


def test_forward_blend():
    tree = _forward_case([1, 0, 0], [0, 1, 0], 0.5)
    np.testing.assert_allclose(tree.nodes[1], [0.5, 0.5, 0.0])
    np.testing.assert_array_equal(tree.nodes[0], [0, 1, 0])  # root untouched


def test_forward_phi_zero_halves():
    tree = _forward_case([0.4, 0.2, 0.4], [1, 0, 0], 0.0)
    np.testing.assert_allclose(tree.nodes[1], [0.2, 0.1, 0.2])


def test_forward_fixed_point():
    tree = _forward_case([0.4, 0.2, 0.4], [0.4, 0.2, 0.4], 0.5)
    np.testing.assert_allclose(tree.nodes[1], [0.4, 0.2, 0.4], atol=1e-15)


def test_forward_reads_updated_parent():
    # three levels: the grandchild must see its parent's post-update state
    tree, params = tree_with([F] * 8, L=4, k=2, phi=1.0)
    tree.nodes[:] = 0.0
    tree.nodes[0] = [1.0, 0.0, 0.0]
    forward_pass(tree, params)
    np.testing.assert_allclose(tree.nodes[1], [1.0, 0, 0])
    np.testing.assert_allclose(tree.nodes[3], [1.0, 0, 0])


@pytest.mark.parametrize(
    "state, expected",
    [([1, 0, 0], (1.0, 0.0)), ([0.5, 0.5, 0], (0.5, 0.5)), ([0, 0, 1], (0.0, 0.0))],
)
def test_local_opinion(state, expected):
    tree, _ = tree_with([F] * 4, L=3, k=2)
    tree.nodes[1] = state
    assert local_opinion(tree, 0) == expected
    assert local_opinion(tree, 1) == expected
    with pytest.raises(IndexError):
        local_opinion(tree, 4)


@pytest.mark.parametrize("L", [2, 3])
@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("seed", range(5))
def test_passes_match_recursive_reference(L, k, seed):
    rng = np.random.default_rng(seed)
    omega, upsilon, phi = rng.uniform(0.2, 3.0, size=3)
    roles = rng.integers(0, 3, size=k ** (L - 1))
    tree, params = tree_with(roles, L, k, omega=omega, upsilon=upsilon, phi=phi)

    root = build_nested(roles, L, k)
    recursive_backward(root, omega, upsilon, k)
    backward_pass(tree, params)
    np.testing.assert_array_equal(tree.nodes, level_order_states(root))

    recursive_forward(root, phi)
    forward_pass(tree, params)
    np.testing.assert_array_equal(tree.nodes, level_order_states(root))


roles_strategy = st.lists(st.sampled_from([O, P, F]), min_size=27, max_size=27)


@given(roles_strategy, st.floats(0.01, 100.0))
def test_backward_is_linear(roles, c):
    tree, params = tree_with(roles, L=4, k=3)
    vecs = leaf_vectors(tree, params)
    backward_pass(tree, params, vecs)
    base = tree.nodes.copy()
    backward_pass(tree, params, c * vecs)
    np.testing.assert_allclose(tree.nodes, c * base, rtol=1e-12, atol=1e-300)


@given(roles_strategy)
def test_backward_states_sum_to_one(roles):
    tree, params = tree_with(roles, L=4, k=3)
    backward_pass(tree, params)
    np.testing.assert_allclose(tree.nodes.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@given(roles_strategy, st.floats(0, 50), st.floats(0, 5), st.floats(0, 5))
def test_passes_preserve_non_negativity(roles, phi, omega, upsilon):
    tree, params = tree_with(roles, L=4, k=3, phi=phi, omega=omega, upsilon=upsilon)
    backward_pass(tree, params)
    assert np.all(tree.nodes >= 0)
    forward_pass(tree, params)
    assert np.all(tree.nodes >= 0)


@pytest.mark.parametrize("seed", range(3))
def test_large_phi_approaches_global_opinion(seed):
    rng = np.random.default_rng(seed)
    roles = rng.choice([O, P, F], size=625, p=[0.5, 0.2, 0.3])
    tree, params = tree_with(roles, L=5, k=5, phi=1e6)
    backward_pass(tree, params)
    forward_pass(tree, params)
    n_o, n_p = np.sum(roles == O), np.sum(roles == P)
    global_value = (n_o - n_p) / (n_o + n_p)
    for leaf in range(625):
        c_o, c_p = local_opinion(tree, leaf)
        assert abs((c_o - c_p) / (c_o + c_p) - global_value) < 1e-3


def test_tree_shape_validation():
    with pytest.raises(ValueError):
        HierarchyTree(k=2, L=3, nodes=np.zeros((2, 3)), leaves=np.zeros(4, dtype=np.int8))
    with pytest.raises(ValueError):
        forward_pass(*tree_with([F] * 4, L=3, k=2), corrupt_node=3)


def test_role_counts_and_copy():
    tree, _ = tree_with([O, O, P, F], L=3, k=2)
    assert tree.role_counts() == (2, 1, 1)
    clone = tree.copy()
    clone.leaves[0] = F
    assert tree.role_counts() == (2, 1, 1)

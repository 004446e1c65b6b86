"""Complete k-ary community hierarchy and its opinion-diffusion passes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hiermarket import _kernels as K
from hiermarket.roles import TraderRole

# Guard against configurations whose leaf arrays could never be allocated.
MAX_NODES = 2**31 - 1


@dataclass(frozen=True)
class HierarchyParams:
    L: int = 5
    k: int = 5
    phi: float = 0.5
    omega: float = 1.0
    upsilon: float = 1.0
    b: float = 1.8

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L}")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"k must be an integer >= 2, got {self.k}")
        for name in ("phi", "omega", "upsilon", "b"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


def counts(params: HierarchyParams) -> tuple[int, int]:
    """Return ``(n_traders, n_communities)`` for a complete tree of ``L`` levels."""
    L, k = int(params.L), int(params.k)
    if L < 2 or k < 2:
        raise ValueError("counts requires L >= 2 and k >= 2")
    total = (k**L - 1) // (k - 1)
    if total > MAX_NODES:
        raise OverflowError(f"a tree with k={k}, L={L} has {total} nodes; too large")
    n_traders = k ** (L - 1)
    return n_traders, total - n_traders


def parent(index: int, k: int) -> int:
    """Parent of a global node index (communities first, then leaves)."""
    if index <= 0:
        raise ValueError("the root has no parent")
    return (index - 1) // k


def children(index: int, k: int) -> range:
    return range(k * index + 1, k * index + k + 1)


@dataclass
class HierarchyTree:
    """Community states in level order plus one role per trader leaf.

    ``nodes[i]`` is the ``[o, p, f]`` vector of community ``i``; leaf ``j`` has
    global index ``n_communities + j``.
    """

    k: int
    L: int
    nodes: np.ndarray
    leaves: np.ndarray
    _leafbuf: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        n_t, n_c = counts(HierarchyParams(L=self.L, k=self.k))
        if self.nodes.shape != (n_c, 3):
            raise ValueError(f"expected nodes of shape {(n_c, 3)}, got {self.nodes.shape}")
        if self.leaves.shape != (n_t,):
            raise ValueError(f"expected {n_t} leaves, got {self.leaves.shape}")
        if self._leafbuf is None:
            self._leafbuf = np.zeros((n_t, 3))

    @classmethod
    def build(cls, params: HierarchyParams, roles=None) -> "HierarchyTree":
        n_t, n_c = counts(params)
        if roles is None:
            leaves = np.full(n_t, int(TraderRole.FUNDAMENTALIST), dtype=np.int8)
        else:
            leaves = np.asarray(roles, dtype=np.int8).copy()
        return cls(k=int(params.k), L=int(params.L), nodes=np.zeros((n_c, 3)), leaves=leaves)

    @property
    def n_traders(self) -> int:
        return self.leaves.shape[0]

    @property
    def n_communities(self) -> int:
        return self.nodes.shape[0]

    def level_slice(self, level: int) -> slice:
        """Slice of ``nodes`` holding community level ``level`` (root is 0)."""
        if not 0 <= level <= self.L - 2:
            raise ValueError(f"community levels run 0..{self.L - 2}")
        start = (self.k**level - 1) // (self.k - 1)
        return slice(start, start + self.k**level)

    def leaf_parent(self, leaf_index: int) -> int:
        return parent(self.n_communities + leaf_index, self.k)

    def role_counts(self) -> tuple[int, int, int]:
        c = np.bincount(self.leaves, minlength=3)
        return int(c[0]), int(c[1]), int(c[2])

    def copy(self) -> "HierarchyTree":
        return HierarchyTree(k=self.k, L=self.L, nodes=self.nodes.copy(), leaves=self.leaves.copy())


def leaf_vectors(tree: HierarchyTree, params: HierarchyParams, echo=None) -> np.ndarray:
    """Per-trader ``[o, p, f]`` contributions; ``echo`` is an optional EchoConfig."""
    mode, E = (K.ECHO_OFF, 1.0) if echo is None else (echo.code, float(echo.E))
    out = np.empty((tree.n_traders, 3))
    K.leaf_vectors(
        tree.leaves, tree.nodes, tree.n_communities, tree.k,
        float(params.omega), float(params.upsilon), mode, E, out,
    )
    return out


def backward_pass(tree: HierarchyTree, params: HierarchyParams, leaf_vecs=None) -> HierarchyTree:
    """Set every community to the mean of its children, bottom-up (in place)."""
    if leaf_vecs is None:
        leaf_vecs = leaf_vectors(tree, params)
    K.backward(tree.nodes, np.ascontiguousarray(leaf_vecs, dtype=np.float64), tree.k)
    return tree


def forward_pass(
    tree: HierarchyTree, params: HierarchyParams, corrupt_node: int = -1, signal: float = 0.0
) -> HierarchyTree:
    """Blend every non-root community with its (already updated) parent, in place."""
    if corrupt_node >= tree.n_communities:
        raise ValueError(f"corrupt_node {corrupt_node} is not a community")
    K.forward(tree.nodes, tree.k, float(params.phi), int(corrupt_node), float(signal))
    return tree


def local_opinion(tree: HierarchyTree, leaf_index: int) -> tuple[float, float]:
    """``(C_o, C_p)`` of the trader's parent community."""
    if not 0 <= leaf_index < tree.n_traders:
        raise IndexError(f"leaf {leaf_index} out of range")
    q = tree.leaf_parent(leaf_index)
    return float(tree.nodes[q, 0]), float(tree.nodes[q, 1])

"""Directed communication topologies and their spectral data.

A topology is a row-stochastic weight matrix D over N agents.  The edge
direction convention, used consistently everywhere in this package, is:

    d_ij > 0 for i != j  <=>  the graph has edge (j, i),

i.e. the *row* index is the receiver: agent i receives from agent j.
Edge lists use 1-based agent indices, matching the file formats.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _jsonio
from .errors import (
    DimensionMismatchError,
    DomainError,
    FileFormatError,
    IndexOutOfRangeError,
    NegativeWeightError,
    RowSumError,
    SelfLoopError,
    SpectrumError,
    ZeroDiagonalError,
)

#: a row may deviate from unit sum by at most this much before rejection
ROW_SUM_TOL = 1e-9
#: an eigenvalue counts as "equal to 1" within this tolerance
EIG_ONE_TOL = 1e-9


@dataclass(frozen=True)
class Topology:
    """A validated directed communication topology.

    Attributes
    ----------
    n_agents : int
        Number of agents N.
    D : (N, N) ndarray
        Row-stochastic weight matrix.  Rows are renormalized at
        construction, so each row sums to 1 to within 1e-12.
    """

    n_agents: int
    D: np.ndarray


@dataclass(frozen=True)
class TopologySpectrum:
    """Spectral data of a topology's weight matrix.

    Attributes
    ----------
    eigenvalues : (N,) complex ndarray
    perron_left_vector : (N,) ndarray
        Left null vector r of (I - D), normalized so that r^T 1 = 1.  For a
        spanning-tree topology this is the unique left Perron vector; it
        weights the initial states in the final consensus value.
    has_spanning_tree : bool
        Determined by directed reachability, cross-checked against
        simplicity of the eigenvalue 1.
    non_one_max_modulus : float
        max |lambda| over the eigenvalues other than the one closest to 1.
    """

    eigenvalues: np.ndarray
    perron_left_vector: np.ndarray
    has_spanning_tree: bool
    non_one_max_modulus: float


@dataclass(frozen=True)
class Formation:
    """Constant formation offsets, one state-space vector per agent."""

    h: np.ndarray  # (n_agents, state_dim)

    @property
    def n_agents(self) -> int:
        return self.h.shape[0]


def validate_topology(D) -> Topology:
    """Validate a weight matrix and wrap it in a Topology.

    Checks that D is square with finite entries, nonnegative, strictly
    positive on the diagonal, and that every row sums to 1 to within
    ROW_SUM_TOL.  Rows are then renormalized exactly, so downstream code
    can rely on unit row sums to within 1e-12.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionMismatchError(f"weight matrix must be square, got {D.shape}")
    if not np.all(np.isfinite(D)):
        raise DimensionMismatchError("weight matrix contains non-finite entries")
    n = D.shape[0]
    sums = D.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > ROW_SUM_TOL:
        raise RowSumError(f"row {worst + 1} sums to {sums[worst]!r}, expected 1")
    if np.any(D < 0):
        i, j = np.argwhere(D < 0)[0]
        raise NegativeWeightError(f"d[{i + 1},{j + 1}] = {D[i, j]!r} is negative")
    diag = np.diag(D)
    if np.any(diag <= 0):
        i = int(np.argmax(diag <= 0))
        raise ZeroDiagonalError(f"d[{i + 1},{i + 1}] = {diag[i]!r} must be > 0")
    return Topology(n_agents=n, D=_jsonio.frozen(D / sums[:, None]))


def build_from_edges(n: int, edges, self_weight_floor: float) -> Topology:
    """Construct a row-stochastic topology from an edge list.

    Edges are ordered pairs (j, i), 1-based, meaning agent i receives from
    agent j.  Each receiving agent splits weight (1 - self_weight_floor)
    evenly over its in-neighbors and keeps the remainder on the diagonal;
    agents with no in-neighbors get d_ii = 1.

    This construction is a convenience convention of this package, not a
    canonical mapping from graphs to weights.
    """
    if not 0.0 < self_weight_floor < 1.0:
        raise DomainError(f"self_weight_floor must lie in (0, 1), got {self_weight_floor}")
    if n < 1:
        raise DomainError(f"need at least one agent, got n={n}")
    in_neighbors: list[set[int]] = [set() for _ in range(n)]
    for edge in edges:
        j, i = edge
        j, i = int(j), int(i)
        if j == i:
            raise SelfLoopError(f"edge ({j}, {i}) is a self-loop")
        if not (1 <= j <= n and 1 <= i <= n):
            raise IndexOutOfRangeError(f"edge ({j}, {i}) outside 1..{n}")
        in_neighbors[i - 1].add(j - 1)
    D = np.zeros((n, n))
    for i, nbrs in enumerate(in_neighbors):
        if nbrs:
            w = (1.0 - self_weight_floor) / len(nbrs)
            for j in nbrs:
                D[i, j] = w
            D[i, i] = 1.0 - w * len(nbrs)
        else:
            D[i, i] = 1.0
    return validate_topology(D)


def _reachability_spanning_tree(D: np.ndarray) -> bool:
    """True iff some root reaches every node along edges j -> i (d_ij > 0)."""
    n = D.shape[0]
    out = [np.flatnonzero((D[:, j] > 0) & (np.arange(n) != j)) for j in range(n)]
    for root in range(n):
        seen = np.zeros(n, dtype=bool)
        stack = [root]
        seen[root] = True
        while stack:
            j = stack.pop()
            for i in out[j]:
                if not seen[i]:
                    seen[i] = True
                    stack.append(int(i))
        if seen.all():
            return True
    return False


def analyze_spectrum(t: Topology) -> TopologySpectrum:
    """Eigenvalues, Perron left vector and spanning-tree flag of a topology.

    Spanning-tree detection uses graph reachability (robust at desk scale);
    the spectral multiplicity of eigenvalue 1 is used only as a consistency
    check, since it is numerically fragile near the simplicity boundary.
    """
    D = t.D
    n = t.n_agents
    eigenvalues = np.linalg.eigvals(D)

    has_tree = _reachability_spanning_tree(D)
    mult_one = int(np.count_nonzero(np.abs(eigenvalues - 1.0) < EIG_ONE_TOL))
    if has_tree and mult_one != 1:
        raise SpectrumError(
            f"reachability finds a spanning tree but eigenvalue 1 has "
            f"multiplicity {mult_one}; inconsistent numerics")

    # Left null space of (I - D): columns of U with tiny singular values.
    # Project the all-ones vector onto it to fix a well-defined direction
    # even when the null space has dimension > 1 (no spanning tree).
    U, sigma, _ = np.linalg.svd(np.eye(n) - D)
    null = U[:, sigma <= EIG_ONE_TOL]
    if null.shape[1] == 0:
        null = U[:, -1:]
    r = null @ (null.T @ np.ones(n))
    total = r.sum()
    if abs(total) < 1e-12:
        r = null[:, -1]
        total = r.sum()
    r = r / total

    idx = int(np.argmin(np.abs(eigenvalues - 1.0)))
    others = np.delete(eigenvalues, idx)
    non_one = float(np.abs(others).max()) if others.size else 0.0

    return TopologySpectrum(
        eigenvalues=_jsonio.frozen(eigenvalues),
        perron_left_vector=_jsonio.frozen(r),
        has_spanning_tree=has_tree,
        non_one_max_modulus=non_one,
    )


def in_gamma_delta(s: TopologySpectrum, delta: float) -> bool:
    """True iff the topology has a spanning tree and its non-one eigenvalues
    all lie in the closed disk of radius delta."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return bool(s.has_spanning_tree and s.non_one_max_modulus <= delta)


def non_one_eigenvalues(s: TopologySpectrum) -> np.ndarray:
    """The eigenvalues other than the (simple) eigenvalue 1."""
    idx = int(np.argmin(np.abs(s.eigenvalues - 1.0)))
    return np.delete(s.eigenvalues, idx)


# --- file format -------------------------------------------------------------

def topology_from_json(doc: dict, *, context: str = "topology") -> Topology:
    """Build a Topology from its JSON document.

    Two forms are accepted:
      {"n": int, "D": [[...], ...]}
      {"n": int, "edges": [[j, i], ...], "self_weight_floor": float}
    """
    if "D" in doc:
        D = _jsonio.as_matrix(doc, "D", context=context)
        if "n" in doc and int(doc["n"]) != D.shape[0]:
            raise FileFormatError(f"{context}: n={doc['n']} but D is {D.shape}")
        return validate_topology(D)
    if "edges" in doc:
        if "n" not in doc:
            raise FileFormatError(f"{context}: edge form requires field 'n'")
        edges = doc["edges"]
        if not isinstance(edges, list) or any(len(e) != 2 for e in edges):
            raise FileFormatError(f"{context}: 'edges' must be a list of [j, i] pairs")
        floor = float(doc.get("self_weight_floor", 0.5))
        return build_from_edges(int(doc["n"]), [tuple(e) for e in edges], floor)
    raise FileFormatError(f"{context}: expected field 'D' or 'edges'")


def topology_to_json(t: Topology) -> dict:
    return {"n": t.n_agents, "D": _jsonio.matrix_to_lists(t.D)}


def formation_from_json(doc: dict, *, context: str = "formation") -> Formation:
    h = _jsonio.as_matrix(doc, "h", context=context)
    return Formation(h=_jsonio.frozen(h))


def formation_to_json(f: Formation) -> dict:
    return {"h": _jsonio.matrix_to_lists(f.h)}

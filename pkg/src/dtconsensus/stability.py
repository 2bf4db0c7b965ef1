"""Spectral classification: Schur stability, neutral stability, and the
parametrized stability test on A + (1 - sigma) L C that drives every
consensus verdict in this package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _jsonio
from .errors import DimensionMismatchError, NoSpanningTreeError
from .topology import TopologySpectrum, non_one_eigenvalues

#: strict Schur margin: moduli above 1 - SCHUR_TOL are "not Schur stable"
SCHUR_TOL = 1e-12
#: classification band around the unit circle used by classify()
UNIT_BAND = 1e-8
#: relative singular-value cutoff for numerical rank decisions
RANK_CUTOFF = 1e-10
#: eigenvalues closer than this are treated as one eigenvalue when counting
#: algebraic multiplicity
CLUSTER_TOL = 1e-6

SCHUR_STABLE = "schur_stable"
NEUTRALLY_STABLE = "neutrally_stable"
UNSTABLE = "unstable"


@dataclass(frozen=True)
class AgentModel:
    """The agent state-space triple (A, B, C).

    A is n x n, B is n x p, C is q x n; every agent in a network shares
    the same model.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatchError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatchError(f"C has {C.shape[1]} columns, expected {n}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise DimensionMismatchError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", _jsonio.frozen(A))
        object.__setattr__(self, "B", _jsonio.frozen(B))
        object.__setattr__(self, "C", _jsonio.frozen(C))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class SpectralClass:
    """Result of classify(): stability kind plus the eigenvalue data.

    unstable_product is the product of |lambda| over eigenvalues with
    modulus > 1 (an empty product is 1); it sets the admissible-delta
    bound 1/unstable_product used by the disk-region design.
    """

    kind: str
    eigenvalues: np.ndarray
    unstable_product: float


@dataclass(frozen=True)
class ConsensusVerdict:
    """Outcome of the reduced consensus test over a topology spectrum.

    For each eigenvalue of D other than the simple eigenvalue 1, carries
    the stability margin 1 - rho(A + (1 - lambda) L C); consensus is
    certified iff A + BK is Schur stable and every margin is positive.
    """

    ok: bool
    gain_matrix_stable: bool
    eigenvalues: np.ndarray
    margins: np.ndarray
    stable: np.ndarray

    @property
    def failing_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[~self.stable]


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got {M.shape}")
    return float(np.abs(np.linalg.eigvals(M)).max()) if M.size else 0.0


def is_schur(M) -> bool:
    """True iff all eigenvalues of M have modulus < 1 - SCHUR_TOL.

    The guard band makes boundary cases (moduli within 1e-12 of 1) count
    as *not* Schur stable, which is the conservative choice: the consensus
    reduction needs strict stability.
    """
    return spectral_radius(M) < 1.0 - SCHUR_TOL


def classify(model: AgentModel, *, rank_cutoff: float = RANK_CUTOFF) -> SpectralClass:
    """Classify A as Schur stable, neutrally stable, or unstable.

    Neutral stability additionally requires every unit-modulus eigenvalue
    to be semisimple.  Semisimplicity is decided by comparing the
    algebraic multiplicity (eigenvalues clustered within CLUSTER_TOL)
    against the numerical rank deficiency of A - lambda I, with singular
    values below rank_cutoff * ||A|| treated as zero.  This avoids a
    Jordan decomposition, which is numerically unreliable.
    """
    A = model.A
    eigenvalues = np.linalg.eigvals(A)
    moduli = np.abs(eigenvalues)
    scale = max(1.0, float(np.linalg.norm(A, 2)))

    outside = moduli > 1.0 + UNIT_BAND
    unstable_product = float(np.prod(moduli[outside])) if outside.any() else 1.0

    if np.all(moduli < 1.0 - UNIT_BAND):
        kind = SCHUR_STABLE
    elif outside.any():
        kind = UNSTABLE
    else:
        kind = NEUTRALLY_STABLE
        on_circle = np.abs(moduli - 1.0) <= UNIT_BAND
        checked: list[complex] = []
        for lam in eigenvalues[on_circle]:
            if any(abs(lam - mu) <= CLUSTER_TOL for mu in checked):
                continue
            checked.append(lam)
            algebraic = int(np.count_nonzero(np.abs(eigenvalues - lam) <= CLUSTER_TOL))
            sigma = np.linalg.svd(A - lam * np.eye(model.n), compute_uv=False)
            geometric = model.n - int(np.count_nonzero(sigma > rank_cutoff * scale))
            if geometric < algebraic:
                kind = UNSTABLE
                break

    return SpectralClass(kind=kind, eigenvalues=_jsonio.frozen(eigenvalues),
                         unstable_product=unstable_product)


def protocol_matrix_stable(model: AgentModel, L, sigma: complex) -> bool:
    """Schur stability of A + (1 - sigma) L C for a complex scalar sigma."""
    L = _check_l(model, L)
    return is_schur(model.A + (1.0 - sigma) * (L @ model.C))


def check_theorem1(model: AgentModel, K, L,
                   spectrum: TopologySpectrum) -> ConsensusVerdict:
    """Reduced consensus test over all non-one eigenvalues of the topology.

    Requires a spanning tree.  The verdict is positive iff A + BK is Schur
    stable and A + (1 - lambda_i) L C is Schur stable for every eigenvalue
    lambda_i of D other than the simple eigenvalue 1.
    """
    if not spectrum.has_spanning_tree:
        raise NoSpanningTreeError("the topology has no directed spanning tree")
    K = _check_k(model, K)
    L = _check_l(model, L)
    gain_ok = is_schur(model.A + model.B @ K)
    lams = non_one_eigenvalues(spectrum)
    LC = L @ model.C
    margins = np.array([1.0 - spectral_radius(model.A + (1.0 - lam) * LC)
                        for lam in lams])
    stable = margins > SCHUR_TOL
    return ConsensusVerdict(
        ok=bool(gain_ok and stable.all()),
        gain_matrix_stable=bool(gain_ok),
        eigenvalues=_jsonio.frozen(lams),
        margins=_jsonio.frozen(margins),
        stable=_jsonio.frozen(stable),
    )


def is_stabilizable(A, B, *, cutoff: float = RANK_CUTOFF) -> bool:
    """Eigenvector test: no mode with |lambda| >= 1 is uncontrollable."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    n = A.shape[0]
    scale = max(1.0, float(np.linalg.norm(A, 2)), float(np.linalg.norm(B, 2)))
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - UNIT_BAND:
            continue
        sigma = np.linalg.svd(np.hstack([A - lam * np.eye(n), B.astype(complex)]),
                              compute_uv=False)
        if sigma[-1] <= cutoff * scale:
            return False
    return True


def is_detectable(A, C, *, cutoff: float = RANK_CUTOFF) -> bool:
    """Dual eigenvector test: no mode with |lambda| >= 1 is unobservable."""
    A = np.atleast_2d(np.asarray(A, float))
    C = np.atleast_2d(np.asarray(C, float))
    return is_stabilizable(A.T, C.T, cutoff=cutoff)


def _check_k(model: AgentModel, K) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (model.p, model.n):
        raise DimensionMismatchError(
            f"K must be {model.p} x {model.n}, got {K.shape}")
    return K


def _check_l(model: AgentModel, L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim == 1:
        L = L[:, None]
    if L.shape != (model.n, model.q):
        raise DimensionMismatchError(
            f"L must be {model.n} x {model.q}, got {L.shape}")
    return L


# --- file format -------------------------------------------------------------

def model_from_json(doc: dict, *, context: str = "model") -> AgentModel:
    """Build an AgentModel from {"A": [[...]], "B": [[...]], "C": [[...]]}."""
    return AgentModel(A=_jsonio.as_matrix(doc, "A", context=context),
                      B=_jsonio.as_matrix(doc, "B", context=context),
                      C=_jsonio.as_matrix(doc, "C", context=context))


def model_to_json(model: AgentModel) -> dict:
    return {"A": _jsonio.matrix_to_lists(model.A),
            "B": _jsonio.matrix_to_lists(model.B),
            "C": _jsonio.matrix_to_lists(model.C)}

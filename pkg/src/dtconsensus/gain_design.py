"""Protocol gain synthesis.

Three routes produce the observer gain L:

* ``algorithm1`` -- for neutrally stable state matrices: split the state
  space into the unit-modulus part (orthogonal representation M) and the
  Schur-stable remainder, then place L so the whole open unit disk becomes
  the consensus region.
* ``algorithm2`` -- for general state matrices: solve a modified discrete
  Riccati equation parametrized by delta in (0, 1) and obtain a gain whose
  consensus region contains the origin-centered disk of radius delta.
* ``user_gains`` -- validate externally supplied (K, L).

The feedback gain K defaults to a discrete LQR design with identity
weights (computed from the delta = 0 Riccati recursion on the dual pair);
user-supplied K always overrides it.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import _jsonio
from .errors import (
    DeltaOutOfRangeError,
    DimensionMismatchError,
    DivergedError,
    FileFormatError,
    IllConditionedBasisError,
    MaxIterationsError,
    NotDetectableError,
    NotNeutrallyStableError,
    NotStabilizableError,
    SingularProjectionError,
    UserGainUnstableError,
)
from .stability import (
    NEUTRALLY_STABLE,
    RANK_CUTOFF,
    SCHUR_STABLE,
    UNIT_BAND,
    AgentModel,
    _check_k,
    _check_l,
    classify,
    is_detectable,
    is_schur,
    is_stabilizable,
)

METHOD_USER = "user_supplied"
METHOD_ALGORITHM1 = "algorithm1"
METHOD_ALGORITHM2 = "algorithm2"
_METHODS = (METHOD_USER, METHOD_ALGORITHM1, METHOD_ALGORITHM2)

MARE_TOL = 1e-12
MARE_MAX_ITER = 10 ** 6
MARE_DIVERGENCE_GUARD = 1e12
COND_LIMIT = 1e10


@dataclass(frozen=True)
class ProtocolGains:
    """Validated protocol gain pair.

    certified_delta records the radius of the origin-centered disk the
    design certifies as consensus region: 1.0 encodes the full open unit
    disk (algorithm 1), None means no certificate (user gains).
    """

    K: np.ndarray
    L: np.ndarray
    method: str
    certified_delta: float | None = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise FileFormatError(f"unknown gain method {self.method!r}")
        object.__setattr__(self, "K", _jsonio.frozen(np.atleast_2d(self.K)))
        object.__setattr__(self, "L", _jsonio.frozen(np.atleast_2d(self.L)))


@dataclass(frozen=True)
class JordanSplit:
    """Real block split of a neutrally stable state matrix.

    [U W] is invertible with [U W]^-1 A [U W] = blockdiag(M, X); M is
    orthogonal (rotation/sign blocks of the unit-modulus eigenvalues), X is
    Schur stable, and V holds orthonormal rows spanning range(U^T C^T).
    """

    U: np.ndarray
    W: np.ndarray
    M: np.ndarray
    X: np.ndarray
    V: np.ndarray

    @property
    def n_unit(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class MareSolution:
    """Converged solution of the modified Riccati fixed-point iteration.

    history rows are (step_norm, trace) per iteration, for diagnostics.
    """

    P: np.ndarray
    delta: float
    Q: np.ndarray
    iterations: int
    residual: float
    history: np.ndarray


def design_k(model: AgentModel, K=None) -> np.ndarray:
    """Return a feedback gain making A + BK Schur stable.

    With K given, validates it (stabilizability of (A, B) plus the Schur
    check) and returns it unchanged.  Otherwise computes the discrete LQR
    gain with identity state and input weights via the delta = 0 Riccati
    recursion on the dual pair (A^T, B^T), negated to the A + BK feedback
    convention used here.
    """
    if not is_stabilizable(model.A, model.B):
        raise NotStabilizableError(
            "(A, B) has an uncontrollable mode with modulus >= 1")
    if K is not None:
        K = _check_k(model, K)
        if not is_schur(model.A + model.B @ K):
            raise UserGainUnstableError("user K leaves A + BK outside the "
                                        "Schur-stable set")
        return K
    P, _, _ = _mare_fixed_point(model.A.T, model.B.T, 0.0,
                                np.eye(model.n), np.zeros((model.n, model.n)),
                                MARE_TOL, MARE_MAX_ITER)
    B = model.B
    K = -np.linalg.solve(B.T @ P @ B + np.eye(model.p), B.T @ P @ model.A)
    if not is_schur(model.A + B @ K):
        raise NotStabilizableError("default LQR design failed the Schur check; "
                                   "(A, B) is numerically at the stabilizability "
                                   "boundary")
    return K


def jordan_split(model: AgentModel, *, cond_limit: float = COND_LIMIT) -> JordanSplit:
    """Split the state space of a neutrally stable A.

    U is assembled column-by-column from the unit-modulus eigenvalues,
    sorted by angle in [0, 2*pi): one unit eigenvector per real eigenvalue
    (first nonzero component made positive), and per complex pair the real
    and imaginary parts of the unit eigenvector with positive imaginary
    eigenvalue (phase fixed so its first nonzero component is real
    positive), which makes the corresponding block of M the plane rotation
    [[cos t, sin t], [-sin t, cos t]].  W spans the complementary stable
    invariant subspace, obtained from a sorted real Schur form.

    The convention pins U (hence the gain built from it) to make results
    reproducible; the unit-disk guarantee itself is basis-independent.
    """
    spec = classify(model)
    if spec.kind != NEUTRALLY_STABLE:
        raise NotNeutrallyStableError(f"state matrix is {spec.kind}, the split "
                                      "requires a neutrally stable A")
    A = model.A
    n = model.n

    blocks = []  # (angle, columns, M-block)
    for lam, vec in _unit_eigenpairs(A):
        if abs(lam.imag) <= UNIT_BAND:
            v = _realify(vec)
            sign = 1.0 if lam.real > 0 else -1.0
            angle = 0.0 if sign > 0 else np.pi
            blocks.append((angle, v[:, None], np.array([[sign]])))
        else:
            v = _fix_phase(vec / np.linalg.norm(vec))
            mod = abs(lam)
            a, b = lam.real / mod, lam.imag / mod
            blocks.append((np.arctan2(b, a) % (2.0 * np.pi),
                           np.column_stack([v.real, v.imag]),
                           np.array([[a, b], [-b, a]])))
    blocks.sort(key=lambda blk: blk[0])

    U = np.hstack([blk[1] for blk in blocks])
    M = scipy.linalg.block_diag(*[blk[2] for blk in blocks])

    # stable invariant subspace from the real Schur form, reordered so the
    # strictly-inside-the-disk eigenvalues lead
    T, Z, sdim = scipy.linalg.schur(
        A, output="real", sort=lambda re, im: np.hypot(re, im) < 1.0 - UNIT_BAND)
    W = Z[:, :sdim]
    X = T[:sdim, :sdim]

    basis = np.hstack([U, W])
    if basis.shape != (n, n):
        raise IllConditionedBasisError(
            f"unit and stable subspaces span {basis.shape[1]} of {n} dimensions; "
            "eigenvalue classification is inconsistent")
    if np.linalg.cond(basis) > cond_limit:
        raise IllConditionedBasisError("[U W] condition number exceeds "
                                       f"{cond_limit:g}")

    G = U.T @ model.C.T
    left, sigma, _ = np.linalg.svd(G, full_matrices=False)
    rank = int(np.count_nonzero(sigma > RANK_CUTOFF * max(sigma[0], 1e-300))) \
        if sigma.size else 0
    V = left[:, :rank].T

    return JordanSplit(U=_jsonio.frozen(U), W=_jsonio.frozen(W),
                       M=_jsonio.frozen(M), X=_jsonio.frozen(X),
                       V=_jsonio.frozen(V))


def algorithm1(model: AgentModel, K=None) -> ProtocolGains:
    """Observer gain with the open unit disk as certified consensus region.

    Requires a neutrally stable (or already Schur stable) A and a
    detectable (A, C).  For a Schur-stable A there is nothing to correct
    and L = 0 is returned.  Otherwise L = -U M V^T (C U V^T)^+ from the
    split; the pseudo-inverse reduces to the plain inverse whenever C U
    has full row rank.
    """
    K = design_k(model, K)
    spec = classify(model)
    if spec.kind == SCHUR_STABLE:
        L = np.zeros((model.n, model.q))
        return ProtocolGains(K=K, L=L, method=METHOD_ALGORITHM1, certified_delta=1.0)
    if spec.kind != NEUTRALLY_STABLE:
        raise NotNeutrallyStableError(
            "the unit-disk design requires a neutrally stable state matrix; "
            "use the disk-radius design (algorithm 2) for unstable dynamics")
    if not is_detectable(model.A, model.C):
        raise NotDetectableError("(A, C) has an unobservable mode with "
                                 "modulus >= 1")
    split = jordan_split(model)
    CUVT = model.C @ split.U @ split.V.T
    sigma = np.linalg.svd(CUVT, compute_uv=False)
    if sigma.size == 0 or sigma[0] > COND_LIMIT * sigma[-1]:
        raise SingularProjectionError("C U V^T is numerically singular "
                                      f"(condition > {COND_LIMIT:g})")
    L = -split.U @ split.M @ split.V.T @ np.linalg.pinv(CUVT)
    return ProtocolGains(K=K, L=L, method=METHOD_ALGORITHM1, certified_delta=1.0)


def solve_mare(model: AgentModel, delta: float, Q=None, p0=None,
               tol: float = MARE_TOL, max_iter: int = MARE_MAX_ITER) -> MareSolution:
    """Fixed-point iteration for the delta-modified discrete Riccati equation

        P = A P A^T - (1 - delta^2) A P C^T (C P C^T + I)^-1 C P A^T + Q.

    delta = 0 recovers the standard filter-form Riccati equation.  When a
    positive-definite solution exists the iteration converges from any
    positive-semidefinite start; a norm blowing past 1e12 signals that
    delta lies outside the existence range and raises DivergedError.

    Starting from p0 = 0 the trace of the iterates is expected to be
    nondecreasing; a decrease beyond tolerance is reported as a warning
    (numerical health diagnostic, not an error).
    """
    if not 0.0 <= delta < 1.0:
        raise DeltaOutOfRangeError(f"delta must lie in [0, 1), got {delta}")
    if not is_detectable(model.A, model.C):
        raise NotDetectableError("(A, C) has an unobservable mode with "
                                 "modulus >= 1")
    n = model.n
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, float))
    p0 = np.zeros((n, n)) if p0 is None else np.atleast_2d(np.asarray(p0, float))
    _require_symmetric(Q, "Q", positive_definite=True)
    _require_symmetric(p0, "p0", positive_definite=False)

    P, iterations, history = _mare_fixed_point(model.A, model.C, delta, Q, p0,
                                               tol, max_iter,
                                               monotone_check=not p0.any())
    residual = _mare_residual(model.A, model.C, delta, Q, P)
    return MareSolution(P=_jsonio.frozen(P), delta=delta, Q=_jsonio.frozen(Q),
                        iterations=iterations, residual=residual,
                        history=_jsonio.frozen(history))


def algorithm2(model: AgentModel, K=None, delta: float = 0.95, Q=None) -> ProtocolGains:
    """Observer gain certifying the origin-centered disk of radius delta.

    Solves the modified Riccati equation and sets
    L = -A P C^T (C P C^T + I)^-1.  When A has eigenvalues outside the
    unit circle, delta must stay below 1/prod|lambda_unstable|: with a
    rank-one output map that bound is enforced as a hard error; otherwise
    it is only known to be sufficient, so the attempt proceeds under a
    warning and relies on the divergence guard.
    """
    if not 0.0 < delta < 1.0:
        raise DeltaOutOfRangeError(f"delta must lie in (0, 1), got {delta}")
    K = design_k(model, K)
    spec = classify(model)
    if spec.unstable_product > 1.0 + 1e-9:
        bound = 1.0 / spec.unstable_product
        if delta >= bound:
            if np.linalg.matrix_rank(model.C, tol=RANK_CUTOFF) == 1:
                raise DeltaOutOfRangeError(
                    f"delta = {delta} >= 1/prod|unstable eigenvalues| = {bound:.6g}; "
                    "no solution exists for a rank-one output map")
            warnings.warn(
                f"delta = {delta} exceeds the sufficient bound {bound:.6g}; "
                "the Riccati iteration may diverge", RuntimeWarning, stacklevel=2)
    sol = solve_mare(model, delta, Q=Q)
    S = model.C @ sol.P @ model.C.T + np.eye(model.q)
    L = -np.linalg.solve(S.T, (model.A @ sol.P @ model.C.T).T).T
    return ProtocolGains(K=K, L=L, method=METHOD_ALGORITHM2, certified_delta=delta)


def user_gains(model: AgentModel, K, L) -> ProtocolGains:
    """Validate user-supplied gains (Schur check on A + BK)."""
    K = _check_k(model, K)
    L = _check_l(model, L)
    if not is_schur(model.A + model.B @ K):
        raise UserGainUnstableError("user K leaves A + BK outside the "
                                    "Schur-stable set")
    return ProtocolGains(K=K, L=L, method=METHOD_USER, certified_delta=None)


# --- internals ---------------------------------------------------------------

def _mare_fixed_point(A, C, delta, Q, P0, tol, max_iter, monotone_check=False):
    """Core iteration shared by solve_mare and the dual-pair LQR design."""
    coeff = 1.0 - delta * delta
    q = C.shape[0]
    Iq = np.eye(q)
    P = P0.copy()
    history = np.empty((0, 2))
    steps: list[tuple[float, float]] = []
    prev_trace = float(np.trace(P))
    warned = False
    for k in range(1, max_iter + 1):
        G = A @ P @ C.T
        S = C @ P @ C.T + Iq
        Pn = A @ P @ A.T - coeff * (G @ np.linalg.solve(S, G.T)) + Q
        Pn = 0.5 * (Pn + Pn.T)
        scale = max(1.0, float(np.abs(Pn).max()))
        step = float(np.abs(Pn - P).max()) / scale
        trace = float(np.trace(Pn))
        steps.append((step, trace))
        if monotone_check and not warned and trace < prev_trace - 1e-9 * max(1.0, prev_trace):
            warnings.warn("trace of the Riccati iterates decreased from a zero "
                          "start; treat the solution with suspicion",
                          RuntimeWarning, stacklevel=3)
            warned = True
        prev_trace = trace
        P = Pn
        if float(np.abs(P).max()) > MARE_DIVERGENCE_GUARD:
            raise DivergedError(
                f"iterate norm exceeded {MARE_DIVERGENCE_GUARD:g} at iteration "
                f"{k}; delta = {delta} lies outside the existence range")
        if step < tol:
            history = np.array(steps)
            return P, k, history
    raise MaxIterationsError(f"no convergence to tol = {tol:g} within "
                             f"{max_iter} iterations")


def _mare_residual(A, C, delta, Q, P):
    G = A @ P @ C.T
    S = C @ P @ C.T + np.eye(C.shape[0])
    F = A @ P @ A.T - (1.0 - delta * delta) * (G @ np.linalg.solve(S, G.T)) + Q
    return float(np.abs(P - F).max())


def _require_symmetric(M, name, *, positive_definite):
    if M.shape[0] != M.shape[1] or np.abs(M - M.T).max() > 1e-10 * max(1.0, np.abs(M).max()):
        raise DimensionMismatchError(f"{name} must be symmetric")
    smallest = float(np.linalg.eigvalsh(M).min())
    if positive_definite and smallest <= 0:
        raise DimensionMismatchError(f"{name} must be positive definite "
                                     f"(smallest eigenvalue {smallest:g})")
    if not positive_definite and smallest < -1e-10 * max(1.0, np.abs(M).max()):
        raise DimensionMismatchError(f"{name} must be positive semidefinite "
                                     f"(smallest eigenvalue {smallest:g})")


def _unit_eigenpairs(A):
    """(lambda, eigenvector) for unit-modulus eigenvalues, one per conjugate
    pair (the representative has nonnegative imaginary part)."""
    evals, evecs = np.linalg.eig(A)
    pairs = []
    for i, lam in enumerate(evals):
        if abs(abs(lam) - 1.0) > UNIT_BAND:
            continue
        if lam.imag < -UNIT_BAND:
            continue  # conjugate partner carries this pair
        pairs.append((lam, evecs[:, i]))
    return pairs


def _realify(vec):
    """Rotate a (numerically complex) eigenvector of a real eigenvalue onto
    the real axis, normalize, and fix the sign convention."""
    j = int(np.argmax(np.abs(vec)))
    v = (vec * np.exp(-1j * np.angle(vec[j]))).real
    v = v / np.linalg.norm(v)
    k = np.flatnonzero(np.abs(v) > 1e-9)[0]
    return v if v[k] > 0 else -v


def _fix_phase(vec):
    """Rotate a unit complex eigenvector so its first nonzero component is
    real and positive (pins the pair's real/imaginary-part columns)."""
    k = np.flatnonzero(np.abs(vec) > 1e-9)[0]
    return vec * (np.conj(vec[k]) / abs(vec[k]))


# --- file format -------------------------------------------------------------

def gains_from_json(doc: dict, *, context: str = "gains") -> ProtocolGains:
    """Build ProtocolGains from {"K": ..., "L": ..., "method": ...,
    "certified_delta": ...}."""
    K = _jsonio.as_matrix(doc, "K", context=context)
    L = _jsonio.as_matrix(doc, "L", context=context)
    method = doc.get("method", METHOD_USER)
    delta = doc.get("certified_delta")
    return ProtocolGains(K=K, L=L, method=method,
                         certified_delta=None if delta is None else float(delta))


def gains_to_json(gains: ProtocolGains) -> dict:
    return {"K": _jsonio.matrix_to_lists(gains.K),
            "L": _jsonio.matrix_to_lists(gains.L),
            "method": gains.method,
            "certified_delta": gains.certified_delta}


def mare_history_to_csv(sol: MareSolution, path) -> None:
    """Write per-iteration diagnostics: iteration, step-norm, trace."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "step_norm", "trace"])
        for k, (step, trace) in enumerate(sol.history, start=1):
            writer.writerow([k, _jsonio.fmt(step), _jsonio.fmt(trace)])

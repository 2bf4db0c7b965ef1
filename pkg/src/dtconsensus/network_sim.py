"""Closed-loop network simulation: the observer-protocol network, the
static (output-coupled) network, the formation variant, and the predicted
final consensus trajectory.

All recursions are iterated per agent in stacked form (states are (N, n)
arrays, one row per agent), which is algebraically identical to the
Kronecker block form but O(N n^2) per step instead of O((2 N n)^2).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _jsonio
from .errors import DimensionMismatchError, InfeasibleFormationError, NoSpanningTreeError
from .gain_design import ProtocolGains
from .stability import AgentModel, _check_l, is_detectable
from .topology import Formation, Topology, TopologySpectrum

MODE_OBSERVER = "observer"
MODE_STATIC = "static"
MODE_FORMATION = "formation"

#: state-norm cutoff: far above any trajectory of interest, far below
#: floating-point overflow
DIVERGENCE_CUTOFF = 1e30
#: feasibility tolerance for (A - I) applied to formation offsets
FORMATION_FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class ClosedLoopSystem:
    """A network ready to simulate: model + topology + gains (+ offsets).

    block_A and block_H are the 2n x 2n per-agent blocks of the stacked
    closed-loop recursion  z+ = (I_N (x) block_A + (I_N - D) (x) block_H) z
    with z_i = [x_i; v_i]; they are carried for diagnostics and oracle
    checks, the simulator itself iterates the equivalent per-agent form.
    """

    model: AgentModel
    topology: Topology
    gains: ProtocolGains
    mode: str
    formation: Formation | None
    block_A: np.ndarray
    block_H: np.ndarray


@dataclass(frozen=True)
class TrajectoryLog:
    """Time-indexed states and error series of one simulation run.

    x has shape (recorded_steps + 1, N, n); v likewise, or None in static
    mode.  consensus_error is the normalized disagreement
    max_ij ||x_i - x_j|| / max(1, max_i ||x_i||) per step; the absolute
    (unnormalized) series is kept alongside.  formation_error applies the
    same formulas to x_i - h_i.  If any state norm exceeds the divergence
    cutoff the run stops early, diverged is set, and the trajectory is
    reported up to and including the offending step.
    """

    steps: int
    x: np.ndarray
    v: np.ndarray | None
    consensus_error: np.ndarray
    consensus_error_abs: np.ndarray
    formation_error: np.ndarray | None = None
    formation_error_abs: np.ndarray | None = None
    diverged: bool = False
    diverged_step: int | None = None
    diagnostics: dict = field(default_factory=dict)


def closed_loop(model: AgentModel, topology: Topology, gains: ProtocolGains,
                mode: str = MODE_OBSERVER,
                formation: Formation | None = None) -> ClosedLoopSystem:
    """Assemble a ClosedLoopSystem, building the stacked blocks."""
    if mode not in (MODE_OBSERVER, MODE_STATIC, MODE_FORMATION):
        raise DimensionMismatchError(f"unknown mode {mode!r}")
    if mode == MODE_FORMATION:
        if formation is None:
            raise InfeasibleFormationError("formation mode requires offsets")
        _check_formation(model, topology, formation)
    A, B, C = model.A, model.B, model.C
    K, L = gains.K, gains.L
    if K.shape != (model.p, model.n):
        raise DimensionMismatchError(f"K must be {model.p} x {model.n}, got {K.shape}")
    L = _check_l(model, L)
    n = model.n
    BK = B @ K
    LC = L @ C
    block_A = np.block([[A, BK], [np.zeros((n, n)), A + BK]])
    block_H = np.block([[np.zeros((n, n)), np.zeros((n, n))], [-LC, LC]])
    return ClosedLoopSystem(model=model, topology=topology, gains=gains,
                            mode=mode, formation=formation,
                            block_A=_jsonio.frozen(block_A),
                            block_H=_jsonio.frozen(block_H))


def initial_states(n_agents: int, dim: int, seed: int) -> np.ndarray:
    """Reproducible random initial states, components uniform in [-1, 1].

    Uses numpy's default PCG64 generator seeded with `seed`; the stream is
    stable across runs, making test runs and CSV outputs repeatable.
    """
    return np.random.default_rng(seed).uniform(-1.0, 1.0, (n_agents, dim))


def simulate(system: ClosedLoopSystem, x0, v0=None, steps: int = 1000) -> TrajectoryLog:
    """Run the observer-protocol network.

    Per agent:  x+ = A x + B K v,
                v+ = (A + BK) v + L (sum_j d_ij C (v_i - v_j) - zeta_i)
    with zeta_i the relative output measurement.  v0 defaults to zero
    (protocol states start at rest).
    """
    if system.mode not in (MODE_OBSERVER, MODE_STATIC):
        raise DimensionMismatchError("simulate() runs the plain consensus "
                                     "protocol; use simulate_formation()")
    return _run_observer(system, x0, v0, steps, offsets=None)


def simulate_formation(system: ClosedLoopSystem, x0, v0=None,
                       steps: int = 1000) -> TrajectoryLog:
    """Run the formation protocol.

    The coupling term subtracts the constant offset pattern from the
    relative measurements; with all offsets equal this reduces exactly
    (bit for bit) to simulate().  Offsets must satisfy the drift
    feasibility condition (A - I)(h_i - h_1) = 0.
    """
    if system.mode != MODE_FORMATION or system.formation is None:
        raise InfeasibleFormationError("system was not assembled in formation mode")
    return _run_observer(system, x0, v0, steps, offsets=system.formation.h)


def simulate_static(model: AgentModel, topology: Topology, L, x0,
                    steps: int = 1000) -> TrajectoryLog:
    """Run the static output-coupled network x+ = A x + L C sum_j d_ij (x_i - x_j).

    The detectability of (A, C), which characterizes when some L makes this
    network reach consensus over every spanning-tree topology, is attached
    to the log diagnostics.
    """
    L = _check_l(model, L)
    X = _check_states(x0, topology.n_agents, model.n, "x0")
    if steps < 1:
        raise DimensionMismatchError(f"steps must be >= 1, got {steps}")
    D = topology.D
    AT = model.A.T
    CTLT = model.C.T @ L.T

    xs = np.empty((steps + 1, topology.n_agents, model.n))
    cons = np.empty(steps + 1)
    cons_abs = np.empty(steps + 1)
    xs[0] = X
    cons_abs[0], cons[0] = _disagreement(X)
    diverged_step = None
    for k in range(1, steps + 1):
        X = X @ AT + (X - D @ X) @ CTLT
        xs[k] = X
        cons_abs[k], cons[k] = _disagreement(X)
        if np.linalg.norm(X, axis=1).max() > DIVERGENCE_CUTOFF:
            diverged_step = k
            break
    last = diverged_step if diverged_step is not None else steps
    return TrajectoryLog(
        steps=last,
        x=_jsonio.frozen(xs[:last + 1]),
        v=None,
        consensus_error=_jsonio.frozen(cons[:last + 1]),
        consensus_error_abs=_jsonio.frozen(cons_abs[:last + 1]),
        diverged=diverged_step is not None,
        diverged_step=diverged_step,
        diagnostics={"mode": MODE_STATIC,
                     "detectable": is_detectable(model.A, model.C)},
    )


def predict_final_value(model: AgentModel, spectrum: TopologySpectrum, x0,
                        steps: int) -> np.ndarray:
    """Predicted common trajectory: A^k applied to the r-weighted initial
    state, for k = 0..steps.  Returns an array of shape (steps + 1, n).

    Under a consensus-certified protocol every agent's state converges to
    this trajectory and the protocol states converge to zero.
    """
    if not spectrum.has_spanning_tree:
        raise NoSpanningTreeError("the topology has no directed spanning tree")
    r = spectrum.perron_left_vector
    X0 = _check_states(x0, len(r), model.n, "x0")
    w = r @ X0
    out = np.empty((steps + 1, model.n))
    out[0] = w
    for k in range(1, steps + 1):
        w = model.A @ w
        out[k] = w
    return _jsonio.frozen(out)


# --- internals ---------------------------------------------------------------

def _run_observer(system, x0, v0, steps, offsets):
    model, topology = system.model, system.topology
    N, n = topology.n_agents, model.n
    X = _check_states(x0, N, n, "x0")
    V = (np.zeros((N, n)) if v0 is None else _check_states(v0, N, n, "v0"))
    if steps < 1:
        raise DimensionMismatchError(f"steps must be >= 1, got {steps}")

    D = topology.D
    A, B, C = model.A, model.B, model.C
    K, L = system.gains.K, system.gains.L
    AT = A.T
    BKT = (B @ K).T
    ApBKT = (A + B @ K).T
    CT, LT = C.T, L.T

    # constant offset correction sum_j d_ij (h_i - h_j), computed pairwise so
    # it is exactly zero whenever all offsets are equal
    H = np.zeros((N, n)) if offsets is None else np.asarray(offsets, float)
    Hcorr = np.empty((N, n))
    for i in range(N):
        Hcorr[i] = (D[i, :, None] * (H[i][None, :] - H)).sum(axis=0)
    ZC = Hcorr @ CT

    track_formation = offsets is not None
    xs = np.empty((steps + 1, N, n))
    vs = np.empty((steps + 1, N, n))
    cons = np.empty(steps + 1)
    cons_abs = np.empty(steps + 1)
    form = np.empty(steps + 1) if track_formation else None
    form_abs = np.empty(steps + 1) if track_formation else None

    def record(k, X, V):
        xs[k], vs[k] = X, V
        cons_abs[k], cons[k] = _disagreement(X)
        if track_formation:
            form_abs[k], form[k] = _disagreement(X - H, scale_states=X)

    record(0, X, V)
    diverged_step = None
    for k in range(1, steps + 1):
        zeta = (X - D @ X) @ CT - ZC
        Vn = V @ ApBKT + ((V - D @ V) @ CT - zeta) @ LT
        X = X @ AT + V @ BKT
        V = Vn
        record(k, X, V)
        if max(np.linalg.norm(X, axis=1).max(),
               np.linalg.norm(V, axis=1).max()) > DIVERGENCE_CUTOFF:
            diverged_step = k
            break

    last = diverged_step if diverged_step is not None else steps
    return TrajectoryLog(
        steps=last,
        x=_jsonio.frozen(xs[:last + 1]),
        v=_jsonio.frozen(vs[:last + 1]),
        consensus_error=_jsonio.frozen(cons[:last + 1]),
        consensus_error_abs=_jsonio.frozen(cons_abs[:last + 1]),
        formation_error=_jsonio.frozen(form[:last + 1]) if track_formation else None,
        formation_error_abs=_jsonio.frozen(form_abs[:last + 1]) if track_formation else None,
        diverged=diverged_step is not None,
        diverged_step=diverged_step,
        diagnostics={"mode": system.mode},
    )


def _disagreement(X, scale_states=None):
    """(absolute, normalized) maximum pairwise state distance."""
    worst = 0.0
    for i in range(X.shape[0] - 1):
        d = float(np.linalg.norm(X[i + 1:] - X[i], axis=1).max())
        if d > worst:
            worst = d
    S = X if scale_states is None else scale_states
    denom = max(1.0, float(np.linalg.norm(S, axis=1).max()))
    return worst, worst / denom


def _check_states(x, N, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (N, n):
        raise DimensionMismatchError(f"{name} must have shape ({N}, {n}), "
                                     f"got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatchError(f"{name} contains non-finite entries")
    return x.copy()


def _check_formation(model: AgentModel, topology: Topology, formation: Formation):
    h = np.asarray(formation.h, float)
    if h.shape != (topology.n_agents, model.n):
        raise DimensionMismatchError(
            f"offsets must have shape ({topology.n_agents}, {model.n}), "
            f"got {h.shape}")
    drift = model.A - np.eye(model.n)
    residuals = np.linalg.norm((h - h[0]) @ drift.T, axis=1)
    if residuals.max() > FORMATION_FEASIBILITY_TOL:
        # report the worst pair, not just the worst offset against agent 1
        worst, wi, wj = 0.0, 0, 1
        for i in range(len(h)):
            r = np.linalg.norm((h - h[i]) @ drift.T, axis=1)
            j = int(np.argmax(r))
            if r[j] > worst:
                worst, wi, wj = float(r[j]), i, j
        raise InfeasibleFormationError(
            f"offsets are not invariant under the drift: ||(A - I)(h_{wi + 1} "
            f"- h_{wj + 1})|| = {worst:.3g} exceeds {FORMATION_FEASIBILITY_TOL:g}")


# --- exports -----------------------------------------------------------------

def trajectory_to_csv(log: TrajectoryLog, path) -> None:
    """One row per agent per step per state kind: step,agent,kind,c0,...

    Agent indices are 1-based, matching the edge-list convention.
    """
    n = log.x.shape[2]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "agent", "kind"] + [f"c{i}" for i in range(n)])
        for k in range(log.x.shape[0]):
            for a in range(log.x.shape[1]):
                writer.writerow([k, a + 1, "x"] + [_jsonio.fmt(c) for c in log.x[k, a]])
            if log.v is not None:
                for a in range(log.v.shape[1]):
                    writer.writerow([k, a + 1, "v"] + [_jsonio.fmt(c) for c in log.v[k, a]])


def errors_to_csv(log: TrajectoryLog, path) -> None:
    """Scalar error series: step,consensus_error,formation_error."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "consensus_error", "formation_error"])
        for k in range(len(log.consensus_error)):
            fe = "" if log.formation_error is None else _jsonio.fmt(log.formation_error[k])
            writer.writerow([k, _jsonio.fmt(log.consensus_error[k]), fe])

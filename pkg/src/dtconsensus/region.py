"""Consensus-region computation: the set of complex sigma for which
A + (1 - sigma) L C is Schur stable.

The region is represented by sampling (a grid of stability flags and
margins plus refined real-axis intervals), not symbolically; a general
closed form does not exist for arbitrary (A, L, C).  Membership queries
never interpolate the grid: they recompute the eigenvalue test exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _jsonio
from .errors import DomainError
from .stability import SCHUR_TOL, AgentModel, _check_l

#: default half-width of the scan window; all topology eigenvalues lie in
#: the closed unit disk, the margin beyond 1 exists only for visualization
DEFAULT_WINDOW = 1.5
DEFAULT_RESOLUTION = 301
SWEEP_STEP = 1e-3
REFINE_WIDTH = 1e-6


@dataclass(frozen=True)
class ConsensusRegion:
    """Sampled consensus region.

    Attributes
    ----------
    re_axis, im_axis : (r,) ndarray
        Grid coordinates (real and imaginary parts of sigma).
    stable : (r, r) bool ndarray
        stable[i, j] is the Schur flag at sigma = re_axis[j] + 1j*im_axis[i].
    margin : (r, r) ndarray
        1 - spectral_radius at each node ("distance to instability").
    real_intervals : tuple of (lo, hi)
        Maximal open intervals of the real axis inside the window on which
        the test matrix is Schur stable.  Interior endpoints are located to
        REFINE_WIDTH; endpoints equal to the window edge are clips, not
        stability transitions.
    """

    re_axis: np.ndarray
    im_axis: np.ndarray
    stable: np.ndarray
    margin: np.ndarray
    real_intervals: tuple

    @property
    def resolution(self) -> int:
        return len(self.re_axis)


def _batched_rho(base: np.ndarray, LC: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Spectral radius of base - sigma * LC for a vector of sigmas."""
    M = base[None, :, :] - sigmas[:, None, None] * LC[None, :, :]
    return np.abs(np.linalg.eigvals(M)).max(axis=1)


def scan_region(model: AgentModel, L, *, resolution: int = DEFAULT_RESOLUTION,
                window: float = DEFAULT_WINDOW) -> ConsensusRegion:
    """Populate the stability grid and refine the real-axis intervals.

    The grid axis is built from integer multiples of the step so that it is
    exactly symmetric about 0; only the upper half-plane is computed and
    the lower half is mirrored, which makes the conjugate-symmetry
    invariant of the region exact for real (A, L, C).
    """
    if resolution < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    if window <= 0:
        raise DomainError(f"window must be positive, got {window}")
    L = _check_l(model, L)
    LC = (L @ model.C).astype(complex)
    base = model.A + LC  # A + (1 - sigma) LC = (A + LC) - sigma LC

    step = 2.0 * window / (resolution - 1)
    axis = (np.arange(resolution) - (resolution - 1) / 2.0) * step

    rho = np.empty((resolution, resolution))
    upper = np.flatnonzero(axis >= 0.0)
    for i in upper:
        sig = axis + 1j * axis[i]
        rho[i] = _batched_rho(base, LC, sig)
    for i in np.flatnonzero(axis < 0.0):
        rho[i] = rho[resolution - 1 - i]  # conjugate mirror: -axis[i] == axis[r-1-i]

    stable = rho < 1.0 - SCHUR_TOL
    margin = 1.0 - rho

    intervals = _refine_real_intervals(base, LC, window)

    return ConsensusRegion(
        re_axis=_jsonio.frozen(axis),
        im_axis=_jsonio.frozen(axis.copy()),
        stable=_jsonio.frozen(stable),
        margin=_jsonio.frozen(margin),
        real_intervals=tuple(intervals),
    )


def _refine_real_intervals(base, LC, window):
    """1-D sweep at SWEEP_STEP followed by bisection of each transition."""
    m = int(round(window / SWEEP_STEP))
    sweep = np.arange(-m, m + 1) * SWEEP_STEP
    flags = _batched_rho(base, LC, sweep.astype(complex)) < 1.0 - SCHUR_TOL

    def flag_at(x: float) -> bool:
        rho = np.abs(np.linalg.eigvals(base - complex(x) * LC)).max()
        return bool(rho < 1.0 - SCHUR_TOL)

    def bisect(lo: float, hi: float) -> float:
        flo = flag_at(lo)
        while hi - lo > REFINE_WIDTH:
            mid = 0.5 * (lo + hi)
            if flag_at(mid) == flo:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    intervals = []
    start = None
    for k in range(len(sweep)):
        if flags[k] and start is None:
            start = -window if k == 0 else bisect(sweep[k - 1], sweep[k])
        elif not flags[k] and start is not None:
            intervals.append((start, bisect(sweep[k - 1], sweep[k])))
            start = None
    if start is not None:
        intervals.append((start, window))
    return intervals


def contains(region: ConsensusRegion, model: AgentModel, L, sigma: complex) -> bool:
    """Exact membership of sigma in the consensus region.

    The grid held by `region` is diagnostic only; membership is always
    recomputed from the eigenvalue test, so boundary points resolve to
    False (strict Schur stability) with no interpolation drift.
    """
    del region  # sampling artifact; never interpolated for membership
    L = _check_l(model, L)
    rho = np.abs(np.linalg.eigvals(model.A + (1.0 - sigma) * (L @ model.C))).max()
    return bool(rho < 1.0 - SCHUR_TOL)


def disk_radius_certified(model: AgentModel, L, delta: float,
                          samples: int = 1024) -> bool:
    """Sampling certificate that the closed disk |sigma| <= delta is stable.

    Evaluates the stability test at `samples` deterministic quasi-uniform
    points of the closed disk: one eighth of the budget on the boundary
    circle itself, the rest on a golden-angle spiral through the interior
    (including the center).  This certifies by sampling, not by proof.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if samples < 64:
        raise DomainError(f"need at least 64 samples, got {samples}")
    L = _check_l(model, L)
    LC = (L @ model.C).astype(complex)
    base = model.A + LC

    n_boundary = max(16, samples // 8)
    n_interior = samples - n_boundary
    theta_b = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
    boundary = delta * np.exp(1j * theta_b)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    k = np.arange(n_interior)
    radii = delta * np.sqrt(k / n_interior)
    interior = radii * np.exp(1j * golden * k)
    sigmas = np.concatenate([boundary, interior])

    rho = _batched_rho(base, LC, sigmas)
    return bool(np.all(rho < 1.0 - SCHUR_TOL))


# --- exports -----------------------------------------------------------------

def region_to_csv(region: ConsensusRegion, path) -> None:
    """Write one row per grid node: re,im,stable,margin."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im", "stable", "margin"])
        for i, im in enumerate(region.im_axis):
            for j, re in enumerate(region.re_axis):
                writer.writerow([_jsonio.fmt(re), _jsonio.fmt(im),
                                 int(region.stable[i, j]),
                                 _jsonio.fmt(region.margin[i, j])])


def intervals_to_json(region: ConsensusRegion) -> str:
    return json.dumps([[lo, hi] for lo, hi in region.real_intervals])


def render_ascii(region: ConsensusRegion, *, width: int = 61) -> str:
    """Character-grid view of the stable set ('#' stable, '.' unstable)."""
    r = region.resolution
    idx = np.unique(np.linspace(0, r - 1, min(width, r)).round().astype(int))
    rows = []
    for i in idx[::-1]:  # imaginary axis increases upward
        rows.append("".join("#" if region.stable[i, j] else "." for j in idx))
    return "\n".join(rows)


def render_png(region: ConsensusRegion, path) -> None:
    """Image-file rendering of the stable set (requires matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    extent = [region.re_axis[0], region.re_axis[-1],
              region.im_axis[0], region.im_axis[-1]]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(region.stable.astype(float), origin="lower", extent=extent,
              cmap="Greys", vmin=0.0, vmax=1.5)
    ax.set_xlabel("Re sigma")
    ax.set_ylabel("Im sigma")
    ax.set_title("consensus region (shaded = Schur stable)")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)

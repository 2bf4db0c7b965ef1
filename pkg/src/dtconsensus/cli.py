"""Command-line front end.

Subcommands: classify, design, region, verify, simulate.  Structured
inputs are JSON, bulk numeric outputs are CSV.  Exit codes: 0 on success,
1 on a negative analysis verdict (verification failure, no spanning
tree), 2 on input or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _jsonio, gain_design, network_sim, region, stability, topology
from .errors import FileFormatError, NoSpanningTreeError, ToolkitError

DEFAULT_CONSENSUS_TOL = 1e-6


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoSpanningTreeError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtconsensus",
        description="Design and verify observer-type consensus protocols "
                    "for discrete-time linear multi-agent networks.")
    sub = parser.add_subparsers(required=True, metavar="command")

    p = sub.add_parser("classify", help="spectral classification of a model")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--rank-cutoff", type=float, default=stability.RANK_CUTOFF,
                   help="relative singular-value cutoff for rank decisions "
                        "(default %(default)g)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("design", help="synthesize protocol gains")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--method", required=True,
                   choices=["algorithm1", "algorithm2", "user"])
    p.add_argument("--delta", type=float, default=None,
                   help="disk radius for algorithm2 (required there)")
    p.add_argument("--k-file", default=None,
                   help="JSON file with field K (overrides the LQR default)")
    p.add_argument("--l-file", default=None,
                   help="JSON file with field L (user method only)")
    p.add_argument("--mare-tol", type=float, default=gain_design.MARE_TOL,
                   help="Riccati relative step tolerance (default %(default)g)")
    p.add_argument("--mare-max-iter", type=int, default=gain_design.MARE_MAX_ITER,
                   help="Riccati iteration cap (default %(default)d)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("region", help="scan the consensus region of (model, L)")
    p.add_argument("model", help="model JSON file")
    p.add_argument("gains", help="gains JSON file")
    p.add_argument("--resolution", type=int, default=region.DEFAULT_RESOLUTION,
                   help="grid resolution per axis (default %(default)d)")
    p.add_argument("--window", type=float, default=region.DEFAULT_WINDOW,
                   help="scan half-width (default %(default)g)")
    p.add_argument("--render", choices=["none", "ascii", "png"], default="none")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("verify", help="check the consensus condition on a topology")
    p.add_argument("model", help="model JSON file")
    p.add_argument("gains", help="gains JSON file")
    p.add_argument("topology", help="topology JSON file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run a scenario and export trajectories")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out-dir", default=None, help="override scenario out_dir")
    p.add_argument("--steps", type=int, default=None, help="override scenario steps")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--consensus-tol", type=float, default=DEFAULT_CONSENSUS_TOL,
                   help="relative error below which consensus counts as "
                        "achieved (default %(default)g)")
    p.set_defaults(func=cmd_simulate)

    return parser


# --- commands ----------------------------------------------------------------

def cmd_classify(args) -> int:
    model = _load_model(args.model)
    spec = stability.classify(model, rank_cutoff=args.rank_cutoff)
    eigs = ", ".join(_fmt_complex(l) for l in spec.eigenvalues)
    print(f"eigenvalues: {eigs}")
    print(f"classification: {spec.kind}")
    print("stabilizable: " + _yn(stability.is_stabilizable(model.A, model.B)))
    print("detectable: " + _yn(stability.is_detectable(model.A, model.C)))
    print(f"unstable_product: {spec.unstable_product:.6g}")
    if spec.unstable_product > 1.0 + 1e-9:
        print(f"delta_bound: {1.0 / spec.unstable_product:.6g}")
    else:
        print("delta_bound: none (no eigenvalue modulus > 1)")
    return 0


def cmd_design(args) -> int:
    model = _load_model(args.model)
    K = _load_named_matrix(args.k_file, "K") if args.k_file else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.method == "algorithm1":
        gains = gain_design.algorithm1(model, K)
        sol = None
    elif args.method == "algorithm2":
        if args.delta is None:
            raise FileFormatError("--method algorithm2 requires --delta")
        K = gain_design.design_k(model, K)
        sol = gain_design.solve_mare(model, args.delta,
                                     tol=args.mare_tol, max_iter=args.mare_max_iter)
        S = model.C @ sol.P @ model.C.T + np.eye(model.q)
        L = -np.linalg.solve(S.T, (model.A @ sol.P @ model.C.T).T).T
        gains = gain_design.ProtocolGains(K=K, L=L, method=gain_design.METHOD_ALGORITHM2,
                                          certified_delta=args.delta)
    else:
        if args.l_file is None:
            raise FileFormatError("--method user requires --l-file")
        if K is None:
            raise FileFormatError("--method user requires --k-file")
        L = _load_named_matrix(args.l_file, "L")
        gains = gain_design.user_gains(model, K, L)
        sol = None

    gains_path = out_dir / "gains.json"
    _jsonio.dump_json(gain_design.gains_to_json(gains), gains_path)
    print(f"wrote {gains_path}")
    if sol is not None:
        csv_path = out_dir / "mare_iterations.csv"
        gain_design.mare_history_to_csv(sol, csv_path)
        print(f"wrote {csv_path}")
        print(f"mare: {sol.iterations} iterations, residual {sol.residual:.3g}")
    print("K =", np.array2string(np.asarray(gains.K), precision=6))
    print("L =", np.array2string(np.asarray(gains.L), precision=6))
    return 0


def cmd_region(args) -> int:
    model = _load_model(args.model)
    gains = gain_design.gains_from_json(_jsonio.load_json(args.gains),
                                        context=args.gains)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reg = region.scan_region(model, gains.L, resolution=args.resolution,
                             window=args.window)
    region.region_to_csv(reg, out_dir / "region.csv")
    (out_dir / "intervals.json").write_text(region.intervals_to_json(reg) + "\n",
                                            encoding="utf-8")
    print(f"wrote {out_dir / 'region.csv'}")
    print(f"wrote {out_dir / 'intervals.json'}")
    for lo, hi in reg.real_intervals:
        print(f"real interval: ({lo:.6f}, {hi:.6f})")
    RE, IM = np.meshgrid(reg.re_axis, reg.im_axis)
    in_disk = RE * RE + IM * IM < 1.0
    frac = float(reg.stable[in_disk].mean()) if in_disk.any() else float("nan")
    print(f"stable fraction of unit-disk samples: {100.0 * frac:.1f}%")
    if args.render == "ascii":
        print(region.render_ascii(reg))
    elif args.render == "png":
        png = out_dir / "region.png"
        region.render_png(reg, png)
        print(f"wrote {png}")
    return 0


def cmd_verify(args) -> int:
    model = _load_model(args.model)
    gains = gain_design.gains_from_json(_jsonio.load_json(args.gains),
                                        context=args.gains)
    topo = topology.topology_from_json(_jsonio.load_json(args.topology),
                                       context=args.topology)
    spectrum = topology.analyze_spectrum(topo)
    verdict = stability.check_theorem1(model, gains.K, gains.L, spectrum)
    print("A+BK Schur stable: " + _yn(verdict.gain_matrix_stable))
    print(f"{'eigenvalue':>22}  {'in region':>9}  {'margin':>12}")
    for lam, ok, mrg in zip(verdict.eigenvalues, verdict.stable, verdict.margins):
        print(f"{_fmt_complex(lam):>22}  {_yn(bool(ok)):>9}  {mrg:>12.6f}")
    if verdict.ok:
        print("verdict: PASS")
        return 0
    fails = ", ".join(_fmt_complex(l) for l in verdict.failing_eigenvalues)
    if fails:
        print(f"verdict: FAIL at {fails}")
    else:
        print("verdict: FAIL (A+BK is not Schur stable)")
    return 1


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.out_dir is not None:
        scenario.out_dir = Path(args.out_dir)
    if args.steps is not None:
        scenario.steps = args.steps
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.x0 = None  # reseeding discards any inline initial states
    log, summary = run_scenario(scenario, consensus_tol=args.consensus_tol)

    out_dir = scenario.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    network_sim.trajectory_to_csv(log, out_dir / "trajectory.csv")
    network_sim.errors_to_csv(log, out_dir / "errors.csv")
    _jsonio.dump_json(summary, out_dir / "summary.json")
    print(f"wrote {out_dir / 'trajectory.csv'}")
    print(f"wrote {out_dir / 'errors.csv'}")
    print(f"wrote {out_dir / 'summary.json'}")
    for key in ("mode", "steps_recorded", "diverged", "final_consensus_error",
                "final_formation_error", "prediction_deviation",
                "consensus_achieved", "formation_achieved"):
        if summary.get(key) is not None:
            print(f"{key}: {summary[key]}")
    return 0


# --- scenario plumbing -------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Parsed scenario: file references resolved against the scenario dir."""

    model: stability.AgentModel
    topology: topology.Topology
    gains_spec: object  # ProtocolGains or a design-directive dict
    mode: str
    formation: topology.Formation | None
    steps: int
    seed: int
    x0: np.ndarray | None
    v0: np.ndarray | None
    out_dir: Path


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    doc = _jsonio.load_json(path)
    base = path.parent

    def resolve(name):
        return base / doc[name] if name in doc else None

    for required in ("model", "topology"):
        if required not in doc:
            raise FileFormatError(f"{path}: missing required field {required!r}")
    model = _load_model(resolve("model"))
    topo = topology.topology_from_json(_jsonio.load_json(resolve("topology")),
                                       context=str(resolve("topology")))

    gains_field = doc.get("gains")
    if gains_field is None:
        raise FileFormatError(f"{path}: missing required field 'gains'")
    if isinstance(gains_field, str):
        gains_spec = gain_design.gains_from_json(
            _jsonio.load_json(base / gains_field), context=gains_field)
    elif isinstance(gains_field, dict):
        gains_spec = gains_field
    else:
        raise FileFormatError(f"{path}: 'gains' must be a path or a directive object")

    formation = None
    if "formation" in doc:
        formation = topology.formation_from_json(
            _jsonio.load_json(resolve("formation")), context=str(resolve("formation")))
    mode = doc.get("mode", network_sim.MODE_FORMATION if formation is not None
                   else network_sim.MODE_OBSERVER)
    if mode not in (network_sim.MODE_OBSERVER, network_sim.MODE_STATIC,
                    network_sim.MODE_FORMATION):
        raise FileFormatError(f"{path}: unknown mode {mode!r}")
    if mode == network_sim.MODE_FORMATION and formation is None:
        raise FileFormatError(f"{path}: formation mode requires a 'formation' file")

    x0 = np.asarray(doc["x0"], float) if "x0" in doc else None
    v0 = np.asarray(doc["v0"], float) if "v0" in doc else None
    return ScenarioConfig(
        model=model, topology=topo, gains_spec=gains_spec, mode=mode,
        formation=formation, steps=int(doc.get("steps", 1000)),
        seed=int(doc.get("seed", 0)), x0=x0, v0=v0,
        out_dir=base / doc.get("out_dir", "out"),
    )


def _resolve_gains(scenario: ScenarioConfig) -> gain_design.ProtocolGains:
    spec = scenario.gains_spec
    if isinstance(spec, gain_design.ProtocolGains):
        return spec
    method = spec.get("method")
    K = np.asarray(spec["k"], float) if "k" in spec else None
    model = scenario.model
    if method == "algorithm1":
        gains = gain_design.algorithm1(model, K)
    elif method == "algorithm2":
        if "delta" not in spec:
            raise FileFormatError("algorithm2 directive requires 'delta'")
        gains = gain_design.algorithm2(model, K, delta=float(spec["delta"]))
    elif method == "user":
        if "l" not in spec or K is None:
            raise FileFormatError("user directive requires inline 'k' and 'l'")
        gains = gain_design.user_gains(model, K, np.asarray(spec["l"], float))
    else:
        raise FileFormatError(f"unknown design directive {method!r}")
    _warn_directive_mismatch(model, method)
    return gains


def _warn_directive_mismatch(model, method):
    kind = stability.classify(model).kind
    if method == "algorithm1" and kind == stability.UNSTABLE:
        print("warning: algorithm1 directive on an unstable model", file=sys.stderr)
    if method == "algorithm2" and kind == stability.NEUTRALLY_STABLE:
        print("warning: algorithm2 directive on a neutrally stable model; "
              "algorithm1 would certify the whole unit disk", file=sys.stderr)


def run_scenario(scenario: ScenarioConfig, *,
                 consensus_tol: float = DEFAULT_CONSENSUS_TOL):
    """Dispatch a scenario to the right simulator; return (log, summary)."""
    model, topo = scenario.model, scenario.topology
    gains = _resolve_gains(scenario)
    N, n = topo.n_agents, model.n
    x0 = scenario.x0 if scenario.x0 is not None else \
        network_sim.initial_states(N, n, scenario.seed)

    if scenario.mode == network_sim.MODE_STATIC:
        log = network_sim.simulate_static(model, topo, gains.L, x0, scenario.steps)
    else:
        system = network_sim.closed_loop(model, topo, gains, mode=scenario.mode,
                                         formation=scenario.formation)
        if scenario.mode == network_sim.MODE_FORMATION:
            log = network_sim.simulate_formation(system, x0, scenario.v0,
                                                 scenario.steps)
        else:
            log = network_sim.simulate(system, x0, scenario.v0, scenario.steps)

    summary = {
        "mode": scenario.mode,
        "seed": scenario.seed,
        "steps_requested": scenario.steps,
        "steps_recorded": log.steps,
        "diverged": log.diverged,
        "final_consensus_error": float(log.consensus_error[-1]),
        "final_consensus_error_abs": float(log.consensus_error_abs[-1]),
        "consensus_achieved": bool(not log.diverged
                                   and log.consensus_error[-1] < consensus_tol),
        "tolerance": consensus_tol,
        "final_formation_error": None,
        "formation_achieved": None,
        "prediction_deviation": None,
    }
    if log.formation_error is not None:
        summary["final_formation_error"] = float(log.formation_error[-1])
        summary["formation_achieved"] = bool(not log.diverged
                                             and log.formation_error[-1] < consensus_tol)
    if scenario.mode == network_sim.MODE_OBSERVER and not log.diverged:
        spectrum = topology.analyze_spectrum(topo)
        if spectrum.has_spanning_tree:
            pred = network_sim.predict_final_value(model, spectrum, x0, log.steps)
            dev = np.linalg.norm(log.x[-1] - pred[-1], axis=1).max()
            summary["prediction_deviation"] = \
                float(dev / max(1.0, np.linalg.norm(pred[-1])))
    return log, summary


# --- helpers -----------------------------------------------------------------

def _load_model(path) -> stability.AgentModel:
    return stability.model_from_json(_jsonio.load_json(path), context=str(path))


def _load_named_matrix(path, key) -> np.ndarray:
    return _jsonio.as_matrix(_jsonio.load_json(path), key, context=str(path))


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    if abs(z.imag) < 1e-9:
        return f"{z.real:.6g}"
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real:.6g}{sign}{abs(z.imag):.6g}j"


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


if __name__ == "__main__":
    sys.exit(main())

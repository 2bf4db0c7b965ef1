"""Closed-loop network simulation, formation mode, and the final-value
prediction."""
import numpy as np
import pytest

from dtconsensus import (
    AgentModel,
    InfeasibleFormationError,
    NoSpanningTreeError,
    algorithm1,
    analyze_spectrum,
    check_theorem1,
    closed_loop,
    initial_states,
    predict_final_value,
    simulate,
    simulate_formation,
    simulate_static,
    user_gains,
    validate_topology,
)
from dtconsensus.errors import DimensionMismatchError
from dtconsensus.network_sim import errors_to_csv, trajectory_to_csv
from dtconsensus.topology import Formation

from oracles import random_spanning_topology, simulate_stacked


def make_system(model, topo, K, L, mode="observer", formation=None):
    return closed_loop(model, topo, user_gains(model, K, L),
                       mode=mode, formation=formation)


class TestBlockAssembly:
    def test_blocks_match_definition(self, dint_model, dint_k, dint_l, topo6_chain):
        system = make_system(dint_model, topo6_chain, dint_k, dint_l)
        A, B, C = dint_model.A, dint_model.B, dint_model.C
        BK = B @ dint_k
        LC = dint_l @ C
        expected_A = np.block([[A, BK], [np.zeros((2, 2)), A + BK]])
        expected_H = np.block([[np.zeros((2, 2)), np.zeros((2, 2))], [-LC, LC]])
        assert np.array_equal(system.block_A, expected_A)
        assert np.array_equal(system.block_H, expected_H)


class TestKroneckerEquivalence:
    @pytest.mark.parametrize("seed", range(10))
    def test_per_agent_matches_stacked(self, seed):
        rng = np.random.default_rng(1000 + seed)
        N = int(rng.integers(2, 5))
        n = int(rng.integers(1, 4))
        model = AgentModel(A=rng.normal(size=(n, n)) * 0.6,
                           B=rng.normal(size=(n, 1)),
                           C=rng.normal(size=(1, n)))
        K = rng.normal(size=(1, n)) * 0.2
        L = rng.normal(size=(n, 1)) * 0.2
        topo = validate_topology(random_spanning_topology(rng, N))
        x0 = rng.uniform(-1, 1, (N, n))
        v0 = rng.uniform(-1, 1, (N, n))
        steps = 30

        from dtconsensus.gain_design import METHOD_USER, ProtocolGains
        gains = ProtocolGains(K=K, L=L, method=METHOD_USER)
        log = simulate(closed_loop(model, topo, gains), x0, v0, steps)
        xs, vs = simulate_stacked(model.A, model.B, model.C, K, L,
                                  topo.D, x0, v0, steps)
        scale = max(1.0, np.abs(xs).max(), np.abs(vs).max())
        assert np.abs(log.x - xs).max() / scale < 1e-12
        assert np.abs(log.v - vs).max() / scale < 1e-12


class TestObserverProtocol:
    def test_double_integrator_network_converges(self, dint_model, dint_k,
                                                  dint_l, topo6_chain):
        system = make_system(dint_model, topo6_chain, dint_k, dint_l)
        x0 = initial_states(6, 2, seed=12345)
        log = simulate(system, x0, steps=2000)
        assert not log.diverged
        assert log.consensus_error[500] < 1e-6
        assert log.consensus_error[-1] < 1e-10
        # protocol states die out and agents land on the predicted trajectory
        assert np.linalg.norm(log.v[-1], axis=1).max() < 1e-8
        pred = predict_final_value(dint_model, analyze_spectrum(topo6_chain),
                                   x0, 2000)
        dev = np.linalg.norm(log.x[-1] - pred[-1], axis=1).max()
        assert dev / max(1.0, np.linalg.norm(pred[-1])) < 1e-6

    def test_single_agent(self, dint_model, dint_k, dint_l):
        topo = validate_topology(np.eye(1))
        system = make_system(dint_model, topo, dint_k, dint_l)
        x0 = np.array([[0.3, -0.7]])
        v0 = np.array([[0.5, 0.1]])
        log = simulate(system, x0, v0, steps=50)
        # no coupling: x+ = A x + BK v, v+ = (A + BK) v
        x, v = x0[0].copy(), v0[0].copy()
        A, BK = dint_model.A, dint_model.B @ dint_k
        for k in range(1, 51):
            x, v = A @ x + BK @ v, (A + BK) @ v
            assert np.abs(log.x[k, 0] - x).max() < 1e-12 * max(1.0, np.abs(x).max())
            assert np.abs(log.v[k, 0] - v).max() < 1e-12
        assert log.consensus_error.max() == 0.0

    def test_fragile_region_divergence(self, osc_model, osc_gains, topo6_added_edge):
        # one topology eigenvalue falls in the hole of the disconnected
        # region: the network must not reach consensus
        K, L = osc_gains
        system = make_system(osc_model, topo6_added_edge, K, L)
        x0 = initial_states(6, 2, seed=7)
        log = simulate(system, x0, steps=10000)
        assert log.diverged
        assert log.diverged_step is not None
        assert log.x.shape[0] == log.diverged_step + 1
        assert log.consensus_error[1000:].min() > 1e-3

    def test_dimension_checks(self, dint_model, dint_k, dint_l, topo6_chain):
        system = make_system(dint_model, topo6_chain, dint_k, dint_l)
        with pytest.raises(DimensionMismatchError):
            simulate(system, np.zeros((5, 2)))
        with pytest.raises(DimensionMismatchError):
            simulate(system, np.zeros((6, 3)))
        with pytest.raises(DimensionMismatchError):
            simulate(system, np.zeros((6, 2)), steps=0)


class TestStaticNetwork:
    def test_unit_disk_gain_reaches_consensus(self, neutral_model, neutral_k,
                                              topo6_base):
        gains = algorithm1(neutral_model, neutral_k)
        x0 = initial_states(6, 3, seed=2)
        log = simulate_static(neutral_model, topo6_base, gains.L, x0, steps=3000)
        assert log.diagnostics["detectable"]
        assert log.consensus_error[-1] < 1e-8
        assert log.v is None

    def test_identity_dynamics_zero_gain_freezes(self):
        model = AgentModel(A=np.eye(2), B=np.eye(2), C=np.eye(2))
        topo = validate_topology(np.array([[0.5, 0.5], [0.5, 0.5]]))
        x0 = np.array([[1.0, 0.0], [0.0, 1.0]])
        log = simulate_static(model, topo, np.zeros((2, 2)), x0, steps=20)
        assert np.array_equal(log.x[-1], x0)
        assert np.all(log.consensus_error == log.consensus_error[0])

    def test_undetectable_pair_cannot_agree(self):
        # disagreement placed in the unobservable marginal mode stays put
        model = AgentModel(A=np.diag([1.0, 0.5]), B=np.eye(2),
                           C=np.array([[0.0, 1.0]]))
        topo = validate_topology(np.array([[0.5, 0.5], [0.5, 0.5]]))
        x0 = np.array([[1.0, 0.3], [-1.0, -0.2]])
        log = simulate_static(model, topo, np.array([[0.2], [0.2]]), x0, steps=500)
        assert not log.diagnostics["detectable"]
        assert log.consensus_error.min() > 0.5


class TestFormation:
    def test_hexagon(self, planar_dint_model, topo6_chain, hexagon_offsets,
                      dint_k, dint_l):
        I2 = np.eye(2)
        K4, L4 = np.kron(dint_k, I2), np.kron(dint_l, I2)
        system = make_system(planar_dint_model, topo6_chain, K4, L4,
                             mode="formation", formation=Formation(h=hexagon_offsets))
        x0 = initial_states(6, 4, seed=99)
        log = simulate_formation(system, x0, steps=3000)
        assert not log.diverged
        assert log.formation_error[-1] < 1e-8
        positions = log.x[-1][:, :2]
        for i in range(6):
            edge = np.linalg.norm(positions[(i + 1) % 6] - positions[i])
            assert abs(edge - 8.0) < 1e-6

    def test_equal_offsets_reduce_to_consensus_bitwise(self, dint_model, dint_k,
                                                       dint_l, topo6_chain):
        offsets = np.tile([2.5, 0.0], (6, 1))  # feasibility: (A-I) kills it
        x0 = initial_states(6, 2, seed=5)
        v0 = initial_states(6, 2, seed=6)
        plain = make_system(dint_model, topo6_chain, dint_k, dint_l)
        formed = make_system(dint_model, topo6_chain, dint_k, dint_l,
                             mode="formation", formation=Formation(h=offsets))
        log_a = simulate(plain, x0, v0, steps=200)
        log_b = simulate_formation(formed, x0, v0, steps=200)
        assert np.array_equal(log_a.x, log_b.x)
        assert np.array_equal(log_a.v, log_b.v)
        assert np.array_equal(log_a.consensus_error, log_b.consensus_error)

    def test_infeasible_offsets_rejected(self, topo6_chain):
        model = AgentModel(A=2.0 * np.eye(2), B=np.eye(2), C=np.eye(2))
        offsets = np.array([[0.0, 0.0]] * 5 + [[1.0, 0.0]])
        with pytest.raises(InfeasibleFormationError) as err:
            make_system(model, topo6_chain, np.diag([-1.8, -1.8]), np.zeros((2, 2)),
                        mode="formation", formation=Formation(h=offsets))
        assert "h_" in str(err.value)

    def test_feasibility_follows_drift_kernel(self, planar_dint_model, topo6_chain,
                                              dint_k, dint_l):
        # velocity components in the offsets break (A - I) invariance
        I2 = np.eye(2)
        offsets = np.zeros((6, 4))
        offsets[3, 2] = 1.0
        with pytest.raises(InfeasibleFormationError):
            make_system(planar_dint_model, topo6_chain, np.kron(dint_k, I2),
                        np.kron(dint_l, I2), mode="formation",
                        formation=Formation(h=offsets))


class TestPredictFinalValue:
    def test_integrators_average_initial_states(self, topo6_base):
        model = AgentModel(A=np.eye(1), B=np.eye(1), C=np.eye(1))
        spectrum = analyze_spectrum(topo6_base)
        x0 = initial_states(6, 1, seed=11)
        pred = predict_final_value(model, spectrum, x0, steps=40)
        target = float(spectrum.perron_left_vector @ x0[:, 0])
        assert np.abs(pred - target).max() < 1e-12

    def test_schur_state_matrix_fades(self, topo6_base):
        model = AgentModel(A=0.5 * np.eye(2), B=np.eye(2), C=np.eye(2))
        pred = predict_final_value(model, analyze_spectrum(topo6_base),
                                   initial_states(6, 2, seed=3), steps=60)
        assert np.linalg.norm(pred[-1]) < 1e-15

    def test_requires_spanning_tree(self, dint_model):
        spectrum = analyze_spectrum(validate_topology(np.eye(3)))
        with pytest.raises(NoSpanningTreeError):
            predict_final_value(dint_model, spectrum, np.zeros((3, 2)), steps=5)


class TestTheorem1Behavioral:
    @pytest.mark.parametrize("seed", range(4))
    def test_verdict_agrees_with_simulation(self, seed):
        rng = np.random.default_rng(4000 + seed)
        kept = 0
        while kept < 5:
            instance = draw_theorem1_instance(rng)
            if instance is None:
                continue
            model, topo, K, L, verdict = instance
            kept += 1
            log = run_instance(model, topo, K, L)
            if verdict.ok:
                assert log.consensus_error.min() < 1e-8, "certified instance failed"
            else:
                diverging = log.diverged or \
                    log.consensus_error[min(1000, len(log.consensus_error) - 1):].min() > 1e-4
                assert diverging, "falsified instance converged"


def run_instance(model, topo, K, L, steps=10000):
    # assemble gains without the Schur gate: falsified instances may have
    # an unstable A + BK on purpose
    from dtconsensus.gain_design import METHOD_USER, ProtocolGains
    gains = ProtocolGains(K=K, L=L, method=METHOD_USER)
    system = closed_loop(model, topo, gains)
    x0 = initial_states(topo.n_agents, model.n, seed=777)
    return simulate(system, x0, steps=steps)


def draw_theorem1_instance(rng):
    """Random (model, topology, gains) with the marginal band excluded.

    Instances whose worst closed-loop eigenvalue modulus falls in
    (1 - 5e-3, 1 + 1e-3) are discarded: a finite simulation horizon cannot
    separate slow convergence from marginal behavior there.  Falsified
    instances are also required to have their worst unstable mode grow
    strictly faster than the open-loop state matrix, otherwise the
    normalized disagreement cannot witness the divergence.
    """
    N = int(rng.integers(2, 7))
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    A *= rng.uniform(0.5, 1.3) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    model = AgentModel(A=A, B=rng.normal(size=(n, 1)), C=rng.normal(size=(1, n)))
    K = rng.normal(size=(1, n)) * 0.3
    L = rng.normal(size=(n, 1)) * 0.3
    topo = validate_topology(random_spanning_topology(rng, N))
    spectrum = analyze_spectrum(topo)
    verdict = check_theorem1(model, K, L, spectrum)

    lams = [1.0 - lam for lam in spectrum.eigenvalues]
    lams.remove(min(lams, key=abs))
    rhos = [np.abs(np.linalg.eigvals(model.A + model.B @ K)).max()]
    LC = L @ model.C
    rhos += [np.abs(np.linalg.eigvals(model.A + f * LC)).max() for f in lams]
    worst = max(rhos)
    if 1.0 - 5e-3 < worst < 1.0 + 1e-3:
        return None
    rho_a = np.abs(np.linalg.eigvals(model.A)).max()
    if not verdict.ok and worst < rho_a + 1e-3:
        return None
    return model, topo, K, L, verdict


class TestCsvExports:
    def test_trajectory_csv(self, dint_model, dint_k, dint_l, topo6_chain, tmp_path):
        system = make_system(dint_model, topo6_chain, dint_k, dint_l)
        log = simulate(system, initial_states(6, 2, seed=1), steps=10)
        path = tmp_path / "trajectory.csv"
        trajectory_to_csv(log, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,agent,kind,c0,c1"
        assert len(lines) == 1 + 11 * 6 * 2  # steps x agents x {x, v}

    def test_errors_csv(self, dint_model, dint_k, dint_l, topo6_chain, tmp_path):
        system = make_system(dint_model, topo6_chain, dint_k, dint_l)
        log = simulate(system, initial_states(6, 2, seed=1), steps=10)
        path = tmp_path / "errors.csv"
        errors_to_csv(log, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,consensus_error,formation_error"
        assert len(lines) == 12
        assert lines[1].endswith(",")  # no formation series in observer mode

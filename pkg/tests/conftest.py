"""Shared fixtures: the benchmark models and topologies used across the suite."""
import numpy as np
import pytest

from dtconsensus import AgentModel, validate_topology


# --- oscillator pair with identity output (disconnected region benchmark) ----

@pytest.fixture
def osc_model():
    A = np.array([[0.0, 1.0], [-1.0, 1.02]])
    B = np.array([[1.0], [0.0]])
    C = np.eye(2)
    return AgentModel(A=A, B=B, C=C)


@pytest.fixture
def osc_gains():
    K = np.array([[-0.5, -0.5]])
    L = np.array([[0.0, -1.0], [1.0, 0.0]])
    return K, L


@pytest.fixture
def topo6_base():
    return validate_topology(np.array([
        [0.3, 0.2, 0.2, 0.2, 0.0, 0.1],
        [0.2, 0.6, 0.2, 0.0, 0.0, 0.0],
        [0.2, 0.2, 0.6, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.4, 0.4, 0.0],
        [0.0, 0.0, 0.0, 0.4, 0.2, 0.4],
        [0.1, 0.0, 0.0, 0.0, 0.4, 0.5],
    ]))


@pytest.fixture
def topo6_added_edge():
    # extra information exchange between agents 1 and 5
    return validate_topology(np.array([
        [0.2, 0.2, 0.2, 0.2, 0.1, 0.1],
        [0.2, 0.6, 0.2, 0.0, 0.0, 0.0],
        [0.2, 0.2, 0.6, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.4, 0.4, 0.0],
        [0.1, 0.0, 0.0, 0.4, 0.2, 0.3],
        [0.1, 0.0, 0.0, 0.0, 0.4, 0.5],
    ]))


@pytest.fixture
def topo6_removed_edge():
    # the 5-6 link removed, its weight folded onto the diagonals
    return validate_topology(np.array([
        [0.3, 0.2, 0.2, 0.2, 0.0, 0.1],
        [0.2, 0.6, 0.2, 0.0, 0.0, 0.0],
        [0.2, 0.2, 0.6, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.4, 0.4, 0.0],
        [0.0, 0.0, 0.0, 0.4, 0.6, 0.0],
        [0.1, 0.0, 0.0, 0.0, 0.0, 0.9],
    ]))


# --- neutrally stable third-order model (unit-disk design benchmark) ---------

@pytest.fixture
def neutral_model():
    A = np.array([[0.2, 0.6, 0.0],
                  [-1.4, 0.8, 0.0],
                  [0.7, 0.1, -0.5]])
    B = np.array([[0.0], [1.0], [0.0]])
    C = np.array([[1.0, 0.0, 1.0]])
    return AgentModel(A=A, B=B, C=C)


@pytest.fixture
def neutral_k():
    return np.array([[1.2, -0.9, -0.2]])


# --- double-integrator model (disk-radius design benchmark) ------------------

@pytest.fixture
def dint_model():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    C = np.array([[1.0, 0.0]])
    return AgentModel(A=A, B=B, C=C)


@pytest.fixture
def dint_k():
    return np.array([[-0.5, -1.5]])


@pytest.fixture
def dint_l():
    return np.array([[-1.051], [-0.051]])


@pytest.fixture
def topo6_chain():
    return validate_topology(np.array([
        [0.4, 0.0, 0.0, 0.1, 0.3, 0.2],
        [0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
        [0.3, 0.2, 0.5, 0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.4, 0.4, 0.2],
        [0.0, 0.0, 0.0, 0.0, 0.3, 0.7],
    ]))


# --- planar double integrator + hexagon offsets (formation benchmark) --------

@pytest.fixture
def planar_dint_model(dint_model):
    I2 = np.eye(2)
    return AgentModel(A=np.kron(dint_model.A, I2),
                      B=np.kron(dint_model.B, I2),
                      C=np.kron(dint_model.C, I2))


@pytest.fixture
def hexagon_offsets():
    s3 = np.sqrt(3.0)
    return np.array([
        [0.0, 0.0, 0.0, 0.0],
        [8.0, 0.0, 0.0, 0.0],
        [12.0, 4.0 * s3, 0.0, 0.0],
        [8.0, 8.0 * s3, 0.0, 0.0],
        [0.0, 8.0 * s3, 0.0, 0.0],
        [-4.0, 4.0 * s3, 0.0, 0.0],
    ])

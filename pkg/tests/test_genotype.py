import numpy as np
import pytest
from scipy import stats
from scipy.optimize import minimize

from arqe.errors import DimensionError
from arqe.genotype import (
    Genotype,
    chain,
    codification_gate,
    codification_gates,
    mutate,
    prepared_state,
    protocol_state,
    single_qubit_gate,
)
from arqe.linalg import environment_from_observable, fidelity, measure_computational
from arqe.operators import SX
from arqe.pcf import KnotSet, build_interpolant


def test_single_qubit_gate_examples():
    np.testing.assert_allclose(single_qubit_gate(0, 0, 0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(single_qubit_gate(np.pi, 0, 0), [[0, -1], [1, 0]], atol=1e-15)
    c, s = np.cos(1.0), np.sin(1.0)
    np.testing.assert_allclose(
        single_qubit_gate(2.0, np.pi / 2, np.pi), [[c, -1j * s], [-s, -1j * c]], atol=1e-15
    )


def test_single_qubit_gate_unitary_and_batched():
    rng = np.random.default_rng(0)
    a = rng.uniform(-10, 10, (50, 3))
    U = single_qubit_gate(a[:, 0], a[:, 1], a[:, 2])
    assert U.shape == (50, 2, 2)
    err = np.abs(U @ np.conj(np.swapaxes(U, 1, 2)) - np.eye(2)).max()
    assert err < 1e-14


def test_genotype_validation_and_json():
    with pytest.raises(DimensionError):
        Genotype((0.0, 0.0), 0, 2)
    with pytest.raises(DimensionError):
        Genotype((0.0,) * 3, 2, 2)
    g = Genotype((0.1, -7.0, 3.0), 1, 2)
    assert Genotype.from_json(g.to_json()) == g
    assert Genotype.zero(4, 2).angles == (0.0,) * 7


def test_chain_order():
    assert chain(4, 0) == [0, 1, 2, 3]
    assert chain(4, 2) == [2, 0, 1, 3]


def test_zero_angles_identity():
    np.testing.assert_allclose(codification_gate(Genotype.zero(2)), np.eye(2), atol=1e-15)
    for j in range(4):
        g = Genotype.zero(4, j)
        np.testing.assert_allclose(codification_gate(g), np.eye(4), atol=1e-15)
        np.testing.assert_allclose(prepared_state(g), np.eye(4)[j], atol=1e-15)


def test_codification_gates_angle_count():
    with pytest.raises(DimensionError):
        codification_gates(np.zeros(5), 0, 4)


def test_gates_unitary_for_random_genotypes():
    rng = np.random.default_rng(1)
    for d in (2, 4):
        a = rng.uniform(-20, 20, (1000, 2 * d - 1))
        for j in range(d):
            G = codification_gates(a, j, d)
            err = np.abs(G @ np.conj(np.swapaxes(G, 1, 2)) - np.eye(d)).max()
            assert err < 1e-12


def test_two_pi_periodicity():
    rng = np.random.default_rng(2)
    U = environment_from_observable(np.diag([0.3, 1.1, 2.0, 2.9]) + 0.2)
    for d, env in ((2, environment_from_observable(SX)), (4, U)):
        g = Genotype(tuple(rng.uniform(-3, 3, 2 * d - 1)), 1, d)
        base = protocol_state(g, env)
        for k in range(2 * d - 1):
            shifted = list(g.angles)
            shifted[k] += 2 * np.pi
            psi = protocol_state(Genotype(tuple(shifted), 1, d), env)
            assert abs(fidelity(base, psi) - 1) < 1e-12


def fit_state(target, j, d, rng):
    """Nelder-Mead plus BFGS polish on 1 - F from random starts."""
    best = np.inf
    for _ in range(8):
        loss = lambda a: 1 - abs(np.vdot(target, codification_gates(a, j, d)[:, j])) ** 2  # noqa: E731
        res = minimize(loss, rng.uniform(0, 2 * np.pi, 2 * d - 1), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 20000})
        res = minimize(loss, res.x, method="BFGS")
        best = min(best, res.fun)
        if best < 1e-8:
            break
    return best


def test_expressivity_eigenvector():
    target = np.ones(4, dtype=complex) / 2
    assert fit_state(target, 0, 4, np.random.default_rng(3)) < 1e-6


def test_expressivity_random_states():
    rng = np.random.default_rng(4)
    for k in range(50):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert fit_state(v / np.linalg.norm(v), k % 4, 4, rng) < 1e-4


def test_mutate_alive_returns_same():
    g = Genotype((0.3, 0.2, 0.1), 0, 2)
    sampler = build_interpolant(KnotSet.uniform())
    assert mutate(g, sampler, True, np.random.default_rng(0)) is g


def test_mutate_forced_half():
    # collinear knots map u=0.75 to eps=0.5
    class Always:
        def random(self, n):
            return np.full(n, 0.75)

    g = mutate(Genotype.zero(2), build_interpolant(KnotSet.uniform()), False, Always())
    np.testing.assert_allclose(g.angles, [np.pi / 2] * 3, atol=1e-12)


def test_mutation_increments_uniform():
    rng = np.random.default_rng(5)
    sampler = build_interpolant(KnotSet.uniform())
    g = Genotype.zero(2)
    steps = []
    for _ in range(100_000 // 3 + 1):
        steps.extend(mutate(g, sampler, False, rng).angles)
    steps = np.array(steps[:100_000]) / np.pi
    assert np.all(np.abs(steps) <= 1)
    assert stats.kstest(steps, "uniform", args=(-1, 2)).pvalue > 1e-3


def test_protocol_state_examples():
    rng = np.random.default_rng(6)
    g = Genotype(tuple(rng.uniform(-3, 3, 7)), 2, 4)
    np.testing.assert_allclose(protocol_state(g, np.eye(4)), np.eye(4)[2], atol=1e-12)
    psi = protocol_state(Genotype.zero(2), environment_from_observable(SX))
    assert abs(psi[0]) ** 2 == pytest.approx(np.cos(1.0) ** 2, abs=1e-12)
    with pytest.raises(DimensionError):
        protocol_state(g, np.eye(2))


def test_eigenvector_individual_always_survives():
    # G|0> = (|0>+|1>)/sqrt2 is an eigenvector of exp(-i sigma_x)
    g = Genotype((np.pi / 2, np.pi, 0.0), 0, 2)
    psi = protocol_state(g, environment_from_observable(SX))
    assert abs(psi[0]) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_survival_frequency_matches_overlap():
    rng = np.random.default_rng(7)
    g = Genotype((1.1, 0.4, -0.3), 0, 2)
    psi = protocol_state(g, environment_from_observable(SX + 0.3 * np.diag([1, -1])))
    p = abs(psi[0]) ** 2
    n = 100_000
    alive = sum(measure_computational(psi, u) == 0 for u in rng.random(n))
    assert abs(alive / n - p) <= 4 * np.sqrt(p * (1 - p) / n)

"""Smoke tests for the python bindings."""

import math

import pytest

import capalloc as ca


@pytest.fixture
def pair():
    return [ca.AgentParams(alpha=10.0, beta=1.0, id=0), ca.AgentParams(alpha=10.0, beta=1.0, id=1)]


@pytest.fixture
def contract():
    return ca.ContractParams(capacity_m=8.0, fee_tau=0.0, fee_g=0.0)


def test_agent_primitives(pair, contract):
    a = pair[0]
    assert ca.valuation(a, 9.0) == pytest.approx(10.0 * math.log(10.0))
    assert ca.cost(a, 9.0) == 9.0
    assert ca.best_response(a, contract, 0.0) == pytest.approx(9.0)
    assert ca.demand_upper_bound(a) == pytest.approx(9.0)
    assert ca.payoff(a, contract, 0.0, 0.0) == 0.0


def test_bisection_clears_the_canonical_instance(pair, contract):
    sol = ca.clear_bisection(pair, contract, 1e-12)
    assert sol.converged
    assert sol.mu_star == pytest.approx(1.0, abs=1e-9)
    assert sol.allocations == pytest.approx([4.0, 4.0], abs=1e-9)


def test_decentralized_matches_oracle(pair, contract):
    cfg = ca.AlgoConfig(gamma=1e-6, tol_dual=1e-10)
    sol = ca.clear_decentralized(pair, contract, cfg, 1)
    assert sol.converged
    assert sol.mu_star == pytest.approx(1.0, abs=1e-5)
    assert len(sol.trace) == sol.iterations


def test_mechanism_dispatch(pair, contract):
    alloc = ca.allocate(ca.MechanismKind.proposed(), pair, contract, ca.AlgoConfig(gamma=1e-6), 3)
    assert alloc.feasible
    assert alloc.quantities == pytest.approx([4.0, 4.0], abs=1e-4)
    assert alloc.unit_price == pytest.approx(1.0, abs=1e-4)

    wild = ca.allocate(ca.MechanismKind.no_enforcement(), pair, contract, ca.AlgoConfig(), 3)
    assert not wild.feasible
    assert wild.capacity_violation == pytest.approx(10.0)


def test_metrics():
    assert ca.gini([0.0, 4.0]) == pytest.approx(0.5)
    assert ca.gini([1.0, 2.0, 3.0]) == pytest.approx(0.2222, abs=1e-4)
    agents = [ca.AgentParams(alpha=10.0, beta=1.0)]
    c = ca.ContractParams(capacity_m=10.0, fee_tau=0.0, fee_g=1.0)
    assert ca.efficiency([9.0], agents, c) == pytest.approx(13.02585, abs=1e-5)
    assert ca.resilience(2.0, 1.5) == pytest.approx(0.75)
    assert ca.resilience(0.0, 1.0) is None


def test_validation_errors_surface_as_python_exceptions():
    with pytest.raises(ValueError):
        ca.AgentParams(alpha=-1.0, beta=1.0)
    with pytest.raises(Exception):
        ca.gini([])


def test_stochastic_determinism(pair, contract):
    cfg = ca.AlgoConfig(eta0=0.5, exponent=0.5, noise_sigma=0.5, mc_samples=4, max_iters=500)
    a = ca.clear_stochastic(pair, contract, cfg, 42)
    b = ca.clear_stochastic(pair, contract, cfg, 42)
    assert a.mu_star == b.mu_star

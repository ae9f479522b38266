"""Order-by-order expansion, bound fit, combinatorial constant and net lower bound."""

import numpy as np
import pytest

from nsinflation.construction import DataFamilyParams, build_initial_data
from nsinflation.field_rep import GridSpec, MemoryCapExceeded
from nsinflation.picard_hierarchy import (chebyshev_lobatto, combinatorial_maximum,
                                          compute_hierarchy, fit_order_bounds,
                                          theta_lower_total, u_equation_residual)

FAMILY = DataFamilyParams(3, 0.25, 2)


@pytest.fixture(scope="module")
def data():
    return build_initial_data(FAMILY, GridSpec(tail_tol=1e-3))


@pytest.fixture(scope="module")
def state(data):
    return compute_hierarchy(data, 3, family=FAMILY)


def test_collocation_nodes():
    t = chebyshev_lobatto(2.0)
    assert t[0] == 0.0 and t[-1] == 2.0 and t.size == 9 and np.all(np.diff(t) > 0)


def test_rejects_bad_inputs(data):
    with pytest.raises(ValueError):
        compute_hierarchy(data, 0, family=FAMILY)
    with pytest.raises(ValueError):
        compute_hierarchy(data, 2, t_grid=np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        compute_hierarchy(data, 2, t_grid=np.array([0.0, 2 * FAMILY.T_N]), family=FAMILY)


def test_amplitude_homogeneity(data, state):
    half = compute_hierarchy(data.scaled(0.5), 3, family=FAMILY)
    for k in (1, 2, 3):
        for name in ("U", "Theta", "P", "dU"):
            a = state.coefficients(name, k)
            b = half.coefficients(name, k)
            scale = max(np.max(np.abs(a)), 1e-300)
            assert np.max(np.abs(2 ** k * b - a)) <= 1e-8 * scale


@pytest.mark.parametrize("name,k", [("U", 1), ("U", 2), ("Theta", 2), ("U", 3), ("Theta", 3)])
def test_time_derivative_is_second_order_consistent(state, name, k):
    i = 4
    t0 = state.t_grid[i]
    exact = state.coefficients("d" + name, k, i)
    errs = []
    for h in (0.02 * state.T, 0.01 * state.T):
        fd = (state.field_at(name, k, t0 + h) - state.field_at(name, k, t0 - h)) / (2 * h)
        errs.append(np.max(np.abs(fd - exact)) / np.max(np.abs(exact)))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=1e-2)
    node = state.field_at(name, k, t0)
    assert np.max(np.abs(node - state.coefficients(name, k, i))) < 1e-13 * np.max(np.abs(node))


def test_truncated_expansion_residual_scales_with_next_order(data, state):
    half = compute_hierarchy(data.scaled(0.5), 3, family=FAMILY)
    for order in (1, 2, 3):
        ratio = u_equation_residual(state, order) / u_equation_residual(half, order)
        assert ratio == pytest.approx(2.0 ** (order + 1), rel=1e-3)


def test_support_claim(state):
    for k in (1, 2, 3):
        assert state.support_defect("U", k) <= 1e-10


def test_zero_data_gives_zero_orders(data):
    z = compute_hierarchy(data.scaled(0.0), 3, family=FAMILY)
    orders = z.summary()["orders"]
    assert all(v == 0.0 for k in orders for name in orders[k] for v in orders[k][name])


def test_first_order_fit(data):
    fit = fit_order_bounds(compute_hierarchy(data, 1, family=FAMILY))
    assert fit.c1 == 1.0 and fit.c2 >= 1.0
    assert fit.per_order[1] == pytest.approx(1.0)
    assert fit.ratios == {}


def test_memory_cap_is_enforced():
    tiny = build_initial_data(FAMILY, GridSpec(tail_tol=1e-3, memory_cap=10_000))
    with pytest.raises(MemoryCapExceeded):
        compute_hierarchy(tiny, 3, family=FAMILY)


def test_fit_and_net_lower_bound(state):
    fit = fit_order_bounds(state)
    assert all(v <= 1 + 1e-9 for v in fit.margins.values())
    low = theta_lower_total(state, fit)
    assert low.theta2 > 0 and set(low.higher) == {3}
    assert low.net == pytest.approx(low.theta2 - low.higher[3] - low.tail)


def test_dump_fields_round_trip(state, tmp_path):
    from nsinflation.field_rep import GridField

    paths = state.dump_fields(tmp_path)
    assert paths
    g = GridField.load(paths[0])
    assert g.values.ndim == 3 and np.all(np.isfinite(g.values))


def test_combinatorial_maximum_is_deterministic():
    v1, k1 = combinatorial_maximum(200)
    v2, k2 = combinatorial_maximum(200)
    assert (v1, k1) == (v2, k2) and np.isfinite(v1)
    # direct double loop at small kmax
    best = max((1 + k) ** 4 / (k - 1) * sum(a * (k - a) * (1 + a) ** -4 * (1 + k - a) ** -4
                                            for a in range(1, k))
               for k in range(2, 60))
    assert combinatorial_maximum(59)[0] == pytest.approx(best, rel=1e-12)

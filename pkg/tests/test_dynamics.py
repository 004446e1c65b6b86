import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hiermarket.dynamics import (
    PRESETS,
    MarketState,
    ModelParams,
    excess_demand,
    excess_profits,
    initial_state,
    preset,
    price_move_probabilities,
    price_trend,
    price_update,
    simulate,
    step,
    transition_pressures,
    transition_probabilities,
    with_overrides,
)
from hiermarket.hierarchy import HierarchyParams
from hiermarket.seeding import derive, generator

from oracles import mean_field_run

SET_II, HIER_II = preset("SET_II")


def market(price=10.0, n=(0, 0, 0), p_f=10.0):
    return MarketState(price=price, fundamental=p_f, history=np.array([price]),
                       n_o=n[0], n_p=n[1], n_f=n[2])


# -- presets and validation ---------------------------------------------------


def test_presets_are_complete():
    assert set(PRESETS) == {"SET_II", "SET_III", "SET_IV"}
    m, h = preset("set_iv")
    assert (h.L, h.k, h.phi, h.omega, h.upsilon) == (5, 5, 0.5, 1.0, 1.0)
    assert m.alpha2 == 0.2 and m.v1 == 2.0 and m.mu_noise == 0.05
    with pytest.raises(ValueError):
        preset("SET_V")


@pytest.mark.parametrize("bad", [dict(s=1.5), dict(s=0.0), dict(dt=0.0), dict(p_f=-1.0),
                                 dict(tick=0.0), dict(mu_noise=-0.1), dict(alpha2=float("inf"))])
def test_model_params_validation(bad):
    with pytest.raises(ValueError):
        replace(SET_II, **bad)


def test_trend_lag_and_time_scale():
    assert SET_II.trend_lag == 1
    assert SET_II.steps_per_unit_time == 100
    assert replace(SET_II, dt_prime=0.05).trend_lag == 5


def test_with_overrides_routes_fields():
    m, h = with_overrides(SET_II, HIER_II, b=2.0, gamma=0.5)
    assert h.b == 2.0 and m.gamma == 0.5
    with pytest.raises(KeyError):
        with_overrides(SET_II, HIER_II, nonsense=1)


# -- single equations ---------------------------------------------------------


def test_price_trend_examples():
    assert price_trend([10.0, 10.0, 10.0], SET_II) == 0.0
    assert price_trend([10.00, 10.02], SET_II) == pytest.approx(10.0, rel=1e-12)
    assert price_trend([9.9, 10.0, 10.1], SET_II) > 0


def test_excess_profits_examples():
    p = replace(SET_II, s=0.75)
    assert excess_profits(8.0, 0.0, p)[0] == pytest.approx(0.1875)
    ep_f, ep_plus, ep_minus = excess_profits(10.0, 0.0, SET_II)
    assert ep_f == 0.0
    assert ep_plus == pytest.approx(0.0, abs=1e-18)
    assert ep_minus == pytest.approx(0.0, abs=1e-18)
    with pytest.raises(ValueError):
        excess_profits(0.0, 0.0, SET_II)


@given(st.floats(0.01, 1e4), st.floats(-1e4, 1e4))
def test_excess_profits_antisymmetric(price, pdot):
    _, ep_plus, ep_minus = excess_profits(price, pdot, SET_II)
    assert ep_plus + ep_minus == 0.0


def test_pressure_examples():
    h2 = replace(HIER_II, b=2.0)
    p = replace(SET_II, alpha2=0.2)
    u1, u21, u22 = transition_pressures((0.75, 0.25), 0.0, (0.1, 0.1, -0.1), p, h2)
    assert u1 == pytest.approx(1.0)
    assert u21 == 0.0
    assert u22 == pytest.approx(p.alpha3 * 0.2)
    assert transition_pressures((0.3, 0.3), 0.0, (0, 0, 0), p, h2)[0] == 0.0
    # chartist-free community: the opinion term vanishes instead of dividing by zero
    assert transition_pressures((0.0, 0.0), 0.0, (0, 0, 0), p, h2)[0] == 0.0


def test_probability_examples():
    pr = transition_probabilities((300, 325, 0), (0.0, 0.0, 0.0), SET_II)
    assert pr["o->p"] == pytest.approx(0.04)
    assert pr["o->p"] == pr["p->o"]
    assert pr["f->o"] == pr["f->p"] == 0.0


def test_all_fundamentalist_exit_rate():
    pr = transition_probabilities((0, 0, 625), (0.0, 0.0, 0.0), SET_II)
    assert pr["f->o"] == pytest.approx(0.01)
    assert pr["f->p"] == pytest.approx(0.01)


def test_exit_pairs_renormalised():
    pr = transition_probabilities((200, 200, 225), (0.0, -600.0, 0.0), SET_II)
    assert pr["o->f"] + pr["o->p"] == pytest.approx(1.0)
    for v in pr.values():
        assert 0.0 <= v <= 1.0
    with pytest.raises(ValueError):
        transition_probabilities((0, 0, 0), (0, 0, 0), SET_II)


@given(st.floats(-5, 5), st.floats(0.01, 3))
def test_pressure_monotonicity(u1, du):
    lo = transition_probabilities((200, 200, 225), (u1, 0, 0), SET_II, clamp=False)
    hi = transition_probabilities((200, 200, 225), (u1 + du, 0, 0), SET_II, clamp=False)
    assert hi["p->o"] > lo["p->o"]
    assert hi["o->p"] < lo["o->p"]


def test_excess_demand_examples():
    assert excess_demand(market(n=(200, 200, 225)), SET_II) == (0.0, 0.0)
    ed_c, _ = excess_demand(market(n=(300, 200, 0)), replace(SET_II, t_c=0.015))
    assert ed_c == pytest.approx(1.5)
    _, ed_f = excess_demand(market(price=12.0, n=(0, 0, 100)), replace(SET_II, gamma=0.01))
    assert ed_f == pytest.approx(-2.0)


def test_price_move_probability_examples():
    p = replace(SET_II, beta_price=4.0, dt=0.01)
    up, down = price_move_probabilities(1.5, 0.0, 0.0, p)
    assert up == pytest.approx(0.06) and down == 0.0
    up, down = price_move_probabilities(-0.5, 0.0, 0.0, p)
    assert up == 0.0 and down == pytest.approx(0.02)
    assert price_move_probabilities(1e6, 0.0, 0.0, p) == (1.0, 0.0)


def test_quiet_market_price_is_frozen():
    p = replace(SET_II, mu_noise=0.0)
    rng = generator(3)
    for _ in range(100):
        assert price_update(market(n=(200, 200, 225)), 0.0, 0.0, p, rng) == 10.0


def test_price_moves_one_tick_and_is_floored():
    p = replace(SET_II, mu_noise=0.0, beta_price=1e6)
    assert price_update(market(price=10.0), 1.0, 0.0, p, generator(0)) == pytest.approx(10.01)
    assert price_update(market(price=0.01), -1.0, 0.0, p, generator(0)) == 0.01


# -- whole-market behaviour -----------------------------------------------------


def test_initial_state_is_symmetric():
    tree, state = initial_state(SET_II, HIER_II, generator(0))
    assert state.n_o == state.n_p == 208 and state.n_f == 209
    assert state.price == SET_II.p_f
    assert tree.role_counts() == (208, 208, 209)


def test_simulate_is_deterministic():
    a = simulate(SET_II, HIER_II, 3000, 42)
    b = simulate(SET_II, HIER_II, 3000, 42)
    np.testing.assert_array_equal(a.price, b.price)
    np.testing.assert_array_equal(a.n_o, b.n_o)
    c = simulate(SET_II, HIER_II, 3000, 43)
    assert not np.array_equal(a.n_o, c.n_o)


def test_seed_sequence_and_int_seeds_agree_with_generator():
    ss = derive(1, "x", 0)
    a = simulate(SET_II, HIER_II, 500, ss)
    b = simulate(SET_II, HIER_II, 500, derive(1, "x", 0))
    np.testing.assert_array_equal(a.price, b.price)


def test_frozen_trajectory():
    run = simulate(SET_II, HIER_II, 3000, 20240601)
    assert run.price[-5:].tolist() == [9.17] * 5
    assert (run.n_o[-1], run.n_p[-1], run.n_f[-1]) == (133, 296, 196)
    assert run.price.max() == 10.0


def test_chunking_does_not_change_results():
    # 5000 steps span three internal chunks; prefix must match a shorter run
    long = simulate(SET_II, HIER_II, 5000, 9)
    short = simulate(SET_II, HIER_II, 2048, 9)
    np.testing.assert_array_equal(long.price[:2048], short.price)


@given(st.integers(0, 2**32))
def test_conservation_and_positivity(seed):
    run = simulate(replace(SET_II, p_f=0.05), HIER_II, 1500, seed)
    assert np.all(run.n_o + run.n_p + run.n_f == 625)
    assert np.all(run.price >= SET_II.tick - 1e-12)


def test_step_advances_one_step():
    tree, state = initial_state(SET_II, HIER_II, generator(5))
    rng = generator(6)
    for t in range(50):
        step(tree, state, SET_II, HIER_II, rng, t=t)
        assert state.n_o + state.n_p + state.n_f == 625
        assert tree.role_counts() == (state.n_o, state.n_p, state.n_f)


def test_phi_is_irrelevant_without_herding():
    m = SET_II
    a = simulate(m, replace(HIER_II, b=0.0, phi=0.1), 2000, 11)
    b = simulate(m, replace(HIER_II, b=0.0, phi=5.0), 2000, 11)
    np.testing.assert_array_equal(a.price, b.price)
    np.testing.assert_array_equal(a.n_o, b.n_o)


def test_chartist_symmetry_with_frozen_price():
    p = replace(SET_II, beta_price=0.0, mu_noise=0.0)
    n_o, n_p = [], []
    for i in range(200):
        run = simulate(p, HIER_II, 200, derive(77, "sym", i))
        assert np.all(run.price == p.p_f)
        n_o.append(run.n_o[-1])
        n_p.append(run.n_p[-1])
    assert stats.ks_2samp(n_o, n_p).pvalue > 0.01


def test_no_herding_matches_mean_field_reference():
    m = replace(SET_II, mu_noise=0.1)
    h = replace(HIER_II, b=0.0)
    steps, runs = 300, 60
    pkg = [simulate(m, h, steps, derive(5, "pkg", i)) for i in range(runs)]
    ref = [mean_field_run(m, 625, steps, np.random.default_rng([5, i])) for i in range(runs)]
    for col in range(3):
        a = [(r.n_o, r.n_p, r.n_f)[col][-1] for r in pkg]
        b = [c[-1, col] for _, c in ref]
        assert stats.ks_2samp(a, b).pvalue > 0.01, col
    assert stats.ks_2samp([r.price[-1] for r in pkg], [p[-1] for p, _ in ref]).pvalue > 0.01


def test_series_shape_checks():
    run = simulate(SET_II, HIER_II, 1000, 1)
    assert run.steps == 1000
    assert run.downsampled_prices().size == 10
    assert run.downsampled_prices()[0] == run.price[99]
    with pytest.raises(ValueError):
        simulate(SET_II, HIER_II, 0, 1)


def test_hierarchy_size_is_configurable():
    run = simulate(SET_II, HierarchyParams(L=3, k=4, b=1.0), 500, 3)
    assert np.all(run.n_o + run.n_p + run.n_f == 16)
    assert math.isfinite(run.price.mean())

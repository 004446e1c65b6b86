"""Compiled inner loops shared by the public operations.

Everything here works on plain arrays and scalars so that numba can compile
it. The public modules unpack their dataclasses and call into these; the
simulation loop composes the same functions, so there is exactly one
implementation of each equation.

Node layout: community nodes are stored level by level, root first, in an
``(n_communities, 3)`` array of ``[o, p, f]``. Global index ``i`` has children
``k*i + 1 .. k*i + k`` and parent ``(i - 1) // k``; global indices at or above
``n_communities`` are trader leaves.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OPTIMIST = 0
PESSIMIST = 1
FUNDAMENTALIST = 2

ECHO_OFF = 0
ECHO_ASYMMETRIC = 1
ECHO_SYMMETRIC = 2

OPINION_EPS = 1e-12


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------


@njit(cache=True)
def leaf_vectors(roles, nodes, n_communities, k, omega, upsilon, echo_mode, echo_E, out):
    """Fill ``out[j]`` with the [o, p, f] contribution of trader ``j``.

    Echo majorities are read from ``nodes`` as passed in, which during a
    simulation step still holds the previous step's post-forward state.
    """
    for j in range(roles.shape[0]):
        out[j, 0] = 0.0
        out[j, 1] = 0.0
        out[j, 2] = 0.0
        role = roles[j]
        if role == FUNDAMENTALIST:
            out[j, 2] = 1.0
            continue
        q = (n_communities + j - 1) // k
        if role == OPTIMIST:
            w = omega
            if echo_mode != ECHO_OFF and nodes[q, 0] > nodes[q, 1]:
                w = omega * echo_E
            out[j, 0] = w
        else:
            u = upsilon
            if echo_mode == ECHO_SYMMETRIC and nodes[q, 1] > nodes[q, 0]:
                u = upsilon * echo_E
            out[j, 1] = u


@njit(cache=True)
def backward(nodes, leaves, k):
    n_c = nodes.shape[0]
    for i in range(n_c - 1, -1, -1):
        first = k * i + 1
        for c in range(3):
            acc = 0.0
            for child in range(first, first + k):
                if child >= n_c:
                    acc += leaves[child - n_c, c]
                else:
                    acc += nodes[child, c]
            nodes[i, c] = acc / k


@njit(cache=True)
def forward(nodes, k, phi, corrupt_node, signal):
    """Top-down blend ``C' = C/2 + phi * Q``; the root keeps its state.

    When ``corrupt_node >= 0`` that node emits ``[S*(o+p+f), p, f]`` to its
    children instead of its stored state.
    """
    emitted = np.empty(3)
    for i in range(1, nodes.shape[0]):
        q = (i - 1) // k
        if q == corrupt_node:
            emitted[0] = signal * (nodes[q, 0] + nodes[q, 1] + nodes[q, 2])
            emitted[1] = nodes[q, 1]
            emitted[2] = nodes[q, 2]
        else:
            emitted[0] = nodes[q, 0]
            emitted[1] = nodes[q, 1]
            emitted[2] = nodes[q, 2]
        for c in range(3):
            nodes[i, c] = 0.5 * nodes[i, c] + phi * emitted[c]


# ---------------------------------------------------------------------------
# market equations
# ---------------------------------------------------------------------------


@njit(cache=True)
def price_trend(p_now, p_lagged, dt_prime):
    return (p_now - p_lagged) / dt_prime


@njit(cache=True)
def excess_profits(price, pdot, p_f, s, r, R, v2):
    ep_f = s * abs((p_f - price) / price)
    ep_plus = (r + pdot / v2) / price - R
    ep_minus = R - (r + pdot / v2) / price
    return ep_f, ep_plus, ep_minus


@njit(cache=True)
def opinion_term(c_o, c_p):
    total = c_o + c_p
    if total < OPINION_EPS:
        return 0.0
    return (c_o - c_p) / total


@njit(cache=True)
def pressures(c_o, c_p, pdot, ep_f, ep_plus, ep_minus, alpha2, alpha3, v1, b):
    u21 = alpha3 * (ep_f - ep_plus)
    u22 = alpha3 * (ep_f - ep_minus)
    u1 = b * opinion_term(c_o, c_p) + alpha2 * pdot / v1
    return u1, u21, u22


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def exit_pair(a, b):
    """Clamp two exit probabilities and rescale them if they sum past one."""
    a = _clamp01(a)
    b = _clamp01(b)
    total = a + b
    if total > 1.0:
        a = a / total
        b = b / total
    return a, b


@njit(cache=True)
def raw_probabilities(n_o, n_p, n_f, u1, u21, u22, v1, v2, dt):
    """Unclamped o->p, p->o, o->f, f->o, p->f, f->p transition probabilities."""
    n = n_o + n_p + n_f
    n_c = n_o + n_p
    o_p = v1 * (n_c / n) * math.exp(-u1) * dt
    p_o = v1 * (n_c / n) * math.exp(u1) * dt
    o_f = v2 * (n_o / n) * math.exp(-u21) * dt
    f_o = v2 * (n_f / n) * math.exp(u21) * dt
    p_f = v2 * (n_p / n) * math.exp(-u22) * dt
    f_p = v2 * (n_f / n) * math.exp(u22) * dt
    return o_p, p_o, o_f, f_o, p_f, f_p


@njit(cache=True)
def excess_demand(n_o, n_p, n_f, t_c, gamma, p_f, price):
    return (n_o - n_p) * t_c, n_f * gamma * (p_f - price)


@njit(cache=True)
def price_move_probabilities(ed_c, ed_f, noise, beta, dt):
    pressure = beta * (ed_c + ed_f + noise)
    up = _clamp01(max(0.0, pressure) * dt)
    down = _clamp01(max(0.0, -pressure) * dt)
    return up, down


@njit(cache=True)
def apply_price_move(price, up, down, u, tick):
    # dividing by the tick count per unit keeps decimal ticks on their shortest repr
    per_unit = 1.0 / tick
    if up > 0.0 and u < up:
        price = round(price * per_unit + 1.0) / per_unit
    elif down > 0.0 and u < down:
        price = round(price * per_unit - 1.0) / per_unit
    if price < tick:
        price = tick
    return price


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------


@njit(cache=True)
def run_steps(
    nodes,
    roles,
    leafbuf,
    history,
    state,
    k,
    model,
    hier,
    echo_mode,
    echo_E,
    pnd_target,
    pnd_T0,
    pnd_T1,
    pnd_S,
    step0,
    u_traders,
    noise,
    u_price,
    out_price,
    out_counts,
):
    """Advance ``u_traders.shape[0]`` steps in place.

    ``state`` is ``[price, history_pos]``; ``history`` is a ring of the last
    ``len(history)`` prices. ``model`` packs ModelParams in the order
    alpha2, alpha3, v1, v2, beta, r, R, s, p_f, gamma, t_c, dt, dt_prime, tick
    and ``hier`` packs b, phi, omega, upsilon.
    """
    alpha2 = model[0]
    alpha3 = model[1]
    v1 = model[2]
    v2 = model[3]
    beta = model[4]
    r = model[5]
    R = model[6]
    s = model[7]
    p_f = model[8]
    gamma = model[9]
    t_c = model[10]
    dt = model[11]
    dt_prime = model[12]
    tick = model[13]
    b = hier[0]
    phi = hier[1]
    omega = hier[2]
    upsilon = hier[3]

    n_c_nodes = nodes.shape[0]
    n_t = roles.shape[0]
    lag = history.shape[0]
    first_bottom = n_c_nodes - n_t // k
    n_bottom = n_t // k
    u1_local = np.empty(n_bottom)

    counts = np.zeros(3, dtype=np.int64)
    for j in range(n_t):
        counts[roles[j]] += 1

    price = state[0]
    pos = int(state[1])

    for t in range(u_traders.shape[0]):
        step = step0 + t

        leaf_vectors(roles, nodes, n_c_nodes, k, omega, upsilon, echo_mode, echo_E, leafbuf)
        backward(nodes, leafbuf, k)
        corrupt = -1
        if pnd_target >= 0 and step >= pnd_T0 and step < pnd_T1:
            corrupt = pnd_target
        forward(nodes, k, phi, corrupt, pnd_S)

        pdot = price_trend(price, history[pos], dt_prime)
        ep_f, ep_plus, ep_minus = excess_profits(price, pdot, p_f, s, r, R, v2)
        n_o = counts[OPTIMIST]
        n_p = counts[PESSIMIST]
        n_f = counts[FUNDAMENTALIST]

        for q in range(n_bottom):
            node = first_bottom + q
            u1, u21, u22 = pressures(
                nodes[node, 0], nodes[node, 1], pdot, ep_f, ep_plus, ep_minus,
                alpha2, alpha3, v1, b,
            )
            u1_local[q] = u1

        for q in range(n_bottom):
            o_p, p_o, o_f, f_o, p_fd, f_p = raw_probabilities(
                n_o, n_p, n_f, u1_local[q], u21, u22, v1, v2, dt
            )
            o_p, o_f = exit_pair(o_p, o_f)
            p_o, p_fd = exit_pair(p_o, p_fd)
            f_o, f_p = exit_pair(f_o, f_p)
            for j in range(q * k, q * k + k):
                u = u_traders[t, j]
                role = roles[j]
                if role == OPTIMIST:
                    if u < o_p:
                        roles[j] = PESSIMIST
                    elif u < o_p + o_f:
                        roles[j] = FUNDAMENTALIST
                elif role == PESSIMIST:
                    if u < p_o:
                        roles[j] = OPTIMIST
                    elif u < p_o + p_fd:
                        roles[j] = FUNDAMENTALIST
                else:
                    if u < f_o:
                        roles[j] = OPTIMIST
                    elif u < f_o + f_p:
                        roles[j] = PESSIMIST

        counts[0] = 0
        counts[1] = 0
        counts[2] = 0
        for j in range(n_t):
            counts[roles[j]] += 1

        ed_c, ed_f = excess_demand(
            counts[OPTIMIST], counts[PESSIMIST], counts[FUNDAMENTALIST], t_c, gamma, p_f, price
        )
        up, down = price_move_probabilities(ed_c, ed_f, noise[t], beta, dt)
        history[pos] = price
        pos = (pos + 1) % lag
        price = apply_price_move(price, up, down, u_price[t], tick)

        out_price[t] = price
        out_counts[t, 0] = counts[0]
        out_counts[t, 1] = counts[1]
        out_counts[t, 2] = counts[2]

    state[0] = price
    state[1] = pos


# ---------------------------------------------------------------------------
# right-tailed unit-root scans (intercept, no lagged differences)
# ---------------------------------------------------------------------------


@njit(cache=True)
def df_prefix_sums(y):
    """Prefix sums over t of x=y[t-1], z=y[t]-y[t-1] for the Dickey-Fuller fit.

    Row ``t`` holds sums over observations ``1..t``; row 0 is zero.
    """
    n = y.shape[0]
    out = np.zeros((n, 5))
    for t in range(1, n):
        x = y[t - 1]
        z = y[t] - y[t - 1]
        out[t, 0] = out[t - 1, 0] + x
        out[t, 1] = out[t - 1, 1] + z
        out[t, 2] = out[t - 1, 2] + x * x
        out[t, 3] = out[t - 1, 3] + x * z
        out[t, 4] = out[t - 1, 4] + z * z
    return out


@njit(cache=True)
def df_window_stat(sums, start, end):
    """t-statistic of rho for the window of observations ``start..end`` inclusive."""
    m = end - start
    if m < 3:
        return np.nan
    sx = sums[end, 0] - sums[start, 0]
    sz = sums[end, 1] - sums[start, 1]
    sxx = sums[end, 2] - sums[start, 2]
    sxz = sums[end, 3] - sums[start, 3]
    szz = sums[end, 4] - sums[start, 4]
    mx = sx / m
    mz = sz / m
    cxx = sxx - m * mx * mx
    cxz = sxz - m * mx * mz
    czz = szz - m * mz * mz
    if cxx <= 1e-12 * max(sxx, 1e-300):
        return np.nan
    rho = cxz / cxx
    rss = czz - rho * cxz
    if rss <= 1e-12 * max(szz, 1e-300):
        # perfect fit: the statistic is only defined when rho vanishes
        if abs(rho) * math.sqrt(cxx) <= 1e-9 * math.sqrt(max(szz, 1e-300)):
            return 0.0
        return np.nan
    s2 = rss / (m - 2)
    return rho / math.sqrt(s2 / cxx)


@njit(cache=True)
def sadf_scan(y, min_window):
    n = y.shape[0]
    sums = df_prefix_sums(y)
    seq = np.empty(n - min_window + 1)
    for j in range(seq.shape[0]):
        seq[j] = df_window_stat(sums, 0, min_window - 1 + j)
    return seq


@njit(cache=True)
def gsadf_scan(y, min_window):
    """Largest statistic over every window of at least ``min_window`` observations."""
    n = y.shape[0]
    sums = df_prefix_sums(y)
    best = -np.inf
    for end in range(min_window - 1, n):
        for start in range(0, end - min_window + 2):
            stat = df_window_stat(sums, start, end)
            if stat > best:
                best = stat
    return best

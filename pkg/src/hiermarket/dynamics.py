"""Trader role switching, excess-demand price formation and the step loop.

The market follows the Lux-Marchesi fundamentalist/chartist mechanics, with
the optimist/pessimist herding term driven by each trader's local community
opinion instead of the global chartist mix.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from hiermarket import _kernels as K
from hiermarket.hierarchy import HierarchyParams, HierarchyTree, backward_pass, counts, forward_pass
from hiermarket.roles import TraderRole
from hiermarket.seeding import generator

CHUNK_STEPS = 2048


@dataclass(frozen=True)
class ModelParams:
    alpha2: float = 0.25
    alpha3: float = 1.0
    v1: float = 4.0
    v2: float = 1.0
    beta_price: float = 4.0
    r: float = 0.004
    R: float = 0.0004
    s: float = 0.75
    p_f: float = 10.0
    mu_noise: float = 0.1
    gamma: float = 0.01
    t_c: float = 0.015
    dt: float = 0.01
    dt_prime: float = 0.002
    tick: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt_prime <= 0:
            raise ValueError(f"dt_prime must be positive, got {self.dt_prime}")
        if self.p_f <= 0:
            raise ValueError(f"p_f must be positive, got {self.p_f}")
        if not 0 < self.s <= 1:
            raise ValueError(f"s must lie in (0, 1], got {self.s}")
        if self.tick <= 0:
            raise ValueError(f"tick must be positive, got {self.tick}")
        if self.mu_noise < 0:
            raise ValueError(f"mu_noise must be non-negative, got {self.mu_noise}")

    @property
    def trend_lag(self) -> int:
        """Whole steps spanned by the trend lookback (at least one)."""
        return max(1, int(round(self.dt_prime / self.dt)))

    @property
    def steps_per_unit_time(self) -> int:
        return max(1, int(round(1.0 / self.dt)))

    def packed(self) -> np.ndarray:
        return np.array(
            [
                self.alpha2, self.alpha3, self.v1, self.v2, self.beta_price, self.r, self.R,
                self.s, self.p_f, self.gamma, self.t_c, self.dt, self.dt_prime, self.tick,
            ],
            dtype=np.float64,
        )


# Lux & Marchesi (2000) parameter sets II-IV with the hierarchy block of each column.
PRESETS: dict[str, tuple[ModelParams, HierarchyParams]] = {
    "SET_II": (
        ModelParams(alpha2=0.25, alpha3=1.0, v1=4.0, v2=1.0, beta_price=4.0, mu_noise=0.1,
                    gamma=0.01, t_c=0.015),
        HierarchyParams(L=5, k=5, b=1.8, phi=0.5, omega=1.0, upsilon=1.0),
    ),
    "SET_III": (
        ModelParams(alpha2=0.25, alpha3=0.75, v1=0.5, v2=0.5, beta_price=2.0, mu_noise=0.1,
                    gamma=0.02, t_c=0.02),
        HierarchyParams(L=5, k=5, b=2.25, phi=0.5, omega=1.0, upsilon=1.0),
    ),
    "SET_IV": (
        ModelParams(alpha2=0.2, alpha3=1.0, v1=2.0, v2=0.6, beta_price=4.0, mu_noise=0.05,
                    gamma=0.01, t_c=0.01),
        HierarchyParams(L=5, k=5, b=2.4, phi=0.5, omega=1.0, upsilon=1.0),
    ),
}


def preset(name: str) -> tuple[ModelParams, HierarchyParams]:
    try:
        return PRESETS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class MarketState:
    price: float
    fundamental: float
    history: np.ndarray  # ring of the last `trend_lag` prices, oldest at history_pos
    history_pos: int = 0
    n_o: int = 0
    n_p: int = 0
    n_f: int = 0

    @property
    def n_traders(self) -> int:
        return self.n_o + self.n_p + self.n_f

    def lagged_price(self) -> float:
        return float(self.history[self.history_pos])


@dataclass
class MarketSeries:
    price: np.ndarray
    fundamental: np.ndarray
    n_o: np.ndarray
    n_p: np.ndarray
    n_f: np.ndarray
    params: ModelParams
    hparams: HierarchyParams
    seed: object = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.price)
        for name in ("fundamental", "n_o", "n_p", "n_f"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series column {name} has length {len(getattr(self, name))}, expected {n}")

    @property
    def steps(self) -> int:
        return len(self.price)

    def downsampled_prices(self, every: int | None = None) -> np.ndarray:
        """One price per unit of model time (every ``1/dt`` steps by default)."""
        every = self.params.steps_per_unit_time if every is None else every
        return self.price[every - 1 :: every]


# ---------------------------------------------------------------------------
# single-equation operations
# ---------------------------------------------------------------------------


def price_trend(history, params: ModelParams) -> float:
    """Trend over the lookback window; ``history`` ends with the current price."""
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        raise ValueError("price history is empty")
    lag = params.trend_lag
    if history.size <= lag:
        # not enough history yet: compare with the oldest price we have
        return float(K.price_trend(history[-1], history[0], params.dt_prime))
    return float(K.price_trend(history[-1], history[-1 - lag], params.dt_prime))


def excess_profits(price: float, pdot: float, params: ModelParams) -> tuple[float, float, float]:
    if price <= 0:
        raise ValueError("price must be positive")
    return K.excess_profits(
        float(price), float(pdot), params.p_f, params.s, params.r, params.R, params.v2
    )


def transition_pressures(local, pdot, eps, params: ModelParams, hparams: HierarchyParams):
    """``(U1, U21, U22)`` from the local ``(C_o, C_p)`` and excess profits."""
    c_o, c_p = local
    ep_f, ep_plus, ep_minus = eps
    return K.pressures(
        float(c_o), float(c_p), float(pdot), float(ep_f), float(ep_plus), float(ep_minus),
        params.alpha2, params.alpha3, params.v1, float(hparams.b),
    )


def transition_probabilities(role_counts, pressures, params: ModelParams, clamp: bool = True) -> dict:
    """The six role-switch probabilities keyed ``"o->p"``, ``"p->o"``, ...

    With ``clamp`` each trader's pair of exit probabilities is clipped to
    [0, 1] and rescaled if the pair sums past one.
    """
    n_o, n_p, n_f = role_counts
    if n_o + n_p + n_f <= 0:
        raise ValueError("population must be non-empty")
    u1, u21, u22 = pressures
    o_p, p_o, o_f, f_o, p_f, f_p = K.raw_probabilities(
        int(n_o), int(n_p), int(n_f), float(u1), float(u21), float(u22),
        params.v1, params.v2, params.dt,
    )
    if clamp:
        o_p, o_f = K.exit_pair(o_p, o_f)
        p_o, p_f = K.exit_pair(p_o, p_f)
        f_o, f_p = K.exit_pair(f_o, f_p)
    return {"o->p": o_p, "p->o": p_o, "o->f": o_f, "f->o": f_o, "p->f": p_f, "f->p": f_p}


def excess_demand(state: MarketState, params: ModelParams) -> tuple[float, float]:
    return K.excess_demand(
        state.n_o, state.n_p, state.n_f, params.t_c, params.gamma, state.fundamental, state.price
    )


def price_move_probabilities(ed_c: float, ed_f: float, noise: float, params: ModelParams):
    return K.price_move_probabilities(
        float(ed_c), float(ed_f), float(noise), params.beta_price, params.dt
    )


def price_update(state: MarketState, ed_c: float, ed_f: float, params: ModelParams, rng) -> float:
    """Draw noise and a move; returns the new price (floored at one tick)."""
    noise = params.mu_noise * rng.standard_normal()
    up, down = price_move_probabilities(ed_c, ed_f, noise, params)
    return float(K.apply_price_move(state.price, up, down, rng.random(), params.tick))


# ---------------------------------------------------------------------------
# initialisation and stepping
# ---------------------------------------------------------------------------


def initial_roles(n_traders: int, rng) -> np.ndarray:
    """Equal optimists and pessimists, remainder fundamentalist, randomly placed."""
    third = n_traders // 3
    roles = np.full(n_traders, int(TraderRole.FUNDAMENTALIST), dtype=np.int8)
    roles[:third] = int(TraderRole.OPTIMIST)
    roles[third : 2 * third] = int(TraderRole.PESSIMIST)
    return rng.permutation(roles).astype(np.int8)


def initial_state(params: ModelParams, hparams: HierarchyParams, rng) -> tuple[HierarchyTree, MarketState]:
    n_t, _ = counts(hparams)
    tree = HierarchyTree.build(hparams, initial_roles(n_t, rng))
    backward_pass(tree, hparams)
    forward_pass(tree, hparams)
    n_o, n_p, n_f = tree.role_counts()
    market = MarketState(
        price=params.p_f,
        fundamental=params.p_f,
        history=np.full(params.trend_lag, params.p_f),
        n_o=n_o, n_p=n_p, n_f=n_f,
    )
    return tree, market


def _scenario_args(echo, pnd):
    echo_mode, echo_E = (K.ECHO_OFF, 1.0) if echo is None else (echo.code, float(echo.E))
    if pnd is None:
        return echo_mode, echo_E, -1, 0, 0, 0.0
    return echo_mode, echo_E, int(pnd.target), int(pnd.T0), int(pnd.T1), float(pnd.S)


def _advance(tree, market, params, hparams, echo, pnd, step0, u_traders, noise, u_price):
    steps = u_traders.shape[0]
    out_price = np.empty(steps)
    out_counts = np.empty((steps, 3), dtype=np.int64)
    state = np.array([market.price, float(market.history_pos)])
    hier = np.array([hparams.b, hparams.phi, hparams.omega, hparams.upsilon], dtype=np.float64)
    echo_mode, echo_E, target, T0, T1, S = _scenario_args(echo, pnd)
    K.run_steps(
        tree.nodes, tree.leaves, tree._leafbuf, market.history, state, tree.k,
        params.packed(), hier, echo_mode, echo_E, target, T0, T1, S, step0,
        u_traders, noise, u_price, out_price, out_counts,
    )
    market.price = float(state[0])
    market.history_pos = int(state[1])
    market.n_o, market.n_p, market.n_f = (int(c) for c in out_counts[-1])
    return out_price, out_counts


def _draw(rng, steps: int, n_traders: int, params: ModelParams):
    u_traders = rng.random((steps, n_traders))
    noise = params.mu_noise * rng.standard_normal(steps)
    u_price = rng.random(steps)
    return u_traders, noise, u_price


def step(tree, market, params, hparams, rng, echo=None, pnd=None, t: int = 0):
    """One full step: backward pass, forward pass, role switches, price move."""
    u_traders, noise, u_price = _draw(rng, 1, tree.n_traders, params)
    _advance(tree, market, params, hparams, echo, pnd, t, u_traders, noise, u_price)
    return tree, market


def simulate(
    params: ModelParams,
    hparams: HierarchyParams,
    steps: int,
    seed,
    echo=None,
    pnd=None,
) -> MarketSeries:
    """Run one market for ``steps`` steps; fully determined by the arguments."""
    if steps < 1:
        raise ValueError("steps must be positive")
    if pnd is not None:
        pnd.validate(hparams, steps)
    rng = generator(seed)
    tree, market = initial_state(params, hparams, rng)
    price = np.empty(steps)
    role_counts = np.empty((steps, 3), dtype=np.int64)
    for start in range(0, steps, CHUNK_STEPS):
        n = min(CHUNK_STEPS, steps - start)
        u_traders, noise, u_price = _draw(rng, n, tree.n_traders, params)
        p, c = _advance(tree, market, params, hparams, echo, pnd, start, u_traders, noise, u_price)
        price[start : start + n] = p
        role_counts[start : start + n] = c
    return MarketSeries(
        price=price,
        fundamental=np.full(steps, params.p_f),
        n_o=role_counts[:, 0].copy(),
        n_p=role_counts[:, 1].copy(),
        n_f=role_counts[:, 2].copy(),
        params=params,
        hparams=hparams,
        seed=seed,
    )


def with_overrides(params: ModelParams, hparams: HierarchyParams, **overrides):
    """Apply named overrides to whichever of the two parameter records owns them."""
    model_names = {f.name for f in fields(ModelParams)}
    hier_names = {f.name for f in fields(HierarchyParams)}
    m, h = {}, {}
    for name, value in overrides.items():
        if name in model_names:
            m[name] = value
        elif name in hier_names:
            h[name] = value
        else:
            raise KeyError(f"unknown parameter {name!r}")
    return replace(params, **m), replace(hparams, **h)


def params_dict(params: ModelParams, hparams: HierarchyParams) -> dict:
    return {"model": asdict(params), "hierarchy": asdict(hparams)}

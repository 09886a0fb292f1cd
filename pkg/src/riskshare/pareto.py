"""Pareto-optimal risk sharing and competitive (CAPM) security pricing.

The optimal sharing rule, the price-allocation equilibrium for an arbitrary
basket, endowment prices, per-agent utility levels and the utility losses of
constrained sharing all have closed forms under mean-variance preferences.
Contracts are returned with the canonical zero-constant normalization (no
cash added), resolving the "up to constants" freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    SV_RATIO_MIN,
    Market,
    Rv,
    SecurityBasket,
    SingularCovarianceError,
    cov,
    cov_vector,
    mean,
    mv_utility,
    var,
)


@dataclass(frozen=True, eq=False)
class ParetoSharing:
    """Optimal contracts C*_i and the allocation weights on the endowments.

    `weights[i, j]` is the number of units of endowment j that agent i holds
    in the sharing transaction: (gamma - gamma_i)/gamma_i on the diagonal and
    gamma/gamma_i off it.
    """

    contracts: list[Rv]
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class CapmEquilibrium:
    """Market-clearing price and allocation of a security basket."""

    prices: np.ndarray
    allocation: np.ndarray  # n x k, row i = quantities of agent i
    utility_levels: np.ndarray
    gains: np.ndarray


def sharing_weights(market: Market) -> np.ndarray:
    g = market.aggregate_gamma
    n = market.n
    w = np.tile((g / market.gammas)[:, None], (1, n))
    np.fill_diagonal(w, (g - market.gammas) / market.gammas)
    return w


def optimal_sharing(market: Market) -> ParetoSharing:
    """Unique (up to constants) sum-of-utilities maximizing zero-sum contracts."""
    w = sharing_weights(market)
    endow = np.stack([a.endowment.payoffs for a in market.agents])
    contracts = [Rv(market.space, row @ endow) for row in w]
    return ParetoSharing(contracts=contracts, weights=w)


def aggregate_gain(market: Market) -> float:
    """Maximized aggregate utility gain from the optimal sharing transaction."""
    g = market.aggregate_gamma
    total = sum(a.gamma * var(a.endowment) for a in market.agents)
    return float(total - g * var(market.total_endowment))


def capm_equilibrium(market: Market, basket: SecurityBasket) -> CapmEquilibrium:
    """Price vector clearing all demand schedules, with the induced allocation.

    Prices depend on the securities only through their expectations and their
    covariances with the aggregate endowment; the allocation of agent i is
    Cov(C, C*_i) . Var^{-1}[C].
    """
    g = market.aggregate_gamma
    prices = basket.mean_vector - 2.0 * g * cov_vector(basket, market.total_endowment)
    sharing = optimal_sharing(market)
    allocation = np.stack(
        [cov_vector(basket, c) @ basket.cov_inverse for c in sharing.contracts]
    )
    base = np.array([mv_utility(a.gamma, a.endowment) for a in market.agents])
    gains = np.array(
        [
            market.agents[i].gamma
            * cov_vector(basket, sharing.contracts[i])
            @ basket.cov_inverse
            @ cov_vector(basket, sharing.contracts[i])
            for i in range(market.n)
        ]
    )
    return CapmEquilibrium(
        prices=prices,
        allocation=allocation,
        utility_levels=base + gains,
        gains=gains,
    )


def endowment_prices(market: Market) -> np.ndarray:
    """Equilibrium prices of the agents' own endowments (complete market).

    Requires the endowments' covariance matrix to be non-singular; with
    collinear endowments pass an explicit reduced basket to
    `capm_equilibrium` instead.
    """
    endow = market.endowments()
    n = market.n
    V = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            V[a, b] = V[b, a] = cov(endow[a], endow[b])
    svals = np.linalg.svd(V, compute_uv=False)
    if svals[-1] <= SV_RATIO_MIN * svals[0]:
        raise SingularCovarianceError(
            "endowment covariance matrix Var[E] is singular; "
            "price a reduced basket explicitly instead"
        )
    g = market.aggregate_gamma
    mu = np.array([mean(e) for e in endow])
    return mu - 2.0 * g * (np.ones(n) @ V)


def optimal_utility_levels(market: Market) -> np.ndarray:
    """Per-agent utility level after the optimal sharing transaction."""
    sharing = optimal_sharing(market)
    return np.array(
        [
            a.gamma * var(c) + mv_utility(a.gamma, a.endowment)
            for a, c in zip(market.agents, sharing.contracts)
        ]
    )


def constrained_loss(
    market: Market, basket: SecurityBasket
) -> tuple[np.ndarray, float]:
    """Utility each agent forgoes when sharing only through `basket`.

    Loss_i = gamma_i (Var[C*_i] - Cov(C,C*_i) Var^{-1}[C] Cov(C,C*_i)) >= 0,
    zero exactly when the optimal contract lies in span{1, C_1..C_k}.
    """
    sharing = optimal_sharing(market)
    losses = np.empty(market.n)
    for i, (agent, c) in enumerate(zip(market.agents, sharing.contracts)):
        cv = cov_vector(basket, c)
        losses[i] = agent.gamma * (var(c) - cv @ basket.cov_inverse @ cv)
    return losses, float(losses.sum())


def reservation_prices(market: Market, basket: SecurityBasket, i: int) -> np.ndarray:
    """Price vector at which agent i demands zero of every security.

    E[C] - 2 gamma_i Cov(C, E_i); at these prices the agent is indifferent
    between trading and not trading the basket.
    """
    agent = market.agents[i]
    return basket.mean_vector - 2.0 * agent.gamma * cov_vector(
        basket, agent.endowment
    )

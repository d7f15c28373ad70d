"""Continuous double auction for the four materials.

One unit per order, integer prices 0..10, escrow held for the order's
lifetime, 50-step expiry, and priority-correct matching: best price first,
then earliest placement, then a seeded-random draw.  The execution price is
the price of whichever order was placed first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agents import AgentState
from .world import N_MATERIALS

BID, ASK = 0, 1
SIDES = ("bid", "ask")
N_PRICES = 11  # 0..10 coins
MAX_PRICE = N_PRICES - 1

REJECT_FUNDS = "insufficient-funds"
REJECT_RESOURCE = "insufficient-resource"
REJECT_CAP = "order-cap"


@dataclass
class Order:
    id: int          # global submission sequence; smaller = placed first
    agent: int
    side: int        # BID or ASK
    material: int
    price: int
    placed_at: int   # time-step of submission


@dataclass
class Trade:
    step: int
    material: int
    price: int
    buyer: int
    seller: int


class OrderBook:
    def __init__(self, agents: dict[int, AgentState], cap: int = 5,
                 cap_scope: str = "per_side", expiry: int = 50):
        self.agents = agents
        self.cap = cap
        self.cap_scope = cap_scope
        self.expiry = expiry
        self._seq = 0
        # open orders per (material, side), in insertion order
        self.open: dict[tuple, list] = {(m, s): [] for m in range(N_MATERIALS) for s in (BID, ASK)}
        self.trades: list[Trade] = []
        # count arrays feeding observations: (agent, material, side, price)
        n = len(agents)
        self.open_counts = np.zeros((n, N_MATERIALS, 2, N_PRICES), dtype=np.int32)
        self.trade_counts = np.zeros((N_MATERIALS, N_PRICES), dtype=np.int32)

    def next_order(self, agent: int, side: int, material: int, price: int, now: int) -> Order:
        self._seq += 1
        return Order(self._seq, agent, side, material, price, now)

    def _open_count(self, agent: int, material: int, side: int) -> int:
        if self.cap_scope == "per_material":
            return int(self.open_counts[agent, material].sum())
        return int(self.open_counts[agent, material, side].sum())

    def can_submit(self, agent_id: int, side: int, material: int, price: int):
        """Cap and escrow check without mutating; returns None or a reason."""
        state = self.agents[agent_id]
        if self._open_count(agent_id, material, side) >= self.cap:
            return REJECT_CAP
        if side == BID and state.coin < price:
            return REJECT_FUNDS
        if side == ASK and state.inventory[material] < 1:
            return REJECT_RESOURCE
        return None

    def submit(self, order: Order):
        """Escrow-check and enter the book.  Returns (accepted, reason)."""
        reason = self.can_submit(order.agent, order.side, order.material, order.price)
        if reason is not None:
            return False, reason
        state = self.agents[order.agent]
        if order.side == BID:
            state.coin -= order.price
            state.escrow_coin += order.price
        else:
            state.inventory[order.material] -= 1
            state.escrow_units[order.material] += 1
        self.open[(order.material, order.side)].append(order)
        self.open_counts[order.agent, order.material, order.side, order.price] += 1
        return True, None

    def match(self, incoming: Order, rng: np.random.Generator):
        """Match an accepted incoming order against the opposite side.

        Counterparty priority: best price, then earliest placed_at, then a
        uniform draw from the episode RNG stream.  Returns a Trade or None.
        """
        opp_side = ASK if incoming.side == BID else BID
        book = self.open[(incoming.material, opp_side)]
        if incoming.side == BID:
            cands = [o for o in book if o.price <= incoming.price]
            if not cands:
                return None
            best = min(o.price for o in cands)
        else:
            cands = [o for o in book if o.price >= incoming.price]
            if not cands:
                return None
            best = max(o.price for o in cands)
        cands = [o for o in cands if o.price == best]
        earliest = min(o.placed_at for o in cands)
        cands = [o for o in cands if o.placed_at == earliest]
        if len(cands) > 1:
            counterparty = cands[int(rng.integers(len(cands)))]
        else:
            counterparty = cands[0]
        return self._execute(incoming, counterparty)

    def _execute(self, incoming: Order, resting: Order) -> Trade:
        bid, ask = (incoming, resting) if incoming.side == BID else (resting, incoming)
        earlier = resting if resting.id < incoming.id else incoming
        price = earlier.price
        buyer = self.agents[bid.agent]
        seller = self.agents[ask.agent]
        # settle escrows: coins to seller, unit to buyer, overpayment refunded
        buyer.escrow_coin -= bid.price
        buyer.coin += bid.price - price
        seller.coin += price
        seller.escrow_units[ask.material] -= 1
        buyer.inventory[bid.material] += 1
        self._remove(resting)
        self._remove(incoming)
        trade = Trade(incoming.placed_at, bid.material, price, bid.agent, ask.agent)
        self.trades.append(trade)
        self.trade_counts[trade.material, trade.price] += 1
        return trade

    def _remove(self, order: Order):
        lst = self.open[(order.material, order.side)]
        if order in lst:
            lst.remove(order)
        self.open_counts[order.agent, order.material, order.side, order.price] -= 1

    def submit_and_match(self, order: Order, rng: np.random.Generator):
        accepted, reason = self.submit(order)
        if not accepted:
            return False, reason, None
        return True, None, self.match(order, rng)

    def expire(self, now: int):
        """Remove every order aged >= expiry and refund its escrow in full."""
        expired = []
        for key, lst in self.open.items():
            keep = []
            for order in lst:
                if now - order.placed_at >= self.expiry:
                    expired.append(order)
                    state = self.agents[order.agent]
                    if order.side == BID:
                        state.escrow_coin -= order.price
                        state.coin += order.price
                    else:
                        state.escrow_units[order.material] -= 1
                        state.inventory[order.material] += 1
                    self.open_counts[order.agent, order.material, order.side, order.price] -= 1
                else:
                    keep.append(order)
            self.open[key] = keep
        return expired

    def average_trade_price(self, material: int) -> float:
        counts = self.trade_counts[material]
        total = counts.sum()
        if total == 0:
            return 0.0
        return float((counts * np.arange(N_PRICES)).sum() / total)

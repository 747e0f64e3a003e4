"""Deterministic Lanchester-square attrition.

Each round both sides take simultaneous damage equal to a fixed fraction of
the opposing power, capped by their own remaining power. Damage is paid in
whole units, weakest first; the unpaid remainder carries to the next round.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

EPS = 1e-9


class EmptyArmy(ValueError):
    pass


class CombatResult(NamedTuple):
    losses_a: dict
    losses_d: dict
    victor: Optional[str]  # "attacker", "defender", "draw" or None while undecided


def power(army: dict, strengths: dict) -> float:
    return sum(n * strengths[u] for u, n in army.items() if n > 0)


def removal_order(army: dict, strengths: dict, rank: dict) -> list:
    return sorted((u for u, n in army.items() if n > 0), key=lambda u: (strengths[u], rank.get(u, 0), u))


def pay_damage(army: dict, strengths: dict, carry: float, rank: dict) -> tuple:
    """Remove whole units weakest-first while the carried damage covers them.

    Mutates ``army``; returns ``(losses, remaining_carry)``.
    """
    losses = {}
    for u in removal_order(army, strengths, rank):
        s = strengths[u]
        while army[u] > 0 and s <= carry + EPS:
            army[u] -= 1
            carry -= s
            losses[u] = losses.get(u, 0) + 1
        if army[u] > 0:
            break
    if power(army, strengths) <= EPS:
        carry = 0.0
    return losses, max(carry, 0.0)


def lanchester_round(army_a: dict, army_d: dict, str_a: dict, str_d: dict, carry_a: float, carry_d: float,
                     attrition: float = 0.1, rank_a: Optional[dict] = None, rank_d: Optional[dict] = None):
    """One synchronous round. Mutates both armies; returns losses and new carries."""
    p_a = power(army_a, str_a)
    p_d = power(army_d, str_d)
    carry_a += min(p_d * attrition, p_a)
    carry_d += min(p_a * attrition, p_d)
    loss_a, carry_a = pay_damage(army_a, str_a, carry_a, rank_a or {})
    loss_d, carry_d = pay_damage(army_d, str_d, carry_d, rank_d or {})
    return loss_a, loss_d, carry_a, carry_d


def _strengths(army: dict, catalog, techs) -> dict:
    out = {}
    for u in army:
        s = catalog.strength_of(u, techs)
        if s <= 0:
            raise ValueError(f"{u} is not a combat unit")
        out[u] = s
    return out


def resolve_combat(attacker_army: dict, defender_army: dict, catalog_pair, rounds: int,
                   techs_pair=((), ()), attrition: float = 0.1) -> CombatResult:
    """Fight up to ``rounds`` rounds between two armies of combat units."""
    army_a = {u: n for u, n in attacker_army.items() if n > 0}
    army_d = {u: n for u, n in defender_army.items() if n > 0}
    if not army_a and not army_d:
        raise EmptyArmy("both armies are empty")
    cat_a, cat_d = catalog_pair
    str_a = _strengths(army_a, cat_a, techs_pair[0])
    str_d = _strengths(army_d, cat_d, techs_pair[1])
    losses_a, losses_d = {}, {}
    carry_a = carry_d = 0.0
    victor = _victor(army_a, army_d, str_a, str_d)
    for _ in range(rounds):
        if victor is not None:
            break
        la, ld, carry_a, carry_d = lanchester_round(army_a, army_d, str_a, str_d, carry_a, carry_d, attrition,
                                                    cat_a.order, cat_d.order)
        for u, n in la.items():
            losses_a[u] = losses_a.get(u, 0) + n
        for u, n in ld.items():
            losses_d[u] = losses_d.get(u, 0) + n
        victor = _victor(army_a, army_d, str_a, str_d)
    return CombatResult(losses_a, losses_d, victor)


def _victor(army_a, army_d, str_a, str_d) -> Optional[str]:
    alive_a = power(army_a, str_a) > EPS
    alive_d = power(army_d, str_d) > EPS
    if alive_a and alive_d:
        return None
    if alive_a:
        return "attacker"
    if alive_d:
        return "defender"
    return "draw"

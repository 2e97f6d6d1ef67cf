"""Shared shorthand for building cards, groups and observations in tests."""

from __future__ import annotations

from dhumbal.engine import Card, DiscardGroup, GroupKind, Observation, Phase, Suit

SUIT_BY_LETTER = {"C": Suit.CLUBS, "D": Suit.DIAMONDS, "H": Suit.HEARTS, "S": Suit.SPADES}
RANK_BY_SYMBOL = {"A": 1, "J": 11, "Q": 12, "K": 13, **{str(r): r for r in range(2, 11)}}


def c(text: str) -> Card:
    """'AH' -> Ace of hearts, '10C' -> ten of clubs."""
    return Card(RANK_BY_SYMBOL[text[:-1]], SUIT_BY_LETTER[text[-1]])


def cards(*texts: str) -> list[Card]:
    return [c(t) for t in texts]


def single(card: Card) -> DiscardGroup:
    return DiscardGroup(GroupKind.SINGLE, (card,))


def make_obs(
    own,
    pile_groups,
    opp_sizes,
    stock_size,
    phase=Phase.JHYAP_CHECK,
    seat=0,
    turn_count=0,
    turn_limit=100,
    own_coins=10_000,
    avg_opponent_coins=10_000.0,
    round_index=0,
):
    return Observation(
        seat=seat,
        num_players=1 + len(opp_sizes),
        own_hand=tuple(sorted(own)),
        discard_top=pile_groups[-1].top if pile_groups else None,
        discard_pile_groups=tuple(pile_groups),
        opponent_hand_sizes=tuple(opp_sizes),
        own_coins=own_coins,
        avg_opponent_coins=avg_opponent_coins,
        stock_size=stock_size,
        turn_count=turn_count,
        turn_limit=turn_limit,
        phase=phase,
        round_index=round_index,
    )

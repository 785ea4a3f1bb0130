from .deltas import (
    delta_mrr_closed,
    delta_ndcg_closed,
    move_delta,
    move_deltas_ranked,
    move_target_position,
    moved_orders,
    oracle_swap_deltas_ranked,
    swap_delta,
    swap_delta_oracle,
    swap_deltas_ranked,
)

__all__ = [
    "delta_mrr_closed",
    "delta_ndcg_closed",
    "move_delta",
    "move_deltas_ranked",
    "move_target_position",
    "moved_orders",
    "oracle_swap_deltas_ranked",
    "swap_delta",
    "swap_delta_oracle",
    "swap_deltas_ranked",
]

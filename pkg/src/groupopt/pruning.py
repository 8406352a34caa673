"""Magnitude pruning of grouped blocks: rank rows by norm, keep the top N."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import ParamBlock, group_l2_norms


@dataclass
class PruneSchedule:
    target_keep: int
    finetune_fraction: float = 0.0

    def __post_init__(self):
        if self.target_keep < 0:
            raise ValueError("target_keep must be >= 0")
        if not 0.0 <= self.finetune_fraction <= 1.0:
            raise ValueError("finetune_fraction must be in [0, 1]")


def magnitude_prune(block: ParamBlock, keep: int) -> ParamBlock:
    """Zero all but the `keep` largest-norm groups; ties keep the lower index."""
    if not block.grouped:
        raise ValueError(f"block {block.name!r} is not grouped")
    if keep < 0:
        raise ValueError("keep must be >= 0")
    norms = group_l2_norms(block)
    keep = min(keep, norms.size)
    # stable sort on negated norms: equal norms stay in index order
    order = np.argsort(-norms, kind="stable")
    values = block.values.reshape(norms.size, block.group_size).copy()
    values[order[keep:]] = 0.0
    return ParamBlock(block.name, values.ravel(), block.group_size)

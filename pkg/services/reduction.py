"""Deterministic blocked reductions over the frequency axis"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

from core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Fixed: changing it changes the summation order and therefore the last bits
FREQUENCY_BLOCK_SIZE = 64


def frequency_blocks(n_items: int, block_size: int = FREQUENCY_BLOCK_SIZE) -> List[slice]:
    """Split range(n_items) into consecutive fixed-size slices"""
    return [slice(start, min(start + block_size, n_items)) for start in range(0, n_items, block_size)]


def _tree_combine(partials: List[T], combine: Callable[[T, T], T]) -> T:
    """Pairwise tree reduction in a fixed order"""
    while len(partials) > 1:
        paired = [combine(partials[i], partials[i + 1]) for i in range(0, len(partials) - 1, 2)]
        if len(partials) % 2:
            paired.append(partials[-1])
        partials = paired
    return partials[0]


def _add(left, right):
    if isinstance(left, tuple):
        return tuple(a + b for a, b in zip(left, right))
    return left + right


def blocked_sum(
    n_items: int,
    block_fn: Callable[[slice], T],
    block_size: int = FREQUENCY_BLOCK_SIZE,
    max_workers: Optional[int] = None,
    combine: Callable[[T, T], T] = _add
) -> T:
    """Sum block_fn over fixed frequency blocks.

    block_fn returns an array (or tuple of arrays) for one block. Partials are
    combined by a fixed pairwise tree, so the result does not depend on the
    worker count.
    """
    if n_items <= 0:
        raise ValueError("blocked_sum needs at least one item")

    blocks = frequency_blocks(n_items, block_size)
    workers = max_workers if max_workers is not None else settings.MAX_WORKERS

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(block_fn, blocks))
    else:
        partials = [block_fn(block) for block in blocks]

    logger.debug(f"Reduced {n_items} items over {len(blocks)} blocks with {workers} worker(s)")
    return _tree_combine(partials, combine)


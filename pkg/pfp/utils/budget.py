import logging
from typing import Optional

from pfp.core.config import get_settings
from pfp.core.exceptions import BudgetExceededError

logger = logging.getLogger("pfp")

COMPLEX_BYTES = 16


def operator_bytes(dim: int, count: int = 1) -> int:
    """Bytes needed to hold `count` dense complex dim x dim operators."""
    return int(count) * int(dim) * int(dim) * COMPLEX_BYTES


def ensure_within_budget(nbytes: int, what: str, budget_bytes: Optional[int] = None) -> None:
    budget = budget_bytes if budget_bytes is not None else get_settings().budget_bytes
    if nbytes > budget:
        logger.error(f"BUDGET: {what} needs {nbytes / 2**20:.1f} MiB, budget is {budget / 2**20:.1f} MiB")
        raise BudgetExceededError(
            f"{what} needs {nbytes / 2**20:.1f} MiB which exceeds the {budget / 2**20:.1f} MiB budget "
            f"(raise PFP_BUDGET_MB or pass --budget-mb)"
        )


def ensure_dimension(dim: int, what: str) -> None:
    limit = get_settings().PFP_DIMENSION_LIMIT
    if dim > limit:
        raise BudgetExceededError(f"{what} has dimension {dim}, above the dense limit {limit}")
    ensure_within_budget(operator_bytes(dim), what)


def ensure_enumerable(count: int, what: str, limit: int = 2 ** 24) -> None:
    if count > limit:
        raise BudgetExceededError(f"{what} would enumerate {count} items (limit {limit})")

"""
Utility functions for hierkrig.
Common helpers used by the harness and the command line.
"""

import hashlib
from typing import Any, List, Optional

from app.core.logging import get_logger

logger = get_logger("utils")

_SEED_MASK = (1 << 63) - 1


def mix_seed(master_seed: int, *parts: Any) -> int:
    """
    Derive a job seed from the master seed and identifying parts.

    The parts are joined as ``repr`` strings separated by ``|`` and hashed
    with BLAKE2b; the first 8 bytes of the digest, read big-endian and masked
    to 63 bits, form the seed. The result depends only on the inputs, never
    on execution order or worker count.

    Args:
        master_seed: Master seed of the run
        *parts: Identifiers such as study name, b, c, d and replication

    Returns:
        A nonnegative 63-bit integer seed
    """
    text = "|".join([repr(int(master_seed))] + [repr(part) for part in parts])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & _SEED_MASK


def parse_list(value: Optional[str]) -> List[str]:
    """
    Split a comma-separated value into stripped, non-empty items.

    Args:
        value: Raw value, for example ``"stan, arc"``

    Returns:
        List of items, empty for ``None`` or blank input
    """
    if value is None:
        return []
    return [item.strip() for item in str(value).split(",") if item.strip()]


def parse_bool(value: Any) -> bool:
    """Interpret configuration-file truth values."""
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"Not a boolean value: '{value}'")


def format_level(level: float) -> str:
    """
    Format a significance level without exponent padding.

    ``1e-06`` becomes ``1e-6``; plain decimals are left as they are.
    """
    text = f"{level:g}"
    if "e" not in text:
        return text
    mantissa, exponent = text.split("e")
    sign = "-" if exponent.startswith("-") else ""
    return f"{mantissa}e{sign}{exponent.lstrip('+-').lstrip('0') or '0'}"

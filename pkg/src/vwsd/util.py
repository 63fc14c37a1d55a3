"""Tiny helpers used by several modules."""

from __future__ import annotations


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())

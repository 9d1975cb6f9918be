"""Dispatch policies behind the execution contract.

A policy is any callable ``DecisionRequest -> job id`` that returns a member
of ``request.candidates``. All rules here break ties on the lowest job id.
"""

from __future__ import annotations

from typing import Callable

from .domain import DecisionRequest

Policy = Callable[[DecisionRequest], int]


def _require_candidates(request: DecisionRequest):
    if not request.candidates:
        raise ValueError("cannot select from an empty candidate set")


def select_edd(request: DecisionRequest) -> int:
    """Earliest due date."""
    _require_candidates(request)
    return min(request.candidates, key=lambda j: (request.job(j).due_date, j))


def select_spt(request: DecisionRequest) -> int:
    """Shortest processing time."""
    _require_candidates(request)
    return min(request.candidates, key=lambda j: (request.job(j).processing_time, j))


def select_fallback(request: DecisionRequest) -> int:
    """First admissible: lowest job id."""
    _require_candidates(request)
    return min(request.candidates)


POLICIES: dict[str, Policy] = {
    "edd": select_edd,
    "spt": select_spt,
}


def get_policy(name: str) -> Policy:
    try:
        return POLICIES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None

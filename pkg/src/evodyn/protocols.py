"""Revision protocols: switch rates ``phi_hat(i, j, theta)`` from strategy i to j."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ProtocolKind(str, enum.Enum):
    REPLICATOR = "replicator"
    BNN = "bnn"
    SMITH = "smith"


class ReferenceMode(str, enum.Enum):
    STATE_COUPLED = "state_coupled"
    FIXED = "fixed"


@dataclass(frozen=True)
class RevisionProtocol:
    """A revision protocol and how its reference measure is chosen.

    Replicator draws candidate strategies from the current state itself, so
    its reference measure is state-coupled. BNN and Smith use a fixed one.
    """

    kind: ProtocolKind

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind(self.kind))

    @property
    def reference_mode(self) -> ReferenceMode:
        if self.kind is ProtocolKind.REPLICATOR:
            return ReferenceMode.STATE_COUPLED
        return ReferenceMode.FIXED

    @classmethod
    def named(cls, name: str) -> "RevisionProtocol":
        return cls(ProtocolKind(name))

    def __str__(self) -> str:
        return self.kind.value


REPLICATOR = RevisionProtocol(ProtocolKind.REPLICATOR)
BNN = RevisionProtocol(ProtocolKind.BNN)
SMITH = RevisionProtocol(ProtocolKind.SMITH)


def _check(theta, rho):
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if theta.shape != rho.shape:
        raise ValueError(f"theta and rho differ in length ({theta.size} vs {rho.size})")
    # rates only see payoff differences; centring makes constant payoffs exact zeros
    return theta, rho - rho.max()


def switch_rate(protocol: RevisionProtocol, i: int, j: int, theta, rho) -> float:
    theta, rho = _check(theta, rho)
    n = theta.size
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"strategy index {idx} out of range for n={n}")
    if protocol.kind is ProtocolKind.BNN:
        return max(0.0, float(rho[j] - theta @ rho))
    return max(0.0, float(rho[j] - rho[i]))


def rate_matrix(protocol: RevisionProtocol, theta, rho) -> np.ndarray:
    """Dense ``R[i, j] = phi_hat(i, j, theta)``; O(n^2) memory."""
    theta, rho = _check(theta, rho)
    if protocol.kind is ProtocolKind.BNN:
        excess = np.maximum(rho - theta @ rho, 0.0)
        return np.broadcast_to(excess, (theta.size, theta.size)).copy()
    return np.maximum(rho[None, :] - rho[:, None], 0.0)


def max_rate(protocol: RevisionProtocol, theta, rho) -> float:
    """``max_{i,j} phi_hat(i, j, theta)`` in O(n)."""
    theta, rho = _check(theta, rho)
    if protocol.kind is ProtocolKind.BNN:
        return max(0.0, float(rho.max() - theta @ rho))
    return float(rho.max() - rho.min())

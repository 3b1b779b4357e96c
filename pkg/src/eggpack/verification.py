"""Formulation-independent feasibility certificates.

Only the boundary-sweep oracles are used here, never the embedded
stationarity systems, so a certificate is independent evidence that a
configuration is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import overlap_oracle, support_oracle
from .polygon import apothem_angles

__all__ = ["Certificate", "verify"]

VERIFY_RESOLUTION = 1024


@dataclass(frozen=True)
class Certificate:
    pair_margins: dict  # (i, j) -> smaller of the two one-sided oracle values, minus epsilon
    containment_margins: np.ndarray  # (n, m): d minus oracle support value
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_pair_margin >= -self.tol and self.min_containment_margin >= -self.tol

    @property
    def min_pair_margin(self) -> float:
        return min(self.pair_margins.values(), default=float("inf"))

    @property
    def min_containment_margin(self) -> float:
        return float(np.min(self.containment_margins))

    def failures(self) -> list[str]:
        out = [
            f"pair ({i + 1}, {j + 1}) margin {v:.3e}"
            for (i, j), v in sorted(self.pair_margins.items())
            if v < -self.tol
        ]
        for i, k in zip(*np.nonzero(self.containment_margins < -self.tol)):
            out.append(f"egg {i + 1} side {k + 1} margin {self.containment_margins[i, k]:.3e}")
        return out


def verify(instance, poses, d: float, tol: float = 1e-6, resolution: int = VERIFY_RESOLUTION) -> Certificate:
    """Check non-overlap and containment of ``poses`` in the ``m``-gon of apothem ``d``.

    Every pair ``i < j`` is checked in both directions: the sweep minimum of
    egg ``i``'s function over egg ``j``'s boundary and vice versa.  One
    direction alone misses an egg lying entirely inside the other.  Every
    egg-side pair is checked with the sweep support value.  The certificate
    passes iff all margins are ``>= -tol``.
    """
    poses = list(poses)
    if len(poses) != instance.n:
        raise ValueError(f"expected {instance.n} poses, got {len(poses)}")
    resolution = max(resolution, VERIFY_RESOLUTION)
    eggs = instance.placed(poses)
    pair = {}
    for i in range(instance.n):
        for j in range(i + 1, instance.n):
            val = min(overlap_oracle(eggs[i], eggs[j], resolution)[0], overlap_oracle(eggs[j], eggs[i], resolution)[0])
            pair[(i, j)] = val - instance.epsilon
    ang = apothem_angles(instance.m)
    normals = np.column_stack([np.cos(ang), np.sin(ang)])
    cont = np.array([[d - support_oracle(egg, c, resolution) for c in normals] for egg in eggs])
    return Certificate(pair, cont, tol)

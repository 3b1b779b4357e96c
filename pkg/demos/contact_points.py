"""Tangency and overlap stationary points for a few hand-picked eggs.

Run: python3 demos/contact_points.py
"""
import numpy as np

from eggpack.contact import overlap_oracle, overlap_stationary, support_oracle, support_tangency
from eggpack.geometry import PlacedEgg
from eggpack.polygon import Direction

np.set_printoptions(precision=4, suppress=True)

# a rotated ellipse touching the line x + y = const
egg = PlacedEgg.make(1 / 2, 1 / 3, 2, 0.0, 0, 0, 0.5)
c = Direction.normalized(1, 1)
res = support_tangency(egg, c)
print("support in direction (1,1)/sqrt2")
print("  tangency point ", res.tangency)
print("  l_max          ", round(res.l_max, 6), " sampled:", round(support_oracle(egg, c), 6))
print("  multiplier mu  ", round(res.mu, 4))

# two pairs: one overlapping, one apart
pairs = {
    "overlapping": (PlacedEgg.make(1, 1, 2, 0.5), PlacedEgg.make(1 / 2, 3 / 4, 2, 0.0)),
    "apart": (PlacedEgg.make(3 / 4, 1, 2, 0.5, -1 / 2, 0, 0), PlacedEgg.make(1 / 3, 1 / 2, 2, 0.0, 3 / 4, 0, 0.5)),
}
for name, (egg_i, egg_j) in pairs.items():
    st = overlap_stationary(egg_i, egg_j)
    val, _ = overlap_oracle(egg_i, egg_j, 2048)
    print(f"\n{name}")
    print("  min e_i on boundary of j:", round(st.value, 6), f"(sweep {val:.6f}, via {st.method})")
    print("  point                   :", st.point)
    print("  multiplier lambda       :", round(st.lam, 4))

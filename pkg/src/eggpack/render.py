"""SVG drawings of packings.

Contours are polylines through sampled boundary points; coordinates are
printed with fixed precision so identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

from .geometry import boundary_points
from .polygon import RegularPolygon

__all__ = ["contour_samples", "render_svg", "MIN_SAMPLES"]

MIN_SAMPLES = 256
CANVAS = 600.0
MARGIN = 0.05
_FILLS = ("#f4d58d", "#bfd7ea", "#d9b8c4", "#c5e0b4", "#f7c59f", "#d3d3e7")


def contour_samples(eggs, samples: int = 512) -> list[np.ndarray]:
    """Boundary samples of each placed egg at equally spaced ray angles."""
    samples = max(int(samples), MIN_SAMPLES)
    phi = 2 * np.pi * np.arange(samples) / samples
    return [boundary_points(egg, phi) for egg in eggs]


def _points(xy, scale) -> str:
    # world y points up, SVG y points down
    return " ".join(f"{x * scale:.4f},{-y * scale:.4f}" for x, y in xy)


def render_svg(instance, poses, d: float, samples: int = 512, title: str | None = None) -> str:
    """SVG 1.1 document with the ``m``-gon of apothem ``d`` and every egg contour.

    The drawing is centred on the container with a uniform scale.
    """
    poly = RegularPolygon(instance.m, d)
    corners = poly.vertices()
    contours = contour_samples(instance.placed(poses), samples)
    extent = max(float(np.max(np.abs(corners))), *(float(np.max(np.abs(c))) for c in contours))
    half = CANVAS / 2
    scale = half * (1 - 2 * MARGIN) / extent
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{CANVAS:g}" height="{CANVAS:g}" '
        f'viewBox="{-half:g} {-half:g} {CANVAS:g} {CANVAS:g}">',
    ]
    if title:
        out.append(f"<title>{title}</title>")
    out.append(
        f'<path id="container" d="M {_points(corners, scale).replace(" ", " L ")} Z" '
        'fill="none" stroke="#222222" stroke-width="1.5"/>'
    )
    for k, xy in enumerate(contours):
        fill = _FILLS[k % len(_FILLS)]
        out.append(
            f'<path id="egg{k + 1}" d="M {_points(xy, scale).replace(" ", " L ")} Z" '
            f'fill="{fill}" stroke="#444444" stroke-width="0.8"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Plain SVG frames: domain outline, curve, and an optional rescaled inset."""

from __future__ import annotations

import math

import numpy as np

from .domain import ConvexDomain

WIDTH = 480
INSET = 140


def _outline(domain: ConvexDomain, lo, hi, n: int = 512):
    if domain.bounded:
        s = domain.sample(n)
        return np.vstack([domain.points(s), domain.points(s[:1])])
    # unbounded: clip the line to the view window
    f0 = domain.frame(0.0)
    span = 2.0 * float(np.max(hi - lo))
    return np.array([f0.point - span * f0.tangent, f0.point + span * f0.tangent])


def _path(P, to_px) -> str:
    q = to_px(P)
    return "M" + " L".join(f"{x:.2f},{y:.2f}" for x, y in q)


def frame_svg(curve, t: float, rescaled=None, pad: float = 0.15) -> str:
    """Return an SVG document for one snapshot.

    The view box fits the curve (bounded domains: the whole domain).
    ``rescaled`` is an optional vertex array drawn in a corner inset next to
    the unit half-circle.
    """
    dom = curve.domain
    V = curve.vertices
    if dom.bounded:
        B = dom.points(dom.sample(256))
        lo, hi = B.min(axis=0), B.max(axis=0)
    else:
        lo, hi = V.min(axis=0), V.max(axis=0)
    span = max(float(np.max(hi - lo)), 1e-12)
    lo = lo - pad * span
    hi = hi + pad * span
    scale = WIDTH / float(np.max(hi - lo))
    height = int(math.ceil((hi[1] - lo[1]) * scale))

    def to_px(P):
        P = np.atleast_2d(P)
        return np.column_stack([(P[:, 0] - lo[0]) * scale, (hi[1] - P[:, 1]) * scale])

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
        f'<path d="{_path(_outline(dom, lo, hi), to_px)}" fill="none" stroke="#888" stroke-width="1.5"/>',
        f'<path d="{_path(V, to_px)}" fill="none" stroke="#c22" stroke-width="1.5"/>',
        f'<text x="8" y="16" font-family="monospace" font-size="12">t = {t:.6g}  L = {curve.length:.6g}</text>',
    ]
    if rescaled is not None:
        R = np.asarray(rescaled, float)
        a = np.linspace(0.0, math.pi, 128)
        ref = np.column_stack([np.cos(a), np.sin(a)])
        s = INSET / 3.0
        ox, oy = WIDTH - INSET / 2 - 8, height - 12

        def inset_px(P):
            P = np.atleast_2d(P)
            return np.column_stack([ox + P[:, 0] * s, oy - P[:, 1] * s])

        parts += [
            f'<rect x="{WIDTH - INSET - 16}" y="{height - INSET * 0.75}" width="{INSET + 8}" '
            f'height="{INSET * 0.75 - 4}" fill="none" stroke="#ccc"/>',
            f'<path d="{_path(ref, inset_px)}" fill="none" stroke="#88f" stroke-width="1"/>',
            f'<path d="{_path(R, inset_px)}" fill="none" stroke="#c22" stroke-width="1"/>',
        ]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

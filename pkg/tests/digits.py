"""Synthetic 28x28 handwritten-style digits for MNIST-scale runs."""

import numpy as np

STROKES = {
    "1": [((6, 15), (22, 15)), ((6, 15), (9, 12))],
    "4": [((5, 9), (15, 7)), ((15, 7), (15, 20)), ((5, 17), (23, 17))],
}


def _segment_distance(rr, cc, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    t = ((rr - a[0]) * d[0] + (cc - a[1]) * d[1]) / max(d @ d, 1e-12)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(rr - (a[0] + t * d[0]), cc - (a[1] + t * d[1]))


def digit_image(ch: str, size: int = 28, width: float = 1.6) -> np.ndarray:
    """uint8 picture-order image with anti-aliased strokes on black."""
    rr, cc = np.mgrid[0:size, 0:size].astype(float)
    dist = np.min([_segment_distance(rr, cc, a, b) for a, b in STROKES[ch]], axis=0)
    ink = np.clip(width - dist, 0.0, 1.0)
    return np.rint(255 * ink).astype(np.uint8)

"""Ready-made problem recipes for the Gaussian transport experiments."""

from __future__ import annotations

import numpy as np

from .energy import ProblemSpec, TimeGrid
from .lattice import GridSpec, build_lattice

GAUSS_WIDTH = 0.01
GAUSS_FLOOR = 0.01


def gaussian_bump(coords: np.ndarray, center) -> np.ndarray:
    """``exp(-|x - c|^2 / 0.01) + 0.01`` at every node (unnormalized)."""
    d2 = np.sum((coords - np.asarray(center, dtype=float)) ** 2, axis=1)
    return np.exp(-d2 / GAUSS_WIDTH) + GAUSS_FLOOR


def gaussian_problem(
    n_pts: int,
    n_interior: int,
    center0,
    center1,
    dimension: int = 1,
    domain=(0.0, 2.0),
    beta2: float = 1e-6,
    kinetic_weight: float = 1.0,
) -> ProblemSpec:
    spec = GridSpec.box(n_pts, dimension, *domain)
    lat = build_lattice(spec)
    x = spec.coordinates()
    p0 = gaussian_bump(x, np.atleast_1d(center0))
    p1 = gaussian_bump(x, np.atleast_1d(center1))
    return ProblemSpec(
        lattice=lat,
        time=TimeGrid(n_interior),
        p0=p0 / p0.sum(),
        p1=p1 / p1.sum(),
        beta2=beta2,
        kinetic_weight=kinetic_weight,
    )


def example1(n_pts: int = 40, n_interior: int = 50, **kw) -> ProblemSpec:
    """1D bumps at 0.4 and 1.6 on [0, 2]."""
    return gaussian_problem(n_pts, n_interior, 0.4, 1.6, dimension=1, **kw)


def example2(n_pts: int = 20, n_interior: int = 30, **kw) -> ProblemSpec:
    """2D bumps at (0.2, 0.5) and (1.5, 1.5) on [0, 2]^2."""
    return gaussian_problem(n_pts, n_interior, (0.2, 0.5), (1.5, 1.5), dimension=2, **kw)


def square_images(n_pts: int = 24):
    """Indicator images of one centred square and of two half-width squares on [0, 1]^2."""
    spec = GridSpec.box(n_pts, 2, 0.0, 1.0)
    x = spec.coordinates()

    def box(xlo, xhi, ylo, yhi):
        return ((x[:, 0] >= xlo) & (x[:, 0] <= xhi) & (x[:, 1] >= ylo) & (x[:, 1] <= yhi)).astype(float)

    one = box(0.3, 0.7, 0.3, 0.7)
    two = box(0.05, 0.25, 0.3, 0.7) + box(0.75, 0.95, 0.3, 0.7)
    return spec, one, two


def square_split(n_pts: int = 24, n_interior: int = 30, beta2: float = 1e-5, floor: float = 0.01, **kw) -> ProblemSpec:
    """A square smoothly splitting into two (the image experiment run with beta2 = 1e-5)."""
    spec, one, two = square_images(n_pts)
    p0, p1 = (v + floor * v.max() for v in (one, two))
    return ProblemSpec(
        lattice=build_lattice(spec),
        time=TimeGrid(n_interior),
        p0=p0 / p0.sum(),
        p1=p1 / p1.sum(),
        beta2=beta2,
        **kw,
    )

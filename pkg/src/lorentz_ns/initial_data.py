"""Named families of initial data and test fields.

Every random field is drawn from a Philox generator keyed by the seed.  The
random solenoidal family is defined mode by mode (``u(x) = Re sum_k c_k
e^{i k.x}`` over a fixed wavevector list), so the same seed gives the same
function on every grid that resolves the band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Grid, ScalarField, VectorField, band_limit, l2_norm
from .singular.riesz import leray_project

FAMILIES = ("taylor_green", "random_solenoidal", "radial_power", "indicator", "spike")


def make_rng(seed: int) -> np.random.Generator:
    """The single counter-based generator used for all randomness."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=int(seed)))


def taylor_green(grid: Grid, amplitude: float = 1.0) -> VectorField:
    """2D ``(sin x cos y, -cos x sin y)``; 3D ``(sin x cos y cos z, -cos x sin y cos z, 0)``; ``x`` in units of ``L/2pi``."""
    k = 2 * math.pi / grid.L
    if grid.n == 2:
        x, y = (k * m for m in grid.mesh)
        vals = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
    else:
        x, y, z = (k * m for m in grid.mesh)
        vals = np.stack([
            np.sin(x) * np.cos(y) * np.cos(z),
            -np.cos(x) * np.sin(y) * np.cos(z),
            np.zeros_like(x),
        ])
    return VectorField(grid, amplitude * vals)


def band_wavevectors(n: int, band: int) -> np.ndarray:
    """Integer wavevectors with ``0 < |k|_inf <= band`` in lexicographic order."""
    ks = np.array(list(np.ndindex(*(2 * band + 1,) * n))) - band
    return ks[np.any(ks != 0, axis=1)]


def random_solenoidal(grid: Grid, band: int, amplitude: float, rng: np.random.Generator) -> VectorField:
    """Mean-zero divergence-free field in ``|k|_inf <= band`` with ``||u||_2 = amplitude``."""
    if band < 1:
        raise ValueError(f"band must be >= 1, got {band}")
    if 3 * band >= grid.N:
        raise ValueError(f"band {band} is not resolved after dealiasing on N={grid.N}")
    ks = band_wavevectors(grid.n, band)
    coef = rng.standard_normal((grid.n, len(ks))) + 1j * rng.standard_normal((grid.n, len(ks)))
    spectrum = np.zeros((grid.n,) + grid.shape, dtype=complex)
    idx = tuple((ks % grid.N).T)
    for d in range(grid.n):
        spectrum[(d,) + idx] = coef[d]
    # Re sum_k c_k e^{ik.x} sampled on the grid
    vals = np.fft.ifftn(spectrum, axes=tuple(range(1, grid.n + 1))).real * grid.N**grid.n
    u = band_limit(leray_project(VectorField(grid, vals)), remove_mean=True)
    size = l2_norm(u)
    if size == 0:
        raise ValueError("random draw produced a zero field")
    return VectorField(grid, u.values * (amplitude / size))


def radial_power(grid: Grid, exponent: float, window: tuple[float, float]) -> ScalarField:
    """``|x|^exponent`` on ``core <= |x| <= outer``, clamped to ``core^exponent`` inside, zero outside."""
    core, outer = (float(w) for w in window)
    if not 0 < core < outer:
        raise ValueError(f"window must satisfy 0 < core < outer, got {window}")
    if outer > grid.L / 2:
        raise ValueError(f"window outer radius {outer} exceeds the half box {grid.L / 2}")
    r = np.maximum(grid.radius, core)
    vals = np.where(grid.radius <= outer, r**exponent, 0.0)
    return ScalarField(grid, vals)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def indicator(grid: Grid, shape: dict) -> ScalarField:
    """``1_A`` for ``{"kind": "ball", "radius": r}`` or ``{"kind": "cube", "side": s}``, optional ``"center"``."""
    kind = shape.get("kind")
    center = np.asarray(shape.get("center", [0.0] * grid.n), dtype=float)
    if center.shape != (grid.n,):
        raise ValueError(f"center must have {grid.n} coordinates")
    offset = [m - c for m, c in zip(grid.mesh, center)]
    if kind == "ball":
        r = float(shape["radius"])
        if not 0 < r <= grid.L / 2:
            raise ValueError(f"ball radius must lie in (0, L/2], got {r}")
        inside = sum(o**2 for o in offset) < r**2
    elif kind == "cube":
        s = float(shape["side"])
        if not 0 < s <= grid.L:
            raise ValueError(f"cube side must lie in (0, L], got {s}")
        inside = np.all([np.abs(o) < s / 2 for o in offset], axis=0)
    else:
        raise ValueError(f"unknown indicator kind {kind!r} (ball | cube)")
    return ScalarField(grid, inside.astype(float))


def spike(grid: Grid, position, height: float) -> ScalarField:
    """``height`` at the grid point nearest ``position``, zero elsewhere."""
    pos = np.asarray(position, dtype=float)
    if pos.shape != (grid.n,):
        raise ValueError(f"position must have {grid.n} coordinates")
    if np.any(np.abs(pos) > grid.L / 2):
        raise ValueError(f"position {position} lies outside the box")
    idx = tuple(int(round((p + grid.L / 2) / grid.dx)) % grid.N for p in pos)
    vals = np.zeros(grid.shape)
    vals[idx] = height
    return ScalarField(grid, vals)


@dataclass(frozen=True)
class InitialDataSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ValueError(f"unknown initial data {self.name!r}; choose one of {', '.join(FAMILIES)}")

    @property
    def solenoidal(self) -> bool:
        return self.name in ("taylor_green", "random_solenoidal")


def make_initial_data(spec: InitialDataSpec, grid: Grid, seed: int = 0) -> Field:
    p = dict(spec.params)
    if spec.name == "taylor_green":
        return taylor_green(grid, float(p.get("amplitude", 1.0)))
    if spec.name == "random_solenoidal":
        return random_solenoidal(grid, int(p.get("band", 4)), float(p.get("amplitude", 0.1)), make_rng(seed))
    if spec.name == "radial_power":
        return radial_power(grid, float(p["exponent"]), tuple(p["window"]))
    if spec.name == "indicator":
        return indicator(grid, p.get("shape", {"kind": "ball", "radius": grid.L / 4}))
    return spike(grid, p.get("position", [0.0] * grid.n), float(p.get("height", 1.0)))

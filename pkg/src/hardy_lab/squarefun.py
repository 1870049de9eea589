"""Conical and vertical square functions on a logarithmic scale ladder.

Space-time fields F(x, t) live on grid x ladder; the measure dt/t is
realized by trapezoid weights in log t (sum of weights = log(t_max/t_min)).
The non-tangential cone of aperture a collects, at each ladder level, the
cells within torus distance a*t_j; cone sums are evaluated as periodic
convolutions with ball indicators via the FFT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .funcalc import (
    ContourQuadrature,
    SymbolFunction,
    calderon_pairing_constant,
    contour_plan,
    psi_exponential_order,
)
from .grid import Grid, GridFunction, dyadic_levels, aligned_box_sums, expand_level
from .semigroup import SemigroupEngine, heat_derivative_apply


# ---------------------------------------------------------------------------
# ladder and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaleLadder:
    """Geometric ladder t_j = t_min (t_max/t_min)^{j/(J-1)} with dt/t weights."""

    t_min: float
    t_max: float
    levels: int

    def __post_init__(self):
        if self.t_min <= 0 or self.t_max <= self.t_min:
            raise ValueError("need 0 < t_min < t_max")
        if self.levels < 8:
            raise ValueError("need at least 8 levels")

    @property
    def ts(self) -> np.ndarray:
        j = np.arange(self.levels)
        return self.t_min * (self.t_max / self.t_min) ** (j / (self.levels - 1))

    @property
    def weights(self) -> np.ndarray:
        du = np.log(self.t_max / self.t_min) / (self.levels - 1)
        w = np.full(self.levels, du)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def refined(self, widen_decades: float = 1.0) -> "ScaleLadder":
        """Halve the log spacing and widen the range by the given decades."""
        du = np.log(self.t_max / self.t_min) / (self.levels - 1)
        lo = self.t_min * 10.0**-widen_decades
        hi = self.t_max * 10.0**widen_decades
        levels = int(np.round(np.log(hi / lo) / (du / 2.0))) + 1
        return ScaleLadder(lo, hi, levels)


def default_ladder(grid: Grid, levels: int = 64) -> ScaleLadder:
    """t from h/2 (cones below h are unresolvable) to the torus diameter."""
    return ScaleLadder(grid.spacing / 2.0, grid.side, levels)


def reproduce_ladder(grid: Grid, levels: int = 64) -> ScaleLadder:
    """Ladder for reproducing-formula work: reaches t = h/16 so the scalar
    integrals of the top spectral modes are covered below their decay scale
    (sub-cell t is spectrally meaningful even though cones are not)."""
    return ScaleLadder(grid.spacing / 16.0, grid.side, levels)


@dataclass
class SpaceTimeField:
    """Complex field F(x, t_j); stored level-first as (J,) + grid.shape."""

    grid: Grid
    ladder: ScaleLadder
    values: np.ndarray

    def __post_init__(self):
        want = (self.ladder.levels,) + self.grid.shape
        self.values = np.asarray(self.values, dtype=np.complex128).reshape(want)

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.ladder, self.values.copy())

    def sqnorm(self) -> float:
        """Discrete double integral of |F|^2 dy dt/t."""
        w = self.ladder.weights
        level_mass = np.sum(np.abs(self.values) ** 2, axis=tuple(range(1, self.values.ndim)))
        return float(self.grid.cell_volume * np.sum(w * level_mass))

    def save(self, path) -> None:
        header = {
            "dim": self.grid.dim,
            "points_per_axis": self.grid.points_per_axis,
            "side": self.grid.side,
            "t_min": self.ladder.t_min,
            "t_max": self.ladder.t_max,
            "levels": self.ladder.levels,
            "layout": "level-major complex128 interleaved",
        }
        with open(path, "wb") as fh:
            head = json.dumps(header).encode()
            fh.write(len(head).to_bytes(8, "little"))
            fh.write(head)
            fh.write(np.ascontiguousarray(self.values).tobytes())


def load_spacetime_field(path) -> SpaceTimeField:
    from .grid import build_grid

    with open(path, "rb") as fh:
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode())
        raw = np.frombuffer(fh.read(), dtype=np.complex128)
    grid = build_grid(header["dim"], header["points_per_axis"], header["side"])
    ladder = ScaleLadder(header["t_min"], header["t_max"], header["levels"])
    return SpaceTimeField(grid, ladder, raw.copy())


@dataclass(frozen=True)
class Cone:
    """Non-tangential cone |x - y| < aperture * t (strict, torus metric)."""

    aperture: float = 1.0


def _ball_kernel_fft(grid: Grid, radius: float) -> np.ndarray:
    """FFT of the indicator of {offset: |offset| < radius} (cell offsets)."""
    N = grid.points_per_axis
    h = grid.spacing
    acc = np.zeros(grid.shape)
    for a in range(grid.dim):
        d = np.arange(N)
        d = np.minimum(d, N - d) * h
        sl = [None] * grid.dim
        sl[a] = slice(None)
        acc = acc + (d**2)[tuple(sl)]
    return np.fft.fftn((acc < radius**2).astype(float))


def cone_cell_counts(grid: Grid, ladder: ScaleLadder, cone: Cone) -> np.ndarray:
    """Number of cells in the cone cross-section at each level."""
    N, h = grid.points_per_axis, grid.spacing
    counts = []
    for t in ladder.ts:
        acc = np.zeros(grid.shape)
        for a in range(grid.dim):
            d = np.arange(N)
            d = np.minimum(d, N - d) * h
            sl = [None] * grid.dim
            sl[a] = slice(None)
            acc = acc + (d**2)[tuple(sl)]
        counts.append(int(np.sum(acc < (cone.aperture * t) ** 2)))
    return np.asarray(counts)


def cone_measure_constant(grid: Grid, ladder: ScaleLadder, cone: Cone) -> float:
    """Ladder-averaged discrete cone cross-section measure
    (the constant in the T^2 Fubini identity, exactly combinatorial)."""
    counts = cone_cell_counts(grid, ladder, cone)
    w = ladder.weights
    c_per_level = grid.cell_volume * counts / ladder.ts**grid.dim
    return float(np.sum(w * c_per_level) / np.sum(w))


# ---------------------------------------------------------------------------
# lifting operators
# ---------------------------------------------------------------------------


def q_psi(
    engine: SemigroupEngine,
    psi: SymbolFunction,
    quad: ContourQuadrature | None,
    ladder: ScaleLadder,
    f: GridFunction,
) -> SpaceTimeField:
    """Q_psi f (x, j) = [psi(t_j^2 L) f](x).

    Symbols of the exponential family z^k e^{-z} ride the semigroup directly;
    everything else goes through one contour plan evaluated per level.
    """
    J = ladder.levels
    out = np.empty((J,) + engine.grid.shape, dtype=np.complex128)
    k = psi_exponential_order(psi)
    if k is not None:
        for j, t in enumerate(ladder.ts):
            out[j] = heat_derivative_apply(engine, t**2, k, f).values
        return SpaceTimeField(engine.grid, ladder, out)
    if engine.method != "dense":
        from .funcalc import apply_symbol

        for j, t in enumerate(ladder.ts):
            out[j] = apply_symbol(engine, psi.scaled(t**2), quad, f).values
        return SpaceTimeField(engine.grid, ladder, out)
    plan = contour_plan(
        engine, psi, quad, scale_window=(ladder.t_min**2, ladder.t_max**2)
    )
    fm = complex(np.mean(f.values))
    f0 = GridFunction(f.grid, f.values - fm)
    zero_val = psi.value_at_zero if np.isfinite(psi.value_at_zero) else 0.0
    for j, t in enumerate(ladder.ts):
        lvl = engine.apply_spectral(lambda w, _t=t: plan.scalar_values(_t**2 * w), f0)
        out[j] = lvl.values + zero_val * fm
    return SpaceTimeField(engine.grid, ladder, out)


def pi_psi(
    engine: SemigroupEngine,
    psi: SymbolFunction,
    quad: ContourQuadrature | None,
    F: SpaceTimeField,
) -> GridFunction:
    """pi_psi F = sum_j psi(t_j^2 L) F(., j) w_j (discrete dt/t integral)."""
    ladder = F.ladder
    acc = np.zeros(engine.grid.shape, dtype=np.complex128)
    k = psi_exponential_order(psi)
    if k is not None:
        for j, (t, w) in enumerate(zip(ladder.ts, ladder.weights)):
            lvl = GridFunction(engine.grid, F.values[j])
            acc += w * heat_derivative_apply(engine, t**2, k, lvl).values
        return GridFunction(engine.grid, acc)
    if engine.method != "dense":
        from .funcalc import apply_symbol

        for j, (t, w) in enumerate(zip(ladder.ts, ladder.weights)):
            lvl = GridFunction(engine.grid, F.values[j])
            acc += w * apply_symbol(engine, psi.scaled(t**2), quad, lvl).values
        return GridFunction(engine.grid, acc)
    plan = contour_plan(
        engine, psi, quad, scale_window=(ladder.t_min**2, ladder.t_max**2)
    )
    zero_val = psi.value_at_zero if np.isfinite(psi.value_at_zero) else 0.0
    for j, (t, w) in enumerate(zip(ladder.ts, ladder.weights)):
        fm = complex(np.mean(F.values[j]))
        lvl = GridFunction(engine.grid, F.values[j] - fm)
        res = engine.apply_spectral(lambda wv, _t=t: plan.scalar_values(_t**2 * wv), lvl)
        acc += w * (res.values + zero_val * fm)
    return GridFunction(engine.grid, acc)


def spacetime_inner(F: SpaceTimeField, G: SpaceTimeField) -> complex:
    """<F, G> = sum_j w_j h^n sum_x F conj(G)."""
    w = F.ladder.weights
    per_level = np.array(
        [np.vdot(G.values[j], F.values[j]) for j in range(F.ladder.levels)]
    )
    return complex(F.grid.cell_volume * np.sum(w * per_level))


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


def area_functional(F: SpaceTimeField, cone: Cone, s_weight: float = 0.0) -> GridFunction:
    """A(x) = (sum_{(y,j) in cone(x)} |F(y,j)|^2 h^n w_j / t_j^{2s + n})^{1/2}."""
    grid = F.grid
    n = grid.dim
    acc = np.zeros(grid.shape)
    for j, (t, w) in enumerate(zip(F.ladder.ts, F.ladder.weights)):
        radius = cone.aperture * t
        kern = _ball_kernel_fft(grid, radius)
        dens = np.abs(F.values[j]) ** 2
        conv = np.real(np.fft.ifftn(np.fft.fftn(dens) * kern))
        if conv.size:
            peak = conv.max()
            if peak > 0:  # FFT noise floor: true zeros come back O(eps * peak)
                conv[conv < 1e-12 * peak] = 0.0
        acc += conv * (grid.cell_volume * w / t ** (2.0 * s_weight + n))
    return GridFunction(grid, np.sqrt(np.maximum(acc, 0.0)))


def carleson_functional(F: SpaceTimeField) -> GridFunction:
    """C(x) = max over dyadic cubes Q containing x of the Carleson box average
    (|Q|^{-1} sum_{y in Q, t_j <= l(Q)} |F|^2 h^n w_j)^{1/2}."""
    grid = F.grid
    h = grid.spacing
    ts = F.ladder.ts
    w = F.ladder.weights
    dens = np.abs(F.values) ** 2  # (J,) + shape
    best = np.zeros(grid.shape)
    for m in dyadic_levels(grid):
        ell = 2**m * h
        sel = ts <= ell
        if not np.any(sel):
            continue
        mass = np.tensordot(w[sel], dens[sel], axes=(0, 0)) * grid.cell_volume
        box = aligned_box_sums(mass, m) / ell**grid.dim
        best = np.maximum(best, expand_level(box, m))
    return GridFunction(grid, np.sqrt(np.maximum(best, 0.0)))


def conical_square_function(
    engine: SemigroupEngine,
    f: GridFunction,
    ladder: ScaleLadder,
    cone: Cone = Cone(),
) -> GridFunction:
    """The heat-semigroup square function: area functional of (t^2 L)e^{-t^2 L} f."""
    from .funcalc import builtin_symbols

    F = q_psi(engine, builtin_symbols()["psi0"], None, ladder, f)
    return area_functional(F, cone, 0.0)


def vertical_square_function(
    engine: SemigroupEngine, f: GridFunction, ladder: ScaleLadder
) -> GridFunction:
    """S* f(x) = (sum_j |(t_j^2 L) e^{-t_j^2 L} f(x)|^2 w_j)^{1/2}."""
    acc = np.zeros(engine.grid.shape)
    for t, w in zip(ladder.ts, ladder.weights):
        lvl = heat_derivative_apply(engine, t**2, 1, f)
        acc += w * np.abs(lvl.values) ** 2
    return GridFunction(engine.grid, np.sqrt(acc))


def calderon_reproduce(
    engine: SemigroupEngine,
    psi: SymbolFunction,
    psi_tilde: SymbolFunction,
    quad: ContourQuadrature | None,
    ladder: ScaleLadder,
    f: GridFunction,
) -> GridFunction:
    """pi_{psi_tilde} Q_psi f normalized by the exact pairing constant;
    approximates the mean-zero part of f (reproducing formula)."""
    kappa = calderon_pairing_constant(psi, psi_tilde)
    F = q_psi(engine, psi, quad, ladder, f)
    out = pi_psi(engine, psi_tilde, quad, F)
    return GridFunction(engine.grid, out.values / kappa)

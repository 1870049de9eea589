"""Tent-space norms, atoms, and the stopping-time atomic decomposition.

The decomposition follows the classical constructive proof: level sets
O_k = {A F > 2^k} of the area functional, tents assigned by the largest k
whose level set swallows the cone base of a space-time cell, Whitney-type
maximal dyadic cubes with majority overlap, and exact cellwise pieces
lambda_j A_j = F 1_{S_j}.  Every emitted atom is normalized to satisfy the
Carleson-box size bound with equality, so reconstruction is exact and the
atom property holds by construction; the l^p coefficient comparability is
the empirically probed part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import UnsupportedExponent
from .funcalc import SymbolFunction, calderon_pairing_constant, builtin_symbols
from .grid import (
    CubeSpec,
    Grid,
    GridFunction,
    aligned_box_sums,
    lp_norm,
)
from .semigroup import SemigroupEngine, heat_derivative_apply
from .squarefun import Cone, ScaleLadder, SpaceTimeField, area_functional


# ---------------------------------------------------------------------------
# atoms
# ---------------------------------------------------------------------------


@dataclass
class TentAtom:
    """Space-time function supported in the Carleson box over its cube."""

    cube: CubeSpec
    values: SpaceTimeField
    p: float

    def box_norm(self) -> float:
        """(sum over the box of |A|^2 h^n w_j)^{1/2} (discrete dx dt/t)."""
        return float(np.sqrt(self.values.sqnorm()))

    def allowed(self) -> float:
        grid = self.values.grid
        return self.cube.volume(grid) ** (0.5 - 1.0 / self.p)

    def bound_slack(self) -> float:
        """box_norm / allowed; valid atoms have slack <= 1 (+ round-off)."""
        return self.box_norm() / self.allowed()

    def support_ok(self) -> bool:
        """Support contained in Q x (0, l(Q)] exactly."""
        grid = self.values.grid
        from .grid import dilated_cube_mask

        space = dilated_cube_mask(grid, self.cube, 0)
        ell = self.cube.side_length(grid)
        for j, t in enumerate(self.values.ladder.ts):
            lvl = self.values.values[j]
            if t > ell and np.any(lvl != 0):
                return False
            if np.any(lvl[~space] != 0):
                return False
        return True


@dataclass
class TentDecomposition:
    atoms: list
    coefficients: list
    support_sets: list  # boolean masks (J,) + grid.shape, pairwise disjoint

    def reconstruct(self, grid: Grid, ladder: ScaleLadder) -> SpaceTimeField:
        acc = np.zeros((ladder.levels,) + grid.shape, dtype=np.complex128)
        for lam, atom in zip(self.coefficients, self.atoms):
            acc += lam * atom.values.values
        return SpaceTimeField(grid, ladder, acc)

    def coefficient_sum(self, p: float) -> float:
        return float(np.sum(np.abs(self.coefficients) ** p))


def tent_norm(F: SpaceTimeField, p: float, cone: Cone = Cone()) -> float:
    """T^p norm: L^p norm of the area functional."""
    if p <= 0 or np.isinf(p):
        raise UnsupportedExponent("tent_norm needs 0 < p < inf")
    return lp_norm(area_functional(F, cone, 0.0), p)


# ---------------------------------------------------------------------------
# stopping-time decomposition
# ---------------------------------------------------------------------------


def _tent_assignment(F: SpaceTimeField, cone: Cone) -> tuple:
    """Largest k with {AF > 2^k} swallowing each cell's cone base.

    Returns (A, k_cell) where k_cell is an integer array over occupied cells
    (np.iinfo.min marks unoccupied cells).
    """
    grid = F.grid
    A = area_functional(F, cone, 0.0).values.real
    N = grid.points_per_axis
    h = grid.spacing
    J = F.ladder.levels
    k_cell = np.full((J,) + grid.shape, np.iinfo(np.int64).min, dtype=np.int64)
    occupied = np.abs(F.values) > 0
    for j, t in enumerate(F.ladder.ts):
        if not occupied[j].any():
            continue
        rad = cone.aperture * t
        rc = int(np.ceil(rad / h)) - 1  # offsets with |d| h < rad
        if 2 * rc + 1 >= N:
            m_field = np.full(grid.shape, A.min())
        elif rc <= 0:
            m_field = A
        else:
            foot = np.zeros((2 * rc + 1,) * grid.dim, dtype=bool)
            mesh = np.meshgrid(*[np.arange(-rc, rc + 1)] * grid.dim, indexing="ij")
            dist2 = sum((m * h) ** 2 for m in mesh)
            foot[dist2 < rad**2] = True
            m_field = ndimage.minimum_filter(A, footprint=foot, mode="wrap")
        pos = occupied[j] & (m_field > 0)
        with np.errstate(divide="ignore"):
            k = np.floor(np.log2(m_field, where=m_field > 0, out=np.zeros_like(m_field)))
        k = k.astype(np.int64)
        exact = 2.0**k >= m_field  # want 2^k < m <= 2^{k+1}
        k = np.where(exact, k - 1, k)
        k_cell[j][pos] = k[pos]
    return A, k_cell


def _whitney_cubes(grid: Grid, indicator: np.ndarray, frac: float = 0.5) -> list:
    """Maximal aligned dyadic cubes with |Q cap O| > frac |Q| (top-down)."""
    from .grid import dyadic_levels

    levels = dyadic_levels(grid)[::-1]  # coarse to fine
    chosen = []
    blocked = np.zeros(grid.shape, dtype=bool)  # covered by a chosen ancestor
    ind = indicator.astype(float)
    for m in levels:
        s = 2**m
        sums = aligned_box_sums(ind, m)
        fracs = sums / float(s**grid.dim)
        it = np.argwhere(fracs > frac)
        for idx in it:
            corner = tuple(int(i) * s for i in idx)
            probe = tuple(slice(c, c + s) for c in corner)
            if blocked[probe].any():
                continue
            blocked[probe] = True
            chosen.append(CubeSpec(corner, s))
    return chosen


def _aligned_ancestor(grid: Grid, cube: CubeSpec, level: int) -> CubeSpec:
    s = 2**level
    corner = tuple((c // s) * s for c in cube.corner)
    return CubeSpec(corner, s)


def atomic_decompose(
    F: SpaceTimeField,
    p: float,
    cone: Cone = Cone(),
    whitney_frac: float = 0.5,
    dilation: int = 2,
) -> TentDecomposition:
    """Stopping-time T^p-atomic decomposition with exact reconstruction.

    Each occupied space-time cell is assigned to the finest level set whose
    tent contains it, then to the Whitney cube of that level set under its
    base point.  The atom cube is the aligned dyadic ancestor of the Whitney
    cube, grown (by the dilation factor, then further if the cell heights
    require it) until the Carleson box swallows the piece; cubes cap at the
    torus.  lambda_j normalizes each atom to the size bound with equality.
    """
    if p > 1 or p <= 0:
        raise UnsupportedExponent("tent atomic decomposition needs 0 < p <= 1")
    grid = F.grid
    ladder = F.ladder
    h = grid.spacing
    max_level = int(np.log2(grid.points_per_axis))
    _, k_cell = _tent_assignment(F, cone)
    ks = np.unique(k_cell[k_cell > np.iinfo(np.int64).min])
    A_field = area_functional(F, cone, 0.0).values.real
    atoms, lams, supports = [], [], []
    for k in ks:
        O_k = A_field > 2.0 ** float(k)
        if not O_k.any():
            continue
        cubes = _whitney_cubes(grid, O_k, whitney_frac)
        cells_k = k_cell == k  # (J,)+shape
        if not cells_k.any():
            continue
        for cube in cubes:
            from .grid import dilated_cube_mask

            base = dilated_cube_mask(grid, cube, 0)
            piece = cells_k & base[None, ...]
            if not piece.any():
                continue
            # atom cube: aligned ancestor large enough for the piece heights
            t_top = ladder.ts[np.where(piece.any(axis=tuple(range(1, piece.ndim))))[0].max()]
            lvl = int(np.log2(cube.size)) + max(1, int(np.ceil(np.log2(dilation))))
            need = int(np.ceil(np.log2(max(t_top / h, 1.0))))
            lvl = min(max(lvl, need), max_level)
            Q = _aligned_ancestor(grid, cube, lvl)
            vals = np.where(piece, F.values, 0.0)
            piece_field = SpaceTimeField(grid, ladder, vals)
            observed = float(np.sqrt(piece_field.sqnorm()))
            if observed == 0.0:
                continue
            allowed = Q.volume(grid) ** (0.5 - 1.0 / p)
            lam = observed / allowed
            atom = TentAtom(Q, SpaceTimeField(grid, ladder, vals / lam), p)
            atoms.append(atom)
            lams.append(lam)
            supports.append(piece)
    return TentDecomposition(atoms, np.asarray(lams), supports)


# ---------------------------------------------------------------------------
# synthesis toward molecules
# ---------------------------------------------------------------------------


def pi_ml(engine: SemigroupEngine, M: int, F) -> GridFunction:
    """pi_{M,L} F = sum_j (t_j^2 L)^{M+1} e^{-t_j^2 L} F(., j) w_j."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if isinstance(F, TentAtom):
        F = F.values
    ladder = F.ladder
    acc = np.zeros(engine.grid.shape, dtype=np.complex128)
    for j, (t, w) in enumerate(zip(ladder.ts, ladder.weights)):
        lvl = GridFunction(engine.grid, F.values[j])
        acc += w * heat_derivative_apply(engine, t**2, M + 1, lvl).values
    return GridFunction(engine.grid, acc)


def pi_ml_reproducing_constant(M: int) -> float:
    """c_M with c_M pi_{M,L}(t^2 L e^{-t^2 L} f) = f on the mean-zero part;
    evaluated by quadrature of the composed scalar integrand."""
    psi_m = SymbolFunction(
        f"power_exp_{M + 1}", lambda z: z ** (M + 1) * np.exp(-z), M + 1, np.inf, "psi"
    )
    kappa = calderon_pairing_constant(psi_m, builtin_symbols()["psi0"])
    return float(1.0 / kappa.real)

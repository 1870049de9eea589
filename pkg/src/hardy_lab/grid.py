"""Periodic grid discretization of divergence-form operators.

The ambient domain is the torus [0, side)^dim sampled at N cells per axis
(cell centers at (k + 1/2) h, h = side/N).  The second-order operator is
assembled in conservation form

    L_h = G* B G,

where G is the forward-difference gradient (periodic wrap), G* its
conjugate transpose scaled by 1/h, and B a per-cell coefficient block
obtained by face-averaging the sampled matrix field.  This guarantees,
by construction, that L_h realizes the discrete sesquilinear form
sum_cells <B grad f, grad g> h^n: constants are annihilated exactly,
accretivity follows cellwise from the ellipticity of the blocks, and a
Hermitian-valued field yields a Hermitian matrix.

Cubes are axis-aligned and grid-aligned with side a power of two times h,
so dyadic dilates and annuli are exact cell partitions (half-open boxes
in torus displacement).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    EllipticityViolation,
    InvalidDimension,
    InvalidResolution,
    RingOutOfRange,
)

_SPARSE_BUILD_LIMIT = 400_000  # cells; above this the matrix stays matrix-free


# ---------------------------------------------------------------------------
# grid and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Periodic uniform grid on the torus [0, side)^dim."""

    dim: int
    points_per_axis: int
    side: float = 1.0

    @property
    def spacing(self) -> float:
        return self.side / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_count(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def coordinates(self, offset: Sequence[float] | None = None) -> list:
        """Per-axis arrays of torus-centered cell-center coordinates.

        Coordinates are reduced to [-side/2, side/2).  ``offset`` shifts the
        origin (e.g. half-cell offsets to place a singularity at a corner).
        """
        out = []
        for a in range(self.dim):
            x = (np.arange(self.points_per_axis) + 0.5) * self.spacing
            if offset is not None:
                x = x - offset[a]
            else:
                x = x - self.side / 2.0
            x = (x + self.side / 2.0) % self.side - self.side / 2.0
            out.append(x)
        return out

    def meshgrid(self, offset: Sequence[float] | None = None) -> list:
        return list(np.meshgrid(*self.coordinates(offset), indexing="ij"))


def build_grid(dim: int, points_per_axis: int, side: float = 1.0) -> Grid:
    """Validated grid constructor (dim in {1,2,3}, N a power of two >= 4)."""
    if dim not in (1, 2, 3):
        raise InvalidDimension(f"dim must be 1, 2 or 3, got {dim}")
    n = int(points_per_axis)
    if n < 4 or (n & (n - 1)) != 0:
        raise InvalidResolution(
            f"points_per_axis must be a power of two >= 4, got {points_per_axis}"
        )
    if side <= 0:
        raise InvalidResolution(f"side must be positive, got {side}")
    return Grid(dim, n, float(side))


@dataclass
class GridFunction:
    """Complex scalar field (shape grid.shape) or vector field ((dim,)+shape)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape == self.grid.shape:
            pass
        elif self.values.shape == (self.grid.dim,) + self.grid.shape:
            pass
        elif self.values.size == self.grid.cell_count:
            self.values = self.values.reshape(self.grid.shape)
        elif self.values.size == self.grid.dim * self.grid.cell_count:
            self.values = self.values.reshape((self.grid.dim,) + self.grid.shape)
        else:
            raise ValueError(
                f"values of size {self.values.size} do not match grid "
                f"with {self.grid.cell_count} cells"
            )

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.dim + 1

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


def lp_norm(f: GridFunction, p: float) -> float:
    """Discrete L^p norm (h^n sum |f|^p)^(1/p); max |f| for p = inf."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    mag = np.abs(f.values)
    if f.is_vector:
        mag = np.sqrt(np.sum(mag**2, axis=0))
    if np.isinf(p):
        return float(mag.max())
    return float((f.grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """h^n-weighted inner product <f, g> = h^n sum f conj(g)."""
    return complex(f.grid.cell_volume * np.vdot(g.values, f.values))


def mean_value(f: GridFunction) -> complex:
    return complex(np.mean(f.values))


def mean_zero_part(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, f.values - np.mean(f.values))


def fourier_mode(grid: Grid, k: Sequence[int]) -> GridFunction:
    """Unit-L^2 discrete Fourier mode exp(2 pi i k.x/side)/side^{n/2}."""
    mesh = np.meshgrid(
        *[np.arange(grid.points_per_axis) for _ in range(grid.dim)], indexing="ij"
    )
    phase = sum(2j * np.pi * k[a] * mesh[a] / grid.points_per_axis for a in range(grid.dim))
    vals = np.exp(phase) / grid.side ** (grid.dim / 2.0)
    return GridFunction(grid, vals)


def random_field(grid: Grid, rng: np.random.Generator, mean_zero: bool = False) -> GridFunction:
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if mean_zero:
        vals = vals - vals.mean()
    return GridFunction(grid, vals)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


@dataclass
class CoefficientField:
    """Per-cell n x n complex matrix A(x); shape grid.shape + (n, n)."""

    grid: Grid
    entries: np.ndarray
    lam: float | None = None
    Lam: float | None = None
    scalar_value: complex | None = None  # set when A = c I exactly

    def __post_init__(self):
        n = self.grid.dim
        self.entries = np.asarray(self.entries, dtype=np.complex128)
        want = self.grid.shape + (n, n)
        if self.entries.shape != want:
            self.entries = self.entries.reshape(want)

    def adjoint(self) -> "CoefficientField":
        """Field of conjugate-transposed matrices (generates L*)."""
        ent = np.conj(np.swapaxes(self.entries, -1, -2))
        sv = None if self.scalar_value is None else np.conj(self.scalar_value)
        return CoefficientField(self.grid, ent, self.lam, self.Lam, sv)


def identity_coefficients(grid: Grid) -> CoefficientField:
    ent = np.zeros(grid.shape + (grid.dim, grid.dim), dtype=np.complex128)
    idx = np.arange(grid.dim)
    ent[..., idx, idx] = 1.0
    return CoefficientField(grid, ent, scalar_value=1.0 + 0.0j)


def scalar_coefficients(grid: Grid, c: complex) -> CoefficientField:
    f = identity_coefficients(grid)
    f.entries = f.entries * c
    f.scalar_value = complex(c)
    return f


def coefficients_from_descriptor(grid: Grid, descriptor: dict) -> CoefficientField:
    """Build a coefficient field from a JSON-style descriptor.

    Kinds: "identity"; "scalar" with "value" (complex as [re, im] or number);
    "frehse" with the Frehse parameters (see counterexamples module);
    "file" with "path" to interleaved re/im doubles, row-major
    cell-then-entry order.
    """
    kind = descriptor.get("kind")
    if kind == "identity":
        return identity_coefficients(grid)
    if kind == "scalar":
        v = descriptor["value"]
        c = complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        return scalar_coefficients(grid, c)
    if kind == "frehse":
        from .counterexamples import FrehseConfig, frehse_field

        cfg = FrehseConfig(
            q=descriptor.get("q", 1.4),
            lambda_F=descriptor.get("lambda_F", 1.0),
            alpha=descriptor.get("alpha", 0.05),
            beta=(
                complex(descriptor["beta"][0], descriptor["beta"][1])
                if "beta" in descriptor
                else None
            ),
            n=grid.dim,
        )
        return frehse_field(cfg, grid)
    if kind == "file":
        raw = np.fromfile(Path(descriptor["path"]), dtype=np.float64)
        n = grid.dim
        want = grid.cell_count * n * n * 2
        if raw.size != want:
            raise ValueError(f"file holds {raw.size} doubles, expected {want}")
        raw = raw.reshape(grid.cell_count, n, n, 2)
        ent = raw[..., 0] + 1j * raw[..., 1]
        return CoefficientField(grid, ent.reshape(grid.shape + (n, n)))
    raise ValueError(f"unknown coefficient kind {kind!r}")


def save_coefficient_file(coeffs: CoefficientField, path) -> None:
    ent = coeffs.entries.reshape(coeffs.grid.cell_count, coeffs.grid.dim, coeffs.grid.dim)
    raw = np.stack([ent.real, ent.imag], axis=-1)
    raw.astype(np.float64).tofile(path)


def _probe_directions(dim: int, probe_count: int, seed: int = 0) -> np.ndarray:
    """Coordinate basis plus seeded complex unit vectors, shape (P, dim)."""
    rng = np.random.default_rng(seed)
    dirs = [np.eye(dim, dtype=np.complex128)[a] for a in range(dim)]
    for _ in range(probe_count):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def check_ellipticity(
    coeffs: CoefficientField, probe_count: int = 16, seed: int = 0
) -> tuple:
    """Probe the ellipticity constants (lambda, Lambda) of Eq-(1.2) type.

    lambda = min over cells and probe directions of Re <A xi, xi>;
    Lambda = max over cells and probe pairs of |<A xi, zeta>|.
    Probes are the coordinate basis plus ``probe_count`` seeded complex
    unit vectors.  Raises EllipticityViolation when lambda <= 0.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    n = coeffs.grid.dim
    A = coeffs.entries.reshape(-1, n, n)
    dirs = _probe_directions(n, probe_count, seed)
    lam = np.inf
    lam_cell = None
    Lam = 0.0
    # A xi for every probe: shape (P, cells, n)
    Axi = np.einsum("cab,pb->pca", A, dirs)
    for p in range(dirs.shape[0]):
        ray = np.real(np.einsum("ca,a->c", Axi[p], np.conj(dirs[p])))
        m = ray.min()
        if m < lam:
            lam = m
            lam_cell = int(np.argmin(ray))
        for q in range(dirs.shape[0]):
            bil = np.abs(np.einsum("ca,a->c", Axi[p], np.conj(dirs[q])))
            Lam = max(Lam, float(bil.max()))
    if lam <= 0:
        cell = np.unravel_index(lam_cell, coeffs.grid.shape)
        raise EllipticityViolation(cell, lam)
    coeffs.lam = float(lam)
    coeffs.Lam = float(Lam)
    return float(lam), float(Lam)


def _sector_angle_from_probes(
    coeffs: CoefficientField, probe_count: int = 16, seed: int = 0
) -> float:
    """Numerical-range sector angle: max |arg <A xi, xi>| over cells/probes."""
    n = coeffs.grid.dim
    A = coeffs.entries.reshape(-1, n, n)
    dirs = _probe_directions(n, probe_count, seed)
    worst = 0.0
    for p in range(dirs.shape[0]):
        q = np.einsum("cab,b,a->c", A, dirs[p], np.conj(dirs[p]))
        re = np.real(q)
        im = np.abs(np.imag(q))
        ok = re > 0
        if not np.all(ok):
            bad = int(np.argmin(re))
            raise EllipticityViolation(np.unravel_index(bad, coeffs.grid.shape), re.min())
        worst = max(worst, float(np.max(im / re)))
    return float(np.arctan(worst))


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------


@dataclass
class DiscreteOperator:
    """Sparse periodic realization of -div(A grad) plus grid metadata."""

    grid: Grid
    blocks: np.ndarray  # face-averaged per-cell coefficient blocks
    lam: float
    Lam: float
    sector_angle: float
    coeffs: CoefficientField = field(repr=False, default=None)
    scalar_value: complex | None = None  # c when L = c * (-Delta_h) exactly
    _matrix: sp.spmatrix = field(repr=False, default=None)

    @property
    def matrix(self) -> sp.spmatrix:
        if self._matrix is None:
            if self.grid.cell_count > _SPARSE_BUILD_LIMIT:
                raise MemoryError(
                    "grid too large for explicit sparse assembly; use .apply()"
                )
            self._matrix = _build_sparse(self.grid, self.blocks)
        return self._matrix

    @property
    def shape(self) -> tuple:
        return (self.grid.cell_count, self.grid.cell_count)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Matrix-free L_h action on a shaped (or flat) cell array."""
        g = self.grid
        shaped = np.asarray(values, dtype=np.complex128).reshape(g.shape)
        return _apply_blocks(g, self.blocks, shaped).reshape(np.asarray(values).shape)

    def apply_adjoint(self, values: np.ndarray) -> np.ndarray:
        g = self.grid
        shaped = np.asarray(values, dtype=np.complex128).reshape(g.shape)
        blocks_h = np.conj(np.swapaxes(self.blocks, -1, -2))
        return _apply_blocks(g, blocks_h, shaped).reshape(np.asarray(values).shape)

    def adjoint(self) -> "DiscreteOperator":
        """Operator for the adjoint form (coefficient blocks conj-transposed)."""
        blocks_h = np.conj(np.swapaxes(self.blocks, -1, -2))
        return DiscreteOperator(
            grid=self.grid,
            blocks=blocks_h,
            lam=self.lam,
            Lam=self.Lam,
            sector_angle=self.sector_angle,
            coeffs=self.coeffs.adjoint() if self.coeffs is not None else None,
            scalar_value=None if self.scalar_value is None else np.conj(self.scalar_value),
        )

    def laplacian_symbol(self) -> np.ndarray:
        """Symbol of the A = I operator on this grid: sum_a 4 sin^2(pi k_a/N)/h^2."""
        return laplacian_symbol(self.grid)


def laplacian_symbol(grid: Grid) -> np.ndarray:
    N, h = grid.points_per_axis, grid.spacing
    one = 4.0 * np.sin(np.pi * np.arange(N) / N) ** 2 / h**2
    mesh = np.meshgrid(*[one] * grid.dim, indexing="ij")
    return sum(mesh)


def _grad(g: Grid, f: np.ndarray) -> list:
    h = g.spacing
    return [(np.roll(f, -1, axis=a) - f) / h for a in range(g.dim)]


def _div_adj(g: Grid, w: list) -> np.ndarray:
    # adjoint of the forward-difference gradient: (G_a^* v) = (roll(v,+1,a) - v)/h
    h = g.spacing
    out = np.zeros(g.shape, dtype=np.complex128)
    for a in range(g.dim):
        out += (np.roll(w[a], 1, axis=a) - w[a]) / h
    return out


def _apply_blocks(g: Grid, blocks: np.ndarray, f: np.ndarray) -> np.ndarray:
    grad = _grad(g, f)
    w = []
    for a in range(g.dim):
        acc = np.zeros(g.shape, dtype=np.complex128)
        for b in range(g.dim):
            acc += blocks[..., a, b] * grad[b]
        w.append(acc)
    return _div_adj(g, w)


def gradient_values(g: Grid, f: np.ndarray) -> np.ndarray:
    """Forward-difference gradient, stacked (dim,)+shape (face-centered)."""
    return np.stack(_grad(g, np.asarray(f, dtype=np.complex128).reshape(g.shape)))


def divergence_values(g: Grid, w: np.ndarray) -> np.ndarray:
    """Negative adjoint of gradient_values: div G = -G*."""
    return -_div_adj(g, [w[a] for a in range(g.dim)])


def _shift_matrix(grid: Grid, axis: int) -> sp.spmatrix:
    N = grid.points_per_axis
    C = sp.csr_matrix(np.roll(np.eye(N), 1, axis=1))  # (Cf)_i = f_{i+1 mod N}
    mats = []
    for a in range(grid.dim):
        mats.append(C if a == axis else sp.eye(N, dtype=np.complex128))
    S = mats[0]
    for m in mats[1:]:
        S = sp.kron(S, m, format="csr")
    return S


def _build_sparse(grid: Grid, blocks: np.ndarray) -> sp.spmatrix:
    h = grid.spacing
    M = grid.cell_count
    eye = sp.eye(M, dtype=np.complex128, format="csr")
    G = [(_shift_matrix(grid, a) - eye) / h for a in range(grid.dim)]
    L = sp.csr_matrix((M, M), dtype=np.complex128)
    for a in range(grid.dim):
        acc = sp.csr_matrix((M, M), dtype=np.complex128)
        for b in range(grid.dim):
            W = sp.diags(blocks[..., a, b].reshape(-1))
            acc = acc + W @ G[b]
        L = L + G[a].getH() @ acc
    return L.tocsr()


def face_averaged_blocks(coeffs: CoefficientField) -> np.ndarray:
    """Cell blocks from face samples: mean over axes of (A_i + A_{i+e_a})/2."""
    g = coeffs.grid
    ent = coeffs.entries
    acc = np.zeros_like(ent)
    for a in range(g.dim):
        acc += 0.5 * (ent + np.roll(ent, -1, axis=a))
    return acc / g.dim


def assemble_operator(
    coeffs: CoefficientField, probe_count: int = 16, seed: int = 0
) -> DiscreteOperator:
    """Assemble L_h = G* B G from a validated coefficient field.

    The ellipticity probe runs first (EllipticityViolation propagates).
    For A = c I the result is exactly the (2n+1)-point periodic Laplacian
    scaled by c.
    """
    lam, Lam = check_ellipticity(coeffs, probe_count=probe_count, seed=seed)
    omega = _sector_angle_from_probes(coeffs, probe_count=probe_count, seed=seed)
    blocks = face_averaged_blocks(coeffs)
    return DiscreteOperator(
        grid=coeffs.grid,
        blocks=blocks,
        lam=lam,
        Lam=Lam,
        sector_angle=omega,
        coeffs=coeffs,
        scalar_value=coeffs.scalar_value,
    )


# ---------------------------------------------------------------------------
# cubes, dilates, dyadic annuli
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubeSpec:
    """Grid-aligned cube: corner cell index and size in cells (power of two)."""

    corner: tuple
    size: int

    def side_length(self, grid: Grid) -> float:
        return self.size * grid.spacing

    def center_units(self) -> tuple:
        # cube center in cell units (cell centers sit at integer + 1/2)
        return tuple(c + self.size / 2.0 for c in self.corner)

    def volume(self, grid: Grid) -> float:
        return self.side_length(grid) ** grid.dim


def cube_from_center(grid: Grid, center: Sequence[int], side_cells: int) -> CubeSpec:
    s = int(side_cells)
    if s < 1 or (s & (s - 1)) != 0:
        raise InvalidResolution(f"cube side must be a power of two in cells, got {s}")
    N = grid.points_per_axis
    corner = tuple((int(c) - (s - 1) // 2) % N for c in center)
    return CubeSpec(corner, s)


def _axis_deltas(grid: Grid, mu: float) -> np.ndarray:
    """Torus displacement of cell centers from mu, in cell units, in [-N/2, N/2)."""
    N = grid.points_per_axis
    d = (np.arange(N) + 0.5 - mu) % N
    return np.where(d >= N / 2.0, d - N, d)


def dilated_cube_mask(grid: Grid, cube: CubeSpec, j: int = 0) -> np.ndarray:
    """Boolean mask of 2^j Q (half-open torus box around the cube center)."""
    N = grid.points_per_axis
    w = cube.size * 2**j / 2.0
    if 2 * w > N:
        raise RingOutOfRange(
            f"dilate 2^{j} of a {cube.size}-cell cube exceeds the torus ({N} cells)"
        )
    mask = np.ones(grid.shape, dtype=bool)
    mu = cube.center_units()
    for a in range(grid.dim):
        d = _axis_deltas(grid, mu[a])
        ax_mask = (d >= -w) & (d < w)
        sl = [None] * grid.dim
        sl[a] = slice(None)
        mask &= ax_mask[tuple(sl)]
    return mask


def annulus_mask(grid: Grid, cube: CubeSpec, j: int) -> np.ndarray:
    """Dyadic annulus: Q itself for j = 0, 2^j Q minus 2^(j-1) Q for j >= 1."""
    if j == 0:
        return dilated_cube_mask(grid, cube, 0)
    outer = dilated_cube_mask(grid, cube, j)
    inner = dilated_cube_mask(grid, cube, j - 1)
    return outer & ~inner


def max_ring_index(grid: Grid, cube: CubeSpec) -> int:
    """Largest ring index before the dilate exceeds the torus."""
    j = 0
    while cube.size * 2 ** (j + 1) <= grid.points_per_axis:
        j += 1
    return j


def annular_restriction(
    f: GridFunction, cube_center: Sequence[int], cube_side: float, ring: int
) -> GridFunction:
    """Restrict f to the dyadic annulus S_ring(Q) around a grid-aligned cube."""
    grid = f.grid
    s = cube_side / grid.spacing
    s_int = int(round(s))
    if abs(s - s_int) > 1e-9:
        raise InvalidResolution(f"cube side {cube_side} is not a multiple of h")
    cube = cube_from_center(grid, cube_center, s_int)
    mask = annulus_mask(grid, cube, ring)
    return GridFunction(grid, np.where(mask, f.values, 0.0))


def dyadic_levels(grid: Grid) -> list:
    """Cube levels m = 0..log2(N): aligned cubes of side 2^m cells."""
    return list(range(int(np.log2(grid.points_per_axis)) + 1))


def aligned_box_sums(arr: np.ndarray, level: int) -> np.ndarray:
    """Sums of a nonneg array over every aligned dyadic cube of side 2^level.

    Returns an array of shape (N/2^level,)*dim with cube sums.
    """
    s = 2**level
    dim = arr.ndim
    out = arr
    for a in range(dim):
        N = out.shape[a]
        new_shape = out.shape[:a] + (N // s, s) + out.shape[a + 1 :]
        out = out.reshape(new_shape).sum(axis=a + 1)
    return out


def expand_level(arr: np.ndarray, level: int) -> np.ndarray:
    """Broadcast per-cube values back to cell resolution."""
    out = arr
    for a in range(arr.ndim):
        out = np.repeat(out, 2**level, axis=a)
    return out


def torus_distance_sq(grid: Grid, mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Squared torus distance between two cell sets (cell-center metric)."""
    pts_a = np.argwhere(mask_a)
    pts_b = np.argwhere(mask_b)
    if len(pts_a) == 0 or len(pts_b) == 0:
        return np.inf
    N = grid.points_per_axis
    h = grid.spacing
    best = np.inf
    for chunk in np.array_split(pts_a, max(1, len(pts_a) // 512)):
        d = np.abs(chunk[:, None, :] - pts_b[None, :, :])
        d = np.minimum(d, N - d) * h
        best = min(best, float(np.min(np.sum(d**2, axis=-1))))
    return best


def ball_mask(grid: Grid, center: Sequence[int], radius: float) -> np.ndarray:
    """Cells whose centers lie within torus distance < radius of a cell center."""
    N = grid.points_per_axis
    h = grid.spacing
    acc = np.zeros(grid.shape)
    for a in range(grid.dim):
        d = np.arange(N) - center[a]
        d = np.minimum(np.abs(d), N - np.abs(d)) * h
        sl = [None] * grid.dim
        sl[a] = slice(None)
        acc = acc + (d**2)[tuple(sl)]
    return acc < radius**2

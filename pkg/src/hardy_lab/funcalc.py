"""Holomorphic functional calculus via double-contour quadrature.

For a symbol psi with power decay at 0 and infinity on a sector containing
the numerical range of L, psi(L) is evaluated as

    psi(L) f = int_{Gamma_+} e^{-zL} eta_+(z) dz + int_{Gamma_-} e^{-zL} eta_-(z) dz,

with Gamma_+- the rays R^+ e^{+-i(pi/2 - theta)} and eta_+- themselves
computed by quadrature of e^{xi z} psi(xi) along the rays gamma_+- =
R^+ e^{+-i nu}, omega < theta < nu < mu < pi/2.  Ray orientations fix the
signs: the Cauchy sector boundary runs up gamma_+ and down gamma_-, so
eta_+ carries -1/(2 pi i) and eta_- carries +1/(2 pi i).

Negative fractional powers use the positive-time representation
L^{-a} f = Gamma(a)^{-1} int_0^infty t^{a-1} e^{-tL} f dt on the mean-zero
complement (the torus null space of L is the constants), which is better
conditioned for sectorial L than a contour for z^{-a}.

Bounded symbols with psi(0) != 0 (e.g. the heat symbol itself) are handled
by splitting off the mean: psi(L) f = psi(0) mean(f) + contour on f - mean(f);
on the mean-zero complement the spectrum is bounded away from zero and the
representation converges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AngleIncompatible,
    NonScalarOperator,
    NullComponent,
    QuadratureDivergence,
)
from .grid import Grid, GridFunction, laplacian_symbol
from .semigroup import SemigroupEngine, heat_apply


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolFunction:
    """Scalar symbol psi with decay metadata.

    sigma/tau are the decay orders at 0/infinity; class_tag is one of
    "psi" (power decay both ends), "hinf" (bounded, possibly psi(0) != 0),
    "polynomial-growth" (unbounded; only fractional powers are realized).
    """

    name: str
    fn: callable
    sigma: float
    tau: float
    class_tag: str = "psi"
    value_at_zero: complex = 0.0
    formula: str = ""

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=np.complex128))

    def scaled(self, s: float) -> "SymbolFunction":
        """psi(s z); same decay class."""
        base = self.fn
        return replace(
            self,
            name=f"{self.name}@{s:g}",
            fn=lambda z, _b=base, _s=s: _b(np.asarray(z, dtype=np.complex128) * _s),
        )

    def conj_reflected(self) -> "SymbolFunction":
        """z -> conj(psi(conj z)), the symbol pairing with the adjoint."""
        base = self.fn
        return replace(
            self,
            name=f"{self.name}~",
            fn=lambda z, _b=base: np.conj(_b(np.conj(np.asarray(z, dtype=np.complex128)))),
            value_at_zero=np.conj(self.value_at_zero),
        )


def _power_exp(M):
    return lambda z: z**M * np.exp(-z)


def builtin_symbols() -> dict:
    """The built-in battery keyed by name."""
    syms = {
        "heat": SymbolFunction(
            "heat", lambda z: np.exp(-z), 0.0, np.inf, "hinf", 1.0, "exp(-z)"
        ),
        "psi0": SymbolFunction("psi0", _power_exp(1), 1.0, np.inf, "psi", 0.0, "z*exp(-z)"),
        "psi0_2": SymbolFunction(
            "psi0_2", _power_exp(2), 2.0, np.inf, "psi", 0.0, "z^2*exp(-z)"
        ),
        "psi0_3": SymbolFunction(
            "psi0_3", _power_exp(3), 3.0, np.inf, "psi", 0.0, "z^3*exp(-z)"
        ),
        "resolvent_bump": SymbolFunction(
            "resolvent_bump", lambda z: z / (1.0 + z) ** 2, 1.0, 1.0, "psi", 0.0,
            "z/(1+z)^2",
        ),
        "bump_12": SymbolFunction(
            "bump_12", lambda z: z / (1.0 + z) ** 3, 1.0, 2.0, "psi", 0.0, "z/(1+z)^3"
        ),
        "bump_21": SymbolFunction(
            "bump_21", lambda z: z**2 / (1.0 + z) ** 3, 2.0, 1.0, "psi", 0.0,
            "z^2/(1+z)^3",
        ),
        "bump_exp": SymbolFunction(
            "bump_exp", lambda z: z * np.exp(-2.0 * z), 1.0, np.inf, "psi", 0.0,
            "z*exp(-2z)",
        ),
        "inv_sqrt": SymbolFunction(
            "inv_sqrt", lambda z: z**-0.5, -0.5, 0.5, "polynomial-growth", np.nan,
            "z^(-1/2)",
        ),
    }
    return syms


def psi_exponential_order(psi: SymbolFunction):
    """k when psi is (a scaling of) z^k e^{-cz}, else None (fast-path probe)."""
    name = psi.name.split("@")[0]
    return {"heat": 0, "psi0": 1, "psi0_2": 2, "psi0_3": 3, "bump_exp": None}.get(
        name, None
    )


def symbol_registry_json() -> str:
    reg = [
        {
            "name": s.name,
            "class": s.class_tag,
            "sigma": None if not np.isfinite(s.sigma) else s.sigma,
            "tau": None if not np.isfinite(s.tau) else s.tau,
            "formula": s.formula,
        }
        for s in builtin_symbols().values()
    ]
    return json.dumps(reg, indent=2)


def verify_symbol_class(psi: SymbolFunction, mu_angle: float, samples: int = 1000):
    """Fitted constant C with |psi| <= C min(|z|^sigma, |z|^-tau) on the sector.

    Samples rays of the open sector; for "hinf" only boundedness is checked.
    """
    rng = np.random.default_rng(7)
    radii = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), samples))
    angles = rng.uniform(-mu_angle, mu_angle, samples)
    z = radii * np.exp(1j * angles)
    vals = np.abs(psi(z))
    if psi.class_tag == "hinf":
        return float(np.max(vals))
    tau_eff = min(psi.tau, 2.0)  # exponential decay dominates any power
    envelope = np.minimum(radii**psi.sigma, radii**-tau_eff)
    return float(np.max(vals / envelope))


# ---------------------------------------------------------------------------
# contour quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContourQuadrature:
    """Discretization of the double-contour representation.

    theta/nu/mu are the ray angles (omega < theta < nu < mu < pi/2);
    decade_range scales the z-ray truncation relative to the operator's
    spectral bounds; the eta rays use their own fixed relative range.
    """

    theta: float
    nu: float
    mu: float
    nodes_per_decade: int = 20
    decade_range: tuple = (1e-8, 1e6)
    eta_nodes_per_decade: int = 20
    eta_decade_range: tuple = (1e-10, 1e10)


def default_quadrature(engine: SemigroupEngine, nodes_per_decade: int = 40) -> ContourQuadrature:
    """Angles at fixed fractions of the gap between omega and pi/2."""
    om = engine.omega
    gap = np.pi / 2.0 - om
    return ContourQuadrature(
        theta=om + 0.1 * gap,
        nu=om + 0.5 * gap,
        mu=om + 0.9 * gap,
        nodes_per_decade=nodes_per_decade,
        eta_nodes_per_decade=nodes_per_decade,
    )


def _log_nodes(lo: float, hi: float, per_decade: int):
    count = max(4, int(np.ceil(np.log10(hi / lo) * per_decade)) + 1)
    u = np.linspace(np.log(lo), np.log(hi), count)
    w = np.full(count, u[1] - u[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.exp(u), w


def spectral_bounds(engine: SemigroupEngine) -> tuple:
    """(mu_min, mu_max): spectral-gap lower bound on the mean-zero complement
    (ellipticity times the Laplacian gap) and a Gershgorin-type upper bound."""
    g = engine.grid
    gap = 4.0 * np.sin(np.pi / g.points_per_axis) ** 2 / g.spacing**2
    return engine.operator.lam * gap, engine.norm_bound()


def _check_angles(engine: SemigroupEngine, quad: ContourQuadrature):
    om = engine.omega
    if not (om < quad.theta < quad.nu < quad.mu < np.pi / 2.0):
        raise AngleIncompatible(
            f"need omega ({om:.4f}) < theta ({quad.theta:.4f}) < nu ({quad.nu:.4f})"
            f" < mu ({quad.mu:.4f}) < pi/2"
        )


class ScalarContourPlan:
    """Precomputed contour nodes: psi(arg) = sum_k w_k e^{-z_k arg}.

    Valid for spectral arguments with modulus in [arg_lo, arg_hi] inside the
    operator sector.  Applying the plan to an operator means replacing the
    scalar exponential with the semigroup: psi(L) f = sum_k w_k e^{-z_k L} f.
    """

    def __init__(self, psi: SymbolFunction, quad: ContourQuadrature, arg_lo: float, arg_hi: float):
        phi = np.pi / 2.0 - quad.theta
        rho, wrho = _log_nodes(
            quad.decade_range[0] / arg_hi,
            quad.decade_range[1] / arg_lo,
            quad.nodes_per_decade,
        )
        r, wr = _log_nodes(
            quad.eta_decade_range[0] * arg_lo,
            quad.eta_decade_range[1] * arg_hi,
            quad.eta_nodes_per_decade,
        )
        self.z_nodes = []
        self.weights = []
        for sign, eta_sign in ((+1, +1.0), (-1, -1.0)):
            ray = np.exp(1j * sign * phi)
            xi = r * np.exp(1j * sign * quad.nu)
            psi_xi = psi(xi) * xi  # dxi = xi dlog r (direction factor included)
            z = rho * ray
            # eta(z) = eta_sign/(2 pi i) * int e^{xi z} psi(xi) dxi
            # (the Cauchy sector boundary runs up gamma_+ and down gamma_-)
            expo = np.exp(np.outer(z, xi))
            eta = eta_sign / (2j * np.pi) * (expo @ (psi_xi * wr))
            if not np.all(np.isfinite(eta)):
                raise QuadratureDivergence("eta quadrature overflowed on the ray")
            w = eta * ray * rho * wrho  # dz = ray * rho dlog rho
            self.z_nodes.append(z)
            self.weights.append(w)
        self.z_all = np.concatenate(self.z_nodes)
        self.w_all = np.concatenate(self.weights)
        self.eta_plus = self.weights[0] / (np.exp(1j * phi) * rho * wrho)
        self.rho = rho

    def scalar_values(self, mu: np.ndarray) -> np.ndarray:
        """Quadrature evaluation of psi at scalar spectral points mu."""
        mu = np.asarray(mu, dtype=np.complex128)
        out = np.exp(-np.multiply.outer(mu, self.z_all)) @ self.w_all
        return out


def contour_plan(
    engine: SemigroupEngine,
    psi: SymbolFunction,
    quad: ContourQuadrature,
    scale_window: tuple = (1.0, 1.0),
) -> ScalarContourPlan:
    """Plan sized to the engine's spectral range, optionally widened so the
    same plan covers rescaled arguments s*mu for s in the given window."""
    _check_angles(engine, quad)
    mu_min, mu_max = spectral_bounds(engine)
    return ScalarContourPlan(
        psi, quad, mu_min * scale_window[0], mu_max * scale_window[1]
    )


def scalar_contour_error(
    engine: SemigroupEngine, psi: SymbolFunction, quad: ContourQuadrature, mu: np.ndarray
) -> float:
    """Max relative error of the contour quadrature on given spectral points."""
    plan = contour_plan(engine, psi, quad)
    approx = plan.scalar_values(mu)
    truth = psi(mu)
    scale = np.max(np.abs(truth))
    return float(np.max(np.abs(approx - truth)) / scale)


def apply_symbol(
    engine: SemigroupEngine,
    psi: SymbolFunction,
    quad: ContourQuadrature,
    f: GridFunction,
) -> GridFunction:
    """psi(L) f by the double-contour representation.

    Accepts decay-class symbols and bounded symbols with a finite value at 0
    (the mean rides along analytically: psi(L) preserves constants up to the
    factor psi(0) on the torus).
    """
    if psi.class_tag == "polynomial-growth":
        raise QuadratureDivergence(
            f"symbol {psi.name} is unbounded at 0; use fractional_power_apply"
        )
    plan = contour_plan(engine, psi, quad)
    fm = complex(np.mean(f.values))
    f0 = GridFunction(f.grid, f.values - fm)
    if engine.method == "dense":
        out = engine.apply_spectral(plan.scalar_values, f0)
    else:
        acc = np.zeros(f.grid.shape, dtype=np.complex128)
        for z, w in zip(plan.z_all, plan.w_all):
            acc += w * heat_apply(engine, z, f0).values
        out = GridFunction(f.grid, acc)
    zero_val = psi.value_at_zero if np.isfinite(psi.value_at_zero) else 0.0
    out.values += zero_val * fm
    return out


def eta_decay_profile(engine: SemigroupEngine, psi: SymbolFunction, quad: ContourQuadrature):
    """(|z|, |eta_+(z)|) along the ray plus the fitted prefactor of the
    bound |eta(z)| <= C min(1, (1/|z|)^{sigma+1}) at unit scale."""
    plan = contour_plan(engine, psi, quad)
    mod = np.abs(plan.eta_plus)
    envelope = np.minimum(1.0, (1.0 / plan.rho) ** (psi.sigma + 1.0))
    C = float(np.max(mod / envelope))
    return plan.rho, mod, C


# ---------------------------------------------------------------------------
# fractional powers (positive-time representation)
# ---------------------------------------------------------------------------


def _fractional_nodes(engine: SemigroupEngine, alpha: float, tol: float, per_decade: int):
    mu_min, mu_max = spectral_bounds(engine)
    t_lo = (tol ** (1.0 / min(alpha, 1.0))) * 1e-2 / mu_max
    t_hi = (np.log(1.0 / tol) + 10.0) / mu_min
    return _log_nodes(t_lo, t_hi, per_decade)


def fractional_power_apply(
    engine: SemigroupEngine,
    alpha: float,
    quad: ContourQuadrature | None,
    f: GridFunction,
    tol: float = 1e-10,
    nodes_per_decade: int = 12,
) -> GridFunction:
    """L^{-alpha} f on the mean-zero complement via the t>0 representation.

    Raises NullComponent when f carries a mean (the torus null space makes
    the integral divergent); project the mean out first.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    norm2 = np.linalg.norm(f.values)
    if norm2 > 0 and abs(np.mean(f.values)) * np.sqrt(f.grid.cell_count) > 1e-10 * norm2:
        raise NullComponent(
            "fractional powers need a mean-zero input on the torus; "
            "subtract the mean first"
        )
    t, w = _fractional_nodes(engine, alpha, tol, nodes_per_decade)
    coef = w * t**alpha / math.gamma(alpha)  # t^{alpha-1} dt = t^alpha dlog t
    if engine.method == "dense":
        mu_min, _ = spectral_bounds(engine)

        def scal(wv):
            vals = np.exp(-np.multiply.outer(wv, t)) @ coef
            return np.where(np.abs(wv) < 1e-8 * mu_min, 0.0, vals)

        res = engine.apply_spectral(scal, f)
    else:
        acc = np.zeros(f.grid.shape, dtype=np.complex128)
        for tj, cj in zip(t, coef):
            acc += cj * heat_apply(engine, float(tj), f).values
        res = GridFunction(f.grid, acc)
    res.values -= np.mean(res.values)
    return res


def sqrt_apply(engine: SemigroupEngine, f: GridFunction, **kw) -> GridFunction:
    """sqrt(L) f = L applied to L^{-1/2} of the mean-zero part (constants to 0)."""
    f0 = GridFunction(f.grid, f.values - np.mean(f.values))
    if np.linalg.norm(f0.values) == 0:
        return GridFunction(f.grid, np.zeros(f.grid.shape, dtype=np.complex128))
    half = fractional_power_apply(engine, 0.5, None, f0, **kw)
    return GridFunction(f.grid, engine.operator.apply(half.values))


def inverse_sqrt_apply(engine: SemigroupEngine, f: GridFunction, **kw) -> GridFunction:
    return fractional_power_apply(engine, 0.5, None, f, **kw)


def solve_inverse(engine: SemigroupEngine, f: GridFunction, k: int = 1) -> GridFunction:
    """Exact L^{-k} f on the mean-zero complement by direct/iterative solves."""
    import scipy.sparse.linalg as spla

    g = engine.grid
    vals = f.flat() - np.mean(f.values)
    if engine.method == "dense":
        mu_min, _ = spectral_bounds(engine)

        def invfun(w):
            return np.where(np.abs(w) < 1e-8 * mu_min, 0.0, 1.0 / np.where(w == 0, 1.0, w)) ** k

        out = engine.apply_spectral(invfun, GridFunction(g, vals)).flat()
    else:
        sym = laplacian_symbol(g)
        sym_flat = sym.reshape(-1)

        def precond(x):
            xs = np.fft.fftn(x.reshape(g.shape))
            xs = xs / np.where(sym == 0, 1.0, sym * engine.operator.lam + 1e-30)
            xs[(0,) * g.dim] = 0.0
            return np.fft.ifftn(xs).reshape(-1)

        M = spla.LinearOperator((g.cell_count, g.cell_count), matvec=precond, dtype=np.complex128)
        A = spla.LinearOperator(
            (g.cell_count, g.cell_count),
            matvec=lambda x: engine.operator.apply(x),
            dtype=np.complex128,
        )
        out = vals
        for _ in range(k):
            out, info = spla.lgmres(A, out, M=M, rtol=1e-12, atol=0.0, maxiter=2000)
            if info != 0:
                raise RuntimeError(f"iterative solve stalled (info={info})")
            out = out - np.mean(out)
        _ = sym_flat
    out = out - np.mean(out)
    return GridFunction(g, out)


# ---------------------------------------------------------------------------
# constant-coefficient FFT oracle
# ---------------------------------------------------------------------------


def fourier_oracle(
    symbol: SymbolFunction, scalar_coeff: complex, grid: Grid, f: GridFunction
) -> GridFunction:
    """Exact reference for L = scalar_coeff * (-Delta_h): FFT, multiply each
    mode by symbol(scalar_coeff * mu_k) with the exact discrete symbol mu_k,
    inverse FFT.  The zero mode carries symbol's value at 0 (NullComponent
    for unbounded symbols on non-mean-zero input)."""
    if f.is_vector:
        raise NonScalarOperator("oracle acts on scalar fields")
    sym = scalar_coeff * laplacian_symbol(grid)
    fhat = np.fft.fftn(f.values)
    zero_idx = (0,) * grid.dim
    mult = np.empty(grid.shape, dtype=np.complex128)
    nz = np.ones(grid.shape, dtype=bool)
    nz[zero_idx] = False
    mult[nz] = symbol(sym[nz])
    if np.isfinite(symbol.value_at_zero):
        mult[zero_idx] = symbol.value_at_zero
    else:
        if abs(fhat[zero_idx]) > 1e-10 * max(np.linalg.norm(fhat.ravel()), 1e-300):
            raise NullComponent(
                f"symbol {symbol.name} is singular at 0 but f has a mean component"
            )
        mult[zero_idx] = 0.0
    return GridFunction(grid, np.fft.ifftn(mult * fhat))


# ---------------------------------------------------------------------------
# Calderon pairing
# ---------------------------------------------------------------------------


def calderon_pairing_constant(psi: SymbolFunction, psi_tilde: SymbolFunction) -> complex:
    """int_0^infty psi(t^2) psi_tilde(t^2) dt/t by dense log-quadrature
    (scale invariant; this is the constant of the reproducing formula)."""
    u, w = _log_nodes(1e-12, 1e12, 40)
    vals = psi(u) * psi_tilde(u)
    return complex(0.5 * np.sum(vals * w))

"""Conversions among physical, log-gradient, and perturbation variables.

Physical state (n, c) maps to (n, q) through q = -grad(c)/c = -grad(log c),
which removes the 1/c singularity of the chemotactic flux and is invertible
up to one anchor value of c as long as q is curl-free.  Perturbations of a
wave profile are carried as a vector potential and a log-deviation:

    n = N + div(phi),      c = C exp(-psi),      q = P + grad(psi).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    VectorField,
    ddy,
    ddy_array,
    ddz,
    ddz_array,
    divergence,
    mean_in_y,
    remove_mean_in_y,
)
from .waves import WaveProfile


class TransformError(ValueError):
    """Input state violates a transform precondition."""


@dataclass(frozen=True)
class PhysicalState:
    """Cell density n >= 0 and chemical concentration c > 0 at time t."""

    n: ScalarField
    c: ScalarField
    t: float = 0.0


@dataclass(frozen=True)
class ColeHopfState:
    """Density n and log-gradient field q = -grad(log c) at time t."""

    n: ScalarField
    q: VectorField
    t: float = 0.0


@dataclass(frozen=True)
class PerturbationState:
    """Moving-frame perturbation (phi, psi) of a wave, lam-periodic in y.

    phi is the vector potential of the density deviation (n - N = div phi);
    psi is the log-deviation of the chemical (c = C e^{-psi}).  eps records
    the chemical diffusion of the governing system.
    """

    phi: VectorField
    psi: ScalarField
    t: float = 0.0
    eps: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    def scaled(self, a: float) -> "PerturbationState":
        return PerturbationState(
            phi=VectorField(a * self.phi.z, a * self.phi.y),
            psi=a * self.psi, t=self.t, eps=self.eps)


def cole_hopf_forward(state: PhysicalState) -> ColeHopfState:
    """q = -(c_z/c, c_y/c); rejects non-positive c with its location."""
    c = state.c.values
    if np.any(c <= 0.0):
        i, j = np.unravel_index(np.argmin(c), c.shape)
        g = state.c.grid
        raise TransformError(
            f"c must be positive for the log-gradient transform; "
            f"min c = {c[i, j]:.6g} at (z, y) = ({g.z[i]:.6g}, {g.y[j]:.6g})")
    g = state.c.grid
    qz = ScalarField(g, -ddz_array(c, g.dz) / c)
    qy = ScalarField(g, -ddy_array(c, g) / c)
    return ColeHopfState(n=state.n, q=VectorField(qz, qy), t=state.t)


def curl(q: VectorField) -> ScalarField:
    """Scalar curl d_y q_z - d_z q_y; vanishes for gradients."""
    return ScalarField(q.grid, ddy(q.z).values - ddz(q.y).values)


def _partial_integral_y(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Antiderivative in y from y = 0, exact for resolved Fourier modes.

    A trapezoid rule here would cap the inverse transform at O(dy^2) and make
    the forward-inverse round trip unreachable at tight tolerances, so the
    periodic leg integrates mode-by-mode: a_m (e^{i k_m y} - 1)/(i k_m) plus
    a_0 y for the mean.
    """
    vh = np.fft.rfft(values, axis=1)
    k = grid.wavenumbers_y
    factors = np.zeros_like(vh)
    factors[:, 1:] = vh[:, 1:] / (1j * k[1:])
    phases = np.exp(1j * np.outer(k, grid.y))  # (n_modes, n_y)
    weights = np.full(k.size, 2.0)
    weights[0] = weights[-1] = 1.0
    osc = (factors * weights) @ (phases - 1.0) / grid.n_y
    mean = vh[:, :1].real / grid.n_y
    return osc.real + mean * grid.y[None, :]


def cole_hopf_inverse(q: VectorField, c_anchor: float, anchor_z: float) -> ScalarField:
    """Reconstruct c from q = -grad(log c) and one anchor value.

    Integrates q along the L-shaped path (anchor_z, 0) -> (z, 0) -> (z, y):
    trapezoid along z (with a sub-segment correction from anchor_z to the
    nearest node), spectral partial integration along the periodic leg.
    Requires q to be curl-free (path independence) up to the stated
    tolerance.
    """
    if c_anchor <= 0.0:
        raise TransformError(f"c_anchor must be positive, got {c_anchor}")
    g = q.grid
    cmax = float(np.max(np.abs(curl(q).values)))
    if cmax >= 1e-6 * q.max_abs() + 1e-10:
        raise TransformError(
            f"q is not a gradient: max |curl q| = {cmax:.3g} exceeds "
            f"1e-6 * |q|_inf + 1e-10 = {1e-6 * q.max_abs() + 1e-10:.3g}")
    if not (-g.L_z <= anchor_z <= g.L_z):
        raise TransformError(f"anchor_z = {anchor_z} outside [-L_z, L_z]")

    ia = int(np.argmin(np.abs(g.z - anchor_z)))
    qz0 = q.z.values[:, 0]  # z-leg runs along the y = 0 row

    # cumulative trapezoid along z from the nearest node, then a trapezoid
    # sub-segment from the true anchor to that node
    seg = 0.5 * (qz0[1:] + qz0[:-1]) * g.dz
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    q_at_anchor = float(np.interp(anchor_z, g.z, qz0))
    correction = 0.5 * (q_at_anchor + qz0[ia]) * (g.z[ia] - anchor_z)
    line_z = cum - cum[ia] + correction

    line_y = _partial_integral_y(q.y.values, g)

    log_c = np.log(c_anchor) - (line_z[:, None] + line_y)
    return ScalarField(g, np.exp(log_c))


def assemble_physical(pert: PerturbationState, profile: WaveProfile) -> PhysicalState:
    """(phi, psi) -> (n, c) = (N + div phi, C e^{-psi}) in the moving frame."""
    g = pert.grid
    if not g.same_as(profile.grid):
        raise TransformError("perturbation and profile live on different grids")
    n = ScalarField(g, profile.N[:, None] + divergence(pert.phi).values)
    if float(np.min(n.values)) < -1e-8:
        warnings.warn(
            f"assembled n dips to {float(np.min(n.values)):.3g}; "
            "perturbation too large for positivity", stacklevel=2)
    c = ScalarField(g, profile.C[:, None] * np.exp(-pert.psi.values))
    return PhysicalState(n=n, c=c, t=pert.t)


def _bump(x: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - x^2)) on (-1, 1), zero outside."""
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi**2))
    return out


def _bump_d1(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi**2)) * (-2.0 * xi / (1.0 - xi**2) ** 2)
    return out


def make_initial_perturbation(
    grid: Grid,
    amplitude: float,
    seed: int,
    mean_zero_y: bool = False,
    eps: float = 0.0,
) -> PerturbationState:
    """Deterministic smooth initial data with a prescribed energy budget.

    Fields are sums of compactly supported z-bumps times low y-Fourier modes
    with seeded coefficients.  The phi components use bump derivatives in z
    (suppresses the slowly-decaying long-wave content), psi uses plain bumps.
    The whole state is scaled so the combined weighted measure

        ||phi||_{H^3_w}^2 + ||psi||_{H^3}^2 + ||grad psi||_{H^2_w}^2

    equals `amplitude` exactly; with mean_zero_y the per-z y-averages are
    projected out first.
    """
    from .energy import perturbation_measure

    if amplitude < 0:
        raise TransformError(f"amplitude must be non-negative, got {amplitude}")
    rng = np.random.default_rng(seed)
    zw = 4.0  # bump half-width; well inside the strip and well resolved
    centers = rng.uniform(-2.0, 2.0, size=3)
    modes = (0, 1, 2) if not mean_zero_y else (1, 2)

    def build(use_derivative_shape):
        v = np.zeros((grid.n_z, grid.n_y))
        shape_fn = _bump_d1 if use_derivative_shape else _bump
        for zc in centers:
            x = (grid.z - zc) / zw
            profile_z = shape_fn(x)
            m = int(rng.choice(modes))
            phase = rng.uniform(0.0, 2.0 * np.pi)
            coef = rng.normal()
            v += coef * np.outer(profile_z, np.cos(2 * np.pi * m * grid.y / grid.lam + phase))
        return v

    phi = VectorField(
        ScalarField(grid, build(True)), ScalarField(grid, build(True)))
    psi = ScalarField(grid, build(False))
    state = PerturbationState(phi=phi, psi=psi, t=0.0, eps=eps)

    if mean_zero_y:
        state = PerturbationState(
            phi=VectorField(remove_mean_in_y(phi.z), remove_mean_in_y(phi.y)),
            psi=remove_mean_in_y(psi), t=0.0, eps=eps)

    if amplitude == 0.0:
        return state.scaled(0.0)
    measured = perturbation_measure(state)
    if measured <= 0.0:
        raise TransformError("degenerate random draw produced an empty state")
    return state.scaled(np.sqrt(amplitude / measured))


def perturbation_y_means(state: PerturbationState) -> float:
    """Largest per-z y-average across all three perturbation components."""
    return max(
        float(np.max(np.abs(mean_in_y(state.phi.z)))),
        float(np.max(np.abs(mean_in_y(state.phi.y)))),
        float(np.max(np.abs(mean_in_y(state.psi)))),
    )

"""Moving-frame time integration of the perturbation systems.

Three systems are advanced in the frame z = x - s t:

  A. nonlinear, zero chemical diffusion:
       phi_t - s phi_z - lap phi = N grad psi + P div phi + (div phi) grad psi
       psi_t - s psi_z           = div phi
  B. linearized, chemical diffusion eps > 0:
       phi_t - s phi_z - lap phi     = N grad psi + P div phi
       psi_t - s psi_z - eps lap psi = -2 eps P . grad psi + div phi
  C. full log-gradient system for (n, q), evolved as the exact deviation
     (a, b) = (n - N, q - P) from the wave so that the wave itself is a
     fixed point of the discrete flux form:
       a_t - s a_z - lap a     = div(N b + a P + a b)
       b_t - s b_z - eps lap b = -2 eps [(P.grad) b + (b.grad) P + (b.grad) b]
                                 + grad a

Splitting: every Laplacian is implicit (per-y-Fourier-mode symmetric
tridiagonal solves in z); transport, coupling, and nonlinear terms are
explicit.  phi and the (n, q) deviations are clamped to zero at z = +-L_z.
psi is clamped only at the inflow end z = +L_z when it carries no
diffusion: its transport is upwinded toward the outflow at z = -L_z, where
a Dirichlet pin would inject spurious boundary kinks into the H^3 ledger.

System C additionally keeps the per-z y-mean and the y-fluctuation of each
deviation field in separate arrays, with cross products assembled per part.
Rounding noise then stays proportional to each part's own magnitude, which
lets the transverse energy decay through hundreds of e-foldings instead of
flooring at unit roundoff of the O(1) background.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .energy import EnergyLedger, LedgerRow, ledger_row
from .grid import Grid, ScalarField, VectorField, ddy_array, ddz_array
from .transforms import ColeHopfState, PerturbationState, perturbation_y_means
from .waves import WaveProfile


class IntegratorBlowup(RuntimeError):
    """Raised when a run produces non-finite values or runaway energy."""

    def __init__(self, message, time):
        super().__init__(f"{message} at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping parameters.

    dt must respect the explicit-transport restriction
    dt <= cfl_safety * dz / v_max with v_max = max(|s|, sqrt(max N)); run()
    validates this against the actual profile.  transport selects the psi
    advection stencil ("upwind" default; "central" pairs with sbdf2 for
    second order).  snapshot_every = 0 disables field snapshots.
    """

    dt: float
    t_end: float
    scheme: str = "imex1"
    cfl_safety: float = 0.9
    record_every: int = 1
    transport: str = "upwind"
    frame: str = "moving"
    curl_projection: bool = False
    snapshot_every: int = 0
    blowup_factor: float = 1e6

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.scheme not in ("imex1", "sbdf2"):
            raise ValueError(f"scheme must be imex1 or sbdf2, got {self.scheme!r}")
        if not (0 < self.cfl_safety <= 1):
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.transport not in ("upwind", "central"):
            raise ValueError(f"transport must be upwind or central, got {self.transport!r}")
        if self.frame not in ("moving", "lab"):
            raise ValueError(f"frame must be moving or lab, got {self.frame!r}")


@dataclass
class TrajectoryRecord:
    """Recorded times, energy ledger, and optional snapshots of one run."""

    system: str
    config: IntegratorConfig
    times: list = field(default_factory=list)
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    snapshots: list = field(default_factory=list)
    final_state: object = None
    final_deviation: object = None
    blowup: bool = False
    blowup_time: float | None = None
    curl_max: float = 0.0


class _ModeDiffusionSolver:
    """Pre-factored solves of (alpha I - coef (d_zz - k^2)) x = b per y-mode.

    Interior rows carry the 3-point stencil; boundary rows are Dirichlet
    pins (x = 0 at z = +-L_z).  The matrices are symmetric positive
    definite, factored once with banded Cholesky.
    """

    def __init__(self, grid: Grid, coef: float, alpha: float = 1.0):
        self.grid = grid
        self.coef = coef
        n_int = grid.n_z - 2
        inv_dz2 = 1.0 / grid.dz**2
        self.factors = []
        for k in grid.wavenumbers_y:
            ab = np.zeros((2, n_int))
            ab[0, 1:] = -coef * inv_dz2
            ab[1, :] = alpha + coef * (2.0 * inv_dz2 + k**2)
            self.factors.append((cholesky_banded(ab), False))
        # k = 0 factor reused for y-independent profiles
        self._k0 = self.factors[0]

    def solve_field(self, rhs: np.ndarray) -> np.ndarray:
        """rhs (n_z, n_y) physical; returns solution with zero boundary rows."""
        g = self.grid
        rh = np.fft.rfft(rhs[1:-1, :], axis=1)
        out_h = np.empty_like(rh)
        for m, fac in enumerate(self.factors):
            col = rh[:, m]
            stacked = np.column_stack([col.real, col.imag])
            sol = cho_solve_banded(fac, stacked)
            out_h[:, m] = sol[:, 0] + 1j * sol[:, 1]
        out = np.zeros_like(rhs)
        out[1:-1, :] = np.fft.irfft(out_h, n=g.n_y, axis=1)
        return out

    def solve_mean(self, rhs: np.ndarray) -> np.ndarray:
        """rhs (n_z,) y-independent; same operator at k = 0."""
        out = np.zeros_like(rhs)
        out[1:-1] = cho_solve_banded(self._k0, rhs[1:-1])
        return out


def _upwind_right(v: np.ndarray, dz: float) -> np.ndarray:
    """One-sided difference toward +z for leftward transport (speed -s)."""
    out = np.empty_like(v)
    out[:-1] = (v[1:] - v[:-1]) / dz
    out[-1] = 0.0  # inflow row is pinned, never advanced
    return out


def _clamp_ends(v: np.ndarray) -> np.ndarray:
    v[0] = 0.0
    v[-1] = 0.0
    return v


# ---------------------------------------------------------------------------
# Systems A and B: perturbation (phi, psi) steppers
# ---------------------------------------------------------------------------

class _PerturbationStepper:
    """IMEX stepping context for the (phi, psi) systems."""

    def __init__(self, profile: WaveProfile, dt: float, scheme: str,
                 transport: str, linear: bool, eps: float):
        self.g = profile.grid
        self.dt = dt
        self.scheme = scheme
        self.transport = transport
        self.linear = linear
        self.eps = eps
        self.s = profile.params.s
        self.N = profile.N[:, None]
        self.P = profile.P_z[:, None]
        self.phi_solver_1 = _ModeDiffusionSolver(self.g, dt, alpha=1.0)
        self.psi_solver_1 = (_ModeDiffusionSolver(self.g, eps * dt, alpha=1.0)
                             if eps > 0 else None)
        if scheme == "sbdf2":
            self.phi_solver_15 = _ModeDiffusionSolver(self.g, dt, alpha=1.5)
            self.psi_solver_15 = (_ModeDiffusionSolver(self.g, eps * dt, alpha=1.5)
                                  if eps > 0 else None)
        self._prev = None  # (fields, tendencies) for sbdf2

    def _transport_z(self, v):
        if self.transport == "upwind":
            return _upwind_right(v, self.g.dz)
        return ddz_array(v, self.g.dz)

    def explicit_tendency(self, phi1, phi2, psi):
        g, s = self.g, self.s
        dz_phi1 = ddz_array(phi1, g.dz)
        dz_phi2 = ddz_array(phi2, g.dz)
        dy_phi2 = ddy_array(phi2, g)
        dz_psi = ddz_array(psi, g.dz)
        dy_psi = ddy_array(psi, g)
        u = dz_phi1 + dy_phi2

        a1 = s * dz_phi1 + self.N * dz_psi + self.P * u
        a2 = s * dz_phi2 + self.N * dy_psi
        if not self.linear:
            a1 = a1 + u * dz_psi
            a2 = a2 + u * dy_psi

        a_psi = s * self._transport_z(psi) + u
        if self.linear and self.eps > 0:
            a_psi = a_psi - 2.0 * self.eps * self.P * dz_psi
        return a1, a2, a_psi

    def step(self, phi1, phi2, psi):
        dt = self.dt
        tend = self.explicit_tendency(phi1, phi2, psi)
        if self.scheme == "imex1" or self._prev is None:
            rhs1 = phi1 + dt * tend[0]
            rhs2 = phi2 + dt * tend[1]
            new1 = self.phi_solver_1.solve_field(rhs1)
            new2 = self.phi_solver_1.solve_field(rhs2)
            rhs_psi = psi + dt * tend[2]
            if self.psi_solver_1 is not None:
                new_psi = self.psi_solver_1.solve_field(rhs_psi)
            else:
                new_psi = rhs_psi
                new_psi[-1, :] = 0.0
        else:
            (p1o, p2o, pso), (t1o, t2o, tso) = self._prev
            rhs1 = 2.0 * phi1 - 0.5 * p1o + dt * (2.0 * tend[0] - t1o)
            rhs2 = 2.0 * phi2 - 0.5 * p2o + dt * (2.0 * tend[1] - t2o)
            new1 = self.phi_solver_15.solve_field(rhs1)
            new2 = self.phi_solver_15.solve_field(rhs2)
            rhs_psi = 2.0 * psi - 0.5 * pso + dt * (2.0 * tend[2] - tso)
            if self.psi_solver_15 is not None:
                new_psi = self.psi_solver_15.solve_field(rhs_psi)
            else:
                new_psi = rhs_psi / 1.5
                new_psi[-1, :] = 0.0
        if self.scheme == "sbdf2":
            self._prev = ((phi1, phi2, psi), tend)
        return new1, new2, new_psi


def _state_arrays(state: PerturbationState):
    return (state.phi.z.values.copy(), state.phi.y.values.copy(), state.psi.values.copy())


def _arrays_state(grid, phi1, phi2, psi, t, eps):
    return PerturbationState(
        phi=VectorField(ScalarField(grid, phi1), ScalarField(grid, phi2)),
        psi=ScalarField(grid, psi), t=t, eps=eps)


def _check_finite(arrays, t):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise IntegratorBlowup("non-finite field values", t)


def step_nonlinear_eps0(state: PerturbationState, profile: WaveProfile,
                        dt: float, scheme: str = "imex1",
                        transport: str = "upwind") -> PerturbationState:
    """One IMEX step of the nonlinear zero-diffusion perturbation system."""
    if profile.params.eps != 0.0:
        raise ValueError("nonlinear zero-diffusion stepper needs an eps = 0 profile")
    stepper = _PerturbationStepper(profile, dt, scheme, transport,
                                   linear=False, eps=0.0)
    new = stepper.step(*_state_arrays(state))
    _check_finite(new, state.t + dt)
    return _arrays_state(state.grid, *new, state.t + dt, 0.0)


def step_linear_eps(state: PerturbationState, profile: WaveProfile,
                    dt: float, scheme: str = "imex1",
                    transport: str = "upwind") -> PerturbationState:
    """One IMEX step of the linearized system with chemical diffusion."""
    eps = profile.params.eps
    if eps <= 0.0:
        raise ValueError("linear stepper needs a profile with eps > 0")
    drift = perturbation_y_means(state)
    if drift > 1e-12:
        warnings.warn(f"input y-means reach {drift:.3g}; the linearized system "
                      "assumes mean-zero data", stacklevel=2)
    stepper = _PerturbationStepper(profile, dt, scheme, transport,
                                   linear=True, eps=eps)
    new = stepper.step(*_state_arrays(state))
    _check_finite(new, state.t + dt)
    return _arrays_state(state.grid, *new, state.t + dt, eps)


# ---------------------------------------------------------------------------
# System C: (n, q) deviations with mean/fluctuation split
# ---------------------------------------------------------------------------

def _ymean(v):
    return v.mean(axis=1)


def _fluct(v):
    return v - v.mean(axis=1, keepdims=True)


@dataclass
class _NqDeviation:
    """Deviation (a, b) = (n - N, q - P) split into y-mean and fluctuation."""

    a0: np.ndarray    # (n_z,)
    af: np.ndarray    # (n_z, n_y)
    b0z: np.ndarray
    bfz: np.ndarray
    b0y: np.ndarray
    bfy: np.ndarray
    t: float

    def arrays(self):
        return (self.a0, self.af, self.b0z, self.bfz, self.b0y, self.bfy)

    @classmethod
    def from_full(cls, a, bz, by, t):
        return cls(a0=_ymean(a), af=_fluct(a), b0z=_ymean(bz), bfz=_fluct(bz),
                   b0y=_ymean(by), bfy=_fluct(by), t=t)

    def full(self):
        return (self.a0[:, None] + self.af,
                self.b0z[:, None] + self.bfz,
                self.b0y[:, None] + self.bfy)


class _NqStepper:
    """IMEX stepping context for the deviation form of the (n, q) system.

    Products among mean and fluctuating parts are assembled per part so the
    wave is an exact discrete fixed point and rounding stays relative to
    each component.  In the lab frame the transport terms drop and the wave
    slides out from under the sampled profile, which appears as the exact
    source (-s N', -s P', 0).
    """

    def __init__(self, profile: WaveProfile, eps: float, dt: float,
                 frame: str = "moving", curl_projection: bool = False):
        if eps <= 0.0:
            raise ValueError(f"the (n, q) stepper requires eps > 0, got {eps}")
        self.g = profile.grid
        self.eps = eps
        self.dt = dt
        self.frame = frame
        self.curl_projection = curl_projection
        self.s = profile.params.s
        self.N = profile.N
        self.P = profile.P_z
        self.dN = ddz_array(profile.N, self.g.dz)
        self.dP = ddz_array(profile.P_z, self.g.dz)
        self.a_solver = _ModeDiffusionSolver(self.g, dt, alpha=1.0)
        self.b_solver = _ModeDiffusionSolver(self.g, eps * dt, alpha=1.0)

    def _split_product(self, m0_a, fl_a, m0_b, fl_b):
        """(m0_a + fl_a)(m0_b + fl_b) split into (mean, fluctuation) parts."""
        cross = fl_a * fl_b
        cross_mean = _ymean(cross)
        mean = m0_a * m0_b + cross_mean
        fluct = (m0_a[:, None] * fl_b + fl_a * m0_b[:, None]
                 + cross - cross_mean[:, None])
        return mean, fluct

    def explicit_tendency(self, d: _NqDeviation):
        g, s, eps = self.g, self.s, self.eps
        dz = g.dz
        a0, af, b0z, bfz, b0y, bfy = d.arrays()

        # fluxes G = N b + P a + a b, per component and part
        ab_z_m, ab_z_f = self._split_product(a0, af, b0z, bfz)
        ab_y_m, ab_y_f = self._split_product(a0, af, b0y, bfy)
        Gz_m = self.N * b0z + self.P * a0 + ab_z_m
        Gz_f = self.N[:, None] * bfz + self.P[:, None] * af + ab_z_f
        Gy_m = self.N * b0y + ab_y_m
        Gy_f = self.N[:, None] * bfy + ab_y_f

        ta0 = ddz_array(Gz_m, dz)
        taf = ddz_array(Gz_f, dz) + ddy_array(Gy_f, g)

        # b advection: (P.grad) b + (b.grad) P + (b.grad) b, times -2 eps
        dz_b0z, dz_bfz = ddz_array(b0z, dz), ddz_array(bfz, dz)
        dz_b0y, dz_bfy = ddz_array(b0y, dz), ddz_array(bfy, dz)
        dy_bfz, dy_bfy = ddy_array(bfz, g), ddy_array(bfy, g)

        advz_m, advz_f = self._split_product(b0z, bfz, dz_b0z, dz_bfz)
        cz_m, cz_f = self._split_product(b0y, bfy, np.zeros_like(b0z), dy_bfz)
        advy_m, advy_f = self._split_product(b0z, bfz, dz_b0y, dz_bfy)
        cy_m, cy_f = self._split_product(b0y, bfy, np.zeros_like(b0y), dy_bfy)

        tb0z = -2.0 * eps * (self.P * dz_b0z + b0z * self.dP + advz_m + cz_m) \
            + ddz_array(a0, dz)
        tbfz = -2.0 * eps * (self.P[:, None] * dz_bfz + bfz * self.dP[:, None]
                             + advz_f + cz_f) + ddz_array(af, dz)
        tb0y = -2.0 * eps * (self.P * dz_b0y + advy_m + cy_m)
        tbfy = -2.0 * eps * (self.P[:, None] * dz_bfy + advy_f + cy_f) \
            + ddy_array(af, g)

        if self.frame == "moving":
            ta0 = ta0 + s * ddz_array(a0, dz)
            taf = taf + s * ddz_array(af, dz)
            tb0z = tb0z + s * dz_b0z
            tbfz = tbfz + s * dz_bfz
            tb0y = tb0y + s * dz_b0y
            tbfy = tbfy + s * dz_bfy
        else:
            # static profile in the lab frame: the wave translates beneath it
            ta0 = ta0 - s * self.dN
            tb0z = tb0z - s * self.dP
        return ta0, taf, tb0z, tbfz, tb0y, tbfy

    def step(self, d: _NqDeviation) -> _NqDeviation:
        dt = self.dt
        ta0, taf, tb0z, tbfz, tb0y, tbfy = self.explicit_tendency(d)
        a0 = self.a_solver.solve_mean(d.a0 + dt * ta0)
        af = self.a_solver.solve_field(d.af + dt * taf)
        b0z = self.b_solver.solve_mean(d.b0z + dt * tb0z)
        bfz = self.b_solver.solve_field(d.bfz + dt * tbfz)
        b0y = self.b_solver.solve_mean(d.b0y + dt * tb0y)
        bfy = self.b_solver.solve_field(d.bfy + dt * tbfy)
        out = _NqDeviation(a0=a0, af=af, b0z=b0z, bfz=bfz, b0y=b0y, bfy=bfy,
                           t=d.t + dt)
        # drain rounding-level y-means out of the fluctuation channel; left
        # in place they freeze at the scale of past fluctuations and their
        # FFT roundoff re-seeds the decaying transverse modes
        for m0, fl in ((out.a0, out.af), (out.b0z, out.bfz), (out.b0y, out.bfy)):
            drift = fl.mean(axis=1)
            m0 += drift
            fl -= drift[:, None]
        if self.curl_projection:
            self._project(out)
        return out

    def curl_max(self, d: _NqDeviation) -> float:
        g = self.g
        curl = ddy_array(d.bfz, g) - ddz_array(d.b0y[:, None] + d.bfy, g.dz)
        return float(np.max(np.abs(curl)))

    def _project(self, d: _NqDeviation) -> None:
        """Helmholtz projection of the fluctuating b onto gradients.

        Solves (d_zz - k^2) chi = div b per mode with Dirichlet ends and
        replaces b by grad chi; the y-mean transverse component b0y has no
        periodic potential and is dropped entirely.
        """
        g = self.g
        div = ddz_array(d.bfz, g.dz) + ddy_array(d.bfy, g)
        dh = np.fft.rfft(div[1:-1, :], axis=1)
        n_int = g.n_z - 2
        inv_dz2 = 1.0 / g.dz**2
        chi_h = np.zeros((g.n_z, dh.shape[1]), dtype=complex)
        for m, k in enumerate(g.wavenumbers_y):
            ab = np.zeros((2, n_int))
            ab[0, 1:] = -inv_dz2
            ab[1, :] = 2.0 * inv_dz2 + k**2
            if k == 0.0:
                continue  # fluctuation carries no k = 0 content
            fac = (cholesky_banded(ab), False)
            col = dh[:, m]
            sol = cho_solve_banded(fac, np.column_stack([-col.real, -col.imag]))
            chi_h[1:-1, m] = -(sol[:, 0] + 1j * sol[:, 1])
        chi = np.fft.irfft(chi_h, n=g.n_y, axis=1)
        d.bfz = ddz_array(chi, g.dz)
        d.bfy = ddy_array(chi, g)
        d.b0y = np.zeros_like(d.b0y)


def _nq_deviation_from_state(state, profile: WaveProfile) -> _NqDeviation:
    """Build the split deviation from a ColeHopfState or PerturbationState."""
    g = profile.grid
    if isinstance(state, ColeHopfState):
        a = state.n.values - profile.N[:, None]
        bz = state.q.z.values - profile.P_z[:, None]
        by = state.q.y.values.copy()
        return _NqDeviation.from_full(a, bz, by, state.t)
    if isinstance(state, PerturbationState):
        from .grid import divergence, gradient

        a = divergence(state.phi).values
        grad_psi = gradient(state.psi)
        return _NqDeviation.from_full(a, grad_psi.z.values, grad_psi.y.values,
                                      state.t)
    raise TypeError(f"cannot build (n, q) deviation from {type(state)!r}")


def _nq_state(d: _NqDeviation, profile: WaveProfile) -> ColeHopfState:
    g = profile.grid
    a, bz, by = d.full()
    return ColeHopfState(
        n=ScalarField(g, profile.N[:, None] + a),
        q=VectorField(ScalarField(g, profile.P_z[:, None] + bz),
                      ScalarField(g, by)),
        t=d.t)


def step_nq(state: ColeHopfState, dt: float, eps: float,
            profile: WaveProfile = None, frame: str = "moving") -> ColeHopfState:
    """One IMEX step of the (n, q) system.

    The wave profile supplies the far-field clamp values (the deviation from
    the wave is pinned to zero at z = +-L_z) and the exact-perturbation flux
    form; it must be provided.
    """
    if profile is None:
        raise ValueError("step_nq needs the wave profile for far-field clamps")
    stepper = _NqStepper(profile, eps, dt, frame=frame)
    d = stepper.step(_nq_deviation_from_state(state, profile))
    for arr in d.arrays():
        if not np.all(np.isfinite(arr)):
            raise IntegratorBlowup("non-finite field values", d.t)
    return _nq_state(d, profile)


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------

SYSTEMS = ("nonlinear0", "linear_eps", "nq")


def _nq_ledger_row(d: _NqDeviation, g: Grid) -> LedgerRow:
    from .energy import _quad_rows, _sq_integral

    rows = _quad_rows(g, weighted=False)
    q_trans = (_sq_integral(ddy_array(d.af, g), rows)
               + _sq_integral(ddy_array(d.bfz, g), rows)
               + _sq_integral(ddy_array(d.bfy, g), rows))
    wz = np.full(g.n_z, g.dz)
    wz[0] = wz[-1] = 0.5 * g.dz
    mass = float(wz @ d.a0) * g.lam + 0.0  # fluctuation integrates to zero
    return LedgerRow(t=d.t, H3w_phi=0.0, H3_psi=0.0, H2w_grad_psi=0.0,
                     M_inst=0.0, grad_phi_H3w=0.0, psi4_w=0.0,
                     Q=q_trans, mass=mass)


def _steps_for(config: IntegratorConfig) -> int:
    if config.t_end == 0.0:
        return 0
    n = round(config.t_end / config.dt)
    if abs(n * config.dt - config.t_end) > 1e-9 * max(1.0, config.t_end):
        n = math.ceil(config.t_end / config.dt)
    return max(int(n), 1)


def _validate_cfl(config: IntegratorConfig, profile: WaveProfile):
    v_max = max(abs(profile.params.s), math.sqrt(float(np.max(profile.N))), 1e-12)
    limit = config.cfl_safety * profile.grid.dz / v_max
    if config.dt > limit * (1 + 1e-12):
        raise ValueError(
            f"dt = {config.dt:.4g} violates the transport restriction "
            f"dt <= cfl_safety * dz / v_max = {limit:.4g}")


def run(system: str, init, profile: WaveProfile,
        config: IntegratorConfig) -> TrajectoryRecord:
    """Advance one system to t_end, recording the energy ledger.

    Records at steps {0, record_every, 2*record_every, ...} and always at
    the final step; halts early on blowup, returning the partial record
    with the blowup flag set.
    """
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    _validate_cfl(config, profile)
    eps = profile.params.eps
    record = TrajectoryRecord(system=system, config=config)
    n_steps = _steps_for(config)

    if system == "nq":
        return _run_nq(init, profile, config, record, n_steps)

    if system == "nonlinear0":
        if eps != 0.0:
            raise ValueError("nonlinear0 requires an eps = 0 profile")
        stepper = _PerturbationStepper(profile, config.dt, config.scheme,
                                       config.transport, linear=False, eps=0.0)
    else:
        if eps <= 0.0:
            raise ValueError("linear_eps requires a profile with eps > 0")
        if perturbation_y_means(init) > 1e-12:
            warnings.warn("linear_eps initial data is not y-mean-zero",
                          stacklevel=2)
        stepper = _PerturbationStepper(profile, config.dt, config.scheme,
                                       config.transport, linear=True, eps=eps)

    g = profile.grid
    phi1, phi2, psi = _state_arrays(init)
    state_eps = eps if system == "linear_eps" else 0.0

    def record_row(i, arrays):
        t = i * config.dt
        st = _arrays_state(g, arrays[0], arrays[1], arrays[2], t, state_eps)
        row = ledger_row(st, profile, eps if system == "linear_eps" else 0.0)
        record.ledger.append(row)
        record.times.append(t)
        # snapshot every snapshot_every-th recorded row
        if config.snapshot_every and (len(record.times) - 1) % config.snapshot_every == 0:
            record.snapshots.append((t, st))
        return row

    row0 = record_row(0, (phi1, phi2, psi))
    m0 = row0.M_inst
    try:
        for i in range(1, n_steps + 1):
            phi1, phi2, psi = stepper.step(phi1, phi2, psi)
            t = i * config.dt
            _check_finite((phi1, phi2, psi), t)
            if i % config.record_every == 0 or i == n_steps:
                row = record_row(i, (phi1, phi2, psi))
                if m0 > 0 and row.M_inst > config.blowup_factor * m0:
                    raise IntegratorBlowup(
                        f"energy exceeded {config.blowup_factor:g} x M0", t)
    except IntegratorBlowup as exc:
        record.blowup = True
        record.blowup_time = exc.time
    record.final_state = _arrays_state(g, phi1, phi2, psi,
                                       record.times[-1] if record.blowup
                                       else n_steps * config.dt, state_eps)
    return record


def _run_nq(init, profile, config, record, n_steps):
    if config.scheme != "imex1":
        raise ValueError("the (n, q) deviation stepper supports imex1 only")
    g = profile.grid
    stepper = _NqStepper(profile, profile.params.eps, config.dt,
                         frame=config.frame,
                         curl_projection=config.curl_projection)
    d = _nq_deviation_from_state(init, profile)
    d.t = 0.0
    q0 = None
    warned = False

    def record_row(d):
        nonlocal warned
        record.ledger.append(_nq_ledger_row(d, g))
        record.times.append(d.t)
        cm = stepper.curl_max(d)
        record.curl_max = max(record.curl_max, cm)
        if cm > 1e-4 and not warned:
            warnings.warn(f"curl drift reached {cm:.3g}; enable curl_projection "
                          "to re-gauge", stacklevel=2)
            warned = True
        if config.snapshot_every and (len(record.times) - 1) % config.snapshot_every == 0:
            record.snapshots.append((d.t, _nq_state(d, profile)))

    record_row(d)
    q0 = record.ledger.rows[0]["Q"]
    try:
        for i in range(1, n_steps + 1):
            d = stepper.step(d)
            d.t = i * config.dt
            for arr in d.arrays():
                if not np.all(np.isfinite(arr)):
                    raise IntegratorBlowup("non-finite field values", d.t)
            if i % config.record_every == 0 or i == n_steps:
                record_row(d)
                if q0 > 0 and record.ledger.rows[-1]["Q"] > config.blowup_factor * q0:
                    raise IntegratorBlowup(
                        f"transverse energy exceeded {config.blowup_factor:g} x Q0",
                        d.t)
    except IntegratorBlowup as exc:
        record.blowup = True
        record.blowup_time = exc.time
    record.final_state = _nq_state(d, profile)
    record.final_deviation = d
    return record

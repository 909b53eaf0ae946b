"""Weighted Sobolev norms, energy ledgers, and decay-rate fitting.

The central measure of a perturbation (phi, psi) is

    M_inst = ||phi||_{H^3_w}^2 + ||psi||_{H^3}^2 + ||grad psi||_{H^2_w}^2

together with the running sup M_sup and the accumulated dissipation
integrals D_phi = int ||grad phi||_{H^3_w}^2 dt, D_psi = int ||grad
psi||_{H^2_w}^2 dt, and (for chemical diffusion eps > 0) D_psi4 =
eps int ||grad^4 psi||_{H^0_w}^2 dt.  Norms follow the definition

    ||f||_{H^k_w}^2 = sum_{i+j<=k} int |d_z^i d_y^j f|^2 w(z) dz dy

with y-derivatives taken spectrally first, then z central differences
(the two commute to machine precision).  grad^4 means the five mixed
fourth-order derivatives, each counted once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    VectorField,
    ddy_array,
    ddz_array,
    integrate_array,
    remove_mean_in_y,
)

LEDGER_COLUMNS = (
    "t", "H3w_phi", "H3_psi", "H2w_grad_psi", "M_inst", "M_sup",
    "D_phi", "D_psi", "D_psi4", "Q", "mass", "C0_running",
)


class EnergyError(ValueError):
    pass


def _quad_rows(grid: Grid, weighted: bool) -> np.ndarray:
    wz = np.full(grid.n_z, grid.dz)
    wz[0] = wz[-1] = 0.5 * grid.dz
    if weighted:
        wz = wz * grid.weight
    return wz * grid.dy


def _sq_integral(v: np.ndarray, rows: np.ndarray) -> float:
    return float(rows @ (v * v).sum(axis=1))


def _mixed_norm_sq(values: np.ndarray, grid: Grid, k: int, weighted: bool) -> float:
    rows = _quad_rows(grid, weighted)
    total = 0.0
    base = values
    for j in range(k + 1):
        cur = base
        total += _sq_integral(cur, rows)
        for _ in range(k - j):
            cur = ddz_array(cur, grid.dz)
            total += _sq_integral(cur, rows)
        if j < k:
            base = ddy_array(base, grid)
    return total


def sobolev_norm(f, k: int, weighted: bool = False) -> float:
    """Squared H^k (or H^k_w) norm of a scalar or vector field.

    k is limited to 0..4; vector fields sum over components.
    """
    if not (0 <= k <= 4):
        raise EnergyError(f"k must lie in 0..4, got {k}")
    if isinstance(f, VectorField):
        return (_mixed_norm_sq(f.z.values, f.grid, k, weighted)
                + _mixed_norm_sq(f.y.values, f.grid, k, weighted))
    if isinstance(f, ScalarField):
        return _mixed_norm_sq(f.values, f.grid, k, weighted)
    raise EnergyError(f"unsupported field type {type(f)!r}")


def _gradient_components(values: np.ndarray, grid: Grid):
    return ddz_array(values, grid.dz), ddy_array(values, grid)


def gradient_sobolev_norm(f, k: int, weighted: bool = False) -> float:
    """Squared H^k(_w) norm of grad f, all first-derivative components."""
    if isinstance(f, VectorField):
        return (gradient_sobolev_norm(f.z, k, weighted)
                + gradient_sobolev_norm(f.y, k, weighted))
    gz, gy = _gradient_components(f.values, f.grid)
    return (_mixed_norm_sq(gz, f.grid, k, weighted)
            + _mixed_norm_sq(gy, f.grid, k, weighted))


def fourth_derivative_norm_sq(f: ScalarField, weighted: bool = True) -> float:
    """Sum over i+j = 4 of the squared weighted L2 norms of d_z^i d_y^j f."""
    g = f.grid
    rows = _quad_rows(g, weighted)
    total = 0.0
    base = f.values
    for j in range(5):
        cur = base
        for _ in range(4 - j):
            cur = ddz_array(cur, g.dz)
        total += _sq_integral(cur, rows)
        if j < 4:
            base = ddy_array(base, g)
    return total


def perturbation_measure(state) -> float:
    """M_inst: the combined weighted measure of a PerturbationState."""
    phi, psi = state.phi, state.psi
    gz, gy = _gradient_components(psi.values, psi.grid)
    grad_psi = (_mixed_norm_sq(gz, psi.grid, 2, True)
                + _mixed_norm_sq(gy, psi.grid, 2, True))
    return sobolev_norm(phi, 3, weighted=True) + sobolev_norm(psi, 3) + grad_psi


@dataclass(frozen=True)
class LedgerRow:
    """Instantaneous energy quantities at one recorded time."""

    t: float
    H3w_phi: float
    H3_psi: float
    H2w_grad_psi: float
    M_inst: float
    grad_phi_H3w: float   # D_phi integrand
    psi4_w: float          # D_psi4 integrand (already eps-multiplied)
    Q: float
    mass: float


def ledger_row(state, profile, eps: float) -> LedgerRow:
    """Evaluate every ledger quantity for a perturbation state.

    Q is the transverse energy of the assembled log-gradient variables,
    ||n_y||^2 + ||q_y||^2 = ||(div phi)_y||^2 + ||(grad psi)_y||^2, since the
    wave itself carries no y-dependence.  mass is int(n - N) = int(div phi).
    """
    from .grid import divergence, integrate

    g = state.grid
    if profile is not None and not g.same_as(profile.grid):
        raise EnergyError("state and profile grids differ")
    phi, psi = state.phi, state.psi
    h3w_phi = sobolev_norm(phi, 3, weighted=True)
    h3_psi = sobolev_norm(psi, 3)
    gz, gy = _gradient_components(psi.values, g)
    h2w_grad_psi = (_mixed_norm_sq(gz, g, 2, True) + _mixed_norm_sq(gy, g, 2, True))
    grad_phi = gradient_sobolev_norm(phi, 3, weighted=True)
    psi4 = eps * fourth_derivative_norm_sq(psi, weighted=True) if eps > 0 else 0.0

    div_phi = divergence(phi)
    rows = _quad_rows(g, weighted=False)
    q_trans = (_sq_integral(ddy_array(div_phi.values, g), rows)
               + _sq_integral(ddy_array(gz, g), rows)
               + _sq_integral(ddy_array(gy, g), rows))
    return LedgerRow(
        t=state.t,
        H3w_phi=h3w_phi,
        H3_psi=h3_psi,
        H2w_grad_psi=h2w_grad_psi,
        M_inst=h3w_phi + h3_psi + h2w_grad_psi,
        grad_phi_H3w=grad_phi,
        psi4_w=psi4,
        Q=q_trans,
        mass=integrate(div_phi),
    )


class EnergyLedger:
    """Time series of energy rows with running sup and trapezoid integrals.

    Columns (CSV order): t, H3w_phi, H3_psi, H2w_grad_psi, M_inst, M_sup,
    D_phi, D_psi, D_psi4, Q, mass, C0_running.
    """

    def __init__(self):
        self.rows: list[dict] = []

    def append(self, row: LedgerRow) -> dict:
        if self.rows:
            prev = self.rows[-1]
            if row.t <= prev["t"]:
                raise EnergyError(f"times must increase: {row.t} after {prev['t']}")
            dt = row.t - prev["t"]
            d_phi = prev["D_phi"] + 0.5 * dt * (prev["grad_phi_H3w"] + row.grad_phi_H3w)
            d_psi = prev["D_psi"] + 0.5 * dt * (prev["H2w_grad_psi"] + row.H2w_grad_psi)
            d_psi4 = prev["D_psi4"] + 0.5 * dt * (prev["psi4_w"] + row.psi4_w)
            m_sup = max(prev["M_sup"], row.M_inst)
            m0 = self.rows[0]["M_inst"]
        else:
            d_phi = d_psi = d_psi4 = 0.0
            m_sup = row.M_inst
            m0 = row.M_inst
        entry = {
            "t": row.t,
            "H3w_phi": row.H3w_phi,
            "H3_psi": row.H3_psi,
            "H2w_grad_psi": row.H2w_grad_psi,
            "M_inst": row.M_inst,
            "M_sup": m_sup,
            "D_phi": d_phi,
            "D_psi": d_psi,
            "D_psi4": d_psi4,
            "Q": row.Q,
            "mass": row.mass,
            "C0_running": ((m_sup + d_phi + d_psi + d_psi4) / m0) if m0 > 0 else 0.0,
            "grad_phi_H3w": row.grad_phi_H3w,
            "psi4_w": row.psi4_w,
        }
        self.rows.append(entry)
        return entry

    @property
    def M0(self) -> float:
        return self.rows[0]["M_inst"] if self.rows else 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def last(self) -> dict:
        return self.rows[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(LEDGER_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(f"{r[c]:.17g}" for c in LEDGER_COLUMNS) + "\n")


def transverse_energy(state) -> float:
    """Q = ||n_y||^2 + ||q_y||^2 for a ColeHopfState.

    The per-z y-mean is projected out before differentiating; the spectral
    derivative is unchanged by this, but the evaluation then stays accurate
    relative to the fluctuating part even on top of an O(1) background.
    """
    n, q = state.n, state.q
    g = n.grid
    rows = _quad_rows(g, weighted=False)
    total = 0.0
    for f in (n, q.z, q.y):
        fluct = remove_mean_in_y(f)
        total += _sq_integral(ddy_array(fluct.values, g), rows)
    return total


def fit_exponential_decay(times, values, window) -> tuple[float, float]:
    """Least-squares log-linear fit of values ~ A e^{-c t} on a time window.

    Returns (c, r_squared) with c = -slope (positive for decaying data).
    Requires at least 10 strictly positive samples inside the window; a
    constant series fits with rate 0 and r_squared reported as 0.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t0, t1 = window
    mask = (times >= t0) & (times <= t1)
    if np.count_nonzero(mask) < 10:
        raise EnergyError(f"need >= 10 samples in window [{t0}, {t1}], "
                          f"got {np.count_nonzero(mask)}")
    tw, vw = times[mask], values[mask]
    if np.any(vw <= 0.0):
        raise EnergyError("values must be positive on the fit window")
    logs = np.log(vw)
    slope, intercept = np.polyfit(tw, logs, 1)
    pred = slope * tw + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r_sq = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r_sq)


def empirical_C0(ledger: EnergyLedger) -> float:
    """Smallest constant closing the energy inequality at the final time:
    (M_sup + D_phi + D_psi + D_psi4) / M0.  The eps-dissipation term is zero
    for eps = 0 runs, recovering the undiffused form of the inequality.
    """
    if not ledger.rows:
        raise EnergyError("empty ledger")
    if ledger.M0 <= 0.0:
        raise EnergyError("M0 must be positive to normalize the constant")
    last = ledger.last()
    return (last["M_sup"] + last["D_phi"] + last["D_psi"] + last["D_psi4"]) / ledger.M0

"""Exact Gaussian dynamics of a harmonic chain in normal-mode coordinates.

The many-body state is a product of one Gaussian per normal mode, held as
first and second moments in mass-weighted coordinates (hbar = 1). Harmonic
evolution maps Gaussians to Gaussians, so every update here is closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, stats

from .errors import ParameterError, TimeOrderingError, UnsupportedStateError
from .lattice import NormalModeBasis

#: Coherent-mode tolerance on the variances (relative).
COHERENT_TOL = 1e-9
#: Modes with |alpha|^2 at or below this are treated as unexcited.
EXCITATION_FLOOR = 1e-9


@dataclass(frozen=True)
class GaussianState:
    basis: NormalModeBasis
    mean_q: np.ndarray
    mean_p: np.ndarray
    var_q: np.ndarray
    var_p: np.ndarray
    cov_qp: np.ndarray
    time: float = 0.0

    def uncertainty_products(self) -> np.ndarray:
        """var_q * var_p - cov^2 per mode; 1/4 for a pure Gaussian."""
        return self.var_q * self.var_p - self.cov_qp ** 2


@dataclass(frozen=True)
class OccupancyDistribution:
    mode: int
    probabilities: np.ndarray
    tail: float

    @property
    def mean(self) -> float:
        n = np.arange(len(self.probabilities))
        return float(n @ self.probabilities)


@dataclass(frozen=True)
class RecurrenceReport:
    """Recurrence timescales; ``None`` marks a time not reached before t_max."""

    t_vib: float | None
    t_loc: float | None
    t_class: float | None
    epsilon: float

    def to_dict(self) -> dict:
        return {"t_vib": self.t_vib, "t_loc": self.t_loc,
                "t_class": self.t_class, "epsilon": self.epsilon}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def ground_state(basis: NormalModeBasis, zero_mode_width: float | None = None) -> GaussianState:
    """Every bound mode in its oscillator ground state.

    Zero modes have no ground state; they get a minimum-uncertainty packet
    of the given (mass-weighted) width instead.
    """
    if basis.zero_mode_count > 0 and not (zero_mode_width is not None and zero_mode_width > 0):
        raise ParameterError("zero_mode_width > 0 is required when the basis has a zero mode")
    w = basis.frequencies
    zero = basis.is_zero_mode
    safe = np.where(zero, 1.0, w)
    var_q = np.where(zero, (zero_mode_width or 1.0) ** 2, 0.5 / safe)
    var_p = np.where(zero, 0.25 / (zero_mode_width or 1.0) ** 2, 0.5 * safe)
    n = basis.n_modes
    return GaussianState(basis, _frozen(np.zeros(n)), _frozen(np.zeros(n)),
                         _frozen(var_q), _frozen(var_p), _frozen(np.zeros(n)), 0.0)


def apply_boost(s: GaussianState, atom_velocities) -> GaussianState:
    """Give atom j a velocity kick v_j; second moments are untouched."""
    v = np.asarray(atom_velocities, dtype=float)
    if v.shape != (s.basis.n_modes,):
        raise ParameterError(f"expected {s.basis.n_modes} velocities, got {v.shape}")
    kick = s.basis.mode_matrix.T @ (np.sqrt(s.basis.masses) * v)
    return replace(s, mean_p=_frozen(s.mean_p + kick))


def evolve_to(s: GaussianState, t: float) -> GaussianState:
    """Propagate exactly from ``s.time`` to ``t``."""
    if t < s.time:
        raise TimeOrderingError(f"cannot evolve backwards from {s.time} to {t}")
    dt = t - s.time
    w = s.basis.frequencies
    zero = s.basis.is_zero_mode
    safe = np.where(zero, 1.0, w)
    c = np.where(zero, 1.0, np.cos(w * dt))
    sn = np.where(zero, 0.0, np.sin(w * dt))
    # phase-space map [[a, b], [g, d]] per mode; b -> dt for free modes
    a, d = c, c
    b = np.where(zero, dt, sn / safe)
    g = np.where(zero, 0.0, -w * sn)

    q, p = s.mean_q, s.mean_p
    vq, vp, cv = s.var_q, s.var_p, s.cov_qp
    new_q = a * q + b * p
    new_p = g * q + d * p
    new_vq = a * a * vq + 2 * a * b * cv + b * b * vp
    new_vp = g * g * vq + 2 * g * d * cv + d * d * vp
    new_cv = a * g * vq + (a * d + b * g) * cv + b * d * vp
    return GaussianState(s.basis, _frozen(new_q), _frozen(new_p), _frozen(new_vq),
                         _frozen(new_vp), _frozen(new_cv), float(t))


def position_variances(s: GaussianState, internal: bool = False) -> np.ndarray:
    """Var(x_j) for every atom.

    With ``internal=True`` the zero modes are dropped, leaving the spread of
    each atom about the centre of mass.
    """
    e2 = s.basis.mode_matrix ** 2
    vq = np.where(s.basis.is_zero_mode, 0.0, s.var_q) if internal else s.var_q
    return (e2 @ vq) / s.basis.masses


def atom_width(s: GaussianState, atom: int, internal: bool = False) -> float:
    if not 0 <= atom < s.basis.n_modes:
        raise IndexError(f"atom {atom} out of range")
    return float(math.sqrt(position_variances(s, internal)[atom]))


def _cm_coefficients(basis: NormalModeBasis) -> np.ndarray:
    # X_cm = sum_i c_i q_i
    sm = np.sqrt(basis.masses)
    return (sm @ basis.mode_matrix) / basis.masses.sum()


def cm_width(s: GaussianState) -> float:
    """Standard deviation of the physical centre-of-mass coordinate."""
    c = _cm_coefficients(s.basis)
    return float(math.sqrt(c ** 2 @ s.var_q))


def mode_energies(s: GaussianState) -> np.ndarray:
    w2 = s.basis.frequencies ** 2
    return 0.5 * (s.mean_p ** 2 + w2 * s.mean_q ** 2) + 0.5 * (s.var_p + w2 * s.var_q)


def mode_energy(s: GaussianState, mode: int) -> float:
    return float(mode_energies(s)[mode])


def coherent_amplitudes(s: GaussianState) -> np.ndarray:
    """|alpha_i|^2 from the means; zero for zero modes."""
    w = s.basis.frequencies
    zero = s.basis.is_zero_mode
    safe = np.where(zero, 1.0, w)
    amp = (s.mean_p ** 2 + w ** 2 * s.mean_q ** 2) / (2 * safe)
    return np.where(zero, 0.0, amp)


def _check_coherent(s: GaussianState, mode: int) -> None:
    w = s.basis.frequencies[mode]
    if s.basis.is_zero_mode[mode]:
        raise UnsupportedStateError(f"mode {mode} is a zero mode")
    vq0, vp0 = 0.5 / w, 0.5 * w
    ok = (abs(s.var_q[mode] - vq0) <= COHERENT_TOL * vq0
          and abs(s.var_p[mode] - vp0) <= COHERENT_TOL * vp0
          and abs(s.cov_qp[mode]) <= COHERENT_TOL * 0.5)
    if not ok:
        raise UnsupportedStateError(f"mode {mode} is squeezed; occupancy is not Poisson")


def mode_occupancy_distribution(s: GaussianState, mode: int, n_max: int) -> OccupancyDistribution:
    """Phonon-number distribution of a coherent mode: Poisson in |alpha|^2."""
    _check_coherent(s, mode)
    lam = float(coherent_amplitudes(s)[mode])
    n = np.arange(n_max + 1)
    if lam == 0.0:
        probs = (n == 0).astype(float)
        tail = 0.0
    else:
        probs = stats.poisson.pmf(n, lam)
        tail = float(stats.poisson.sf(n_max, lam))
    return OccupancyDistribution(mode, probs, tail)


def total_energy_spread(s: GaussianState) -> float:
    """Energy standard deviation summed over the bound modes.

    Zero modes carry a continuous spectrum and are left out.
    """
    amp = coherent_amplitudes(s)
    w = s.basis.frequencies
    for i in np.flatnonzero(~s.basis.is_zero_mode):
        _check_coherent(s, int(i))
    return float(math.sqrt(np.sum(w ** 2 * amp)))


def free_spreading_crossing(var_q: float, cov: float, var_p: float, threshold: float) -> float | None:
    """First t >= 0 with var_q + 2 cov t + var_p t^2 > threshold^2."""
    target = threshold ** 2
    if var_q > target:
        return 0.0
    if var_p == 0.0:
        if cov <= 0:
            return None
        return (target - var_q) / (2 * cov)
    disc = cov ** 2 - var_p * (var_q - target)
    return float((-cov + math.sqrt(disc)) / var_p)


def _moments_at(s: GaussianState, dts: np.ndarray) -> np.ndarray:
    """var_q(t) for each (dt, mode); shape (len(dts), n_modes)."""
    w = s.basis.frequencies
    zero = s.basis.is_zero_mode
    safe = np.where(zero, 1.0, w)
    wt = np.outer(dts, w)
    c = np.where(zero, 1.0, np.cos(wt))
    b = np.where(zero, dts[:, None], np.sin(wt) / safe)
    return c * c * s.var_q + 2 * c * b * s.cov_qp + b * b * s.var_p


def _first_crossing(f, threshold: float, t_max: float, step: float,
                    chunk: int = 4096) -> float | None:
    """Smallest t in [0, t_max] where the vectorized f exceeds threshold."""
    if f(np.array([0.0]))[0] > threshold:
        return 0.0
    g = lambda t: f(np.array([t]))[0] - threshold
    n_steps = int(math.ceil(t_max / step))
    for first in range(1, n_steps + 1, chunk):
        ks = np.arange(first - 1, min(first + chunk, n_steps + 1))
        ts = np.minimum(ks * step, t_max)
        hit = np.flatnonzero(f(ts[1:]) > threshold)
        if hit.size:
            k = hit[0] + 1
            return float(optimize.brentq(g, ts[k - 1], ts[k], xtol=1e-14, rtol=1e-15))
    return None


def _phase_mismatch(omegas: np.ndarray):
    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.max(2.0 * np.abs(np.sin(0.5 * np.outer(t, omegas))), axis=1)
    return f


def vibrational_recurrence(omegas, phase_tol: float, t_max: float) -> float | None:
    """Earliest best-realignment time of the given mode phases.

    The mismatch max_i |exp(i w_i t) - 1| is scanned on a grid of
    2*pi / (64 w_max); each interior grid minimum is polished by golden-section
    search and the first one that dips below ``phase_tol`` is returned.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        return None
    f = _phase_mismatch(omegas)
    w_max = float(omegas.max())
    step = 2 * np.pi / (64 * w_max)
    # f is Lipschitz with constant w_max, so a grid sample can sit at most
    # w_max * step above the minimum it brackets
    slack = w_max * step
    n_steps = int(math.ceil(t_max / step))
    chunk = 1 << 15
    for first in range(1, n_steps, chunk):
        ks = np.arange(first - 1, min(first + chunk, n_steps) + 1)
        ts = ks * step
        vals = f(ts)
        mid = vals[1:-1]
        interior = np.flatnonzero((mid <= vals[:-2]) & (mid < vals[2:]) & (mid < phase_tol + slack)) + 1
        for k in interior:
            tmin = _golden_refine(f, ts[k - 1], ts[k], ts[k + 1])
            if tmin <= t_max and f(tmin)[0] < phase_tol:
                return tmin
    return None


def _golden_refine(f, a: float, b: float, c: float) -> float:
    g = lambda t: float(f(t)[0])
    fb = g(b)
    if not (fb < g(a) and fb < g(c)):
        return float(b)
    res = optimize.minimize_scalar(g, bracket=(a, b, c), method="golden",
                                   options={"xtol": 1e-14})
    return float(res.x) if res.fun <= fb else float(b)


def recurrence_times(s: GaussianState, phase_tol: float, width_threshold: float,
                     cm_threshold: float, t_max: float) -> RecurrenceReport:
    """Vibrational recurrence, localization fade and classicality loss.

    Times are measured from ``s.time``. ``width_threshold`` and
    ``cm_threshold`` are physical lengths.
    """
    if not 0 < phase_tol < 1:
        raise ParameterError("phase_tol must lie in (0, 1)")
    if not (width_threshold > 0 and cm_threshold > 0 and t_max > 0):
        raise ParameterError("thresholds and t_max must be positive")
    basis = s.basis
    bound = ~basis.is_zero_mode
    excited = bound & (coherent_amplitudes(s) > EXCITATION_FLOOR)
    t_vib = vibrational_recurrence(basis.frequencies[excited], phase_tol, t_max)

    if bound.any():
        step = 2 * np.pi / (64 * basis.frequencies[bound].max())
    else:
        step = t_max / 4096
    step = min(step, t_max / 16)

    e2m = (basis.mode_matrix ** 2) / basis.masses[:, None]
    max_width = lambda dts: np.sqrt(np.max(_moments_at(s, dts) @ e2m.T, axis=1))
    t_loc = _first_crossing(max_width, width_threshold, t_max, step)

    c2 = _cm_coefficients(basis) ** 2
    bound_part = c2[bound].sum() if bound.any() else 0.0
    if basis.zero_mode_count and bound_part <= 1e-20 * c2.sum():
        z = basis.is_zero_mode
        t_class = free_spreading_crossing(float(c2[z] @ s.var_q[z]), float(c2[z] @ s.cov_qp[z]),
                                          float(c2[z] @ s.var_p[z]), cm_threshold)
        if t_class is not None and t_class > t_max:
            t_class = None
    else:
        cm = lambda dts: np.sqrt(_moments_at(s, dts) @ c2)
        t_class = _first_crossing(cm, cm_threshold, t_max, step)
    return RecurrenceReport(t_vib, t_loc, t_class, float(phase_tol))


def collision_state(lattice_a, lattice_b, joint_stiffness: float, v_a: float, v_b: float,
                    zero_mode_width: float):
    """Fuse two ground-state blocks moving at uniform velocities.

    Returns ``(fused_lattice, basis, state)`` at the instant of contact.
    """
    from .lattice import merge_lattices, normal_modes

    fused = merge_lattices(lattice_a, lattice_b, joint_stiffness)
    basis = normal_modes(fused)
    v = np.concatenate([np.full(lattice_a.n_atoms, float(v_a)),
                        np.full(lattice_b.n_atoms, float(v_b))])
    state = apply_boost(ground_state(basis, zero_mode_width), v)
    return fused, basis, state


def internal_excitation_energy(s: GaussianState) -> float:
    """Energy in bound modes above their zero-point level."""
    bound = ~s.basis.is_zero_mode
    return float(np.sum(mode_energies(s)[bound]) - 0.5 * np.sum(s.basis.frequencies[bound]))

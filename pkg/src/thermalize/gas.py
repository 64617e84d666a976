"""Classical 1D gas of localized packets with soft-sphere contacts.

Particles overlap only when closer than twice the contact radius; the
overlap costs 0.5 * kappa * (2 r_c - dx)^2. The box walls are the same
kind of soft contact (0.5 * kappa * (r_c - x)^2 at the left wall), so the
dense limit is a harmonic chain with fixed ends.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import optimize, stats

from .errors import InsufficientStatisticsError, ParameterError, StabilityError


@dataclass(frozen=True)
class PacketGas:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    widths: np.ndarray
    stiffness: float
    contact_radius: float
    box_length: float
    temperature: float

    def __post_init__(self):
        n = len(self.positions)
        arrays = ("velocities", "masses", "widths")
        for name in ("positions",) + arrays:
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if any(len(getattr(self, name)) != n for name in arrays):
            raise ParameterError("per-particle arrays differ in length")
        if n < 1:
            raise ParameterError("gas needs at least one particle")
        if np.any(self.masses <= 0) or np.any(self.widths <= 0):
            raise ParameterError("masses and packet widths must be positive")
        if not (self.stiffness > 0 and self.contact_radius > 0 and self.box_length > 0):
            raise ParameterError("stiffness, contact radius and box length must be positive")
        if np.any(np.diff(self.positions) <= 0):
            raise ParameterError("positions must be strictly increasing")
        if np.any(self.positions < 0) or np.any(self.positions > self.box_length):
            raise ParameterError("particles must start inside the box")

    @property
    def n(self) -> int:
        return len(self.positions)

    def packing_fraction(self) -> float:
        return 2 * self.contact_radius * self.n / self.box_length


def sample_maxwell_boltzmann(n: int, mass, temperature: float, seed: int, k_B: float = 1.0) -> np.ndarray:
    """Gaussian velocities with variance kT/m; ``mass`` may be per particle."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not temperature > 0:
        raise ParameterError("temperature must be positive")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) * np.sqrt(k_B * temperature / np.asarray(mass, dtype=float))


def packet_energy_spread(mass: float, width: float, hbar: float = 1.0) -> float:
    """Kinetic energy uncertainty hbar^2 / (2 m d^2) of a packet of width d."""
    if not (mass > 0 and width > 0):
        raise ParameterError("mass and width must be positive")
    return hbar ** 2 / (2 * mass * width ** 2)


def make_gas(n: int, mass: float, temperature: float, stiffness: float, contact_radius: float,
             box_length: float, width: float, seed: int, mass_dispersion: float = 0.1,
             initial: str = "maxwell") -> PacketGas:
    """Evenly spaced particles with a spread of masses.

    Masses are drawn uniformly from mass * (1 +/- mass_dispersion); in 1D
    equal masses would only swap velocities and never thermalize.
    ``initial="maxwell"`` draws M-B velocities; ``"alternating"`` gives every
    particle the speed sqrt(kT / mass) with alternating directions.
    """
    if not 0 < 2 * contact_radius < box_length / n:
        raise ParameterError("need 0 < 2 * contact_radius < mean spacing")
    if not 0 <= mass_dispersion < 1:
        raise ParameterError("mass_dispersion must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    masses = mass * (1 + mass_dispersion * rng.uniform(-1, 1, n))
    if initial == "maxwell":
        v = rng.standard_normal(n) * np.sqrt(temperature / masses)
    elif initial == "alternating":
        v = math.sqrt(temperature / mass) * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    else:
        raise ParameterError(f"unknown initial velocity rule {initial!r}")
    x = (np.arange(n) + 0.5) * box_length / n
    return PacketGas(x, v, masses, np.full(n, float(width)), float(stiffness),
                     float(contact_radius), float(box_length), float(temperature))


def contact_time(m1: float, m2: float, stiffness: float) -> float:
    """Duration of a two-body soft contact: half a period of the reduced-mass spring."""
    mu = m1 * m2 / (m1 + m2)
    return math.pi * math.sqrt(mu / stiffness)


def max_stable_dt(g: PacketGas) -> float:
    m = float(np.min(g.masses))
    return contact_time(m, m, g.stiffness) / 20


@numba.njit(cache=True)
def _forces(x, k, rc, L, f, pe, contact):
    n = x.shape[0]
    for i in range(n):
        f[i] = 0.0
        pe[i] = 0.0
        contact[i] = 0
    total = 0.0
    d = rc - x[0]
    if d > 0:
        f[0] += k * d
        pe[0] += 0.5 * k * d * d
        contact[0] += 1
        total += 0.5 * k * d * d
    d = x[n - 1] - (L - rc)
    if d > 0:
        f[n - 1] -= k * d
        pe[n - 1] += 0.5 * k * d * d
        contact[n - 1] += 1
        total += 0.5 * k * d * d
    for i in range(n - 1):
        d = 2 * rc - (x[i + 1] - x[i])
        if d > 0:
            e = 0.5 * k * d * d
            f[i] -= k * d
            f[i + 1] += k * d
            pe[i] += 0.5 * e
            pe[i + 1] += 0.5 * e
            contact[i] += 1
            contact[i + 1] += 1
            total += e
    return total


@numba.njit(cache=True)
def _pair_state(x, rc, L, state):
    # state[0] left wall, state[1..n-1] pairs, state[n] right wall
    n = x.shape[0]
    state[0] = 1 if x[0] < rc else 0
    for i in range(n - 1):
        state[i + 1] = 1 if x[i + 1] - x[i] < 2 * rc else 0
    state[n] = 1 if x[n - 1] > L - rc else 0


@numba.njit(cache=True)
def _verlet(x, v, m, f, pe, contact, k, rc, L, h):
    n = x.shape[0]
    for i in range(n):
        v[i] += 0.5 * h * f[i] / m[i]
        x[i] += h * v[i]
    _forces(x, k, rc, L, f, pe, contact)
    for i in range(n):
        v[i] += 0.5 * h * f[i] / m[i]


@numba.njit(cache=True)
def _run(x, v, m, sigma0, hbar, k, rc, L, dt, n_steps, record_every, n_sub):
    n = x.shape[0]
    n_rec = n_steps // record_every + 1
    rec_t = np.empty(n_rec)
    rec_x = np.empty((n_rec, n))
    rec_v = np.empty((n_rec, n))
    rec_ke = np.empty((n_rec, n))
    rec_pe = np.empty((n_rec, n))
    rec_e = np.empty(n_rec)
    rec_p = np.empty(n_rec)
    rec_wall = np.empty(n_rec, dtype=np.int64)

    f = np.empty(n)
    pe = np.empty(n)
    contact = np.empty(n, dtype=np.int64)
    state = np.zeros(n + 1, dtype=np.int64)
    new_state = np.zeros(n + 1, dtype=np.int64)
    start = np.zeros(n + 1)

    max_contacts = n_steps // 2 + 16
    durations = np.empty(max_contacts)
    n_dur = 0
    last_hit = np.full(n, -1.0)
    gap_sum = np.zeros(n)
    gap_cnt = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    contact_steps = np.zeros(n, dtype=np.int64)
    free_time = np.zeros(n)
    order_ok = True
    x_save = np.empty(n)
    v_save = np.empty(n)
    f_save = np.empty(n)
    fine = np.zeros(n + 1, dtype=np.int64)

    _forces(x, k, rc, L, f, pe, contact)
    _pair_state(x, rc, L, state)
    r = 0
    for s in range(n_steps + 1):
        t = s * dt
        if s % record_every == 0:
            ptot = 0.0
            etot = 0.0
            for i in range(n):
                ke = 0.5 * m[i] * v[i] * v[i]
                rec_x[r, i] = x[i]
                rec_v[r, i] = v[i]
                rec_ke[r, i] = ke
                rec_pe[r, i] = pe[i]
                etot += ke + pe[i]
                ptot += m[i] * v[i]
            rec_t[r] = t
            rec_e[r] = etot
            rec_p[r] = ptot
            rec_wall[r] = state[0] + state[n]
            r += 1
        if s == n_steps:
            break
        for i in range(n):
            if contact[i] > 0:
                contact_steps[i] += 1
            else:
                free_time[i] += dt
        fine_now = False
        for c in range(n + 1):
            if state[c] == 1 and fine[c] == 1:
                fine_now = True
        if not fine_now:
            for i in range(n):
                x_save[i] = x[i]
                v_save[i] = v[i]
                f_save[i] = f[i]
            _verlet(x, v, m, f, pe, contact, k, rc, L, dt)
            _pair_state(x, rc, L, new_state)
            for c in range(n + 1):
                if new_state[c] != state[c]:
                    fine_now = True
            if fine_now:
                for i in range(n):
                    x[i] = x_save[i]
                    v[i] = v_save[i]
                    f[i] = f_save[i]
        if fine_now:
            # contacts that open during the run are integrated on a finer
            # step: the force law has a kink at first touch
            for j in range(n_sub):
                _verlet(x, v, m, f, pe, contact, k, rc, L, dt / n_sub)
            _pair_state(x, rc, L, new_state)
        for i in range(n - 1):
            if x[i + 1] <= x[i]:
                order_ok = False
        if not order_ok:
            break
        tn = t + dt
        for c in range(n + 1):
            if new_state[c] == 1 and state[c] == 0:
                start[c] = tn
                fine[c] = 1
                # contact c touches particles c - 1 and c (walls touch one)
                lo = c - 1 if c > 0 else 0
                hi = c if c < n else n - 1
                for p in range(lo, hi + 1):
                    hits[p] += 1
                    if last_hit[p] >= 0:
                        gap_sum[p] += tn - last_hit[p]
                        gap_cnt[p] += 1
                    last_hit[p] = tn
            elif new_state[c] == 0 and state[c] == 1:
                fine[c] = 0
                if n_dur < max_contacts:
                    durations[n_dur] = tn - start[c]
                    n_dur += 1
            state[c] = new_state[c]

    widths = np.sqrt(sigma0 ** 2 + (hbar * free_time / (2 * m * sigma0)) ** 2)
    return (rec_t[:r], rec_x[:r], rec_v[:r], rec_ke[:r], rec_pe[:r], rec_e[:r], rec_p[:r],
            rec_wall[:r], durations[:n_dur], gap_sum, gap_cnt, hits, contact_steps, widths, order_ok)


@dataclass(frozen=True)
class GasTrajectory:
    """Strided records plus exact per-step contact statistics."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    total_energy: np.ndarray
    momentum: np.ndarray
    wall_contacts: np.ndarray
    contact_durations: np.ndarray
    collision_gaps_sum: np.ndarray
    collision_gaps_count: np.ndarray
    collisions: np.ndarray
    contact_fraction: np.ndarray
    packet_widths: np.ndarray
    masses: np.ndarray
    dt: float
    n_steps: int

    @property
    def tau_r(self) -> float:
        if self.contact_durations.size == 0:
            return math.nan
        return float(self.contact_durations.mean())

    @property
    def tau_coll(self) -> float:
        cnt = self.collision_gaps_count.sum()
        return float(self.collision_gaps_sum.sum() / cnt) if cnt else math.nan

    def collisions_per_particle(self) -> float:
        return float(self.collisions.mean())

    def to_csv(self) -> str:
        lines = ["t,particle,x,v,ke,pe"]
        for r, t in enumerate(self.times):
            for i in range(self.positions.shape[1]):
                lines.append(f"{t!r},{i},{self.positions[r, i]!r},{self.velocities[r, i]!r},"
                             f"{self.kinetic[r, i]!r},{self.potential[r, i]!r}")
        return "\n".join(lines) + "\n"


def simulate_gas(g: PacketGas, t_end: float, dt: float, seed: int | None = None,
                 record_every: int = 100, hbar: float = 1.0, substeps: int = 64) -> GasTrajectory:
    """Velocity-Verlet run of the soft-sphere gas up to ``t_end``.

    ``seed`` only matters when ``g.velocities`` contains NaNs, which are then
    replaced by Maxwell-Boltzmann draws at ``g.temperature``.
    """
    if not (t_end > 0 and dt > 0):
        raise ParameterError("t_end and dt must be positive")
    if dt >= max_stable_dt(g):
        raise StabilityError(f"dt={dt} does not resolve contacts; need dt < {max_stable_dt(g):.4g}")
    if record_every < 1:
        raise ParameterError("record_every must be >= 1")
    v = np.array(g.velocities, dtype=float)
    if np.isnan(v).any():
        fresh = sample_maxwell_boltzmann(g.n, g.masses, g.temperature, 0 if seed is None else seed)
        v = np.where(np.isnan(v), fresh, v)
    x = np.array(g.positions, dtype=float)
    n_steps = int(round(t_end / dt))
    out = _run(x, v, np.array(g.masses), np.array(g.widths), float(hbar), g.stiffness,
               g.contact_radius, g.box_length, float(dt), n_steps, int(record_every), int(substeps))
    (t, xs, vs, ke, pe, e, p, wall, dur, gsum, gcnt, hits, csteps, widths, ok) = out
    if not ok:
        raise StabilityError("particles passed through each other; contacts too soft for this energy")
    return GasTrajectory(t, xs, vs, ke, pe, e, p, wall, dur, gsum, gcnt, hits,
                         csteps / n_steps, widths, np.array(g.masses), float(dt), n_steps)


@dataclass(frozen=True)
class PartitionHistograms:
    energies: np.ndarray
    h_ke: np.ndarray
    h_pe: np.ndarray
    bin_width: float
    tau_r: float
    tau_coll: float
    mean_ke: float
    mean_pe: float
    pe_time_fraction: float
    A_fit: float
    gamma_fit: float
    fit_residual: float
    kT: float

    def integrals(self) -> tuple[float, float]:
        return float(self.h_ke.sum() * self.bin_width), float(self.h_pe.sum() * self.bin_width)

    def to_csv(self) -> str:
        lines = ["E,h_ke,h_pe"]
        lines += [f"{e!r},{a!r},{b!r}" for e, a, b in
                  zip(self.energies.tolist(), self.h_ke.tolist(), self.h_pe.tolist())]
        return "\n".join(lines) + "\n"

    def summary(self, ks_stat: float | None = None) -> dict:
        return {"tau_r": self.tau_r, "tau_coll": self.tau_coll, "A_fit": self.A_fit,
                "gamma_fit": self.gamma_fit, "ks_stat": ks_stat}


def energy_partition_histograms(traj: GasTrajectory, bins: int, pe_offset: float = 0.0,
                                min_collisions: int = 100, kT: float | None = None) -> PartitionHistograms:
    """Time-averaged per-particle KE and PE densities on a shared grid.

    ``pe_offset`` is subtracted from the per-particle potential energy (use
    the static compression energy per particle for a confined solid). The
    Gaussian form A exp(-(gamma kT - E)^2) is fitted to h_KE.
    """
    if traj.collisions_per_particle() < min_collisions:
        raise InsufficientStatisticsError(
            f"{traj.collisions_per_particle():.1f} collisions per particle, need {min_collisions}")
    ke = traj.kinetic.ravel()
    pe = traj.potential.ravel() - pe_offset
    top = max(ke.max(), pe.max())
    edges = np.linspace(min(0.0, pe.min()), top, bins + 1)
    width = edges[1] - edges[0]
    h_ke, _ = np.histogram(ke, edges, density=True)
    h_pe, _ = np.histogram(pe, edges, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    if kT is None:
        # 1D equipartition: <KE> = kT / 2
        kT = 2 * float(ke.mean())
    model = lambda e, A, gamma: A * np.exp(-(gamma * kT - e) ** 2)
    try:
        (A, gamma), _ = optimize.curve_fit(model, centers, h_ke, p0=(h_ke.max(), 0.5),
                                           bounds=([0.0, 0.0], [np.inf, np.inf]), maxfev=10000)
        resid = float(np.sqrt(np.mean((model(centers, A, gamma) - h_ke) ** 2)))
    except RuntimeError:
        A, gamma, resid = math.nan, math.nan, math.nan
    return PartitionHistograms(centers, h_ke, h_pe, float(width), traj.tau_r, traj.tau_coll,
                               float(ke.mean()), float(pe.mean()), float(traj.contact_fraction.mean()),
                               float(A), float(gamma), resid, float(kT))


def static_compression_energy(g: PacketGas) -> float:
    """Minimum potential energy of a confined chain with every contact closed.

    With N particles and soft walls there are N + 1 equal springs, each
    overlapping by (2 N r_c - L) / (N + 1) at mechanical equilibrium.
    Returns 0 when the box is wide enough for the gas to relax fully.
    """
    overlap = (2 * g.n * g.contact_radius - g.box_length) / (g.n + 1)
    if overlap <= 0:
        return 0.0
    return 0.5 * g.stiffness * overlap ** 2 * (g.n + 1)


def compressed_chain(n: int, mass: float, stiffness: float, contact_radius: float, overlap: float,
                     temperature: float, width: float, seed: int, mass_dispersion: float = 0.1) -> PacketGas:
    """Particles packed at their mechanical equilibrium with every contact compressed."""
    rng = np.random.default_rng(seed)
    masses = mass * (1 + mass_dispersion * rng.uniform(-1, 1, n))
    v = rng.standard_normal(n) * np.sqrt(temperature / masses)
    L = 2 * n * contact_radius - (n + 1) * overlap
    x = contact_radius - overlap + (2 * contact_radius - overlap) * np.arange(n)
    return PacketGas(x, v, masses, np.full(n, float(width)), float(stiffness),
                     float(contact_radius), float(L), float(temperature))


def velocity_ks_statistic(traj: GasTrajectory, kT: float | None = None, burn_in: float = 0.5,
                          stride: int = 1) -> float:
    """KS distance of sqrt(m / kT) v from a standard normal.

    Uses records after the first ``burn_in`` fraction of the run, every
    ``stride``-th record.
    """
    start = int(len(traj.times) * burn_in)
    v = traj.velocities[start::stride]
    if kT is None:
        kT = 2 * float(traj.kinetic[start::stride].mean())
    z = (v * np.sqrt(traj.masses / kT)).ravel()
    return float(stats.kstest(z, "norm").statistic)


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    return float(stats.kstwo.ppf(1 - alpha, n))


def summary_json(h: PartitionHistograms, ks_stat: float | None) -> str:
    return json.dumps(h.summary(ks_stat))

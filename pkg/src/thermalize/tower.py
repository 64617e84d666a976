"""Matter-photon Fock tower: norm and energy bookkeeping plus a
detailed-balance emission/absorption chain.

Matter enters only through its level density g_m(E) (a
:class:`~thermalize.spectrum.LevelDensity`). Every photon quantum must be an
integer number of matter bins, so energy is conserved exactly in integer
units during the dynamics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BoundaryError, ParameterError, TruncationError
from .spectrum import LevelDensity, bose_einstein_occupancy, microcanonical_temperature

TAIL_BOUND = 1e-9


@dataclass(frozen=True)
class PhotonModeSet:
    frequencies: tuple[float, ...]
    mu0: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        if not freqs or any(not w > 0 for w in freqs):
            raise ParameterError("photon frequencies must be positive")
        if not (self.mu0 > 0 and self.hbar > 0):
            raise ParameterError("mu0 and hbar must be positive")
        object.__setattr__(self, "frequencies", tuple(sorted(freqs)))

    def __len__(self):
        return len(self.frequencies)

    @property
    def quanta(self) -> tuple[float, ...]:
        return tuple(self.hbar * w for w in self.frequencies)

    def steps(self, bin: float) -> tuple[int, ...]:
        """Photon quanta in units of the matter grid; must be whole numbers."""
        out = []
        for q in self.quanta:
            s = round(q / bin)
            if s < 1 or abs(s * bin - q) > 1e-9 * max(q, 1.0):
                raise ParameterError(f"photon quantum {q} is not a multiple of the matter bin {bin}")
            out.append(int(s))
        return tuple(out)


@dataclass(frozen=True)
class PlaneWaveField:
    """Superposition of plane waves: (mode index, complex amplitude) pairs."""

    amplitudes: tuple[tuple[int, complex], ...]

    def __post_init__(self):
        for _, a in self.amplitudes:
            if not np.isfinite(complex(a)):
                raise ParameterError("amplitudes must be finite")


def kg_norm(f: PlaneWaveField, modes: PhotonModeSet) -> float:
    """Klein-Gordon norm of a plane-wave superposition, sum |a|^2 w / (2 mu0)."""
    total = 0.0
    for a, amp in f.amplitudes:
        if not 0 <= a < len(modes):
            raise IndexError(f"photon mode {a} out of range")
        total += abs(amp) ** 2 * modes.frequencies[a] / (2 * modes.mu0)
    return total


def kg_norm_density(A, A_dot, mu0: float = 1.0) -> float:
    """Pointwise KG form Im(A conj(A_dot) - A_dot conj(A)) / (4 mu0).

    Positive for positive-frequency waves A ~ exp(-i w t).
    """
    A = np.asarray(A, dtype=complex)
    A_dot = np.asarray(A_dot, dtype=complex)
    return float(np.sum(np.imag(A * np.conj(A_dot) - A_dot * np.conj(A))) / (4 * mu0))


def free_evolve(f: PlaneWaveField, modes: PhotonModeSet, t: float) -> PlaneWaveField:
    return PlaneWaveField(tuple((a, complex(amp) * np.exp(-1j * modes.frequencies[a] * t))
                                for a, amp in f.amplitudes))


def unit_norm_amplitude(omega: float, mu0: float = 1.0) -> float:
    if not omega > 0:
        raise ParameterError("omega must be positive")
    if not mu0 > 0:
        raise ParameterError("mu0 must be positive")
    return math.sqrt(2 * mu0 / omega)


@dataclass(frozen=True)
class TowerLevel:
    """One photon-number sector: norm share, photon occupancies, matter energy."""

    weight: float
    occupancy: tuple[int, ...]
    matter_energy: float

    @property
    def k(self) -> int:
        return sum(self.occupancy)


@dataclass(frozen=True)
class TowerState:
    modes: PhotonModeSet
    matter: LevelDensity
    levels: tuple[TowerLevel, ...]

    def __post_init__(self):
        ks = [lv.k for lv in self.levels]
        if len(set(ks)) != len(ks):
            raise ParameterError("two levels share a photon number")
        for lv in self.levels:
            if len(lv.occupancy) != len(self.modes):
                raise ParameterError("occupancy vector length differs from mode count")
            if lv.weight < 0 or any(n < 0 for n in lv.occupancy):
                raise ParameterError("weights and occupancies must be non-negative")
        if abs(sum(lv.weight for lv in self.levels) - 1.0) > 1e-12:
            raise ParameterError("norm shares must sum to 1")
        object.__setattr__(self, "levels", tuple(sorted(self.levels, key=lambda lv: lv.k)))

    def dominant(self) -> TowerLevel:
        return max(self.levels, key=lambda lv: lv.weight)


def photon_free_tower(modes: PhotonModeSet, matter: LevelDensity, e_matter: float) -> TowerState:
    return TowerState(modes, matter, (TowerLevel(1.0, (0,) * len(modes), float(e_matter)),))


@dataclass(frozen=True)
class TowerInvariants:
    norm_sum: float
    total_energy: float
    per_level_energy: tuple[float, ...]


def _photon_energy(modes: PhotonModeSet, occ) -> float:
    return sum(n * q for n, q in zip(occ, modes.quanta))


def tower_invariants(t: TowerState) -> TowerInvariants:
    per_level = tuple(lv.matter_energy + _photon_energy(t.modes, lv.occupancy) for lv in t.levels)
    norm = math.fsum(lv.weight for lv in t.levels)
    total = math.fsum(lv.weight * e for lv, e in zip(t.levels, per_level))
    return TowerInvariants(norm, total, per_level)


def _g(matter: LevelDensity, idx: int) -> int:
    if idx < 0:
        return 0
    if idx >= matter.n_bins:
        raise BoundaryError(f"matter energy {idx * matter.bin} outside the level density")
    return matter.counts[idx]


def transition_weights(t: TowerState, mode: int, level: TowerLevel | None = None) -> tuple[int, int]:
    """Emission and absorption weights for one photon mode.

    emit = (n + 1) g_m(E_mat - hw),  absorb = n g_m(E_mat + hw).
    Evaluated for ``level`` (default: the level holding the most norm).
    """
    if not 0 <= mode < len(t.modes):
        raise IndexError(f"photon mode {mode} out of range")
    lv = level or t.dominant()
    s = t.modes.steps(t.matter.bin)[mode]
    e = t.matter.index(lv.matter_energy)
    if e >= t.matter.n_bins:
        raise BoundaryError(f"matter energy {lv.matter_energy} outside the level density")
    n = lv.occupancy[mode]
    emit = (n + 1) * _g(t.matter, e - s)
    absorb = n * _g(t.matter, e + s) if n > 0 else 0
    return emit, absorb


@dataclass
class Trajectory:
    """Record of an equilibration run.

    ``occupancy[i]`` is the photon vector held during step ``i`` for
    ``holding[i]`` time units (the mean Gillespie holding time); the final
    row is the state after the last event. ``event_mode[i]`` is the mode that
    changed at the end of step ``i`` (-1 if none) and ``event_sign`` is +1
    for emission, -1 for absorption.
    """

    photon_energies: tuple[float, ...]
    steps_per_mode: tuple[int, ...]
    bin: float
    total_quanta: int
    occupancy: np.ndarray
    matter_quanta: np.ndarray
    holding: np.ndarray
    event_mode: np.ndarray
    event_sign: np.ndarray
    seed: int

    @property
    def n_steps(self) -> int:
        return len(self.holding)

    def time_averaged_occupancy(self, burn_in: int = 0) -> np.ndarray:
        w = self.holding[burn_in:]
        return (w @ self.occupancy[burn_in:-1]) / w.sum()

    def standard_errors(self, n_batches: int = 50, burn_in: int = 0) -> np.ndarray:
        """Batch-means standard error of the time-averaged occupancy."""
        w = self.holding[burn_in:]
        occ = self.occupancy[burn_in:-1]
        edges = np.linspace(0, len(w), n_batches + 1).astype(int)
        means = np.array([(w[a:b] @ occ[a:b]) / w[a:b].sum() for a, b in zip(edges, edges[1:])])
        return means.std(axis=0, ddof=1) / math.sqrt(n_batches)

    def level_weights(self) -> dict[int, float]:
        """Fraction of time spent at each photon number k."""
        ks = self.occupancy[:-1].sum(axis=1)
        tot = self.holding.sum()
        return {int(k): float(self.holding[ks == k].sum() / tot) for k in np.unique(ks)}

    def norm_sum_series(self, stride: int = 1000) -> np.ndarray:
        """Sum of running time-fraction norm shares at every ``stride`` steps."""
        ks = self.occupancy[:-1].sum(axis=1)
        levels, inv = np.unique(ks, return_inverse=True)
        acc = np.zeros(len(levels))
        total = 0.0
        out = []
        for a in range(0, self.n_steps - stride + 1, stride):
            h = self.holding[a:a + stride]
            acc += np.bincount(inv[a:a + stride], weights=h, minlength=len(levels))
            total += math.fsum(h)
            out.append(math.fsum(acc / total))
        return np.array(out)

    def energy_quanta(self) -> np.ndarray:
        """Total energy in grid units after every step (must be constant)."""
        return self.matter_quanta + self.occupancy @ np.asarray(self.steps_per_mode)

    def to_csv(self, stride: int = 1) -> str:
        lines = ["step,mode,occupancy"]
        m = self.occupancy.shape[1]
        for i in range(0, self.occupancy.shape[0], stride):
            for a in range(m):
                lines.append(f"{i},{a},{int(self.occupancy[i, a])}")
        return "\n".join(lines) + "\n"


def equilibrate(t: TowerState, steps: int, seed: int) -> tuple[TowerState, Trajectory]:
    """Run the emission/absorption jump chain at fixed total energy.

    Events are picked with probability proportional to their weights; each
    visited state is credited its mean holding time 1/R so that time averages
    estimate the continuous-time stationary law. Starts from the dominant
    level; the returned tower holds the time-averaged norm share of every
    visited photon number.
    """
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    modes, matter = t.modes, t.matter
    s = np.array(modes.steps(matter.bin), dtype=np.int64)
    start = t.dominant()
    occ = np.array(start.occupancy, dtype=np.int64)
    e_mat = matter.index(start.matter_energy)
    total = int(e_mat + occ @ s)
    if total >= matter.n_bins:
        raise BoundaryError("total energy lies outside the matter level density")

    lg = matter.log_counts()[: total + 1]
    lg_ref = float(np.max(lg[np.isfinite(lg)])) if np.isfinite(lg).any() else 0.0
    rng = np.random.default_rng(seed)
    u = rng.random(steps)

    m = len(s)
    occ_rec = np.empty((steps + 1, m), dtype=np.int64)
    mat_rec = np.empty(steps + 1, dtype=np.int64)
    holding = np.empty(steps)
    ev_mode = np.full(steps, -1, dtype=np.int64)
    ev_sign = np.zeros(steps, dtype=np.int64)
    occ_rec[0] = occ
    mat_rec[0] = e_mat
    s_list = [int(x) for x in s]
    occ_list = [int(x) for x in occ]
    lg_list = lg.tolist()
    exp = math.exp
    inf = -math.inf

    for i in range(steps):
        logs = []
        for a in range(m):
            lo = e_mat - s_list[a]
            le = lg_list[lo] if lo >= 0 else inf
            logs.append(math.log(occ_list[a] + 1) + le if le != inf else inf)
            if occ_list[a] > 0:
                logs.append(math.log(occ_list[a]) + lg_list[e_mat + s_list[a]])
            else:
                logs.append(inf)
        top = max(logs)
        if top == inf:
            holding[i] = 1.0
            occ_rec[i + 1] = occ_list
            mat_rec[i + 1] = e_mat
            continue
        rel = [exp(x - top) if x != inf else 0.0 for x in logs]
        r_rel = math.fsum(rel)
        holding[i] = exp(lg_ref - top) / r_rel
        target = u[i] * r_rel
        acc = 0.0
        pick = len(rel) - 1
        for j, r in enumerate(rel):
            acc += r
            if target < acc and r > 0:
                pick = j
                break
        while rel[pick] == 0.0:
            pick -= 1
        a, kind = divmod(pick, 2)
        if kind == 0:
            occ_list[a] += 1
            e_mat -= s_list[a]
            ev_sign[i] = 1
        else:
            occ_list[a] -= 1
            e_mat += s_list[a]
            ev_sign[i] = -1
        ev_mode[i] = a
        occ_rec[i + 1] = occ_list
        mat_rec[i + 1] = e_mat

    traj = Trajectory(modes.quanta, tuple(s_list), matter.bin, total, occ_rec, mat_rec,
                      holding, ev_mode, ev_sign, int(seed))

    ks = occ_rec[:-1].sum(axis=1)
    tot_time = holding.sum()
    levels = []
    for k in np.unique(ks):
        at = np.flatnonzero(ks == k)
        last = at[-1]
        vec = tuple(int(x) for x in occ_rec[last])
        levels.append(TowerLevel(float(holding[at].sum() / tot_time), vec,
                                 float(mat_rec[last] * matter.bin)))
    # absorb float rounding of the shares into the largest one
    shares = [lv.weight for lv in levels]
    big = int(np.argmax(shares))
    fix = 1.0 - math.fsum(shares)
    levels[big] = TowerLevel(levels[big].weight + fix, levels[big].occupancy, levels[big].matter_energy)
    return TowerState(modes, matter, tuple(levels)), traj


def _photon_counts(steps: tuple[int, ...], top: int) -> list[int]:
    """Number of photon vectors at each energy 0..top (grid units), no cap."""
    c = [0] * (top + 1)
    c[0] = 1
    for s in steps:
        for e in range(s, top + 1):
            c[e] += c[e - s]
    return c


@dataclass(frozen=True)
class StationarySolution:
    occupancies: tuple[float, ...]
    distribution: dict
    tail_mass: float
    n_cap: int


def stationary_solution(modes: PhotonModeSet, matter: LevelDensity, e_total: float,
                        n_cap: int) -> StationarySolution:
    """Exact stationary law P({n}) proportional to g_m(E_tot - sum n_a hw_a).

    Sums directly over occupancy vectors with every n_a <= n_cap; the
    truncated mass is measured against the untruncated partition sum.
    """
    if n_cap < 0:
        raise ParameterError("n_cap must be non-negative")
    steps = modes.steps(matter.bin)
    top = matter.index(e_total)
    if top >= matter.n_bins:
        raise BoundaryError("total energy lies outside the matter level density")
    weights = {}
    for occ in itertools.product(range(n_cap + 1), repeat=len(steps)):
        used = sum(n * s for n, s in zip(occ, steps))
        if used > top:
            continue
        w = matter.counts[top - used]
        if w:
            weights[occ] = w
    z_trunc = sum(weights.values())
    pc = _photon_counts(steps, top)
    z_full = sum(c * matter.counts[top - e] for e, c in enumerate(pc) if c)
    if z_full == 0:
        raise ParameterError("no accessible states at this total energy")
    tail = float(Fraction(z_full - z_trunc, z_full))
    if tail >= TAIL_BOUND:
        raise TruncationError(f"truncation at n_cap={n_cap} drops mass {tail:.3e}")
    means = []
    for a in range(len(steps)):
        num = sum(occ[a] * w for occ, w in weights.items())
        means.append(float(Fraction(num, z_trunc)))
    dist = {occ: float(Fraction(w, z_trunc)) for occ, w in weights.items()}
    return StationarySolution(tuple(means), dist, tail, n_cap)


def stationary_occupancy(modes: PhotonModeSet, matter: LevelDensity, e_total: float,
                         n_cap: int) -> tuple[float, ...]:
    return stationary_solution(modes, matter, e_total, n_cap).occupancies


def planck_reference_temperature(modes: PhotonModeSet, matter: LevelDensity, e_total: float,
                                 occupancies, window: int = 5, k_B: float = 1.0) -> float:
    """Microcanonical matter temperature at the matter's mean energy."""
    e_photon = sum(n * q for n, q in zip(occupancies, modes.quanta))
    e_matter = matter.bin * round((e_total - e_photon) / matter.bin)
    return microcanonical_temperature(matter, e_matter, window, k_B).temperature


def stationary_comparison(modes: PhotonModeSet, matter: LevelDensity, e_total: float,
                          n_cap: int, window: int = 5, k_B: float = 1.0) -> list[dict]:
    """Rows ``mode, omega, n_stationary, n_planck, rel_diff``."""
    n_st = stationary_occupancy(modes, matter, e_total, n_cap)
    temp = planck_reference_temperature(modes, matter, e_total, n_st, window, k_B)
    rows = []
    for a, (w, n) in enumerate(zip(modes.frequencies, n_st)):
        npl = bose_einstein_occupancy(w, temp, modes.hbar, k_B)
        rows.append({"mode": a, "omega": w, "n_stationary": n, "n_planck": npl,
                     "rel_diff": abs(n - npl) / npl if npl > 0 else math.inf})
    return rows

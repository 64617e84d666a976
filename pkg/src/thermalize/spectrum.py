"""Exact microcanonical state counting for sets of harmonic modes.

Energies are measured from the zero-point level. Counts are Python
integers, so nothing overflows or rounds no matter how large g(E) gets.

Binning convention: the n-th rung of a mode with quantum hw sits in grid
cell floor(n * hw / bin), and a microstate lands in the sum of its rungs'
cells. For spectra that are integer multiples of the bin this is exact
energy bookkeeping. Otherwise the counting runs on a grid ``oversample``
times finer and is summed back onto the requested bins, so each mode
contributes at most bin / oversample of smearing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyEnsembleError, IllConditionedDensityError, ParameterError

_FLOOR_EPS = 1e-9
#: Fine-grid factor used for spectra not commensurate with the bin.
OVERSAMPLE = 8


@dataclass(frozen=True)
class ModeSpectrum:
    frequencies: tuple[float, ...]
    hbar: float = 1.0

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        if any(not w > 0 for w in freqs):
            raise ParameterError("mode frequencies must be positive")
        if not self.hbar > 0:
            raise ParameterError("hbar must be positive")
        object.__setattr__(self, "frequencies", tuple(sorted(freqs)))

    @property
    def quanta(self) -> tuple[float, ...]:
        return tuple(self.hbar * w for w in self.frequencies)

    def __len__(self):
        return len(self.frequencies)


def einstein_solid(n_modes: int, omega: float = 1.0, hbar: float = 1.0) -> ModeSpectrum:
    return ModeSpectrum((float(omega),) * n_modes, hbar)


@dataclass(frozen=True)
class LevelDensity:
    """Exact microstate counts g_b on the grid [b * bin, (b + 1) * bin)."""

    bin: float
    counts: tuple[int, ...]
    e_max: float

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def energies(self) -> np.ndarray:
        """Left edges of the bins."""
        return self.bin * np.arange(self.n_bins)

    def index(self, e: float) -> int:
        return int(math.floor(e / self.bin + _FLOOR_EPS))

    def count_at(self, e: float) -> int:
        b = self.index(e)
        if b < 0:
            return 0
        if b >= self.n_bins:
            raise IndexError(f"energy {e} beyond tabulated range {self.e_max}")
        return self.counts[b]

    def log_counts(self) -> np.ndarray:
        """ln g_b, with -inf for empty bins."""
        return np.array([_log_int(c) for c in self.counts])

    def total(self) -> int:
        return sum(self.counts)

    def to_csv(self) -> str:
        lines = ["E_bin_left,count"]
        lines += [f"{repr(float(e))},{c}" for e, c in zip(self.energies, self.counts)]
        return "\n".join(lines) + "\n"


def _log_int(c: int) -> float:
    if c <= 0:
        return -math.inf
    # math.log handles arbitrarily large ints
    return math.log(c)


def _rungs(quantum: float, bin: float, n_bins: int) -> list[int]:
    """Grid cells of the occupancy ladder 0, hw, 2hw, ... inside the grid."""
    out = []
    n = 0
    while True:
        r = int(math.floor(n * quantum / bin + _FLOOR_EPS))
        if r >= n_bins:
            return out
        out.append(r)
        n += 1


def _fold(g: np.ndarray, rungs: list[int]) -> np.ndarray:
    """Convolve object-dtype counts with one mode's ladder."""
    n_bins = len(g)
    step = rungs[1] if len(rungs) > 1 else None
    # the recurrence needs the ladder to run all the way to the grid edge
    if step and len(rungs) * step >= n_bins and all(r == n * step for n, r in enumerate(rungs)):
        # uniform ladder: out[b] = g[b] + out[b - step]
        out = g.copy()
        for b in range(step, n_bins):
            out[b] = out[b] + out[b - step]
        return out
    out = g.copy()
    for r in rungs[1:]:
        out[r:] += g[: n_bins - r]
    return out


def _zero_grid(n_bins: int) -> np.ndarray:
    g = np.empty(n_bins, dtype=object)
    g[:] = 0
    return g


def _grid_size(e_max: float, bin: float) -> int:
    return int(math.floor(e_max / bin + _FLOOR_EPS)) + 1


def _commensurate(spec: ModeSpectrum, bin: float) -> bool:
    return all(abs(q / bin - round(q / bin)) <= _FLOOR_EPS * max(1.0, q / bin) for q in spec.quanta)


def _resolve_oversample(spec: ModeSpectrum, bin: float, oversample: int | None) -> int:
    if oversample is None:
        return 1 if _commensurate(spec, bin) else OVERSAMPLE
    if not isinstance(oversample, int) or oversample < 1:
        raise ParameterError("oversample must be a positive integer")
    return oversample


def _coarsen(g: np.ndarray, k: int, n_bins: int) -> np.ndarray:
    out = _zero_grid(n_bins)
    for b in range(n_bins):
        out[b] = sum(g[b * k:(b + 1) * k])
    return out


def level_counts(spec: ModeSpectrum, e_max: float, bin: float,
                 oversample: int | None = None) -> LevelDensity:
    """Fold the modes one at a time into exact integer counts per bin.

    ``oversample`` defaults to 1 when every quantum is a whole number of
    bins and to ``OVERSAMPLE`` otherwise.
    """
    if not (e_max > 0 and bin > 0):
        raise ParameterError("e_max and bin must be positive")
    if bin > e_max:
        raise ParameterError("bin wider than the energy range")
    k = _resolve_oversample(spec, bin, oversample)
    n_bins = _grid_size(e_max, bin)
    fine = bin / k
    g = _zero_grid(n_bins * k)
    g[0] = 1
    for q in spec.quanta:
        g = _fold(g, _rungs(q, fine, n_bins * k))
    if k > 1:
        g = _coarsen(g, k, n_bins)
    return LevelDensity(float(bin), tuple(int(c) for c in g), float(e_max))


@dataclass(frozen=True)
class TemperatureEstimate:
    temperature: float
    window: tuple[float, float]

    def __float__(self):
        return self.temperature


def microcanonical_temperature(ld: LevelDensity, e: float, window: int = 5,
                               k_B: float = 1.0) -> TemperatureEstimate:
    """T from the slope of ln g(E).

    ``window`` odd and >= 3 fits a least-squares line to ln g over that many
    bins centred on ``e``; ``window=1`` is the one-step forward difference
    (ln g(e + bin) - ln g(e)) / bin. A flat density gives T = +inf.
    """
    b = ld.index(e)
    if window == 1:
        idx = np.array([b, b + 1])
    elif window >= 3 and window % 2 == 1:
        h = window // 2
        idx = np.arange(b - h, b + h + 1)
    else:
        raise ParameterError("window must be 1 or an odd integer >= 3")
    if idx[0] < 0 or idx[-1] >= ld.n_bins:
        raise ParameterError(f"window around E={e} leaves the tabulated grid")
    counts = [ld.counts[i] for i in idx]
    lo, hi = float(idx[0] * ld.bin), float((idx[-1] + 1) * ld.bin)
    if any(c <= 0 for c in counts):
        raise IllConditionedDensityError(f"empty bins in window [{lo}, {hi})")
    if all(c == counts[0] for c in counts):
        return TemperatureEstimate(math.inf, (lo, hi))
    x = idx * ld.bin
    y = np.array([_log_int(c) for c in counts])
    slope = float(np.polyfit(x - x.mean(), y - y.mean(), 1)[0])
    if not slope > 0:
        raise IllConditionedDensityError(f"ln g decreases across [{lo}, {hi})")
    return TemperatureEstimate(1.0 / (k_B * slope), (lo, hi))


def bose_einstein_occupancy(omega: float, t: float, hbar: float = 1.0, k_B: float = 1.0) -> float:
    """Mean occupancy 1 / (exp(hbar w / kT) - 1)."""
    if not (omega > 0 and t > 0):
        raise ParameterError("omega and temperature must be positive")
    if math.isinf(t):
        return math.inf
    x = hbar * omega / (k_B * t)
    return 1.0 / math.expm1(x)


def _prefix_suffix(spec: ModeSpectrum, bin: float, n_bins: int):
    quanta = spec.quanta
    ladders = [_rungs(q, bin, n_bins) for q in quanta]
    unit = _zero_grid(n_bins)
    unit[0] = 1
    prefix = [unit]
    for lad in ladders:
        prefix.append(_fold(prefix[-1], lad))
    suffix = [unit]
    for lad in reversed(ladders):
        suffix.append(_fold(suffix[-1], lad))
    suffix.reverse()
    # prefix[i]: modes < i;  suffix[i]: modes >= i
    return ladders, prefix, suffix


def _convolve_upto(a: np.ndarray, b: np.ndarray, top: int) -> np.ndarray:
    out = _zero_grid(top + 1)
    for k in range(top + 1):
        if a[k]:
            out[k:] += a[k] * b[: top + 1 - k]
    return out


def microcanonical_occupancies(spec: ModeSpectrum, e_total: float, bin: float,
                               oversample: int | None = None) -> list[Fraction]:
    """Exact <n_i> for every mode over all microstates in [E, E + bin).

    Each mode's weight per rung is the number of ways the other modes fill
    the remaining energy, assembled from prefix and suffix count tables.
    Binning follows :func:`level_counts`.
    """
    if not bin > 0 or e_total < 0:
        raise ParameterError("bin must be positive and e_total non-negative")
    k = _resolve_oversample(spec, bin, oversample)
    n_bins = _grid_size(e_total, bin)
    cells = range((n_bins - 1) * k, n_bins * k)
    top = cells[-1]
    ladders, prefix, suffix = _prefix_suffix(spec, bin / k, top + 1)
    if sum(prefix[-1][c] for c in cells) == 0:
        raise EmptyEnsembleError(f"no microstates in [{e_total}, {e_total + bin})")
    means = []
    for i, lad in enumerate(ladders):
        rest = _convolve_upto(prefix[i], suffix[i + 1], top)
        num = den = 0
        for c in cells:
            for n, r in enumerate(lad):
                if r > c:
                    break
                w = rest[c - r]
                num += n * w
                den += w
        means.append(Fraction(int(num), int(den)))
    return means


def microcanonical_mode_occupancy(spec: ModeSpectrum, e_total: float, bin: float, mode: int) -> float:
    if not 0 <= mode < len(spec):
        raise IndexError(f"mode {mode} out of range")
    return float(microcanonical_occupancies(spec, e_total, bin)[mode])


def occupancy_comparison(spec: ModeSpectrum, e_total: float, bin: float, window: int = 5,
                         k_B: float = 1.0) -> list[dict]:
    """Rows ``mode, omega, n_microcanonical, n_bose_einstein, rel_diff``."""
    n_mc = microcanonical_occupancies(spec, e_total, bin)
    h = max(window // 2, 1)
    ld = level_counts(spec, e_total + (h + 1) * bin, bin)
    t = microcanonical_temperature(ld, e_total, window, k_B).temperature
    rows = []
    for i, (w, n) in enumerate(zip(spec.frequencies, n_mc)):
        nbe = bose_einstein_occupancy(w, t, spec.hbar, k_B)
        n = float(n)
        rel = abs(n - nbe) / nbe if nbe > 0 else math.inf
        rows.append({"mode": i, "omega": w, "n_microcanonical": n,
                     "n_bose_einstein": nbe, "rel_diff": rel})
    return rows

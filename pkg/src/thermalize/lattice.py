"""One-dimensional harmonic atom chains and their normal modes.

Coordinates are mass weighted (y_j = sqrt(m_j) x_j), so the mode matrix is
orthonormal even when the masses differ.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, ParameterError, UnsupportedMergeError

#: Sentinel site index for a massless wall anchor.
WALL = -1

FREE = "free"
FIXED = "fixed"
_BOUNDARY_ALIASES = {"free": FREE, "fixed": FIXED, "fixed-ends": FIXED, "fixed_ends": FIXED}


def _normalize_boundary(boundary: str) -> str:
    try:
        return _BOUNDARY_ALIASES[boundary]
    except KeyError:
        raise ParameterError(f"unknown boundary {boundary!r}") from None


@dataclass(frozen=True)
class Lattice:
    """A chain of point masses joined by nearest-neighbour springs.

    ``springs`` holds ``(i, j, stiffness)`` triples; ``WALL`` in place of a
    site index anchors the spring to an immovable wall.
    """

    masses: tuple[float, ...]
    springs: tuple[tuple[int, int, float], ...]
    positions: tuple[float, ...]
    boundary: str
    spacing: float

    def __post_init__(self):
        n = len(self.masses)
        if n < 1:
            raise ParameterError("lattice needs at least one atom")
        if len(self.positions) != n:
            raise ParameterError("positions and masses differ in length")
        if any(not m > 0 for m in self.masses):
            raise ParameterError("masses must be positive")
        if not self.spacing > 0:
            raise ParameterError("spacing must be positive")
        object.__setattr__(self, "boundary", _normalize_boundary(self.boundary))
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise ParameterError("positions must be strictly increasing")
        for i, j, k in self.springs:
            if not k >= 0:
                raise ParameterError("stiffness must be non-negative")
            if i == WALL and j == WALL:
                raise ParameterError("spring joins two walls")
            if i == WALL or j == WALL:
                site = j if i == WALL else i
                if site not in (0, n - 1):
                    raise ParameterError(f"wall spring on interior site {site}")
            elif not (0 <= i < n and 0 <= j < n and abs(i - j) == 1):
                raise ParameterError(f"spring ({i}, {j}) does not join adjacent sites")

    @property
    def n_atoms(self) -> int:
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def stiffness_matrix(self) -> np.ndarray:
        n = self.n_atoms
        K = np.zeros((n, n))
        for i, j, k in self.springs:
            if i != WALL:
                K[i, i] += k
            if j != WALL:
                K[j, j] += k
            if i != WALL and j != WALL:
                K[i, j] -= k
                K[j, i] -= k
        return K

    def dynamical_matrix(self) -> np.ndarray:
        """Mass-weighted stiffness D_jk = K_jk / sqrt(m_j m_k)."""
        s = 1.0 / np.sqrt(np.asarray(self.masses))
        return self.stiffness_matrix() * np.outer(s, s)

    def to_dict(self) -> dict:
        return {
            "masses": [float(m) for m in self.masses],
            "springs": [[int(i), int(j), float(k)] for i, j, k in self.springs],
            "positions": [float(x) for x in self.positions],
            "boundary": self.boundary,
            "spacing": float(self.spacing),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return cls(
            masses=tuple(float(m) for m in d["masses"]),
            springs=tuple((int(i), int(j), float(k)) for i, j, k in d["springs"]),
            positions=tuple(float(x) for x in d["positions"]),
            boundary=d["boundary"],
            spacing=float(d["spacing"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Lattice":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class NormalModeBasis:
    """Frequencies (ascending) and orthonormal mass-weighted eigenvectors.

    Column ``i`` of ``mode_matrix`` is mode i; row ``j`` is atom j, so
    ``mode_matrix[j, i]`` is e_j^(i).
    """

    frequencies: np.ndarray
    mode_matrix: np.ndarray
    zero_mode_count: int
    masses: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @property
    def is_zero_mode(self) -> np.ndarray:
        return np.arange(self.n_modes) < self.zero_mode_count


def build_chain(n_atoms: int, mass: float, stiffness: float, spacing: float,
                boundary: str = FREE) -> Lattice:
    """Uniform chain; ``fixed`` adds a wall spring at each end."""
    if n_atoms < 1:
        raise ParameterError("n_atoms must be >= 1")
    if not (mass > 0 and stiffness > 0 and spacing > 0):
        raise ParameterError("mass, stiffness and spacing must be positive")
    boundary = _normalize_boundary(boundary)
    springs = [(i, i + 1, float(stiffness)) for i in range(n_atoms - 1)]
    if boundary == FIXED:
        springs = [(WALL, 0, float(stiffness))] + springs + [(n_atoms - 1, WALL, float(stiffness))]
    return Lattice(
        masses=(float(mass),) * n_atoms,
        springs=tuple(springs),
        positions=tuple(float(spacing) * i for i in range(n_atoms)),
        boundary=boundary,
        spacing=float(spacing),
    )


def merge_lattices(a: Lattice, b: Lattice, joint_stiffness: float) -> Lattice:
    """Fuse two free chains end to end with one unstretched contact spring.

    Block ``b`` is translated so the new bond sits at its rest length
    (``a.spacing``); no potential energy is stored at the moment of contact.
    """
    if a.boundary != FREE or b.boundary != FREE:
        raise UnsupportedMergeError("only free-boundary chains can be merged")
    if not joint_stiffness > 0:
        raise ParameterError("joint_stiffness must be positive")
    n = a.n_atoms
    shift = a.positions[-1] + a.spacing - b.positions[0]
    springs = (
        list(a.springs)
        + [(n - 1, n, float(joint_stiffness))]
        + [(i + n, j + n, k) for i, j, k in b.springs]
    )
    return Lattice(
        masses=a.masses + b.masses,
        springs=tuple(springs),
        positions=a.positions + tuple(x + shift for x in b.positions),
        boundary=FREE,
        spacing=a.spacing,
    )


def normal_modes(lattice: Lattice) -> NormalModeBasis:
    """Diagonalize the mass-weighted dynamical matrix.

    Eigenvalues within ``1e-12 * max|eigenvalue|`` of zero are clamped to
    zero and counted as zero modes; anything more negative is an error.
    Each eigenvector is signed so its largest-magnitude entry is positive.
    """
    D = lattice.dynamical_matrix()
    evals, evecs = np.linalg.eigh(D)
    scale = float(np.max(np.abs(evals)))
    eps = 1e-12 * scale
    if evals[0] < -eps:
        raise InstabilityError(f"negative eigenvalue {evals[0]:.3e} in dynamical matrix")
    zero = np.abs(evals) <= eps
    evals = np.where(zero, 0.0, evals)

    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    evecs = evecs * signs

    freqs = np.sqrt(evals)
    freqs.flags.writeable = False
    evecs.flags.writeable = False
    masses = np.asarray(lattice.masses, dtype=float)
    masses.flags.writeable = False
    return NormalModeBasis(freqs, evecs, int(zero.sum()), masses)


def fixed_chain_frequencies(n_atoms: int, mass: float, stiffness: float) -> np.ndarray:
    """Closed-form spectrum of a uniform fixed-ends chain, ascending."""
    k = np.arange(1, n_atoms + 1)
    return 2.0 * np.sqrt(stiffness / mass) * np.sin(k * np.pi / (2 * (n_atoms + 1)))

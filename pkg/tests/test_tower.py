import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermalize import tower
from thermalize.errors import BoundaryError, ParameterError, TruncationError
from thermalize.spectrum import LevelDensity, einstein_solid, level_counts


def _matter(n=50, e=250, pad=4):
    return level_counts(einstein_solid(n), e + pad, 1.0)


def _doubling(top):
    """Toy matter density g(E) = 2^E on an integer grid."""
    return LevelDensity(1.0, tuple(2 ** b for b in range(top + 1)), float(top))


def test_unit_norm_amplitude():
    modes = tower.PhotonModeSet((0.5, 2.0), mu0=1.5)
    for a, w in enumerate(modes.frequencies):
        f = tower.PlaneWaveField(((a, tower.unit_norm_amplitude(w, 1.5)),))
        assert tower.kg_norm(f, modes) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.2, 3), st.floats(0, 100))
def test_kg_density_matches_mode_norm(w, re, im, mu0, t):
    amp = complex(re, im)
    modes = tower.PhotonModeSet((w,), mu0=mu0)
    f = tower.free_evolve(tower.PlaneWaveField(((0, amp),)), modes, t)
    A = f.amplitudes[0][1]
    dens = tower.kg_norm_density(A, -1j * w * A, mu0)
    assert dens == pytest.approx(tower.kg_norm(f, modes), rel=1e-12, abs=1e-12)
    assert tower.kg_norm(f, modes) == pytest.approx(abs(amp) ** 2 * w / (2 * mu0), rel=1e-12)


def test_negative_frequency_rejected():
    with pytest.raises(ParameterError):
        tower.PhotonModeSet((1.0, -1.0))
    with pytest.raises(ParameterError):
        tower.unit_norm_amplitude(0.0)


def test_photon_quantum_must_sit_on_matter_grid():
    with pytest.raises(ParameterError):
        tower.PhotonModeSet((1.5,)).steps(1.0)
    assert tower.PhotonModeSet((1.0, 3.0)).steps(0.5) == (2, 6)


def test_tower_state_validation():
    modes = tower.PhotonModeSet((1.0,))
    m = _matter(3, 10)
    with pytest.raises(ParameterError):
        tower.TowerState(modes, m, (tower.TowerLevel(0.6, (0,), 5.0), tower.TowerLevel(0.6, (1,), 4.0)))
    with pytest.raises(ParameterError):
        tower.TowerState(modes, m, (tower.TowerLevel(0.5, (1,), 5.0), tower.TowerLevel(0.5, (1,), 4.0)))


def test_invariants_of_mixed_tower():
    modes = tower.PhotonModeSet((1.0, 2.0))
    m = _matter(3, 10)
    t = tower.TowerState(modes, m, (tower.TowerLevel(0.25, (0, 0), 6.0),
                                    tower.TowerLevel(0.75, (2, 1), 2.0)))
    inv = tower.tower_invariants(t)
    assert inv.norm_sum == 1.0
    assert inv.per_level_energy == (6.0, 6.0)
    assert inv.total_energy == pytest.approx(6.0)


def test_transition_weights():
    modes = tower.PhotonModeSet((1.0, 2.0))
    m = _matter(4, 10)
    level = tower.TowerLevel(1.0, (2, 0), 5.0)
    t = tower.TowerState(modes, m, (level,))
    g = lambda q: math.comb(q + 3, q)
    assert tower.transition_weights(t, 0) == (3 * g(4), 2 * g(6))
    assert tower.transition_weights(t, 1) == (1 * g(3), 0)


def test_transition_weights_boundary():
    modes = tower.PhotonModeSet((1.0,))
    m = _matter(3, 10, pad=0)
    t = tower.TowerState(modes, m, (tower.TowerLevel(1.0, (1,), 10.0),))
    with pytest.raises(BoundaryError):
        tower.transition_weights(t, 0)
    # emission into a negative matter energy is simply forbidden
    t0 = tower.photon_free_tower(modes, m, 0.0)
    assert tower.transition_weights(t0, 0) == (0, 0)


def test_stationary_geometric_oracle():
    top = 30
    m = _doubling(top)
    modes = tower.PhotonModeSet((1.0,))
    sol = tower.stationary_solution(modes, m, float(top), top)
    num = sum(Fraction(n, 2 ** n) for n in range(top + 1))
    den = sum(Fraction(1, 2 ** n) for n in range(top + 1))
    assert sol.occupancies[0] == pytest.approx(float(num / den), rel=1e-15)
    assert sol.tail_mass == 0.0
    assert sum(sol.distribution.values()) == pytest.approx(1.0, abs=1e-12)


def test_stationary_two_modes_matches_direct_sum():
    m = _matter(5, 20)
    modes = tower.PhotonModeSet((1.0, 2.0))
    sol = tower.stationary_solution(modes, m, 20.0, 20)
    w = {(a, b): m.counts[20 - a - 2 * b] for a in range(21) for b in range(11) if a + 2 * b <= 20}
    z = sum(w.values())
    assert sol.occupancies[0] == pytest.approx(sum(a * v for (a, _), v in w.items()) / z, rel=1e-14)
    assert sol.occupancies[1] == pytest.approx(sum(b * v for (_, b), v in w.items()) / z, rel=1e-14)


def test_truncation_error():
    m = _matter(50, 250)
    with pytest.raises(TruncationError):
        tower.stationary_solution(tower.PhotonModeSet((1.0,)), m, 250.0, 10)


def test_equilibrate_conserves_energy_and_norm():
    m = _matter(20, 60)
    modes = tower.PhotonModeSet((1.0, 2.0, 3.0))
    start = tower.photon_free_tower(modes, m, 60.0)
    final, traj = tower.equilibrate(start, 50_000, seed=3)
    assert np.all(traj.energy_quanta() == traj.total_quanta)
    inv = tower.tower_invariants(final)
    assert abs(inv.norm_sum - 1.0) < 1e-12
    assert np.all(np.abs(traj.norm_sum_series(5000) - 1.0) < 1e-12)
    np.testing.assert_allclose(inv.per_level_energy, 60.0, rtol=1e-12)
    assert inv.total_energy == pytest.approx(60.0, rel=1e-9)


def test_every_event_carries_one_quantum():
    m = _matter(20, 60)
    modes = tower.PhotonModeSet((1.0, 2.0))
    _, traj = tower.equilibrate(tower.photon_free_tower(modes, m, 60.0), 20_000, seed=9)
    d_occ = np.diff(traj.occupancy, axis=0)
    d_mat = np.diff(traj.matter_quanta)
    steps = np.asarray(traj.steps_per_mode)
    q = np.asarray(modes.quanta)
    moved = traj.event_mode >= 0
    rows = np.flatnonzero(moved)
    a = traj.event_mode[rows]
    sign = traj.event_sign[rows]
    # photon number changes by exactly the event sign in the event mode only
    assert np.all(d_occ[rows, a] == sign)
    assert np.all(np.abs(d_occ[rows]).sum(axis=1) == 1)
    # photon energy per unit norm moved is hbar * omega of that mode
    d_e = d_occ[rows] @ q
    assert np.all(d_e / sign == q[a])
    assert np.all(d_mat[rows] == -sign * steps[a])


def test_equilibrate_reproducible():
    m = _matter(10, 30)
    start = tower.photon_free_tower(tower.PhotonModeSet((1.0,)), m, 30.0)
    _, a = tower.equilibrate(start, 5000, seed=42)
    _, b = tower.equilibrate(start, 5000, seed=42)
    _, c = tower.equilibrate(start, 5000, seed=43)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != c.to_csv()


def test_detailed_balance_total_variation():
    m = _matter(3, 8)
    modes = tower.PhotonModeSet((1.0, 2.0))
    _, traj = tower.equilibrate(tower.photon_free_tower(modes, m, 8.0), 200_000, seed=5)
    exact = tower.stationary_solution(modes, m, 8.0, 8).distribution
    burn = 1000
    w = traj.holding[burn:]
    occ = traj.occupancy[burn:-1]
    emp = {}
    for vec, h in zip(map(tuple, occ.tolist()), w):
        emp[vec] = emp.get(vec, 0.0) + h
    tot = w.sum()
    keys = set(exact) | set(emp)
    tv = 0.5 * sum(abs(exact.get(k, 0.0) - emp.get(k, 0.0) / tot) for k in keys)
    assert tv < 0.01


def test_planck_limit_improves_with_matter_size():
    modes = tower.PhotonModeSet((1.0,))
    devs = []
    for n in (10, 50, 200):
        e = 5 * n
        m = level_counts(einstein_solid(n), e + 4, 1.0)
        rows = tower.stationary_comparison(modes, m, float(e), e)
        devs.append(rows[0]["rel_diff"])
    assert devs[0] > devs[1] > devs[2]


def test_trajectory_csv_header_and_stride():
    m = _matter(5, 10)
    _, traj = tower.equilibrate(tower.photon_free_tower(tower.PhotonModeSet((1.0, 2.0)), m, 10.0), 100, 1)
    lines = traj.to_csv(10).splitlines()
    assert lines[0] == "step,mode,occupancy"
    assert len(lines) == 1 + 11 * 2

import math

import numpy as np
import pytest

from thermalize import gas
from thermalize.errors import InsufficientStatisticsError, ParameterError, StabilityError


def _pair(v=1.0, m=1.0, k=1e4, rc=0.05, L=20.0):
    return gas.PacketGas([8.0, 12.0], [v, -v], [m, m], [0.01, 0.01], k, rc, L, 1.0)


@pytest.fixture(scope="module")
def dilute_run():
    g = gas.make_gas(16, 1.0, 1.0, 1e4, 0.05, 100.0, 0.01, seed=1)
    dt = gas.max_stable_dt(g) / 2
    return g, gas.simulate_gas(g, 700.0, dt, record_every=50)


def test_maxwell_boltzmann_moments():
    v = gas.sample_maxwell_boltzmann(100_000, 1.0, 1.0, seed=0)
    assert abs(v.mean()) < 4 * math.sqrt(1 / 1e5)
    # var(v^2) = 2 for a unit normal
    assert abs((v ** 2).mean() - 1.0) < 4 * math.sqrt(2 / 1e5)


def test_maxwell_boltzmann_scaling_and_seed():
    a = gas.sample_maxwell_boltzmann(1000, 2.0, 0.5, seed=7)
    b = gas.sample_maxwell_boltzmann(1000, 2.0, 2.0, seed=7)
    np.testing.assert_allclose(b, 2 * a)
    np.testing.assert_array_equal(a, gas.sample_maxwell_boltzmann(1000, 2.0, 0.5, seed=7))
    with pytest.raises(ParameterError):
        gas.sample_maxwell_boltzmann(10, 1.0, 0.0, seed=0)


def test_packet_energy_spread():
    assert gas.packet_energy_spread(1.0, 1.0) == 0.5
    assert gas.packet_energy_spread(2.0, 1.0) == 0.25
    assert gas.packet_energy_spread(1.0, 2.0) == 0.125
    with pytest.raises(ParameterError):
        gas.packet_energy_spread(1.0, 0.0)


def test_make_gas_validation():
    with pytest.raises(ParameterError):
        gas.make_gas(10, 1.0, 1.0, 1.0, 0.6, 10.0, 0.01, seed=0)
    with pytest.raises(ParameterError):
        gas.make_gas(10, 1.0, 1.0, 1.0, 0.1, 10.0, 0.01, seed=0, initial="hot")
    g = gas.make_gas(10, 1.0, 1.0, 1.0, 0.1, 10.0, 0.01, seed=0, mass_dispersion=0.1)
    assert np.all(np.abs(g.masses - 1.0) <= 0.1)
    assert g.packing_fraction() == pytest.approx(0.2)


def test_alternating_start():
    g = gas.make_gas(6, 2.0, 0.5, 1.0, 0.1, 10.0, 0.01, seed=0, initial="alternating")
    np.testing.assert_allclose(g.velocities, 0.5 * np.array([1, -1, 1, -1, 1, -1]))


def test_packet_gas_rejects_bad_state():
    with pytest.raises(ParameterError):
        gas.PacketGas([1.0, 0.5], [0, 0], [1, 1], [1, 1], 1.0, 0.1, 10.0, 1.0)
    with pytest.raises(ParameterError):
        gas.PacketGas([1.0, 2.0], [0, 0], [1, -1], [1, 1], 1.0, 0.1, 10.0, 1.0)


def test_dt_stability_precheck():
    g = _pair()
    with pytest.raises(StabilityError):
        gas.simulate_gas(g, 1.0, gas.max_stable_dt(g))


def test_two_body_contact_duration():
    g = _pair(v=1.0)
    dt = gas.max_stable_dt(g) / 4
    tr = gas.simulate_gas(g, 4.0, dt)
    want = math.pi * math.sqrt(1.0 / (2 * 1e4))
    assert want == pytest.approx(gas.contact_time(1.0, 1.0, 1e4))
    assert len(tr.contact_durations) == 1
    assert abs(tr.contact_durations[0] - want) <= 2 * dt
    # equal masses swap velocities
    np.testing.assert_allclose(tr.velocities[-1], [-1.0, 1.0], atol=1e-6)


def test_momentum_conserved_through_collision():
    g = gas.PacketGas([8.0, 12.0], [1.0, -0.3], [1.0, 1.3], [0.01, 0.01], 1e4, 0.05, 20.0, 1.0)
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 5.0, dt, record_every=10)
    assert tr.collisions.sum() == 2
    assert np.all(tr.wall_contacts == 0)
    assert np.max(np.abs(tr.momentum - tr.momentum[0])) < 1e-9


def test_single_particle_wall_bouncing():
    g = gas.PacketGas([5.0], [1.3], [1.0], [0.01], 1e4, 0.05, 10.0, 1.0)
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 40.0, dt, record_every=10)
    free = tr.wall_contacts == 0
    assert tr.collisions[0] >= 4
    np.testing.assert_allclose(tr.kinetic[free, 0], 0.5 * 1.3 ** 2, rtol=1e-6)


def test_energy_drift_over_a_million_steps():
    g = gas.make_gas(16, 1.0, 1.0, 1e4, 0.05, 100.0, 0.01, seed=1)
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 1_000_000 * dt, dt, record_every=100)
    assert tr.n_steps == 1_000_000
    e = tr.total_energy
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-6


def test_histograms_normalized(dilute_run):
    _, tr = dilute_run
    h = gas.energy_partition_histograms(tr, 60)
    a, b = h.integrals()
    assert a == pytest.approx(1.0, abs=1e-6)
    assert b == pytest.approx(1.0, abs=1e-6)
    assert h.to_csv().splitlines()[0] == "E,h_ke,h_pe"
    assert set(h.summary(0.1)) == {"tau_r", "tau_coll", "A_fit", "gamma_fit", "ks_stat"}


def test_dilute_pe_fraction_tracks_recoil_ratio(dilute_run):
    g, tr = dilute_run
    assert g.packing_fraction() < 0.02
    assert tr.collisions_per_particle() >= 100
    h = gas.energy_partition_histograms(tr, 60)
    ratio = h.pe_time_fraction / (h.tau_r / h.tau_coll)
    assert 0.5 < ratio < 2.0
    # potential energy is a small share in the dilute gas
    assert h.mean_pe < 0.05 * h.mean_ke


def test_energy_identity_per_particle(dilute_run):
    _, tr = dilute_run
    h = gas.energy_partition_histograms(tr, 200)
    e_ke = float(np.sum(h.energies * h.h_ke) * h.bin_width)
    e_pe_weighted = float(np.sum(h.energies * h.h_pe) * h.bin_width)
    # first moments of the densities reproduce the per-particle means up to binning
    assert e_ke == pytest.approx(h.mean_ke, rel=0.02)
    assert e_pe_weighted == pytest.approx(h.mean_pe, abs=h.bin_width)
    per_particle = float(tr.total_energy.mean() / tr.positions.shape[1])
    assert h.mean_ke + h.mean_pe == pytest.approx(per_particle, rel=1e-6)


def test_too_few_collisions():
    g = gas.make_gas(4, 1.0, 1.0, 1e4, 0.05, 100.0, 0.01, seed=1)
    tr = gas.simulate_gas(g, 5.0, gas.max_stable_dt(g) / 2)
    with pytest.raises(InsufficientStatisticsError):
        gas.energy_partition_histograms(tr, 20)


def test_dense_limit_equipartition():
    g = gas.compressed_chain(16, 1.0, 1e4, 0.05, 0.01, 0.2, 0.01, seed=2)
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 60.0, dt, record_every=20)
    off = gas.static_compression_energy(g) / g.n
    h = gas.energy_partition_histograms(tr, 50, pe_offset=off, min_collisions=0)
    assert h.mean_ke == pytest.approx(h.mean_pe, rel=0.05)


def test_static_compression_energy():
    g = gas.compressed_chain(4, 1.0, 10.0, 0.5, 0.1, 1.0, 0.01, seed=0)
    assert gas.static_compression_energy(g) == pytest.approx(0.5 * 10.0 * 0.01 * 5)
    dilute = gas.make_gas(4, 1.0, 1.0, 10.0, 0.1, 10.0, 0.01, seed=0)
    assert gas.static_compression_energy(dilute) == 0.0


def test_packet_widths_grow_by_free_spreading(dilute_run):
    g, tr = dilute_run
    assert np.all(tr.packet_widths > g.widths)
    t_end = tr.times[-1]
    bound = np.sqrt(g.widths ** 2 + (t_end / (2 * g.masses * g.widths)) ** 2)
    assert np.all(tr.packet_widths <= bound + 1e-12)


def test_simulation_reproducible():
    g = gas.make_gas(8, 1.0, 1.0, 1e4, 0.05, 50.0, 0.01, seed=4)
    dt = gas.max_stable_dt(g) / 2
    a = gas.simulate_gas(g, 20.0, dt, record_every=200)
    b = gas.simulate_gas(g, 20.0, dt, record_every=200)
    assert a.to_csv() == b.to_csv()


def test_maxwell_start_stays_maxwellian():
    g = gas.make_gas(64, 1.0, 1.0, 1e4, 0.05, 400.0, 0.01, seed=3)
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 400.0, dt, record_every=2000)
    ks = gas.velocity_ks_statistic(tr, stride=20)
    n = tr.velocities[len(tr.times) // 2::20].size
    assert ks < gas.ks_critical_value(n)


def test_alternating_start_relaxes_to_maxwell_boltzmann():
    # equal speeds with alternating directions; sampled after >= 20 collisions
    # per particle, snapshots spaced by several collision times
    g = gas.make_gas(64, 1.0, 1.0, 1e4, 0.05, 400.0, 0.01, seed=3, initial="alternating")
    dt = gas.max_stable_dt(g) / 2
    tr = gas.simulate_gas(g, 400.0, dt, record_every=2000)
    assert tr.collisions_per_particle() >= 40
    ks = gas.velocity_ks_statistic(tr, stride=20)
    n = tr.velocities[len(tr.times) // 2::20].size
    assert ks < gas.ks_critical_value(n)

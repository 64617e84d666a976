import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermalize.errors import InstabilityError, ParameterError, UnsupportedMergeError
from thermalize.lattice import (
    FIXED,
    FREE,
    WALL,
    Lattice,
    build_chain,
    fixed_chain_frequencies,
    merge_lattices,
    normal_modes,
)


def test_three_atom_free_chain_matches_direct_eigensolve():
    basis = normal_modes(build_chain(3, 1.0, 1.0, 1.0))
    K = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    oracle = np.sort(np.linalg.eigvalsh(K))
    np.testing.assert_allclose(basis.frequencies ** 2, oracle, atol=1e-14)
    np.testing.assert_allclose(basis.frequencies ** 2, [0, 1, 3], atol=1e-14)
    assert basis.zero_mode_count == 1


@pytest.mark.parametrize("n", [1, 2, 5, 17, 64, 256])
def test_fixed_chain_closed_form(n):
    basis = normal_modes(build_chain(n, 2.0, 3.0, 1.0, FIXED))
    exact = fixed_chain_frequencies(n, 2.0, 3.0)
    assert np.max(np.abs(basis.frequencies - exact) / exact) < 1e-10
    assert basis.zero_mode_count == 0


def test_mode_matrix_orthonormal_with_unequal_masses():
    lat = Lattice((1.0, 2.5, 0.7, 4.0), ((0, 1, 1.0), (1, 2, 0.3), (2, 3, 2.0)),
                  (0.0, 1.0, 2.0, 3.0), FREE, 1.0)
    E = normal_modes(lat).mode_matrix
    np.testing.assert_allclose(E.T @ E, np.eye(4), atol=1e-10)


def test_mode_vectors_solve_dynamical_matrix():
    lat = build_chain(10, 1.3, 0.8, 1.0)
    b = normal_modes(lat)
    D = lat.dynamical_matrix()
    np.testing.assert_allclose(D @ b.mode_matrix, b.mode_matrix * b.frequencies ** 2, atol=1e-12)


def test_sign_convention_is_deterministic():
    b = normal_modes(build_chain(6, 1.0, 1.0, 1.0))
    E = b.mode_matrix
    pivots = E[np.argmax(np.abs(E), axis=0), np.arange(6)]
    assert np.all(pivots > 0)


def test_outputs_are_read_only():
    b = normal_modes(build_chain(4, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        b.frequencies[0] = 1.0


@pytest.mark.parametrize("args", [(0, 1.0, 1.0, 1.0), (3, -1.0, 1.0, 1.0), (3, 1.0, 0.0, 1.0),
                                  (3, 1.0, 1.0, -2.0)])
def test_build_chain_rejects_bad_parameters(args):
    with pytest.raises(ParameterError):
        build_chain(*args)


def test_lattice_invariants():
    with pytest.raises(ParameterError):
        Lattice((1.0, 1.0), ((0, 1, 1.0),), (1.0, 0.5), FREE, 1.0)
    with pytest.raises(ParameterError):
        Lattice((1.0, 1.0, 1.0), ((0, 2, 1.0),), (0.0, 1.0, 2.0), FREE, 1.0)
    with pytest.raises(ParameterError):
        Lattice((1.0, 1.0, 1.0), ((WALL, 1, 1.0),), (0.0, 1.0, 2.0), FIXED, 1.0)
    with pytest.raises(ParameterError):
        Lattice((1.0, 1.0), ((0, 1, -1.0),), (0.0, 1.0), FREE, 1.0)


def test_merge_produces_one_zero_mode_and_joint_bond():
    a = build_chain(3, 1.0, 1.0, 1.0)
    b = build_chain(2, 2.0, 1.0, 1.0)
    fused = merge_lattices(a, b, 0.5)
    assert fused.n_atoms == 5
    assert (2, 3, 0.5) in fused.springs
    assert fused.positions == (0.0, 1.0, 2.0, 3.0, 4.0)
    assert normal_modes(fused).zero_mode_count == 1


def test_merge_rejects_fixed_chains():
    with pytest.raises(UnsupportedMergeError):
        merge_lattices(build_chain(3, 1, 1, 1, FIXED), build_chain(3, 1, 1, 1), 1.0)


def test_negative_stiffness_matrix_is_unstable():
    # a negative wall spring cannot be expressed through Lattice, so patch the matrix
    lat = build_chain(3, 1.0, 1.0, 1.0)

    class Bad(Lattice):
        def dynamical_matrix(self):
            return super().dynamical_matrix() - np.eye(3)

    bad = Bad(lat.masses, lat.springs, lat.positions, lat.boundary, lat.spacing)
    with pytest.raises(InstabilityError):
        normal_modes(bad)


def test_json_round_trip():
    lat = build_chain(4, 1.5, 2.0, 0.7, FIXED)
    back = Lattice.from_json(lat.to_json())
    assert back == lat
    d = json.loads(lat.to_json())
    assert d["springs"][0][0] == WALL
    assert d["boundary"] == "fixed"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=2, max_size=12), st.floats(0.1, 5.0))
def test_free_chain_properties(masses, k):
    n = len(masses)
    springs = tuple((i, i + 1, k) for i in range(n - 1))
    lat = Lattice(tuple(masses), springs, tuple(float(i) for i in range(n)), FREE, 1.0)
    b = normal_modes(lat)
    assert b.zero_mode_count == 1
    assert np.all(np.diff(b.frequencies) >= 0)
    np.testing.assert_allclose(b.mode_matrix.T @ b.mode_matrix, np.eye(n), atol=1e-10)
    # the zero mode is uniform translation in mass-weighted coordinates
    e0 = b.mode_matrix[:, 0]
    np.testing.assert_allclose(e0, np.sqrt(masses) / np.linalg.norm(np.sqrt(masses)), atol=1e-7)

import numpy as np
import pytest

from conftest import random_hermitian
from hermitian import (
    HermitianError,
    eig_hermitian,
    from_coords,
    gram,
    hermitian_basis,
    rank_one_extract,
    to_coords,
    trace_coefficients,
    trace_product,
)


def test_eig_diagonal_and_pauli_y():
    vals, _ = eig_hermitian(np.diag([3.0, 1.0, 2.0]))
    assert vals == pytest.approx([1.0, 2.0, 3.0])
    vals, vecs = eig_hermitian(np.array([[0, -1j], [1j, 0]]))
    assert vals == pytest.approx([-1.0, 1.0], abs=1e-14)
    assert abs(vecs[1, 1] / vecs[0, 1]) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_eig_matches_reconstruction(rng, n):
    a = random_hermitian(rng, n)
    vals, vecs = eig_hermitian(a)
    assert np.all(np.diff(vals) >= 0)
    assert np.allclose(vecs.conj().T @ vecs, np.eye(n), atol=1e-12)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.conj().T, a, atol=1e-11)
    assert vals == pytest.approx(np.linalg.eigvalsh(a), abs=1e-11)


def test_eig_rejects_non_hermitian():
    with pytest.raises(HermitianError):
        eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(HermitianError):
        eig_hermitian(np.ones((2, 3)))


def test_gram_examples():
    assert np.allclose(gram([1.0, 0.0]), [[1, 0], [0, 0]])
    assert np.allclose(gram([1j, 1.0]), [[1, 1j], [-1j, 1]])
    h = np.array([1 + 2j, -0.5j, 3.0])
    g = gram(h)
    assert np.allclose(g, g.conj().T)
    assert np.real(np.trace(g)) == pytest.approx(np.vdot(h, h).real)


def test_trace_product(rng):
    assert trace_product(np.eye(2), np.eye(2)) == pytest.approx(2.0)
    a = random_hermitian(rng, 4)
    b = random_hermitian(rng, 4)
    assert trace_product(a, b) == pytest.approx(np.real(np.trace(a @ b)))
    with pytest.raises(HermitianError):
        trace_product(np.eye(2), np.eye(3))


def test_rank_one_extract_exact():
    w = np.array([1.0, 1j]) / np.sqrt(2.0) * 2.0
    beam, ratio = rank_one_extract(np.outer(w, w.conj()))
    assert ratio <= 1e-12
    assert np.allclose(np.outer(beam, beam.conj()), np.outer(w, w.conj()), atol=1e-12)
    k = int(np.argmax(np.abs(beam)))
    assert beam[k].imag == pytest.approx(0.0, abs=1e-15) and beam[k].real > 0


def test_rank_one_extract_identity_and_zero():
    _, ratio = rank_one_extract(np.eye(3))
    assert ratio == pytest.approx(1.0)
    beam, ratio = rank_one_extract(np.zeros((3, 3)))
    assert ratio == 0.0 and not np.any(beam)


def test_coords_roundtrip_and_trace_pairing(rng):
    n = 4
    a = random_hermitian(rng, n)
    x = random_hermitian(rng, n)
    assert np.allclose(from_coords(to_coords(x), n), x)
    assert trace_coefficients(a) @ to_coords(x) == pytest.approx(np.real(np.trace(a @ x)))
    basis = hermitian_basis(n)
    assert basis.shape == (n * n, n, n)
    assert np.allclose(np.einsum("k,kij->ij", to_coords(x), basis), x)

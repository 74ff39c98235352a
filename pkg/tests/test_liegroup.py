import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from quditgates import (DomainError, PlatformParams, build_model, cphase, csum, molmer_sorensen,
                        swap_operator)
from quditgates.liegroup import (LayeredCircuit, LayeredOptimizer, LayeredProblem, LayerOptions,
                                 assemble_circuit, gell_mann_basis, local_unitary, min_layers,
                                 optimize_layers, search_layers)

from conftest import central_difference


def random_circuit(rng, k, n, mode="local", d=None):
    g = k * k - 1
    alphas = rng.uniform(-1, 1, (n, g))
    betas = None if mode == "global_sign_flip" else rng.uniform(-1, 1, (n, g))
    return LayeredCircuit(rng.uniform(0, 3, n), alphas, betas, mode, k, d or k)


class TestGellMann:
    def test_pauli(self):
        X, Y, Z = gell_mann_basis(2)
        np.testing.assert_array_equal(X, [[0, 1], [1, 0]])
        np.testing.assert_array_equal(Y, [[0, -1j], [1j, 0]])
        np.testing.assert_array_equal(Z, np.diag([1, -1]))

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_properties(self, d):
        B = gell_mann_basis(d)
        assert B.shape == (d * d - 1, d, d)
        for L in B:
            assert abs(np.trace(L)) <= 1e-14
            assert np.max(np.abs(L - L.conj().T)) <= 1e-14
        G = np.einsum("aij,bji->ab", B, B)
        np.testing.assert_allclose(G - np.diag(np.diag(G)), 0, atol=1e-14)

    def test_count(self):
        assert len(gell_mann_basis(3)) == 8

    def test_closure_qutrit(self):
        B = gell_mann_basis(3)
        flat = B.reshape(8, -1).T
        for a in range(8):
            for b in range(8):
                C = B[a] @ B[b] - B[b] @ B[a]
                # [L_a, L_b] = i f_abc L_c with real f
                coef, *_ = np.linalg.lstsq(flat, (C / 1j).ravel(), rcond=None)
                assert np.max(np.abs(coef.imag)) <= 1e-10
                assert np.max(np.abs(flat @ coef - (C / 1j).ravel())) <= 1e-10

    def test_too_small(self):
        with pytest.raises(DomainError):
            gell_mann_basis(1)


class TestLocalUnitary:
    def test_zero(self):
        np.testing.assert_allclose(local_unitary(np.zeros(8), gell_mann_basis(3)), np.eye(3))

    def test_bit_flip(self):
        U = local_unitary([np.pi / 2, 0, 0], gell_mann_basis(2))
        np.testing.assert_allclose(U, -1j * np.array([[0, 1], [1, 0]]), atol=1e-15)

    @given(st.integers(0, 2 ** 31 - 1))
    def test_special_unitary(self, seed):
        rng = np.random.default_rng(seed)
        U = local_unitary(rng.normal(size=24) * 2, gell_mann_basis(5))
        assert abs(np.linalg.det(U) - 1) <= 1e-10
        assert np.max(np.abs(U.conj().T @ U - np.eye(5))) <= 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            local_unitary(np.zeros(3), gell_mann_basis(3))


@pytest.mark.parametrize("d,expected", [(2, 2), (3, 3), (5, 7), (7, 13)])
def test_min_layers(d, expected):
    assert min_layers(d) == expected


class TestCircuit:
    def test_validation(self):
        with pytest.raises(DomainError):
            LayeredCircuit([-1.0], np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(DomainError):
            LayeredCircuit([1.0], np.zeros((1, 3)), np.ones((1, 3)), mode="global_sign_flip")
        with pytest.raises(DomainError):
            LayeredCircuit([1.0, 2.0], np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(DomainError):
            LayeredCircuit([1.0], np.zeros((1, 4)), np.zeros((1, 4)))
        with pytest.raises(DomainError):
            LayeredCircuit([1.0], np.zeros((1, 3)), mode="local")

    def test_sign_flip_signs(self):
        c = LayeredCircuit(np.ones(4), np.zeros((4, 3)), mode="global_sign_flip")
        np.testing.assert_array_equal(c.signs, [1, -1, 1, -1])
        np.testing.assert_array_equal(c.betas, c.alphas)

    def test_dict_round_trip(self, rng):
        c = random_circuit(rng, 3, 4, d=10)
        back = LayeredCircuit.from_dict(c.to_dict())
        np.testing.assert_array_equal(back.times, c.times)
        np.testing.assert_array_equal(back.betas, c.betas)
        assert (back.mode, back.k, back.d, back.level_map) == (c.mode, c.k, c.d, c.level_map)


class TestAssemble:
    def test_identity(self, model):
        c = LayeredCircuit(np.zeros(3), np.zeros((3, 8)), np.zeros((3, 8)), k=3, d=10)
        np.testing.assert_allclose(assemble_circuit(c, model), np.eye(100), atol=1e-15)

    def test_single_entangling_layer(self, model):
        c = LayeredCircuit([2.3], np.zeros((1, 8)), np.zeros((1, 8)), k=3, d=10)
        expected = np.diag(np.exp(-2.3j * model.entangling_diagonal()))
        np.testing.assert_allclose(assemble_circuit(c, model), expected, atol=1e-14)

    def test_two_layers_direct_product(self, model, rng):
        c = random_circuit(rng, 3, 2, d=10)
        B = gell_mann_basis(3)
        Hent = model.entangling_hamiltonian()
        U = np.eye(100, dtype=complex)
        for j in range(2):
            A = np.eye(10, dtype=complex)
            Bm = np.eye(10, dtype=complex)
            A[:3, :3] = scipy.linalg.expm(-1j * np.tensordot(c.alphas[j], B, axes=1))
            Bm[:3, :3] = scipy.linalg.expm(-1j * np.tensordot(c.betas[j], B, axes=1))
            U = scipy.linalg.expm(-1j * Hent * c.times[j]) @ np.kron(A, Bm) @ U
        assert np.max(np.abs(assemble_circuit(c, model) - U)) <= 1e-12

    def test_unitary(self, model, rng):
        U = assemble_circuit(random_circuit(rng, 3, 5, d=10), model)
        assert np.max(np.abs(U.conj().T @ U - np.eye(100))) <= 1e-9

    def test_logical_block_matches_full(self, model, rng):
        c = random_circuit(rng, 3, 3, d=10)
        full = assemble_circuit(c, model)
        idx = [a * 10 + b for a in range(3) for b in range(3)]
        np.testing.assert_allclose(full[np.ix_(idx, idx)],
                                   assemble_circuit(c, model, full_space=False), atol=1e-13)

    def test_sign_flip_commutes_with_swap(self, model, rng):
        c = random_circuit(rng, 3, 5, "global_sign_flip", d=10)
        U = assemble_circuit(c, model)
        P = swap_operator(10)
        assert np.max(np.abs(P @ U - U @ P)) <= 1e-9

    def test_open_sign_flip_still_decays(self, model):
        c = LayeredCircuit([50.0, 50.0], np.zeros((2, 8)), mode="global_sign_flip", k=3, d=10)
        U = assemble_circuit(c, model, open_system=True)
        assert np.all(np.abs(np.diag(U)) < 1)

    def test_level_map_too_large(self, toy4):
        c = LayeredCircuit([1.0], np.zeros((1, 8)), np.zeros((1, 8)), k=3, level_map=(0, 1, 5))
        with pytest.raises(DomainError):
            assemble_circuit(c, toy4)


class TestGradient:
    @given(st.sampled_from([2, 3]), st.integers(1, 4), st.sampled_from(["local", "global_sign_flip"]),
           st.booleans(), st.integers(0, 2 ** 31 - 1))
    def test_finite_differences(self, k, n, mode, open_system, seed):
        rng = np.random.default_rng(seed)
        p = PlatformParams.toy(4, gamma_r=0.01)
        prob = LayeredProblem(cphase(k, d=4), p, n, mode, open_system)
        x = prob.initial_guess(rng)
        _, grad = prob.fidelity_and_gradient(x)
        fd = central_difference(prob.fidelity, x)
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(grad - fd)) <= 1e-6 * max(scale, 1e-3)

    def test_fidelity_matches_assembled(self, model, rng):
        t = cphase(3, d=10)
        prob = LayeredProblem(t, model, 3)
        x = prob.initial_guess(rng)
        U = assemble_circuit(prob.circuit(x), model, full_space=False)
        F = abs(np.vdot(t.matrix, U)) ** 2 / 81
        assert prob.fidelity(x) == pytest.approx(F, abs=1e-13)

    def test_pack_unpack(self, rng):
        prob = LayeredProblem(cphase(3), np.arange(9.0), 2)
        x = prob.initial_guess(rng)
        np.testing.assert_allclose(prob.pack(prob.circuit(x)), x)
        with pytest.raises(DomainError):
            prob.unpack(x[:-1])

    def test_identity_layer_invariance(self, model, rng):
        t = molmer_sorensen(3, 0.8, d=10)
        c = random_circuit(rng, 3, 3, d=10)
        longer = c.append_identity_layer()
        V = t.matrix
        a = abs(np.vdot(V, assemble_circuit(c, model, full_space=False))) ** 2
        b = abs(np.vdot(V, assemble_circuit(longer, model, full_space=False))) ** 2
        assert a == pytest.approx(b, abs=1e-12)


class TestOptimize:
    def test_two_level_cz_diagonal_entangler(self):
        # Ising-like entangler with a nonlinear diagonal
        E = np.array([0.0, 0.3, 0.3, 1.7])
        reports = [optimize_layers(cphase(2), E, 2, seeds=(s,), target_infidelity=1e-9)
                   for s in range(5)]
        assert max(r.final_fidelity for r in reports) >= 1 - 1e-6

    def test_bare_entangler_wrong_size(self):
        with pytest.raises(DomainError):
            LayeredProblem(cphase(2), np.zeros(5), 2)

    def test_report_and_circuit(self, toy4):
        rep = optimize_layers(cphase(2, d=4), toy4, 3, seeds=(0, 1, 2))
        assert rep.converged
        c = rep.solution
        assert c.d == 4 and c.n_layers == 3
        U = assemble_circuit(c, toy4, full_space=False)
        F = abs(np.vdot(cphase(2).matrix, U)) ** 2 / 16
        assert F == pytest.approx(rep.final_fidelity, abs=1e-12)

    def test_nondecreasing_in_layers(self, toy4):
        best = []
        for n in (1, 2, 3):
            rep = optimize_layers(cphase(2, d=4), toy4, n, seeds=tuple(range(5)),
                                  stop_on_success=False, target_infidelity=1e-12, max_iter=300)
            best.append(rep.final_fidelity)
        assert best[0] <= best[1] + 1e-6 <= best[2] + 2e-6

    def test_search(self, toy4):
        n, rep, history = search_layers(cphase(2, d=4), toy4, start=1, max_layers=4,
                                        seeds=(0, 1, 2))
        assert n is not None and rep.converged
        assert list(history) == list(range(1, n + 1))

    def test_nonsymmetric_target_local_mode(self, toy4):
        rep = optimize_layers(csum(2, d=4), toy4, 4, seeds=(0, 1, 2, 3, 4))
        assert rep.final_fidelity > 0.99

    def test_options_object(self, toy4):
        opts = LayerOptions(seeds=(0,), max_iter=3)
        optimize_layers(cphase(2, d=4), toy4, 2, opts=opts, max_iter=1)
        assert opts.max_iter == 3


class TestEstimator:
    def test_fit_score(self, toy4):
        est = LayeredOptimizer(toy4, n_layers=3, seeds=(0, 1, 2))
        est.fit(cphase(2))
        assert est.score() >= 1 - 1e-3
        assert est.circuit_.n_layers == 3

    def test_bad_mode(self):
        with pytest.raises(DomainError):
            LayeredProblem(cphase(2), np.zeros(4), 2, mode="sideways")

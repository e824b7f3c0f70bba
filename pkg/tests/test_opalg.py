import numpy as np
import pytest
import scipy.sparse as sp

from hbarsim import opalg
from hbarsim.opalg import (
    DimensionError,
    Operator,
    State,
    SystemLayout,
    apply,
    basis_state,
    embed,
    expectation,
    ladder,
    sigma_minus,
    sigma_plus,
    sigma_z,
    total_excitation_number,
)


def dense(op):
    return op.matrix.toarray()


class TestLadder:
    def test_two_level(self):
        assert np.array_equal(dense(ladder(2)), [[0, 1], [0, 0]])

    def test_three_level_entries(self):
        a = dense(ladder(3))
        assert a[0, 1] == 1.0
        assert a[1, 2] == pytest.approx(np.sqrt(2), abs=0)
        assert np.count_nonzero(a) == 2

    def test_number_operator_identity(self):
        # ladder(2)^dag ladder(2) = diag(0, 1) = (I - sigma_z)/2
        n = dense(ladder(2).dagger() @ ladder(2))
        assert np.array_equal(n, np.diag([0.0, 1.0]))
        assert np.array_equal(n, (np.eye(2) - dense(sigma_z())) / 2)

    @pytest.mark.parametrize("d", [2, 3, 5, 8])
    def test_commutator_truncation_defect(self, d):
        a = dense(ladder(d))
        comm = a @ a.conj().T - a.conj().T @ a
        expected = np.eye(d)
        expected[-1, -1] = 1 - d
        if d == 2:
            assert np.array_equal(comm, expected)  # entries exactly representable
        else:
            assert np.abs(comm - expected).max() < 4 * np.finfo(float).eps * d

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            ladder(1)


class TestEmbed:
    def setup_method(self):
        self.layout = SystemLayout((2, 2), ("q1", "q2"))

    def test_sigma_minus_on_q1(self):
        embedded = embed(sigma_minus(), "q1", self.layout)
        expected = np.kron(dense(sigma_minus()), np.eye(2))
        assert np.array_equal(dense(embedded), expected)

    def test_identity_embedding(self):
        embedded = embed(opalg.identity(2), "q2", self.layout)
        assert np.array_equal(dense(embedded), np.eye(4))

    def test_disjoint_slots_commute_exactly(self):
        z1 = embed(sigma_z(), "q1", self.layout)
        z2 = embed(sigma_z(), "q2", self.layout)
        comm = z1 @ z2 - z2 @ z1
        assert comm.nnz == 0

    def test_nnz_scaling(self):
        layout = SystemLayout((2, 3, 2), ("a", "b", "c"))
        rng = np.random.default_rng(3)
        m = rng.normal(size=(3, 3)) * (rng.random(size=(3, 3)) < 0.6)
        op = Operator.from_matrix(m)
        for slot in ("b",):
            emb = embed(op, slot, layout)
            assert emb.nnz == op.nnz * (layout.total_dim // op.dim)

    def test_product_homomorphism(self):
        layout = SystemLayout((2, 4), ("q", "m"))
        rng = np.random.default_rng(11)
        a = Operator.from_matrix(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        b = Operator.from_matrix(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        lhs = embed(a @ b, "m", layout)
        rhs = embed(a, "m", layout) @ embed(b, "m", layout)
        assert np.abs(dense(lhs) - dense(rhs)).max() < 1e-12

    def test_unknown_slot(self):
        with pytest.raises(KeyError):
            embed(sigma_z(), "nope", self.layout)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            embed(ladder(3), "q1", self.layout)


class TestExpectation:
    def setup_method(self):
        self.layout = SystemLayout((2, 2), ("q1", "q2"))

    def test_excited_population(self):
        state = basis_state(self.layout, {"q1": 1})
        n = embed(sigma_plus() @ sigma_minus(), "q1", self.layout)
        assert expectation(n, state) == pytest.approx(1.0, abs=1e-12)

    def test_maximally_mixed(self):
        rho = State(self.layout, "density", np.eye(4) / 4)
        n = embed(sigma_plus() @ sigma_minus(), "q1", self.layout)
        assert expectation(n, rho).real == pytest.approx(0.5, abs=1e-12)

    def test_bell_like_superposition(self):
        vec = np.zeros(4, dtype=complex)
        # (|eg> + |ge>)/sqrt(2): q1 excited is index 1*2+0, q2 excited 0*2+1
        vec[2] = vec[1] = 1 / np.sqrt(2)
        state = State(self.layout, "vector", vec)
        n1 = embed(sigma_plus() @ sigma_minus(), "q1", self.layout)
        assert expectation(n1, state).real == pytest.approx(0.5, abs=1e-12)

    def test_hermitian_expectation_is_real(self):
        rng = np.random.default_rng(5)
        vec = rng.normal(size=4) + 1j * rng.normal(size=4)
        vec /= np.linalg.norm(vec)
        state = State(self.layout, "vector", vec)
        n = total_excitation_number(self.layout)
        assert abs(expectation(n, state).imag) < 1e-9

    def test_dimension_mismatch(self):
        state = basis_state(self.layout, {})
        with pytest.raises(DimensionError):
            expectation(sigma_z(), state)


class TestApply:
    def test_identity(self):
        v = np.array([0.3, 0.4 + 0.2j])
        assert np.array_equal(apply(opalg.identity(2), v), v)

    def test_ladder_lowers(self):
        assert np.array_equal(apply(ladder(2), [0, 1]), [1, 0])

    def test_zero_vector(self):
        out = apply(ladder(4), np.zeros(4))
        assert np.array_equal(out, np.zeros(4))

    def test_against_dense_multiplication(self):
        rng = np.random.default_rng(16)
        m = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        m[rng.random(size=(16, 16)) < 0.5] = 0.0
        op = Operator.from_matrix(m)
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        assert np.abs(apply(op, v) - op.matrix.toarray() @ v).max() < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            apply(ladder(2), [1, 0, 0])


class TestOperator:
    def test_hermitian_check(self):
        h = Operator.from_matrix([[1.0, 2 + 1j], [2 - 1j, -1.0]])
        assert h.is_hermitian()
        nh = Operator.from_matrix([[0, 1], [0, 0]])
        assert not nh.is_hermitian()

    def test_explicit_zeros_never_stored(self):
        m = sp.csr_array(np.array([[0.0, 1.0], [0.0, 0.0]]))
        m[0, 1] = 0.0  # create an explicit zero
        op = Operator.from_matrix(m)
        assert op.nnz == 0

    def test_dense_guard(self):
        layout = SystemLayout((2,) * 9, tuple(f"s{i}" for i in range(9)))
        big = embed(sigma_z(), "s0", layout)
        assert big.dim == 512
        with pytest.raises(DimensionError):
            big.to_dense()
        assert big.to_dense(force=True).shape == (512, 512)


class TestLayoutAndState:
    def test_total_dim_minimum(self):
        with pytest.raises(ValueError):
            SystemLayout((2,), ("q",))

    def test_duplicate_labels(self):
        with pytest.raises(ValueError):
            SystemLayout((2, 2), ("q", "q"))

    def test_slot_lookup(self):
        layout = SystemLayout((2, 2, 3), ("q1", "q2", "m"))
        assert layout.slot_index("m") == 2
        assert layout.slot_dim("m") == 3
        assert layout.total_dim == 12

    def test_vector_normalization_enforced(self):
        layout = SystemLayout((2, 2), ("q1", "q2"))
        with pytest.raises(ValueError):
            State(layout, "vector", np.array([1.0, 1.0, 0, 0]))

    def test_density_trace_enforced(self):
        layout = SystemLayout((2, 2), ("q1", "q2"))
        with pytest.raises(ValueError):
            State(layout, "density", np.eye(4))

    def test_density_positivity_enforced(self):
        layout = SystemLayout((2, 2), ("q1", "q2"))
        bad = np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex)
        with pytest.raises(ValueError):
            State(layout, "density", bad)

    def test_basis_state_and_density(self):
        layout = SystemLayout((2, 2, 3), ("q1", "q2", "m"))
        state = basis_state(layout, {"m": 2})
        assert state.data[2] == 1.0
        rho = state.to_density()
        assert rho.kind == "density"
        assert rho.data[2, 2] == 1.0

    def test_basis_state_unknown_label(self):
        layout = SystemLayout((2, 2), ("q1", "q2"))
        with pytest.raises(KeyError):
            basis_state(layout, {"zz": 1})

    def test_state_data_immutable(self):
        layout = SystemLayout((2, 2), ("q1", "q2"))
        state = basis_state(layout, {})
        with pytest.raises(ValueError):
            state.data[0] = 0.0

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from repdyn.errors import (
    BadDiscount,
    GammaMismatch,
    NegativeEntry,
    NoConvergence,
    NonStochastic,
    ShapeMismatch,
    ValidationError,
)
from repdyn.mdp import (
    FactoredSpec,
    MarkovProcess,
    ObservationMap,
    kron_compose,
    load_observation,
    load_process,
    process_from_dict,
    process_to_dict,
    save_observation,
    save_process,
    validate_process,
    value_exact,
    value_iterative,
)

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def random_stochastic(rng, n):
    A = rng.random((n, n)) ** 2
    return A / A.sum(axis=1, keepdims=True)


@st.composite
def processes(draw, max_n=32, max_gamma=0.9):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    gamma = draw(st.floats(0.0, max_gamma))
    rng = np.random.default_rng(seed)
    return validate_process(random_stochastic(rng, n), rng.standard_normal(n), gamma)


class TestValidation:
    def test_single_state(self):
        proc = validate_process([[1.0]], [0.0], 0.9)
        assert proc.n == 1

    def test_valid_two_state(self):
        proc = validate_process([[0.5, 0.5], [0.3, 0.7]], [1.0, 0.0], 0.99)
        assert proc.gamma == 0.99

    def test_row_sum_too_large(self):
        with pytest.raises(NonStochastic):
            validate_process([[0.5, 0.6], [0.3, 0.7]], [0.0, 0.0], 0.9)

    def test_negative_entry(self):
        with pytest.raises(NegativeEntry):
            validate_process([[1.1, -0.1], [0.3, 0.7]], [0.0, 0.0], 0.9)

    @pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
    def test_bad_discount(self, gamma):
        with pytest.raises(BadDiscount):
            validate_process(np.eye(2), [0.0, 0.0], gamma)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            validate_process(np.eye(2), [0.0, 0.0, 0.0], 0.5)

    def test_roundoff_is_renormalized(self):
        P = np.array([[0.5 + 1e-10, 0.5], [0.3, 0.7]])
        proc = validate_process(P, [0.0, 0.0], 0.5)
        np.testing.assert_allclose(proc.P.sum(axis=1), 1.0, atol=1e-15)

    def test_tiny_negative_is_clamped(self):
        proc = validate_process([[1.0 + 1e-16, -1e-16], [0.0, 1.0]], [0.0, 0.0], 0.5)
        assert proc.P.min() == 0.0

    def test_strict_constructor_rejects_roundoff(self):
        with pytest.raises(NonStochastic):
            MarkovProcess(np.array([[0.5 + 1e-10, 0.5], [0.3, 0.7]]), np.zeros(2), 0.5)

    def test_arrays_are_read_only_copies(self):
        P = np.eye(2)
        proc = validate_process(P, [0.0, 0.0], 0.5)
        P[0, 0] = 7.0
        assert proc.P[0, 0] == 1.0
        with pytest.raises(ValueError):
            proc.P[0, 0] = 2.0

    def test_validation_errors_are_value_errors(self):
        assert issubclass(NonStochastic, ValueError)


class TestValue:
    def test_swap_chain(self):
        proc = validate_process(SWAP, [1.0, 0.0], 0.5)
        np.testing.assert_allclose(value_exact(proc), [4 / 3, 2 / 3], atol=1e-14)

    def test_zero_discount_returns_reward(self, rng):
        proc = validate_process(random_stochastic(rng, 5), rng.standard_normal(5), 0.0)
        np.testing.assert_array_equal(value_exact(proc), proc.r)

    def test_identity_geometric_series(self):
        proc = validate_process(np.eye(2), [1.0, 1.0], 0.9)
        np.testing.assert_allclose(value_exact(proc), [10.0, 10.0], rtol=1e-13)

    def test_iterative_swap_chain(self):
        proc = validate_process(SWAP, [1.0, 0.0], 0.5)
        np.testing.assert_allclose(value_iterative(proc, tol=1e-12), [4 / 3, 2 / 3], atol=1e-10)

    def test_iterative_zero_discount(self, rng):
        proc = validate_process(random_stochastic(rng, 4), rng.standard_normal(4), 0.0)
        np.testing.assert_array_equal(value_iterative(proc, max_steps=2), proc.r)

    def test_iterative_budget_exhausted(self):
        proc = validate_process(SWAP, [1.0, 0.0], 0.99)
        with pytest.raises(NoConvergence):
            value_iterative(proc, max_steps=3, tol=1e-12)

    @given(processes())
    def test_exact_and_iterative_agree(self, proc):
        # sup-norm error after stopping is at most gamma/(1-gamma) * tol, i.e. <= 9 tol for gamma <= 0.9
        tol = 1e-10
        V = value_iterative(proc, max_steps=1_000_000, tol=tol)
        assert np.max(np.abs(V - value_exact(proc))) <= 10 * tol

    def test_agreement_bound_needs_moderate_gamma(self):
        # with gamma close to 1 the stopping rule leaves an error well above 10 tol
        proc = validate_process(np.eye(1), [1.0], 0.99)
        tol = 1e-6
        V = value_iterative(proc, tol=tol)
        assert abs(V[0] - 100.0) > 10 * tol


class TestKron:
    def test_reward_unrolled(self):
        M = validate_process([[0.5, 0.5], [0.5, 0.5]], [1.0, 0.0], 0.9)
        N = validate_process(np.eye(2), [0.0, 0.0], 0.9)
        proc = kron_compose(FactoredSpec(M, N))
        np.testing.assert_array_equal(proc.r, [1.0, 1.0, 0.0, 0.0])

    def test_background_reward_kept_when_requested(self):
        M = validate_process(np.eye(2), [1.0, 0.0], 0.9)
        N = validate_process(np.eye(2), [0.0, 3.0], 0.9)
        proc = kron_compose(FactoredSpec(M, N, background_reward_zeroed=False))
        np.testing.assert_array_equal(proc.r, [1.0, 4.0, 0.0, 3.0])

    def test_single_states(self):
        one = validate_process([[1.0]], [0.0], 0.9)
        proc = kron_compose(FactoredSpec(one, one))
        np.testing.assert_array_equal(proc.P, [[1.0]])

    def test_gamma_mismatch(self):
        a = validate_process(np.eye(2), [0.0, 0.0], 0.9)
        with pytest.raises(GammaMismatch):
            kron_compose(FactoredSpec(a, a.with_gamma(0.8)))

    def test_state_limit(self):
        big = validate_process(np.eye(65), np.zeros(65), 0.9)
        with pytest.raises(ValidationError):
            kron_compose(FactoredSpec(big, big))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
    def test_spectrum_is_pairwise_products(self, seed, nm, nn):
        rng = np.random.default_rng(seed)
        M = validate_process(random_stochastic(rng, nm), np.zeros(nm), 0.9)
        N = validate_process(random_stochastic(rng, nn), np.zeros(nn), 0.9)
        proc = kron_compose(FactoredSpec(M, N))
        products = (np.linalg.eigvals(M.P)[:, None] * np.linalg.eigvals(N.P)[None, :]).ravel()
        direct = np.linalg.eigvals(proc.P)
        # match as multisets: every product has a partner and vice versa
        cost = np.abs(products[:, None] - direct[None, :])
        from scipy.optimize import linear_sum_assignment

        i, j = linear_sum_assignment(cost)
        assert cost[i, j].max() < 1e-10


class TestSerialization:
    @given(processes(max_n=6))
    def test_process_round_trip_is_exact(self, proc):
        back = process_from_dict(json.loads(json.dumps(process_to_dict(proc))))
        assert back == proc

    def test_file_round_trip(self, tmp_path, rng):
        proc = validate_process(random_stochastic(rng, 5), rng.standard_normal(5), 0.37)
        save_process(proc, tmp_path / "mdp.json")
        assert load_process(tmp_path / "mdp.json") == proc
        obs = ObservationMap(rng.standard_normal((5, 5)))
        save_observation(obs, tmp_path / "obs.json")
        assert load_observation(tmp_path / "obs.json") == obs

    def test_row_major_layout(self):
        proc = validate_process([[0.5, 0.5], [0.3, 0.7]], [1.0, 0.0], 0.5)
        assert process_to_dict(proc)["P"] == [0.5, 0.5, 0.3, 0.7]

    def test_corrupted_file(self, tmp_path):
        (tmp_path / "mdp.json").write_text("{not json")
        with pytest.raises(ValidationError):
            load_process(tmp_path / "mdp.json")

    def test_wrong_size(self):
        with pytest.raises(ShapeMismatch):
            process_from_dict({"n": 2, "gamma": 0.5, "P": [1.0, 0.0, 0.0], "r": [0.0, 0.0]})


class TestObservationMap:
    def test_singular_rejected(self):
        with pytest.raises(ValidationError):
            ObservationMap(np.ones((3, 3)))

    def test_condition_number(self):
        assert ObservationMap(np.diag([1.0, 4.0])).condition_number == pytest.approx(4.0)

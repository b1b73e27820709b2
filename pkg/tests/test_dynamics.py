import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ortho_group

import repdyn.dynamics as dyn
from repdyn.dynamics import (
    LOSSES,
    FlowConfig,
    Representation,
    Trajectory,
    flow_step,
    init_representation,
    jacobian_at,
    loss_and_grads,
    predicted_latent_spectrum,
    representation_from_encoder,
    settle,
    simulate,
    two_timescale_F,
    two_timescale_Psi,
    two_timescale_Vhat,
    unstable_direction_rate,
)
from repdyn.errors import Collapse, NotStationary, ShapeMismatch, SingularF, StepRejected, ValidationError
from repdyn.generators import (
    RewardRecipe,
    find_positive_chain,
    make_chain_with_spectrum,
    make_low_rank_reward,
    make_observation,
)
from repdyn.mdp import ObservationMap, validate_process, value_exact
from repdyn.spectral import Subspace, decompose, is_invariant_subspace, subspace_distance, top_k_subspace

from fd_oracle import central_diff, frozen_loss, relative_error


def chain(n=6, seed=0, gap=1e-3):
    return find_positive_chain(n, beta=0.4, seed=seed, min_gap=gap)[0]


def random_instance(seed, n, k, with_obs):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n)) + 0.1
    proc = validate_process(A / A.sum(axis=1, keepdims=True), rng.standard_normal(n), float(rng.uniform(0, 0.95)))
    rep = Representation(
        rng.standard_normal((n, k)), rng.standard_normal((k, k)), rng.standard_normal((k, n)), rng.standard_normal(k)
    )
    obs = ObservationMap(rng.standard_normal((n, n)) + 2 * np.eye(n)) if with_obs else None
    return proc, rep, obs


def fd_gradients(proc, rep, loss, obs):
    O = None if obs is None else obs.O
    f = frozen_loss(loss, proc.P, proc.r, proc.gamma, O, rep.Phi, rep.Vhat)
    return central_diff(f, [rep.Phi, rep.F, rep.Psi, rep.Vhat])


class TestGradients:
    @given(
        st.integers(0, 2**31),
        st.integers(1, 6),
        st.integers(1, 3),
        st.sampled_from(LOSSES),
        st.booleans(),
    )
    def test_match_finite_differences(self, seed, n, k, loss, with_obs):
        k = min(k, n)
        proc, rep, obs = random_instance(seed, n, k, with_obs)
        g = loss_and_grads(proc, rep, FlowConfig(loss=loss, observation=obs))
        fd = fd_gradients(proc, rep, loss, obs)
        for analytic, numeric in zip(g[1:], fd):
            if analytic is None:
                assert np.allclose(numeric, 0.0, atol=1e-6)
            else:
                assert relative_error(analytic, numeric) < 1e-5

    def test_latent_stationary_at_top_eigenvectors(self):
        proc = chain()
        s = decompose(proc.P)
        Phi = s.eigenvectors[:, :3]
        rep = representation_from_encoder(Phi, F=np.diag(s.eigenvalues.real[:3]))
        g = loss_and_grads(proc, rep, FlowConfig(loss="lat"))
        assert np.abs(g.dPhi).max() < 1e-12
        assert np.abs(g.dF).max() < 1e-12

    def test_exact_reconstruction(self):
        proc = chain(4)
        rep = Representation(np.eye(4), proc.P, np.eye(4), np.zeros(4))
        g = loss_and_grads(proc, rep, FlowConfig(loss="rec"))
        assert g.loss < 1e-28
        assert g.norm() < 1e-14

    def test_semi_gradient_differs_from_full_gradient(self, rng):
        proc = chain(5)
        Phi = rng.standard_normal((5, 2))
        F = rng.standard_normal((2, 2))
        rep = representation_from_encoder(Phi, F=F)
        g = loss_and_grads(proc, rep, FlowConfig(loss="lat"))

        def full(Phi_, F_):
            return np.sum((Phi_ @ F_ - proc.P @ Phi_) ** 2)

        dPhi_full, dF_full = central_diff(full, [Phi, F])
        # the target does not depend on F, so only the encoder gradient feels the stop-gradient
        assert relative_error(g.dF, dF_full) < 1e-6
        assert relative_error(g.dPhi, dPhi_full) > 1e-2
        frozen = frozen_loss("lat", proc.P, proc.r, proc.gamma, None, Phi, rep.Vhat)
        dPhi_semi = central_diff(lambda P_: frozen(P_, F, rep.Psi, rep.Vhat), [Phi])[0]
        assert relative_error(g.dPhi, dPhi_semi) < 1e-6

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            loss_and_grads(chain(5), init_representation(4, 2), FlowConfig())

    def test_unknown_loss(self):
        with pytest.raises(ValidationError):
            FlowConfig(loss="bisim")


class TestClosedForms:
    def test_single_eigenvector_latent_model(self):
        proc = make_chain_with_spectrum([1.0, 0.9])
        w = decompose(proc.P).eigenvectors[:, [1]]
        np.testing.assert_allclose(two_timescale_F(proc, w), [[0.9]], atol=1e-14)

    def test_full_rank_latent_model(self, rng):
        proc = chain(5)
        Phi = ortho_group.rvs(5, random_state=3)
        F = two_timescale_F(proc, Phi)
        np.testing.assert_allclose(F, Phi.T @ proc.P @ Phi, atol=1e-13)

    def test_collapse(self):
        proc = chain(5)
        col = np.ones((5, 1)) / np.sqrt(5)
        with pytest.raises(Collapse):
            two_timescale_F(proc, np.hstack([col, col]))

    def test_decoder_identity(self):
        proc = chain(4)
        np.testing.assert_allclose(two_timescale_Psi(proc, np.eye(4), np.eye(4)), proc.P, atol=1e-14)

    def test_decoder_cancels_latent_model(self, rng):
        proc = chain(6)
        Phi = rng.standard_normal((6, 2))
        cfg = FlowConfig(loss="rec")
        losses = []
        for _ in range(2):
            F = rng.standard_normal((2, 2))
            rep = representation_from_encoder(Phi, F=F, Psi=two_timescale_Psi(proc, Phi, F))
            losses.append(loss_and_grads(proc, rep, cfg).loss)
        assert losses[0] == pytest.approx(losses[1], rel=1e-10)

    def test_singular_latent_model(self, rng):
        with pytest.raises(SingularF):
            two_timescale_Psi(chain(4), rng.standard_normal((4, 2)), np.zeros((2, 2)))

    def test_value_full_rank(self):
        proc = make_low_rank_reward(chain(5), RewardRecipe((1, 2)))
        np.testing.assert_allclose(np.eye(5) @ two_timescale_Vhat(proc, np.eye(5)), value_exact(proc), atol=1e-12)

    def test_value_lossless_on_invariant_span(self):
        proc = make_low_rank_reward(chain(6), RewardRecipe((1, 3)))
        Phi = Subspace.from_columns(decompose(proc.P).eigenvectors[:, [1, 3]]).basis
        np.testing.assert_allclose(Phi @ two_timescale_Vhat(proc, Phi), value_exact(proc), atol=1e-10)

    def test_value_zero_when_reward_orthogonal(self):
        proc = make_low_rank_reward(chain(6), RewardRecipe((4,)))
        Phi = decompose(proc.P).eigenvectors[:, :2]
        np.testing.assert_allclose(Phi @ two_timescale_Vhat(proc, Phi), 0.0, atol=1e-14)


class TestIntegrator:
    def test_stationary_point_is_fixed(self):
        proc = chain()
        Phi = decompose(proc.P).eigenvectors[:, :2]
        rep = settle(proc, representation_from_encoder(Phi), FlowConfig())
        new = flow_step(proc, rep, FlowConfig())
        assert np.abs(new.Phi - rep.Phi).max() < 1e-14

    def test_small_step_decreases_reconstruction_loss(self):
        proc = chain(4)
        cfg = FlowConfig(loss="rec", two_timescale=False, step_size=1e-3)
        rep = init_representation(4, 2, seed=0)
        before = loss_and_grads(proc, rep, cfg).loss
        after = loss_and_grads(proc, flow_step(proc, rep, cfg), cfg).loss
        assert after < before

    def test_rejects_after_thirty_halvings(self, monkeypatch):
        proc = chain(4)
        rep = init_representation(4, 2)
        cfg = FlowConfig(loss="lat", step_size=1.0)
        real = dyn.loss_and_grads
        calls = []

        def exploding(p, r, c):
            g = real(p, r, c)
            calls.append(1)
            return g._replace(loss=10.0 ** len(calls))

        monkeypatch.setattr(dyn, "loss_and_grads", exploding)
        with pytest.raises(StepRejected):
            flow_step(proc, rep, cfg)
        assert len(calls) == 1 + dyn.MAX_HALVINGS + 1

    def test_zero_steps(self):
        proc = chain()
        traj, _ = simulate(proc, init_representation(6, 2), FlowConfig(max_steps=0))
        assert len(traj.records) == 1 and traj.records[0].step == 0
        assert len(traj.to_csv().strip().splitlines()) == 2

    def test_latent_flow_finds_top_eigenspace(self):
        proc = chain(8)
        cfg = FlowConfig(loss="lat", step_size=0.1, record_every=1000)
        hits = 0
        for seed in range(50):
            traj, _ = simulate(proc, init_representation(8, 3, seed), cfg)
            hits += traj.final.dist_top_eig < 1e-3
            if traj.converged:
                assert not traj.collapse_flag
        assert hits >= 45

    def test_reconstruction_flow_finds_singular_space(self):
        proc = chain(8)
        traj, _ = simulate(proc, init_representation(8, 3, 0), FlowConfig(loss="rec", step_size=0.1))
        assert traj.final.dist_top_sv < 1e-3

    def test_nonsymmetric_reconstruction_leaves_eigenspace(self):
        rng = np.random.default_rng(16)
        S = np.zeros((6, 6))
        for _ in range(3):
            S[np.arange(6), rng.permutation(6)] += 1 / 3
        proc = validate_process(0.6 * np.eye(6) + 0.4 * S, np.zeros(6), 0.9)
        s = decompose(proc.P)
        cfg = FlowConfig(loss="rec", step_size=0.1)
        traj, rep = simulate(proc, init_representation(6, 2, 0), cfg)
        span = Subspace.from_columns(rep.Phi)
        assert subspace_distance(span, top_k_subspace(s, 2, "left_singular")) < 1e-3
        # no invariant subspace at all, so in particular no eigen span
        assert is_invariant_subspace(proc.P, span)[1] > 0.05
        assert s.is_real_diagonalizable
        assert traj.final.dist_top_eig > 0.1

    def test_csv_round_trip(self):
        proc = chain()
        traj, _ = simulate(proc, init_representation(6, 2), FlowConfig(step_size=0.1, max_steps=50, record_every=10))
        back = Trajectory.from_csv(traj.to_csv())
        assert back.records == traj.records
        assert traj.to_csv().splitlines()[0] == ",".join(dyn.CSV_FIELDS)

    def test_representation_round_trip(self):
        rep = init_representation(5, 2, seed=9)
        back = Representation.from_dict(json.loads(json.dumps(rep.to_dict())))
        for name in ("Phi", "F", "Psi", "Vhat"):
            assert np.array_equal(getattr(back, name), getattr(rep, name))


class TestJacobian:
    def test_predicted_rate(self):
        assert unstable_direction_rate(0.9, 0.5) == pytest.approx(0.20)

    def test_top_subspace_is_stable(self):
        proc = chain()
        Phi = decompose(proc.P).eigenvectors[:, :2]
        _, ev = jacobian_at(proc, representation_from_encoder(Phi), FlowConfig())
        assert ev.real.max() <= 1e-8

    @pytest.mark.parametrize("subset", [(0, 2), (1, 2), (3, 5)])
    def test_other_invariant_subspaces_are_unstable(self, subset):
        proc = chain()
        s = decompose(proc.P)
        _, ev = jacobian_at(proc, representation_from_encoder(s.eigenvectors[:, list(subset)]), FlowConfig())
        assert ev.real.max() > 1e-6
        predicted = predicted_latent_spectrum(s.real_eigenvalues, subset)
        np.testing.assert_allclose(np.sort(ev.real), np.sort(predicted), atol=1e-6)

    def test_orthogonal_restriction(self):
        proc = chain()
        s = decompose(proc.P)
        rep = representation_from_encoder(s.eigenvectors[:, [0, 2]])
        _, ev = jacobian_at(proc, rep, FlowConfig(), orthogonal_only=True)
        lam = s.real_eigenvalues
        expected = [2 * unstable_direction_rate(lam[j], lam[i]) for i in (0, 2) for j in (1, 3, 4, 5)]
        np.testing.assert_allclose(np.sort(ev.real), np.sort(expected), atol=1e-6)

    def test_requires_stationarity(self, rng):
        with pytest.raises(NotStationary):
            jacobian_at(chain(), representation_from_encoder(np.linalg.qr(rng.standard_normal((6, 2)))[0]), FlowConfig())


class TestReparameterization:
    @pytest.mark.parametrize("loss", ["lat", "td"])
    def test_pullback_of_stationary_points(self, loss):
        proc = make_low_rank_reward(chain(), RewardRecipe((0, 2)))
        obs = make_observation(6, "gaussian", max_condition=100.0, seed=1)
        Phi = Subspace.from_columns(decompose(proc.P).eigenvectors[:, [0, 2]]).basis
        plain = FlowConfig(loss=loss)
        assert loss_and_grads(proc, settle(proc, representation_from_encoder(Phi), plain), plain).norm(True) < 1e-9
        cfg = FlowConfig(loss=loss, observation=obs)
        rep = settle(proc, representation_from_encoder(np.linalg.solve(obs.O, Phi)), cfg)
        assert loss_and_grads(proc, rep, cfg).norm(True) < 1e-7

    def _jacobians(self, O):
        proc = chain()
        Phi = decompose(proc.P).eigenvectors[:, :2]
        J, ev = jacobian_at(proc, representation_from_encoder(Phi), FlowConfig())
        obs = ObservationMap(O)
        J_o, ev_o = jacobian_at(proc, representation_from_encoder(np.linalg.solve(O, Phi)), FlowConfig(observation=obs))
        return J, ev, J_o, ev_o

    def test_orthogonal_map_preserves_spectrum(self):
        _, ev, _, ev_o = self._jacobians(ortho_group.rvs(6, random_state=0))
        np.testing.assert_allclose(np.sort(ev.real), np.sort(ev_o.real), atol=1e-6)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_general_map_gives_congruent_jacobian(self, seed):
        O = np.random.default_rng(seed).standard_normal((6, 6))
        J, ev, J_o, ev_o = self._jacobians(O)
        k = 2
        congruent = np.kron(O.T, np.eye(k)) @ J @ np.kron(O, np.eye(k))
        np.testing.assert_allclose(J_o, congruent, atol=1e-6 * np.abs(congruent).max())
        # same inertia (Sylvester), but different eigenvalues in general
        def sign_counts(e):
            return int(np.sum(e.real > 1e-6)), int(np.sum(e.real < -1e-6))

        assert sign_counts(ev) == sign_counts(ev_o)

    def test_scalar_map_scales_spectrum(self):
        _, ev, _, ev_o = self._jacobians(2 * np.eye(6))
        np.testing.assert_allclose(np.sort(ev_o.real), 4 * np.sort(ev.real), atol=1e-5)

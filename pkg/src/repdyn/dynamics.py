"""Linear representation-learning losses, their gradient flows and an Euler integrator.

Losses are population losses under a uniform state distribution, written
without the ``1/n`` factor. With an observation map ``O`` every ``x^T`` becomes
``x^T O``, i.e. the encoder acts through ``Z = O Phi``; the TD reward term is
left untouched.

=====  =======================================================
rec    ``|Z F Psi - P X|_F^2``
lat    ``|Z F - sg[P Z]|_F^2``
td     ``|Z Vhat - sg[r + gamma P Z Vhat]|^2``
=====  =======================================================

``X`` is ``O`` (or the identity). ``sg`` marks stop-gradient targets, so the
``lat`` and ``td`` gradients are semi-gradients. The joint losses
``td_plus_lat`` and ``td_plus_rec`` are plain sums, and TD gradients always
flow into the encoder.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    Collapse,
    DegenerateGap,
    NotDiagonalizable,
    NotStationary,
    ShapeMismatch,
    SingularF,
    StepRejected,
    TDUnstable,
    ValidationError,
)
from .mdp import MarkovProcess, ObservationMap, value_exact
from .spectral import Subspace, decompose, subspace_distance, top_k_subspace

LOSSES = ("rec", "lat", "td", "td_plus_lat", "td_plus_rec")
_COMPONENTS = {
    "rec": ("rec",),
    "lat": ("lat",),
    "td": ("td",),
    "td_plus_lat": ("td", "lat"),
    "td_plus_rec": ("td", "rec"),
}

GRAM_TOL = 1e-10
MAX_HALVINGS = 30
LOSS_INCREASE_FACTOR = 1.1
LOSS_INCREASE_SLACK = 1e-12


def components(loss: str) -> tuple[str, ...]:
    try:
        return _COMPONENTS[loss]
    except KeyError:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}") from None


@dataclass(frozen=True, eq=False)
class Representation:
    """Encoder ``Phi`` (n x k), latent model ``F`` (k x k), decoder ``Psi`` (k x n), value weights ``Vhat`` (k,).

    ``rhat`` (reward weights) is carried along but no loss uses it.
    """

    Phi: np.ndarray
    F: np.ndarray
    Psi: np.ndarray
    Vhat: np.ndarray
    rhat: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("Phi", "F", "Psi", "Vhat"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n, k = self.Phi.shape
        if k > n:
            raise ShapeMismatch(f"embedding dimension k={k} exceeds n={n}")
        if self.F.shape != (k, k) or self.Psi.shape != (k, n) or self.Vhat.shape != (k,):
            raise ShapeMismatch(
                f"inconsistent shapes Phi{self.Phi.shape} F{self.F.shape} Psi{self.Psi.shape} Vhat{self.Vhat.shape}"
            )
        if self.rhat is not None:
            object.__setattr__(self, "rhat", np.array(self.rhat, dtype=float))
            if self.rhat.shape != (k,):
                raise ShapeMismatch("rhat must have shape (k,)")

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def k(self) -> int:
        return self.Phi.shape[1]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "Phi": [float(x) for x in self.Phi.ravel()],
            "F": [float(x) for x in self.F.ravel()],
            "Psi": [float(x) for x in self.Psi.ravel()],
            "Vhat": [float(x) for x in self.Vhat],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Representation":
        n, k = int(d["n"]), int(d["k"])
        return cls(
            Phi=np.asarray(d["Phi"], dtype=float).reshape(n, k),
            F=np.asarray(d["F"], dtype=float).reshape(k, k),
            Psi=np.asarray(d["Psi"], dtype=float).reshape(k, n),
            Vhat=np.asarray(d["Vhat"], dtype=float),
        )


def init_representation(n: int, k: int, seed: int = 0) -> Representation:
    """Orthonormal ``Phi``, ``F = I + 0.01 G`` and small Gaussian ``Psi``, ``Vhat``."""
    rng = np.random.default_rng(seed)
    Phi = np.linalg.qr(rng.standard_normal((n, k)))[0]
    F = np.eye(k) + 0.01 * rng.standard_normal((k, k))
    Psi = 0.01 * rng.standard_normal((k, n))
    Vhat = 0.01 * rng.standard_normal(k)
    return Representation(Phi, F, Psi, Vhat)


def representation_from_encoder(Phi, F=None, Psi=None, Vhat=None) -> Representation:
    Phi = np.asarray(Phi, dtype=float)
    n, k = Phi.shape
    return Representation(
        Phi,
        np.eye(k) if F is None else F,
        np.zeros((k, n)) if Psi is None else Psi,
        np.zeros(k) if Vhat is None else Vhat,
    )


@dataclass(frozen=True)
class FlowConfig:
    loss: str = "lat"
    two_timescale: bool = True
    observation: Optional[ObservationMap] = None
    step_size: float = 1e-2
    rate_ratio: float = 1.0
    max_steps: int = 200_000
    stationarity_tol: float = 1e-8
    record_every: int = 100
    backtrack: bool = True

    def __post_init__(self):
        components(self.loss)
        if not 0.0 < self.step_size <= 1.0:
            raise ValidationError(f"step_size must lie in (0, 1], got {self.step_size}")
        if not self.stationarity_tol > 0:
            raise ValidationError("stationarity_tol must be positive")
        if self.max_steps < 0 or self.record_every < 1:
            raise ValidationError("max_steps must be >= 0 and record_every >= 1")


class LossGrads(NamedTuple):
    """Loss value and gradients; entries are ``None`` for parameters the loss ignores."""

    loss: float
    dPhi: np.ndarray
    dF: Optional[np.ndarray]
    dPsi: Optional[np.ndarray]
    dVhat: Optional[np.ndarray]

    def norm(self, phi_only: bool = False) -> float:
        parts = [self.dPhi] if phi_only else [g for g in self[1:] if g is not None]
        return float(math.sqrt(sum(float(np.sum(g * g)) for g in parts)))


def _obs_matrix(observation) -> Optional[np.ndarray]:
    if observation is None:
        return None
    return observation.O if isinstance(observation, ObservationMap) else np.asarray(observation, dtype=float)


def _encode(X, Phi):
    return Phi if X is None else X @ Phi


def _pull_back(X, G):
    return G if X is None else X.T @ G


def _check_rep(proc: MarkovProcess, rep: Representation, X):
    if rep.n != proc.n:
        raise ShapeMismatch(f"representation has n={rep.n}, process has n={proc.n}")
    if X is not None and X.shape != (proc.n, proc.n):
        raise ShapeMismatch(f"observation matrix {X.shape} vs n={proc.n}")


def loss_and_grads(proc: MarkovProcess, rep: Representation, cfg: FlowConfig) -> LossGrads:
    """Loss and exact (semi-)gradients at ``rep``; stop-gradient targets are held constant."""
    X = _obs_matrix(cfg.observation)
    _check_rep(proc, rep, X)
    P = proc.P
    Z = _encode(X, rep.Phi)
    loss = 0.0
    gZ = np.zeros_like(Z)
    dF = dPsi = dVhat = None
    for part in components(cfg.loss):
        if part == "rec":
            target = P if X is None else P @ X
            FPsi = rep.F @ rep.Psi
            R = Z @ FPsi - target
            loss += float(np.sum(R * R))
            gZ += 2.0 * R @ FPsi.T
            dF_rec = 2.0 * Z.T @ R @ rep.Psi.T
            dF = dF_rec if dF is None else dF + dF_rec
            dPsi = 2.0 * (Z @ rep.F).T @ R
        elif part == "lat":
            R = Z @ rep.F - P @ Z
            loss += float(np.sum(R * R))
            gZ += 2.0 * R @ rep.F.T
            dF_lat = 2.0 * Z.T @ R
            dF = dF_lat if dF is None else dF + dF_lat
        else:
            v = Z @ rep.Vhat
            R = v - proc.r - proc.gamma * (P @ v)
            loss += float(R @ R)
            gZ += 2.0 * np.outer(R, rep.Vhat)
            dVhat = 2.0 * Z.T @ R
    return LossGrads(loss, _pull_back(X, gZ), dF, dPsi, dVhat)


def _gram(Z) -> np.ndarray:
    G = Z.T @ Z
    s = np.linalg.svd(G, compute_uv=False)
    if not s[-1] > GRAM_TOL * max(s[0], 1e-300):
        raise Collapse(f"encoder Gram matrix is singular (sigma_min={s[-1]:.3g})")
    return G


def two_timescale_F(proc: MarkovProcess, Phi, O=None) -> np.ndarray:
    """Least-squares latent model ``(Z^T Z)^{-1} Z^T P Z`` with ``Z = O Phi``."""
    Z = _encode(_obs_matrix(O), np.asarray(Phi, dtype=float))
    return np.linalg.solve(_gram(Z), Z.T @ proc.P @ Z)


def two_timescale_Psi(proc: MarkovProcess, Phi, F, O=None) -> np.ndarray:
    """Least-squares decoder ``F^{-1} (Z^T Z)^{-1} Z^T P X`` for a fixed invertible ``F``."""
    X = _obs_matrix(O)
    Z = _encode(X, np.asarray(Phi, dtype=float))
    G = _gram(Z)
    F = np.asarray(F, dtype=float)
    s = np.linalg.svd(F, compute_uv=False)
    if not s[-1] > GRAM_TOL * max(s[0], 1e-300):
        raise SingularF(f"latent model is singular (sigma_min={s[-1]:.3g})")
    target = proc.P if X is None else proc.P @ X
    return np.linalg.solve(F, np.linalg.solve(G, Z.T @ target))


def td_iteration_matrix(proc: MarkovProcess, Phi, O=None) -> np.ndarray:
    """``A = Z^T (I - gamma P) Z``; TD(0) on fixed features is stable iff Re spec(A) > 0."""
    Z = _encode(_obs_matrix(O), np.asarray(Phi, dtype=float))
    return Z.T @ (Z - proc.gamma * (proc.P @ Z))


def two_timescale_Vhat(proc: MarkovProcess, Phi, O=None) -> np.ndarray:
    """TD fixed point ``A^{-1} Z^T r`` for fixed features.

    For orthonormal ``Phi`` (and no observation map) this is
    ``(I - gamma Phi^T P Phi)^{-1} Phi^T r``.
    """
    Z = _encode(_obs_matrix(O), np.asarray(Phi, dtype=float))
    _gram(Z)
    A = Z.T @ (Z - proc.gamma * (proc.P @ Z))
    ev = np.linalg.eigvals(A)
    if np.min(ev.real) <= 0:
        raise TDUnstable(f"TD iteration matrix has eigenvalue with real part {np.min(ev.real):.3g}")
    return np.linalg.solve(A, Z.T @ proc.r)


def settle(proc: MarkovProcess, rep: Representation, cfg: FlowConfig) -> Representation:
    """Replace the inner parameters by their closed-form optima at the current encoder."""
    parts = components(cfg.loss)
    O = cfg.observation
    F, Psi, Vhat = rep.F, rep.Psi, rep.Vhat
    if "lat" in parts:
        F = two_timescale_F(proc, rep.Phi, O)
    if "rec" in parts:
        Psi = two_timescale_Psi(proc, rep.Phi, F, O)
    if "td" in parts:
        Vhat = two_timescale_Vhat(proc, rep.Phi, O)
    return replace(rep, F=F, Psi=Psi, Vhat=Vhat)


def active_grad_norm(g: LossGrads, cfg: FlowConfig) -> float:
    """Norm of the gradients that actually move: only ``dPhi`` in two-timescale mode."""
    return g.norm(phi_only=cfg.two_timescale)


def _apply(rep: Representation, g: LossGrads, h: float, cfg: FlowConfig) -> Representation:
    Phi = rep.Phi - h * g.dPhi
    if cfg.two_timescale:
        return replace(rep, Phi=Phi)
    hi = h * cfg.rate_ratio
    return replace(
        rep,
        Phi=Phi,
        F=rep.F if g.dF is None else rep.F - hi * g.dF,
        Psi=rep.Psi if g.dPsi is None else rep.Psi - hi * g.dPsi,
        Vhat=rep.Vhat if g.dVhat is None else rep.Vhat - hi * g.dVhat,
    )


def _advance(proc, rep, g, cfg) -> tuple[Representation, LossGrads]:
    """One Euler step from a (settled) ``rep`` with gradients ``g``, halving on loss blow-up."""
    h = cfg.step_size
    for _ in range(MAX_HALVINGS + 1):
        new = _apply(rep, g, h, cfg)
        try:
            if cfg.two_timescale:
                new = settle(proc, new, cfg)
            g_new = loss_and_grads(proc, new, cfg)
        except (Collapse, TDUnstable, SingularF):
            if not cfg.backtrack:
                raise
            h /= 2
            continue
        if not cfg.backtrack or g_new.loss <= LOSS_INCREASE_FACTOR * g.loss + LOSS_INCREASE_SLACK:
            return new, g_new
        h /= 2
    raise StepRejected(f"loss kept increasing after {MAX_HALVINGS} step halvings")


def flow_step(proc: MarkovProcess, rep: Representation, cfg: FlowConfig) -> Representation:
    """One explicit Euler step of the gradient flow.

    In two-timescale mode the inner parameters are first replaced by their
    closed forms and only ``Phi`` moves. Otherwise ``F``, ``Psi`` and ``Vhat``
    move with step ``step_size * rate_ratio``. A step that raises the loss by
    more than 10% is halved, at most 30 times.
    """
    if cfg.two_timescale:
        rep = settle(proc, rep, cfg)
    g = loss_and_grads(proc, rep, cfg)
    return _advance(proc, rep, g, cfg)[0]


# --- trajectories ------------------------------------------------------------

CSV_FIELDS = ("step", "loss", "grad_norm", "dist_top_eig", "dist_top_sv", "value_error", "collapse_min_sv")


class TrajectoryRecord(NamedTuple):
    step: int
    loss: float
    grad_norm: float
    dist_top_eig: float
    dist_top_sv: float
    value_error: float
    collapse_min_sv: float


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    converged: bool = False
    collapse_flag: bool = False

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rec in self.records:
            w.writerow([rec.step] + [format(float(x), ".17g") for x in rec[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != CSV_FIELDS:
            raise ValidationError(f"unexpected trajectory header {rows[0]}")
        return cls([TrajectoryRecord(int(r[0]), *map(float, r[1:])) for r in rows[1:]])


class _Metrics:
    """Precomputed reference subspaces and value function for trajectory records."""

    def __init__(self, proc: MarkovProcess, k: int, cfg: FlowConfig):
        X = _obs_matrix(cfg.observation)
        M = proc.P if X is None else np.linalg.solve(X, proc.P @ X)
        summary = decompose(M)
        self.eig = self.sv = None
        try:
            self.eig = top_k_subspace(summary, k, "eigen")
        except (NotDiagonalizable, DegenerateGap):
            pass
        try:
            self.sv = top_k_subspace(summary, k, "left_singular")
        except DegenerateGap:
            pass
        self.V = value_exact(proc)
        self.X = X
        self.proc = proc
        self.uses_td = "td" in components(cfg.loss)
        self.cfg = cfg

    def record(self, step: int, rep: Representation, g: LossGrads) -> TrajectoryRecord:
        s = np.linalg.svd(rep.Phi, compute_uv=False)
        min_sv = float(s[-1])
        d_eig = d_sv = float("nan")
        if min_sv > 1e-12 * max(s[0], 1e-300):
            span = Subspace.from_columns(rep.Phi)
            if self.eig is not None:
                d_eig = subspace_distance(span, self.eig)
            if self.sv is not None:
                d_sv = subspace_distance(span, self.sv)
        if self.uses_td:
            Vhat = rep.Vhat
        else:
            try:
                Vhat = two_timescale_Vhat(self.proc, rep.Phi, self.X)
            except (Collapse, TDUnstable):
                Vhat = None
        if Vhat is None:
            verr = float("nan")
        else:
            verr = float(np.linalg.norm(_encode(self.X, rep.Phi) @ Vhat - self.V))
        return TrajectoryRecord(step, g.loss, active_grad_norm(g, self.cfg), d_eig, d_sv, verr, min_sv)


def iterate_flow(proc: MarkovProcess, rep0: Representation, cfg: FlowConfig):
    """Yield ``(step, rep, grads)`` along the Euler flow, starting with step 0; never stops by itself."""
    rep = settle(proc, rep0, cfg) if cfg.two_timescale else rep0
    g = loss_and_grads(proc, rep, cfg)
    step = 0
    while True:
        yield step, rep, g
        rep, g = _advance(proc, rep, g, cfg)
        step += 1


def simulate(proc: MarkovProcess, rep0: Representation, cfg: FlowConfig) -> tuple[Trajectory, Representation]:
    """Integrate the flow until the gradient norm drops below ``stationarity_tol`` or ``max_steps``.

    Subspace distances are measured against ``P``, or against ``O^{-1} P O``
    when an observation map is configured. Failing to converge is recorded in
    ``Trajectory.converged`` rather than raised.
    """
    metrics = _Metrics(proc, rep0.k, cfg)
    traj = Trajectory()
    min_sv0 = None
    for step, rep, g in iterate_flow(proc, rep0, cfg):
        gn = active_grad_norm(g, cfg)
        done = gn < cfg.stationarity_tol or step >= cfg.max_steps
        if step % cfg.record_every == 0 or done:
            rec = metrics.record(step, rep, g)
            traj.records.append(rec)
            if min_sv0 is None:
                min_sv0 = rec.collapse_min_sv
            elif rec.collapse_min_sv < 0.5 * min_sv0:
                traj.collapse_flag = True
        if done:
            traj.converged = gn < cfg.stationarity_tol
            return traj, rep


# --- linearization -------------------------------------------------------------

def phi_velocity(proc: MarkovProcess, rep: Representation, cfg: FlowConfig, Phi=None) -> np.ndarray:
    """Right-hand side ``dPhi/dt = -grad_Phi L`` (inner parameters settled in two-timescale mode)."""
    if Phi is not None:
        rep = replace(rep, Phi=Phi)
    if cfg.two_timescale:
        rep = settle(proc, rep, cfg)
    return -loss_and_grads(proc, rep, cfg).dPhi


def jacobian_at(
    proc: MarkovProcess,
    rep: Representation,
    cfg: FlowConfig,
    h: float = 1e-6,
    orthogonal_only: bool = False,
    stationarity_tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobian of the row-major vectorized ``Phi`` flow.

    Returns ``(J, eigenvalues)`` with eigenvalues sorted by descending real
    part. With ``orthogonal_only`` the Jacobian is compressed onto the
    directions ``Delta`` with ``Phi^T Delta = 0``.
    """
    base = settle(proc, rep, cfg) if cfg.two_timescale else rep
    gn = active_grad_norm(loss_and_grads(proc, base, cfg), cfg)
    if gn >= stationarity_tol:
        raise NotStationary(f"gradient norm {gn:.3g} >= {stationarity_tol:g}")
    Phi = rep.Phi
    n, k = Phi.shape
    m = n * k
    J = np.empty((m, m))
    for i in range(m):
        E = np.zeros(m)
        E[i] = h
        E = E.reshape(n, k)
        J[:, i] = (
            (phi_velocity(proc, rep, cfg, Phi + E) - phi_velocity(proc, rep, cfg, Phi - E)) / (2 * h)
        ).ravel()
    if orthogonal_only:
        Q = np.linalg.qr(np.hstack([Phi, np.eye(n)]))[0][:, k:n]
        # row-major vec(Q C) = kron(Q, I_k) vec(C)
        B = np.kron(Q, np.eye(k))
        J = B.T @ J @ B
    ev = np.linalg.eigvals(J)
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    return J, ev


def unstable_direction_rate(lam_j: float, lam_i: float) -> float:
    """Growth factor ``lam_j lam_i - lam_i^2`` of the direction ``w_j e_i^T`` at an invariant point.

    The Jacobian of this module's flow has eigenvalue twice this number,
    because the losses carry no ``1/2``.
    """
    return lam_j * lam_i - lam_i ** 2


def predicted_latent_spectrum(eigenvalues, subset) -> np.ndarray:
    """Jacobian spectrum of the plain two-timescale latent flow at ``span{w_i : i in subset}``.

    Valid for symmetric ``P``: ``2 lam_i (lam_j - lam_i)`` for ``i`` in the
    subset and ``j`` outside it, plus ``k^2`` zeros for directions inside the
    span. Sorted descending.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    inside = list(subset)
    outside = [j for j in range(lam.size) if j not in inside]
    vals = [2 * unstable_direction_rate(lam[j], lam[i]) for i in inside for j in outside]
    vals += [0.0] * len(inside) ** 2
    return np.sort(np.array(vals))[::-1]

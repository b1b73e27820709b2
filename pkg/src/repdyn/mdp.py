"""Finite Markov reward processes, value computation and factored composition.

All arrays held by the types here are copied on construction and marked
read-only, so instances can be shared freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    BadDiscount,
    GammaMismatch,
    NegativeEntry,
    NoConvergence,
    NonStochastic,
    ShapeMismatch,
    SolveFailure,
    ValidationError,
)

ROW_SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
NEGATIVE_TOL = 1e-15
MAX_COMPOSED_STATES = 4096


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MarkovProcess:
    """Policy-evaluation instance: transition matrix ``P``, reward ``r``, discount ``gamma``.

    Prefer :func:`validate_process` for construction from untrusted data; the
    constructor itself only accepts data that already satisfies the invariants
    to within ``ROW_SUM_TOL``.
    """

    P: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        P = _frozen(self.P)
        r = _frozen(self.r)
        _check_shapes(P, r)
        _check_gamma(self.gamma)
        if np.any(P < 0):
            raise NegativeEntry("transition matrix has negative entries")
        dev = np.max(np.abs(P.sum(axis=1) - 1.0))
        if dev > ROW_SUM_TOL:
            raise NonStochastic(f"row sums deviate from 1 by {dev:.3g}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def with_reward(self, r) -> "MarkovProcess":
        return MarkovProcess(self.P, r, self.gamma)

    def with_gamma(self, gamma: float) -> "MarkovProcess":
        return MarkovProcess(self.P, self.r, gamma)

    def is_symmetric(self, tol: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.P - self.P.T)) <= tol)

    def __eq__(self, other):
        if not isinstance(other, MarkovProcess):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.r, other.r)
        )

    __hash__ = None


def _check_shapes(P, r):
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ShapeMismatch(f"P must be a non-empty square matrix, got shape {P.shape}")
    if r.shape != (P.shape[0],):
        raise ShapeMismatch(f"r must have shape ({P.shape[0]},), got {r.shape}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(r))):
        raise ValidationError("P and r must be finite")


def _check_gamma(gamma):
    if not (0.0 <= gamma < 1.0):
        raise BadDiscount(f"gamma must lie in [0, 1), got {gamma}")


def validate_process(P, r, gamma: float) -> MarkovProcess:
    """Build a :class:`MarkovProcess`, tolerating serialization round-off.

    Entries in ``[-1e-15, 0)`` are clamped to zero and rows whose sum is off by
    more than ``1e-12`` but within ``1e-9`` of one are renormalized. Anything
    further off raises.
    """
    P = np.array(P, dtype=float)
    r = np.array(r, dtype=float)
    _check_shapes(P, r)
    _check_gamma(gamma)
    if np.any(P < -NEGATIVE_TOL):
        raise NegativeEntry(f"entry {P.min():.3g} below -{NEGATIVE_TOL:g}")
    P = np.where(P < 0, 0.0, P)
    sums = P.sum(axis=1)
    dev = np.max(np.abs(sums - 1.0))
    if dev > RENORMALIZE_TOL:
        raise NonStochastic(f"row sum off by {dev:.3g} (> {RENORMALIZE_TOL:g})")
    # rows already stochastic to ROW_SUM_TOL are kept bit-for-bit so JSON round-trips are exact
    if dev > ROW_SUM_TOL:
        P = P / sums[:, None]
    return MarkovProcess(P, r, gamma)


@dataclass(frozen=True, eq=False)
class ObservationMap:
    """Invertible linear reparameterization ``O`` of the state observations."""

    O: np.ndarray

    def __post_init__(self):
        O = _frozen(self.O)
        if O.ndim != 2 or O.shape[0] != O.shape[1] or O.shape[0] < 1:
            raise ShapeMismatch(f"O must be square, got shape {O.shape}")
        s = np.linalg.svd(O, compute_uv=False)
        if not s[-1] > 1e-10 * s[0]:
            raise ValidationError("observation matrix is not invertible")
        object.__setattr__(self, "O", O)
        object.__setattr__(self, "_cond", float(s[0] / s[-1]))

    @property
    def n(self) -> int:
        return self.O.shape[0]

    @property
    def condition_number(self) -> float:
        return self._cond

    def __eq__(self, other):
        if not isinstance(other, ObservationMap):
            return NotImplemented
        return np.array_equal(self.O, other.O)

    __hash__ = None


@dataclass(frozen=True)
class FactoredSpec:
    foreground: MarkovProcess
    background: MarkovProcess
    background_reward_zeroed: bool = True


def value_exact(proc: MarkovProcess) -> np.ndarray:
    """Solve ``(I - gamma P) V = r`` with an LU factorization."""
    A = np.eye(proc.n) - proc.gamma * proc.P
    try:
        V = scipy.linalg.solve(A, proc.r, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(V)):
        raise SolveFailure("non-finite value function")
    return V


def value_iterative(proc: MarkovProcess, max_steps: int = 100_000, tol: float = 1e-12) -> np.ndarray:
    """Iterate ``V <- r + gamma P V`` from zero until the sup-norm update drops below ``tol``."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    V = np.zeros(proc.n)
    for _ in range(max_steps):
        V_new = proc.r + proc.gamma * (proc.P @ V)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta < tol:
            return V
    raise NoConvergence(f"no convergence to tol={tol:g} within {max_steps} steps")


def kron_compose(spec: FactoredSpec) -> MarkovProcess:
    """Product process with kernel ``P_M ⊗ P_N`` and reward ``r_M ⊗ 1 + 1 ⊗ r_N``.

    States are ordered foreground-major: composed index ``i * n_N + j``.
    """
    M, N = spec.foreground, spec.background
    if M.gamma != N.gamma:
        raise GammaMismatch(f"foreground gamma {M.gamma} != background gamma {N.gamma}")
    n = M.n * N.n
    if n > MAX_COMPOSED_STATES:
        raise ValidationError(f"composed process would have {n} > {MAX_COMPOSED_STATES} states")
    r_N = np.zeros(N.n) if spec.background_reward_zeroed else N.r
    P = np.kron(M.P, N.P)
    r = np.kron(M.r, np.ones(N.n)) + np.kron(np.ones(M.n), r_N)
    # kron of stochastic matrices is stochastic up to round-off
    return validate_process(P, r, M.gamma)


# --- JSON ------------------------------------------------------------------

def process_to_dict(proc: MarkovProcess) -> dict:
    return {
        "n": proc.n,
        "gamma": proc.gamma,
        "P": [float(x) for x in proc.P.ravel()],
        "r": [float(x) for x in proc.r],
    }


def process_from_dict(d: dict) -> MarkovProcess:
    try:
        n = int(d["n"])
        P = np.asarray(d["P"], dtype=float)
        r = np.asarray(d["r"], dtype=float)
        gamma = float(d["gamma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed process record: {exc}") from exc
    if P.size != n * n:
        raise ShapeMismatch(f"P has {P.size} entries, expected {n * n}")
    return validate_process(P.reshape(n, n), r, gamma)


def observation_to_dict(obs: ObservationMap) -> dict:
    return {"n": obs.n, "O": [float(x) for x in obs.O.ravel()]}


def observation_from_dict(d: dict) -> ObservationMap:
    try:
        n = int(d["n"])
        O = np.asarray(d["O"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed observation record: {exc}") from exc
    if O.size != n * n:
        raise ShapeMismatch(f"O has {O.size} entries, expected {n * n}")
    return ObservationMap(O.reshape(n, n))


def save_process(proc: MarkovProcess, path) -> None:
    Path(path).write_text(json.dumps(process_to_dict(proc)) + "\n")


def load_process(path) -> MarkovProcess:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return process_from_dict(d)


def save_observation(obs: ObservationMap, path) -> None:
    Path(path).write_text(json.dumps(observation_to_dict(obs)) + "\n")


def load_observation(path) -> ObservationMap:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return observation_from_dict(d)

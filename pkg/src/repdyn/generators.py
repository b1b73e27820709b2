"""Constructors for instances with controlled spectra, observation maps and rewards.

Eigenvector indices are 0-based ranks in the descending eigenvalue order of
:func:`repdyn.spectral.decompose`, so index 0 is the top (Perron) eigenvector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ortho_group

from .errors import (
    DegenerateSpectrum,
    GenerationFailure,
    MinimalityViolation,
    NotDiagonalizable,
    ValidationError,
)
from .mdp import MarkovProcess, ObservationMap, validate_process
from .spectral import decompose

MIN_GAP = 1e-6
MAX_OBSERVATION_ATTEMPTS = 100


@dataclass(frozen=True)
class ChainRecipe:
    n: int
    beta: float
    num_permutations: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be positive")
        if not 0.0 < self.beta <= 0.5:
            raise ValidationError(f"beta must lie in (0, 0.5], got {self.beta}")
        if self.num_permutations < 2:
            raise ValidationError("num_permutations must be at least 2")


@dataclass(frozen=True)
class RewardRecipe:
    eig_indices: tuple[int, ...]
    coefficients: tuple[float, ...] = field(default=())

    def __post_init__(self):
        idx = tuple(int(i) for i in self.eig_indices)
        coef = tuple(float(c) for c in self.coefficients) or (1.0,) * len(idx)
        if len(idx) == 0:
            raise ValidationError("need at least one eigenvector index")
        if len(coef) != len(idx):
            raise ValidationError("eig_indices and coefficients differ in length")
        if len(set(idx)) != len(idx):
            raise ValidationError("eig_indices must be distinct")
        object.__setattr__(self, "eig_indices", idx)
        object.__setattr__(self, "coefficients", coef)

    @property
    def m(self) -> int:
        return len(self.eig_indices)


def _check_chain_spectrum(P: np.ndarray, min_gap: float) -> np.ndarray:
    lam = np.sort(np.linalg.eigvalsh(P))[::-1]
    if lam[-1] <= 1e-12:
        raise DegenerateSpectrum(f"smallest eigenvalue {lam[-1]:.3g} is not positive")
    top = min(lam.size, max(8, lam.size // 2))
    gaps = -np.diff(lam[:top])
    if gaps.size and gaps.min() < min_gap:
        raise DegenerateSpectrum(f"eigen-gap {gaps.min():.3g} below {min_gap:g}")
    return lam


def lazy_chain(S, beta: float, gamma: float = 0.9, min_gap: float = MIN_GAP) -> MarkovProcess:
    """``P = (1 - beta) I + beta S`` for a given symmetric doubly stochastic ``S``."""
    S = np.asarray(S, dtype=float)
    P = (1.0 - beta) * np.eye(S.shape[0]) + beta * S
    P = (P + P.T) / 2
    _check_chain_spectrum(P, min_gap)
    return validate_process(P, np.zeros(S.shape[0]), gamma)


def make_positive_chain(recipe: ChainRecipe, gamma: float = 0.9, min_gap: float = MIN_GAP) -> MarkovProcess:
    """Symmetric chain with positive, separated eigenvalues and zero reward.

    ``S`` is the symmetrized average of ``num_permutations`` random permutation
    matrices, so the eigenvalues of ``P`` lie in ``[1 - 2 beta, 1]``.
    Raises :class:`DegenerateSpectrum` when the draw has a zero eigenvalue or
    a gap below ``min_gap``; pick another seed (see :func:`find_positive_chain`).
    """
    rng = np.random.default_rng(recipe.seed)
    n = recipe.n
    S = np.zeros((n, n))
    for _ in range(recipe.num_permutations):
        S[np.arange(n), rng.permutation(n)] += 1.0
    S /= recipe.num_permutations
    return lazy_chain((S + S.T) / 2, recipe.beta, gamma, min_gap)


def find_positive_chain(
    n: int,
    beta: float = 0.4,
    num_permutations: int = 3,
    seed: int = 0,
    gamma: float = 0.9,
    min_gap: float = MIN_GAP,
    max_tries: int = 1000,
) -> tuple[MarkovProcess, int]:
    """First seed ``>= seed`` whose chain passes the spectrum checks; returns ``(proc, seed)``."""
    for s in range(seed, seed + max_tries):
        try:
            return make_positive_chain(ChainRecipe(n, beta, num_permutations, s), gamma, min_gap), s
        except DegenerateSpectrum:
            continue
    raise GenerationFailure(f"no admissible chain in {max_tries} seeds")


def make_chain_with_spectrum(eigenvalues, seed: int = 0, gamma: float = 0.9, max_tries: int = 1000) -> MarkovProcess:
    """Symmetric stochastic matrix with the given eigenvalues (the first must be 1).

    Draws ``P = sum_i mu_i q_i q_i^T`` with ``q_1 = 1/sqrt(n)`` and the other
    ``q_i`` a random orthonormal completion, retrying until all entries are
    nonnegative.
    """
    mu = np.asarray(eigenvalues, dtype=float)
    n = mu.size
    if n < 1 or abs(mu[0] - 1.0) > 1e-15 or np.any(np.abs(mu) > 1.0):
        raise ValidationError("eigenvalues must start with 1 and lie in [-1, 1]")
    ones = np.full((n, 1), 1.0 / np.sqrt(n))
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        if n == 1:
            Q = ones
        elif n == 2:
            Q = np.hstack([ones, np.array([[1.0], [-1.0]]) / np.sqrt(2)])
        else:
            R = ortho_group.rvs(n - 1, random_state=rng)
            # orthonormal basis of 1^perp
            B = np.linalg.qr(np.hstack([ones, np.eye(n)[:, : n - 1]]))[0][:, 1:]
            Q = np.hstack([ones, B @ R])
        P = (Q * mu) @ Q.T
        P = (P + P.T) / 2
        if P.min() >= -1e-15:
            return validate_process(np.clip(P, 0.0, None), np.zeros(n), gamma)
    raise GenerationFailure("could not realize spectrum with a nonnegative matrix")


def make_observation(
    n: int,
    kind: str = "gaussian",
    bernoulli_p: float = 0.2,
    max_condition: float = 1e6,
    seed: int = 0,
) -> ObservationMap:
    """Random invertible observation matrix with bounded condition number.

    ``gaussian`` draws i.i.d. standard normal entries; ``binary`` draws i.i.d.
    Bernoulli(``bernoulli_p``) entries. Up to 100 draws are tried.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if kind == "binary" and not 0.0 < bernoulli_p <= 1.0:
        raise ValidationError("bernoulli_p must lie in (0, 1]")
    if kind not in ("gaussian", "binary"):
        raise ValidationError(f"unknown observation kind {kind!r}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_OBSERVATION_ATTEMPTS):
        if kind == "gaussian":
            O = rng.standard_normal((n, n))
        else:
            O = (rng.random((n, n)) < bernoulli_p).astype(float)
        s = np.linalg.svd(O, compute_uv=False)
        if s[-1] > 1e-10 * s[0] and s[0] / s[-1] <= max_condition:
            return ObservationMap(O)
    raise GenerationFailure(f"no admissible {kind} observation matrix in {MAX_OBSERVATION_ATTEMPTS} draws")


def make_low_rank_reward(proc: MarkovProcess, recipe: RewardRecipe) -> MarkovProcess:
    """Copy of ``proc`` whose unit-norm reward lies in the span of chosen eigenvectors."""
    summary = decompose(proc.P)
    if not summary.is_real_diagonalizable:
        raise NotDiagonalizable("reward construction needs a real-diagonalizable P")
    if any(not 0 <= i < proc.n for i in recipe.eig_indices):
        raise ValidationError(f"eigenvector indices must lie in [0, {proc.n})")
    if any(c == 0.0 for c in recipe.coefficients):
        raise MinimalityViolation("zero coefficient: the basis would not be minimal")
    W = summary.eigenvectors
    idx = list(recipe.eig_indices)
    r = W[:, idx] @ np.asarray(recipe.coefficients)
    norm = np.linalg.norm(r)
    if norm == 0:
        raise MinimalityViolation("reward vanishes")
    r = r / norm
    coords = np.linalg.solve(W, r)
    if np.any(np.abs(coords[idx]) <= 1e-10):
        raise MinimalityViolation("a chosen eigenvector does not contribute to the reward")
    return proc.with_reward(r)


def reward_eigen_indices(proc: MarkovProcess, tol: float = 1e-10) -> list[int]:
    """Ranks of the eigenvectors with a nonzero coordinate in the reward's eigen-expansion."""
    summary = decompose(proc.P)
    if not summary.is_real_diagonalizable:
        raise NotDiagonalizable("eigen-expansion needs a real-diagonalizable P")
    coords = np.linalg.solve(summary.eigenvectors, proc.r)
    return [int(i) for i in np.flatnonzero(np.abs(coords) > tol)]

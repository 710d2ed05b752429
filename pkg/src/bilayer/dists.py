"""Categorical distributions over symbolic supports, and observation fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_ATOL = 1e-9


class DistError(ValueError):
    pass


@dataclass(frozen=True)
class Categorical:
    """Probabilities over a finite support of hashable keys (ids or triples)."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if len(self.support) != probs.shape[0]:
            raise DistError("support and probs length mismatch")
        if len(set(self.support)) != len(self.support):
            raise DistError("support keys must be unique")
        if probs.size == 0:
            raise DistError("empty support")
        if np.any(probs < -PROB_ATOL):
            raise DistError("negative probability")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise DistError(f"probabilities sum to {total!r}, not 1")

    def prob_of(self, key) -> float:
        try:
            return float(self.probs[self.support.index(key)])
        except ValueError:
            return 0.0

    def sample(self, rng: np.random.Generator):
        return self.support[int(rng.choice(len(self.support), p=self.probs / self.probs.sum()))]

    def as_dict(self) -> dict:
        return {k: float(p) for k, p in zip(self.support, self.probs)}


def dirichlet_fuse(pre: Categorical, obs: Categorical, gamma: float, n_obs: float) -> Categorical:
    """Blend a background model with an instance observation model.

    The background acts as a Dirichlet prior of strength ``gamma``; the
    observation carries weight ``n_obs`` (its statement count).  The fused
    distribution is the convex combination
    ``(gamma * pre + n_obs * obs) / (gamma + n_obs)`` over the union support.
    """
    if gamma < 0 or n_obs < 0:
        raise DistError("gamma and n_obs must be nonnegative")
    if gamma == 0 and n_obs == 0:
        raise DistError("gamma and n_obs cannot both be zero")
    keys = list(pre.support)
    seen = set(keys)
    keys.extend(k for k in obs.support if k not in seen)
    pre_map = pre.as_dict()
    obs_map = obs.as_dict()
    # degenerate weights pass the surviving model through exactly (zero-padded
    # to the union support), not within rounding
    if gamma == 0:
        probs = np.array([obs_map.get(k, 0.0) for k in keys], dtype=np.float64)
    elif n_obs == 0:
        probs = np.array([pre_map.get(k, 0.0) for k in keys], dtype=np.float64)
    else:
        weight = gamma + n_obs
        probs = np.array(
            [
                (gamma * pre_map.get(k, 0.0) + n_obs * obs_map.get(k, 0.0)) / weight
                for k in keys
            ],
            dtype=np.float64,
        )
    return Categorical(tuple(keys), probs)

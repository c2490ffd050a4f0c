"""Simulator-backed grounders: the exact oracle and a seeded noisy oracle."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..belief import BeliefState, from_symbolic
from ..domains import Demonstration, WorldState


class Grounder:
    """Maps a world observation to a belief over the world's atom universe."""

    def ground(self, world: WorldState) -> BeliefState:
        raise NotImplementedError

    def for_episode(self, key: str) -> "Grounder":
        """A grounder for one evaluation episode; outputs are cached per state."""
        return CachedGrounder(self)


class CachedGrounder(Grounder):
    def __init__(self, inner: Grounder):
        self.inner = inner
        self._cache: dict = {}

    def ground(self, world: WorldState) -> BeliefState:
        key = (world.env, world.symbolic, world.poses.positions.tobytes(), world.poses.held.tobytes())
        if key not in self._cache:
            self._cache[key] = self.inner.ground(world)
        return self._cache[key]


def oracle_ground(world: WorldState) -> BeliefState:
    return from_symbolic(world.symbolic, world.env.universe)


class OracleGrounder(Grounder):
    def ground(self, world: WorldState) -> BeliefState:
        return oracle_ground(world)


@dataclass(frozen=True)
class NoisyOracleConfig:
    mode: str = "flip"  # "flip" or "logit"
    flip_prob: float = 0.1
    logit_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("flip", "logit"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5)")
        if self.logit_sigma < 0:
            raise ValueError("logit_sigma must be non-negative")


def _digest(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def noisy_ground(world: WorldState, cfg: NoisyOracleConfig, key: int = 0) -> BeliefState:
    """Corrupt the oracle belief; the noise is a pure function of (seed, key, state)."""
    truth = oracle_ground(world).probs
    env = world.env
    rng = np.random.default_rng([cfg.seed, key, _digest(env.tag, sorted(env.params.items()), sorted(world.symbolic))])
    n = truth.size
    if cfg.mode == "flip":
        flips = rng.random(n) < cfg.flip_prob
        bits = np.where(flips, 1.0 - truth, truth)
        u = rng.uniform(0.0, 0.05, n)
        p = np.where(bits > 0.5, 0.9 - u, 0.1 + u)
    else:
        q = np.clip(truth, 0.02, 0.98)
        z = np.log(q / (1.0 - q)) + rng.normal(0.0, cfg.logit_sigma, n)
        p = 1.0 / (1.0 + np.exp(-z))
    return BeliefState(p, env.universe)


class NoisyGrounder(Grounder):
    def __init__(self, cfg: NoisyOracleConfig, key: int = 0):
        self.cfg = cfg
        self.key = key

    def ground(self, world: WorldState) -> BeliefState:
        return noisy_ground(world, self.cfg, self.key)

    def for_episode(self, key: str) -> Grounder:
        return CachedGrounder(NoisyGrounder(self.cfg, _digest(key) & 0xFFFFFFFF))


def ground_demo_goal(model: Grounder, demo: Demonstration, smoothing: int = 1) -> BeliefState:
    """Goal belief from the final demonstration frame.

    ``smoothing > 1`` averages the beliefs of the last ``smoothing`` frames.
    """
    if not demo.frames:
        raise ValueError("empty demonstration")
    if smoothing < 1:
        raise ValueError("smoothing must be at least 1")
    frames = demo.frames[-smoothing:]
    if len(frames) == 1:
        return model.ground(frames[0])
    bs = [model.ground(f) for f in frames]
    return bs[0].replace(np.mean([b.probs for b in bs], axis=0))

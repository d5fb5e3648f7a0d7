"""Layered random environment with lazy, order-independent sampling.

Each layer is bad with probability ``delta``.  Upward (and ladder vertical)
edges whose tail lies in a bad layer are open with probability ``p_b``,
otherwise ``p_g``; horizontal edges are open with probability ``p_h``.
Every decision thresholds a latent uniform derived from ``(seed, key)``, so
open sets are pointwise monotone in each probability for a fixed seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ._validation import DomainError, check_int, check_probability, check_seed
from .lattice import EdgeClass, EdgeRef, parallel_probability
from .rng import NS_EDGE, NS_LAYER, NS_SITE, uniform


class LayerType(enum.Enum):
    GOOD = "good"
    BAD = "bad"


class SamplingMode(enum.Enum):
    BERNOULLI = "bernoulli"
    UNIFORM_COUPLED = "uniform_coupled"


@dataclass(frozen=True)
class EnvParams:
    delta: float
    p_g: float
    p_b: float
    p_h: float

    def __post_init__(self):
        for name in ("delta", "p_g", "p_b", "p_h"):
            object.__setattr__(self, name, check_probability(getattr(self, name), name))
        if self.p_g < self.p_b:
            raise DomainError(f"model requires p_g >= p_b, got p_g={self.p_g}, p_b={self.p_b}")

    @classmethod
    def homogeneous(cls, p):
        """Every edge open with probability ``p``."""
        return cls(delta=0.0, p_g=p, p_b=p, p_h=p)

    def layered_prob(self, bad):
        return self.p_b if bad else self.p_g

    def to_dict(self):
        return {"delta": self.delta, "p_g": self.p_g, "p_b": self.p_b, "p_h": self.p_h}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["delta"], d["p_g"], d["p_b"], d["p_h"])
        except KeyError as exc:
            raise DomainError(f"environment is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class LayeredEnv:
    params: EnvParams
    seed: int = 0
    mode: SamplingMode = SamplingMode.UNIFORM_COUPLED

    def __post_init__(self):
        check_seed(self.seed)
        if not isinstance(self.mode, SamplingMode):
            object.__setattr__(self, "mode", SamplingMode(self.mode))

    def with_seed(self, seed):
        return LayeredEnv(self.params, seed, self.mode)

    def layer_type(self, n) -> LayerType:
        n = check_int(n, "n", 0)
        bad = uniform(self.seed, NS_LAYER, (n,)) < self.params.delta
        return LayerType.BAD if bad else LayerType.GOOD

    def _layered(self, n):
        p = self.params
        if p.p_g == p.p_b:
            return p.p_g
        return p.layered_prob(self.layer_type(n) is LayerType.BAD)

    def edge_prob(self, e: EdgeRef) -> float:
        if e.cls is EdgeClass.HORIZONTAL:
            return self.params.p_h
        if e.cls in (EdgeClass.UPWARD, EdgeClass.VERTICAL):
            return self._layered(e.layer)
        if e.cls is EdgeClass.PARALLEL:
            return parallel_probability(self._layered(e.layer), e.multiplicity)
        raise DomainError(f"unknown edge class {e.cls!r}")

    def _edge_uniform(self, e):
        return uniform(self.seed, NS_EDGE, e.key)

    def latent_uniform(self, e: EdgeRef) -> float:
        if self.mode is not SamplingMode.UNIFORM_COUPLED:
            raise DomainError("latent uniforms are exposed only in uniform-coupled mode")
        return self._edge_uniform(e)

    def is_open(self, e: EdgeRef) -> bool:
        return self._edge_uniform(e) < self.edge_prob(e)

    def site_prob(self, height) -> float:
        return self._layered(height)

    def site_uniform(self, v) -> float:
        v = tuple(int(c) for c in v)
        return uniform(self.seed, NS_SITE, v + (0,) * (4 - len(v)))

    def is_site_open(self, v, height) -> bool:
        return self.site_uniform(v) < self.site_prob(height)

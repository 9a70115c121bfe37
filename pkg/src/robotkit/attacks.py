"""Sign-gradient adversarial attacks (FGSM, PGD) in the Linf and L2 norms.

Both attacks work on a batch; a single vector is accepted too.  PGD's
random start draws each sample from its own stream keyed by
``(rng_seed, index)`` so results do not depend on batching or threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError

FGSM = "fgsm"
PGD = "pgd"
LINF = "linf"
L2 = "l2"


@dataclass(frozen=True)
class AttackConfig:
    kind: str = PGD
    epsilon: float = 0.3
    steps: int = 10
    step_size: float | None = None  # defaults to epsilon / 6
    norm: str = LINF
    rng_seed: int = 0
    random_start: bool = True

    def __post_init__(self):
        if self.kind not in (FGSM, PGD):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.norm not in (LINF, L2):
            raise ConfigError(f"unknown norm {self.norm!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.step_size is None:
            object.__setattr__(self, "step_size", self.epsilon / 6)
        if not self.step_size > 0:
            raise ConfigError("step_size must be > 0")
        if self.kind == PGD:
            if self.steps < 1:
                raise ConfigError("PGD needs steps >= 1")
            if self.step_size > self.epsilon:
                raise ConfigError(
                    f"step_size {self.step_size} exceeds epsilon {self.epsilon}"
                )

    @property
    def name(self) -> str:
        return f"{self.kind}-{self.norm}-{self.epsilon:g}"


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def fgsm(model: nn.MlpModel, x, y, epsilon: float) -> np.ndarray:
    """``clip(x + eps * sign(grad_x J), 0, 1)``."""
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    xb, single = _batch(x)
    g = nn.input_gradient64(model, xb, y)
    adv = np.clip(xb + epsilon * np.sign(g), 0.0, 1.0).astype(np.float32)
    return adv[0] if single else adv


def project(x_adv: np.ndarray, x: np.ndarray, epsilon: float, norm: str) -> np.ndarray:
    """Project onto the epsilon-ball around ``x`` intersected with [0, 1]^d."""
    delta = x_adv - x
    if norm == LINF:
        delta = np.clip(delta, -epsilon, epsilon)
    else:
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        factor = np.minimum(1.0, epsilon / np.maximum(norms, 1e-300))
        delta = delta * factor
    return np.clip(x + delta, 0.0, 1.0)


def random_start(x: np.ndarray, epsilon: float, norm: str, rng_seed: int, offset: int = 0) -> np.ndarray:
    n, d = x.shape
    noise = np.empty_like(x)
    for i in range(n):
        rng = np.random.default_rng([rng_seed, offset + i])
        if norm == LINF:
            noise[i] = rng.uniform(-epsilon, epsilon, size=d)
        else:
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            noise[i] = direction * epsilon * rng.uniform() ** (1.0 / d)
    return np.clip(x + noise, 0.0, 1.0)


def pgd(model: nn.MlpModel, x, y, cfg: AttackConfig, offset: int = 0) -> np.ndarray:
    """Projected sign-gradient ascent on the loss, optionally from a random start.

    ``offset`` is the global index of the first row, used to key the
    per-sample random streams.
    """
    if cfg.kind != PGD:
        raise ConfigError("pgd() needs an AttackConfig with kind='pgd'")
    xb, single = _batch(x)
    adv = random_start(xb, cfg.epsilon, cfg.norm, cfg.rng_seed, offset) if cfg.random_start else xb.copy()
    for _ in range(cfg.steps):
        g = nn.input_gradient64(model, adv, y)
        if cfg.norm == LINF:
            step = np.sign(g)
        else:
            gn = np.linalg.norm(g, axis=1, keepdims=True)
            step = np.divide(g, gn, out=np.zeros_like(g), where=gn > 0)
        adv = project(adv + cfg.step_size * step, xb, cfg.epsilon, cfg.norm)
    adv = adv.astype(np.float32)
    return adv[0] if single else adv


def run_attack(model: nn.MlpModel, x, y, cfg: AttackConfig, offset: int = 0) -> np.ndarray:
    if cfg.kind == FGSM:
        if cfg.norm != LINF:
            # L2 single step: one PGD step of size epsilon without random start
            one = AttackConfig(PGD, cfg.epsilon, 1, cfg.epsilon, L2, cfg.rng_seed, False)
            return pgd(model, x, y, one, offset)
        return fgsm(model, x, y, cfg.epsilon)
    return pgd(model, x, y, cfg, offset)


def distance(a, b, norm: str) -> np.ndarray:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if diff.ndim == 1:
        diff = diff[None, :]
    if norm == LINF:
        return np.abs(diff).max(axis=1)
    return np.linalg.norm(diff, axis=1)

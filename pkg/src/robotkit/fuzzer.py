"""FOL-guided fuzzing.

For every seed a worklist is grown greedily: each popped input is pushed
``iters`` times along the gradient of

    sum_{i=2..k} P(c_i) - P(c_1) + lam * FOL(x')

and a perturbed input is kept (pushed back on the worklist) when its FOL
rose to a new per-seed maximum or dropped below ``xi``, provided it stays
within ``epsilon`` of the original seed.  Kept inputs whose label moved
away from the popped input's label are emitted as test cases.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attacks import distance
from .errors import ConfigError
from .metrics import fol_l2_from_grad, fol_linf_from_grad
from .suite import TestSuite

PUSH_CAP = 20


@dataclass(frozen=True)
class FuzzConfig:
    epsilon: float = 0.3
    xi: float = 1e-18
    k: int = 5
    lam: float = 1.0
    iters: int = 3
    learning_rate: float = 0.1
    norm: str = "linf"  # ball used by the distance check
    fol_norm: str = "l2"  # closed form used inside the objective and the acceptance checks
    rng_seed: int = 0
    push_cap: int = PUSH_CAP

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not self.xi > 0:
            raise ConfigError("xi must be > 0")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        for norm in (self.norm, self.fol_norm):
            if norm not in ("linf", "l2"):
                raise ConfigError(f"unknown norm {norm!r}")
        if self.push_cap < 1:
            raise ConfigError("push_cap must be >= 1")


@dataclass
class FuzzStats:
    seeds_processed: int = 0
    perturbation_steps: int = 0
    accepted_high_fol: int = 0
    accepted_low_fol: int = 0
    label_flips: int = 0

    def add(self, other: "FuzzStats"):
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class FuzzOutcome:
    cases: TestSuite
    stats: FuzzStats
    # FOL_m after every high-FOL acceptance, per seed index
    fol_chains: dict[int, list[float]] = field(default_factory=dict)


def _fol(model, x, x0, y, cfg: FuzzConfig) -> float:
    g = nn.input_gradient64(model, x, y)
    if cfg.fol_norm == "l2":
        return float(fol_l2_from_grad(g, cfg.epsilon))
    return float(fol_linf_from_grad(g, x, x0, cfg.epsilon))


def fuzz_objective(model, x_prime, y, anchor, cfg: FuzzConfig, x0=None):
    """Objective value and gradient at ``x_prime``; ``anchor`` is c_1."""
    return nn.grad_objective(
        model, x_prime, y, cfg.k, cfg.lam, cfg.fol_norm, cfg.epsilon, x0=x0, anchor=anchor
    )


def _fuzz_seed(model: nn.MlpModel, seed_x: np.ndarray, seed_y: int, index: int, cfg: FuzzConfig):
    rng = np.random.default_rng([cfg.rng_seed, index])
    stats = FuzzStats(seeds_processed=1)
    seed64 = seed_x.astype(np.float64)
    emitted: list[np.ndarray] = []
    fol_m = _fol(model, seed64, seed64, seed_y, cfg)
    chain = [fol_m]
    s_list = [seed64]
    pushes = 1  # the seed itself occupies one worklist slot
    while s_list:
        x = s_list.pop()
        c1 = nn.predict(model, x)
        xp = x.copy()
        for _ in range(cfg.iters):
            _, grads = fuzz_objective(model, xp, seed_y, c1, cfg, x0=seed64)
            perb = cfg.learning_rate * rng.uniform(0.5, 1.5) * grads.astype(np.float64)
            xp = np.clip(xp + perb, 0.0, 1.0).astype(np.float32).astype(np.float64)
            stats.perturbation_steps += 1
            c_new = nn.predict(model, xp)
            inside = distance(xp, seed64, cfg.norm)[0] <= cfg.epsilon
            if not inside:
                continue
            f = _fol(model, xp, seed64, seed_y, cfg)
            keep = False
            if f >= fol_m:
                fol_m = f
                chain.append(f)
                stats.accepted_high_fol += 1
                keep = True
            if f < cfg.xi:
                stats.accepted_low_fol += 1
                keep = True
            if not keep:
                continue
            if pushes < cfg.push_cap:
                s_list.append(xp.copy())
                pushes += 1
            if c_new != c1 and c_new != seed_y:
                emitted.append(xp.astype(np.float32))
                stats.label_flips += 1
    return emitted, stats, chain


def fol_fuzz(model: nn.MlpModel, seeds: nn.LabeledDataset, cfg: FuzzConfig,
             threads: int = 1, index_offset: int = 0) -> FuzzOutcome:
    """Run the fuzzer over every seed; output order follows seed order."""
    if cfg.k > model.num_classes:
        raise ConfigError(f"k={cfg.k} exceeds the model's {model.num_classes} classes")
    if seeds.dim != model.input_dim:
        raise ConfigError(f"seed dim {seeds.dim} != model input {model.input_dim}")

    def work(i):
        return _fuzz_seed(model, seeds.inputs[i], int(seeds.labels[i]), index_offset + i, cfg)

    idx = range(len(seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, idx))
    else:
        results = [work(i) for i in idx]

    stats = FuzzStats()
    xs, x0s, sidx, gts = [], [], [], []
    chains = {}
    for i, (emitted, st, chain) in enumerate(results):
        stats.add(st)
        chains[index_offset + i] = chain
        for x in emitted:
            xs.append(x)
            x0s.append(seeds.inputs[i])
            sidx.append(index_offset + i)
            gts.append(int(seeds.labels[i]))
    if xs:
        suite = TestSuite(
            np.stack(xs), np.stack(x0s), np.asarray(sidx), np.asarray(gts), model.num_classes,
            norm=cfg.norm, epsilon=cfg.epsilon, origin_names=("fol-fuzz",),
        )
    else:
        suite = TestSuite.empty(model.input_dim, model.num_classes, norm=cfg.norm,
                                epsilon=cfg.epsilon, origin_names=("fol-fuzz",))
    return FuzzOutcome(suite, stats, chains)

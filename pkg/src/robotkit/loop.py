"""Robustness-oriented test-and-retrain loop.

The loop measures empirical robustness (accuracy on a frozen suite of
adversarial examples), and while it is below the requirement it generates
new test cases against the current model, selects a subset, adds it to the
training pool and keeps training the current model on that pool.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attacks, nn
from .errors import ArgumentError, ConfigError
from .fuzzer import FuzzConfig, fol_fuzz
from .metrics import score_suite
from .selection import SelectionRequest, select
from .suite import TestSuite

log = logging.getLogger(__name__)

SATISFIED = "satisfied"
BUDGET_EXHAUSTED = "budget_exhausted"
ACCURACY_FLOOR_VIOLATED = "accuracy_floor_violated"

GEN_ATTACK_POOL = "attack-pool"
GEN_FUZZ = "fuzz"

# fixed chunking keeps float results identical regardless of thread count
CHUNK = 256


def default_attacks(epsilon: float = 0.3, rng_seed: int = 0, norm: str = "linf") -> list[attacks.AttackConfig]:
    """FGSM plus 10-step PGD with step epsilon/6."""
    return [
        attacks.AttackConfig(attacks.FGSM, epsilon, 1, epsilon, norm, rng_seed, False),
        attacks.AttackConfig(attacks.PGD, epsilon, 10, epsilon / 6, norm, rng_seed),
    ]


def attack_batch(model, x, y, cfg: attacks.AttackConfig, threads: int = 1, offset: int = 0) -> np.ndarray:
    starts = list(range(0, len(x), CHUNK))

    def work(s):
        return attacks.run_attack(model, x[s : s + CHUNK], y[s : s + CHUNK], cfg, offset + s)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if not parts:
        return np.zeros((0, x.shape[1]), np.float32)
    return np.concatenate(parts)


def _sample_indices(n_data: int, n_each: int, rng: np.random.Generator) -> np.ndarray:
    # whole permutations first, so each seed is reused only once all others have been
    reps = -(-n_each // n_data)
    return np.concatenate([rng.permutation(n_data) for _ in range(reps)])[:n_each]


def build_attack_suite(model: nn.MlpModel, data: nn.LabeledDataset, attack_cfgs, n_each: int,
                       rng_seed: int = 0, threads: int = 1) -> TestSuite:
    """``n_each`` adversarial examples per attack from seeded draws of ``data``."""
    if n_each < 0:
        raise ArgumentError("n_each must be >= 0")
    attack_cfgs = list(attack_cfgs)
    if not attack_cfgs:
        raise ConfigError("at least one attack is required")
    norms = {c.norm for c in attack_cfgs}
    if len(norms) != 1:
        raise ConfigError("all attacks of one suite must share a norm")
    names = tuple(c.name for c in attack_cfgs)
    eps = max(c.epsilon for c in attack_cfgs)
    if n_each == 0:
        return TestSuite.empty(model.input_dim, model.num_classes, norm=norms.pop(),
                               epsilon=eps, origin_names=names)
    rng = np.random.default_rng(rng_seed)
    parts = []
    for a, cfg in enumerate(attack_cfgs):
        idx = _sample_indices(len(data), n_each, rng)
        x0 = data.inputs[idx]
        y = data.labels[idx]
        adv = attack_batch(model, x0, y, cfg, threads, offset=a * n_each)
        parts.append(TestSuite(
            adv, x0, idx, y, model.num_classes, predicted=nn.predict(model, adv),
            norm=cfg.norm, epsilon=eps, origins=np.full(n_each, a), origin_names=names,
        ))
    return TestSuite.concat(parts)


def build_validation_suite(model, data, attack_cfgs, n_each: int, rng_seed: int = 0, threads: int = 1) -> TestSuite:
    """Frozen adversarial validation suite; build once and reuse for every model."""
    return build_attack_suite(model, data, attack_cfgs, n_each, rng_seed, threads)


@dataclass(frozen=True)
class RobustnessReport:
    er: float
    per_attack: dict[str, float]
    clean_accuracy: float
    n_adv: int

    def as_dict(self) -> dict:
        return {"er": self.er, "per_attack": dict(self.per_attack),
                "clean_accuracy": self.clean_accuracy, "n_adv": self.n_adv}


def clean_seeds(d_v: TestSuite) -> nn.LabeledDataset:
    _, first = np.unique(d_v.seed_index, return_index=True)
    return nn.LabeledDataset(d_v.x_0[first], d_v.ground_truth[first].astype(np.int64))


def empirical_robustness(model: nn.MlpModel, d_v: TestSuite, clean: nn.LabeledDataset | None = None) -> RobustnessReport:
    """Accuracy on the frozen adversarial suite, with a per-attack breakdown.

    ``clean`` defaults to the distinct seeds of ``d_v``.
    """
    if len(d_v) == 0:
        raise ArgumentError("empirical robustness needs a non-empty validation suite")
    correct = nn.predict(model, d_v.x_t) == d_v.ground_truth.astype(np.int64)
    per_attack = {}
    for a, name in enumerate(d_v.origin_names):
        mask = d_v.origins == a
        if mask.any():
            per_attack[name] = float(correct[mask].mean())
    clean = clean_seeds(d_v) if clean is None else clean
    return RobustnessReport(
        er=float(correct.mean()),
        per_attack=per_attack,
        clean_accuracy=nn.accuracy(model, clean),
        n_adv=len(d_v),
    )


def retrain(model: nn.MlpModel, base_data: nn.LabeledDataset, selected: TestSuite, cfg: nn.TrainConfig) -> nn.MlpModel:
    """Warm-start training on ``base_data`` plus the selected cases (seed labels)."""
    data = base_data if len(selected) == 0 else base_data.concat(selected.as_training_data())
    return nn.train(model, data, cfg)


@dataclass(frozen=True)
class RobotConfig:
    requirement_r: float = 0.5
    max_iterations: int = 3
    generator: str = GEN_ATTACK_POOL
    selection: SelectionRequest = field(default_factory=lambda: SelectionRequest(fraction=0.1))
    retrain: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    accuracy_floor: float | None = None  # None: f0's clean accuracy minus 0.02
    pool_size: int = 10000  # attack-pool cases per iteration, split evenly across attacks
    attacks: tuple[attacks.AttackConfig, ...] = field(default_factory=lambda: tuple(default_attacks()))
    fuzz: FuzzConfig = field(default_factory=FuzzConfig)
    fuzz_seeds: int = 500
    score_norm: str = "linf"
    rng_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.requirement_r <= 1:
            raise ConfigError("requirement_r must be in (0, 1]")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.generator not in (GEN_ATTACK_POOL, GEN_FUZZ):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.accuracy_floor is not None and not 0 <= self.accuracy_floor <= 1:
            raise ConfigError("accuracy_floor must be in [0, 1]")


@dataclass
class IterationRecord:
    iter: int
    er: float
    clean_acc: float
    suite_size: int
    strategy: str
    wall_ms: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RobotResult:
    model: nn.MlpModel
    history: list[RobustnessReport]
    records: list[IterationRecord]
    status: str
    iterations: int
    best_iteration: int


def generate(model: nn.MlpModel, data: nn.LabeledDataset, cfg: RobotConfig, iteration: int) -> TestSuite:
    seed = cfg.rng_seed * 1000 + iteration
    if cfg.generator == GEN_ATTACK_POOL:
        atts = [
            attacks.AttackConfig(a.kind, a.epsilon, a.steps, a.step_size, a.norm, seed, a.random_start)
            for a in cfg.attacks
        ]
        return build_attack_suite(model, data, atts, cfg.pool_size // len(atts), seed, cfg.threads)
    rng = np.random.default_rng(seed)
    n = min(cfg.fuzz_seeds, len(data))
    idx = np.sort(rng.choice(len(data), size=n, replace=False))
    fz = cfg.fuzz
    fz = FuzzConfig(fz.epsilon, fz.xi, fz.k, fz.lam, fz.iters, fz.learning_rate, fz.norm,
                    fz.fol_norm, seed, fz.push_cap)
    suite = fol_fuzz(model, data.subset(idx), fz, threads=cfg.threads).cases
    return replace(suite, seed_index=idx[suite.seed_index]) if len(suite) else suite


def robot(f0: nn.MlpModel, data: nn.LabeledDataset, d_v: TestSuite, cfg: RobotConfig,
          clean: nn.LabeledDataset | None = None, on_iteration=None) -> RobotResult:
    """Test, select and retrain until ER on ``d_v`` reaches ``cfg.requirement_r``.

    Stops on success, when clean accuracy drops below the floor, or after
    ``cfg.max_iterations`` rounds.  Returns the best-ER model among those
    that kept the accuracy floor.
    """
    t0 = time.perf_counter()
    report = empirical_robustness(f0, d_v, clean)
    floor = report.clean_accuracy - 0.02 if cfg.accuracy_floor is None else cfg.accuracy_floor
    history = [report]
    records = [IterationRecord(0, report.er, report.clean_accuracy, 0, cfg.selection.strategy,
                               (time.perf_counter() - t0) * 1000)]
    if on_iteration:
        on_iteration(records[-1])
    best_model, best_er, best_iter = f0, report.er, 0
    if report.er >= cfg.requirement_r:
        return RobotResult(f0, history, records, SATISFIED, 0, 0)

    f = f0
    pool: list[TestSuite] = []
    status = BUDGET_EXHAUSTED
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        d_t = generate(f, data, cfg, it)
        if len(d_t):
            scored = score_suite(f, d_t, cfg.score_norm)
            req = SelectionRequest(cfg.selection.strategy, cfg.selection.n, cfg.selection.k,
                                   cfg.selection.rng_seed + it, cfg.selection.fraction)
            n = min(req.budget(len(scored)), len(scored))
            chosen = select(scored, SelectionRequest(req.strategy, n, req.k, req.rng_seed))
            pool.append(chosen)
        selected = TestSuite.concat(pool) if pool else d_t
        rcfg = cfg.retrain
        f = retrain(f, data, selected, nn.TrainConfig(rcfg.epochs, rcfg.batch_size,
                                                      rcfg.learning_rate, rcfg.rng_seed + it))
        report = empirical_robustness(f, d_v, clean)
        history.append(report)
        records.append(IterationRecord(it, report.er, report.clean_accuracy, len(selected),
                                       cfg.selection.strategy, (time.perf_counter() - t0) * 1000))
        if on_iteration:
            on_iteration(records[-1])
        log.info("iteration %d: er=%.4f clean=%.4f", it, report.er, report.clean_accuracy)
        if report.clean_accuracy < floor:
            status = ACCURACY_FLOOR_VIOLATED
            break
        if report.er > best_er:
            best_model, best_er, best_iter = f, report.er, it
        if report.er >= cfg.requirement_r:
            status = SATISFIED
            break
    return RobotResult(best_model, history, records, status, it, best_iter)

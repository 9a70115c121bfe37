"""Columnar container for generated test cases.

A suite stores every case as parallel arrays so that scoring and attack
code can stay vectorised.  Per-case access goes through ``suite[i]`` which
returns a lightweight ``TestCase`` view.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ShapeError, StateError

METRIC_NONE = "none"
METRIC_FOL_L2 = "fol_l2"
METRIC_FOL_LINF = "fol_linf"


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    x_t: np.ndarray
    x_0: np.ndarray
    seed_index: int
    ground_truth: int
    predicted: int
    fol: float
    zol: float
    gini: float
    origin: str


def _f32(a, n):
    if a is None:
        return np.full(n, np.nan, dtype=np.float32)
    return np.ascontiguousarray(a, dtype=np.float32).reshape(-1)


@dataclass(frozen=True)
class TestSuite:
    __test__ = False

    x_t: np.ndarray
    x_0: np.ndarray
    seed_index: np.ndarray
    ground_truth: np.ndarray
    num_classes: int
    predicted: np.ndarray | None = None
    fol: np.ndarray | None = None
    zol: np.ndarray | None = None
    gini: np.ndarray | None = None
    norm: str = "linf"
    epsilon: float = 0.3
    metric_variant: str = METRIC_NONE
    origins: np.ndarray | None = None  # int index into origin_names
    origin_names: tuple[str, ...] = field(default=("unknown",))

    def __post_init__(self):
        xt = np.ascontiguousarray(self.x_t, dtype=np.float32)
        if xt.ndim == 1 and xt.size == 0:
            xt = xt.reshape(0, 0)
        n = xt.shape[0]
        x0 = np.ascontiguousarray(self.x_0, dtype=np.float32).reshape(xt.shape)
        set_ = object.__setattr__
        set_(self, "x_t", xt)
        set_(self, "x_0", x0)
        set_(self, "seed_index", np.ascontiguousarray(self.seed_index, dtype=np.uint32).reshape(-1))
        set_(self, "ground_truth", np.ascontiguousarray(self.ground_truth, dtype=np.uint16).reshape(-1))
        pred = self.predicted
        set_(self, "predicted", np.zeros(n, np.uint16) if pred is None else np.ascontiguousarray(pred, dtype=np.uint16).reshape(-1))
        set_(self, "fol", _f32(self.fol, n))
        set_(self, "zol", _f32(self.zol, n))
        set_(self, "gini", _f32(self.gini, n))
        org = np.zeros(n, np.int64) if self.origins is None else np.asarray(self.origins, np.int64).reshape(-1)
        set_(self, "origins", org)
        set_(self, "origin_names", tuple(self.origin_names))
        for name in ("seed_index", "ground_truth", "predicted", "fol", "zol", "gini", "origins"):
            if getattr(self, name).shape[0] != n:
                raise ShapeError(f"column {name} has length {getattr(self, name).shape[0]}, expected {n}")
        if n and org.max() >= len(self.origin_names):
            raise ShapeError("origin index out of range")

    def __len__(self) -> int:
        return self.x_t.shape[0]

    def __getitem__(self, i: int) -> TestCase:
        return TestCase(
            self.x_t[i], self.x_0[i], int(self.seed_index[i]), int(self.ground_truth[i]),
            int(self.predicted[i]), float(self.fol[i]), float(self.zol[i]), float(self.gini[i]),
            self.origin_names[self.origins[i]],
        )

    @property
    def input_dim(self) -> int:
        return self.x_t.shape[1]

    @property
    def scored(self) -> bool:
        return self.metric_variant != METRIC_NONE and bool(np.all(np.isfinite(self.fol)))

    def require_scored(self):
        if not self.scored:
            raise StateError("suite has no FOL scores; run score_suite first")

    def take(self, idx) -> "TestSuite":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            x_t=self.x_t[idx], x_0=self.x_0[idx], seed_index=self.seed_index[idx],
            ground_truth=self.ground_truth[idx], predicted=self.predicted[idx],
            fol=self.fol[idx], zol=self.zol[idx], gini=self.gini[idx], origins=self.origins[idx],
        )

    def origin_of(self, i: int) -> str:
        return self.origin_names[self.origins[i]]

    @classmethod
    def empty(cls, input_dim: int, num_classes: int, **kw) -> "TestSuite":
        z = np.zeros((0, input_dim), np.float32)
        return cls(z, z, np.zeros(0), np.zeros(0), num_classes, **kw)

    @classmethod
    def concat(cls, suites: list["TestSuite"]) -> "TestSuite":
        if not suites:
            raise ArgumentError("nothing to concatenate")
        names: list[str] = []
        remapped = []
        for s in suites:
            lut = []
            for nm in s.origin_names:
                if nm not in names:
                    names.append(nm)
                lut.append(names.index(nm))
            remapped.append(np.asarray(lut, np.int64)[s.origins] if len(s) else np.zeros(0, np.int64))
        first = suites[0]
        variants = {s.metric_variant for s in suites}
        return cls(
            np.concatenate([s.x_t for s in suites]),
            np.concatenate([s.x_0 for s in suites]),
            np.concatenate([s.seed_index for s in suites]),
            np.concatenate([s.ground_truth for s in suites]),
            first.num_classes,
            predicted=np.concatenate([s.predicted for s in suites]),
            fol=np.concatenate([s.fol for s in suites]),
            zol=np.concatenate([s.zol for s in suites]),
            gini=np.concatenate([s.gini for s in suites]),
            norm=first.norm,
            epsilon=max(s.epsilon for s in suites),
            metric_variant=variants.pop() if len(variants) == 1 else METRIC_NONE,
            origins=np.concatenate(remapped),
            origin_names=tuple(names),
        )

    def as_training_data(self):
        """Adversarial inputs paired with their seeds' ground-truth labels."""
        from .nn import LabeledDataset

        return LabeledDataset(self.x_t, self.ground_truth.astype(np.int64))

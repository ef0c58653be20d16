"""Training configuration, loadable from and savable to JSON.

Every field can appear in a JSON config file; nested groups (``schedule``,
``weights``, ``densify``, ``expansion``, ``lr``) are objects with the same
field names as their dataclasses. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..densify import DensifyConfig, ExpansionConfig
from ..errors import SchemaViolation
from ..losses import LossWeights, ScheduleConfig


@dataclass
class LearningRates:
    position: float = 1.6e-4  # multiplied by the scene extent
    position_final: float = 1.6e-6  # log-linear decay target, also extent-scaled
    opacity: float = 5e-2  # on the logit
    scale: float = 5e-3  # on log-scales
    rotation: float = 1e-3  # on local tangent-frame angles
    sh: float = 2.5e-3


@dataclass
class FusionConfig:
    total_iters: int = 7000
    warmup_iters: int = 1000
    cycle_interval: int = 1000
    schedule: Optional[ScheduleConfig] = None  # None -> (warmup_iters, total_iters)
    weights: LossWeights = field(default_factory=LossWeights)
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    densify_until: Optional[int] = None  # last iteration that may densify; None -> no limit
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    lr: LearningRates = field(default_factory=LearningRates)
    seed: int = 0
    fusion: bool = True  # False disables every oracle call
    lambda_max: float = 1.0  # multiplies the schedule; 0 turns generated supervision off
    expand: bool = True  # content expansion during fusion cycles
    fragments_per_cycle: int = 1
    fragment_length: int = 16
    spiral_radius: float = 0.5
    insert_stride: int = 4
    unreliable_cap: float = 0.6
    mono_recon: bool = True
    mono_gen: bool = True
    input_share: float = 2.0 / 3.0  # probability of drawing an input view once generated views exist
    init_opacity: float = 0.1
    sh_degree: int = 0
    background: tuple = (0.0, 0.0, 0.0)
    checkpoint_interval: int = 1000
    eval_each_cycle: bool = True

    def __post_init__(self):
        if self.schedule is None:
            # a run that ends inside the warm-up never uses the schedule
            self.schedule = ScheduleConfig(self.warmup_iters, max(self.total_iters, self.warmup_iters + 1))
        if self.cycle_interval < 1:
            raise ValueError("cycle_interval must be >= 1")
        if self.total_iters < 0 or self.warmup_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        s = self.schedule
        if not self.warmup_iters <= s.k_start < s.k_end:
            raise ValueError("need warmup_iters <= k_start < k_end")
        if s.k_end > self.total_iters > self.warmup_iters:
            raise ValueError("need k_end <= total_iters")
        if not 0 <= self.input_share <= 1 or self.lambda_max < 0:
            raise ValueError("input_share must lie in [0, 1] and lambda_max be >= 0")
        if self.fragments_per_cycle < 1 or self.fragment_length < 1 or self.insert_stride < 1:
            raise ValueError("fragment and stride settings must be >= 1")
        self.background = tuple(float(v) for v in self.background)

    def cycle_iterations(self):
        """Iterations at which a fusion cycle runs."""
        if not self.fusion:
            return []
        start = max(self.warmup_iters, 1)
        first = -(-start // self.cycle_interval) * self.cycle_interval
        return list(range(first, self.total_iters, self.cycle_interval))

    # serialization -----------------------------------------------------
    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict, base: Optional["FusionConfig"] = None) -> "FusionConfig":
        """Overlay ``d`` on ``base`` (defaults when None)."""
        cur = (base or cls()).to_dict()
        nested = {"schedule": ScheduleConfig, "weights": LossWeights, "densify": DensifyConfig,
                  "expansion": ExpansionConfig, "lr": LearningRates}
        names = {f.name for f in dataclasses.fields(cls)}
        explicit_schedule = "schedule" in d
        for key, value in d.items():
            if key not in names:
                raise SchemaViolation(f"unknown config key {key!r}", key)
            if key in nested and value is not None:
                if not isinstance(value, dict):
                    raise SchemaViolation(f"config key {key!r} must be an object", key)
                sub = {f.name for f in dataclasses.fields(nested[key])}
                bad = set(value) - sub
                if bad:
                    raise SchemaViolation(f"unknown key {sorted(bad)[0]!r} in {key!r}", key)
                merged = dict(cur[key] or {})
                merged.update(value)
                cur[key] = merged
            else:
                cur[key] = value
        if not explicit_schedule and ("warmup_iters" in d or "total_iters" in d):
            cur["schedule"] = None  # re-derive from the new iteration bounds
        kwargs = {}
        for key, value in cur.items():
            if key in nested and value is not None:
                value = nested[key](**value)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SchemaViolation(str(exc)) from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path, base=None):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise SchemaViolation("config must be a JSON object")
        return cls.from_dict(data, base)

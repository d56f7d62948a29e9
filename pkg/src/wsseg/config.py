"""Pipeline configuration: a flat key-value document (YAML or JSON).

Recognised keys::

    lambda_ob, lambda_bg, lambda_csd   loss weights (>= 0)
    sal_threshold                      saliency binarization, (0, 1)
    fg_threshold                       CAM activation threshold, (0, 1)
    conflict_policy                    "ignore" | "argmax"
    detach_prototypes                  bool, stop gradients through prototypes
    copy_ignore                        bool, let refinement copy 255 from the initial label
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import InvalidArgumentError
from .pseudo import CONFLICT_POLICIES, LabelGenConfig
from .relation import LossWeights

KEYS = ("lambda_ob", "lambda_bg", "lambda_csd", "sal_threshold", "fg_threshold",
        "conflict_policy", "detach_prototypes", "copy_ignore")


class ConfigError(InvalidArgumentError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


@dataclass(frozen=True)
class PipelineConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    labelgen: LabelGenConfig = field(default_factory=LabelGenConfig)
    detach_prototypes: bool = False
    copy_ignore: bool = True

    @property
    def sal_threshold(self) -> float:
        return self.labelgen.sal_threshold

    def to_dict(self) -> dict:
        out = {f.name: getattr(self.weights, f.name) for f in fields(self.weights)}
        out.update({f.name: getattr(self.labelgen, f.name) for f in fields(self.labelgen)})
        out["detach_prototypes"] = self.detach_prototypes
        out["copy_ignore"] = self.copy_ignore
        return out

    def updated(self, doc: dict | None) -> "PipelineConfig":
        """Return a copy with the keys of ``doc`` overriding current values."""
        if not doc:
            return self
        if not isinstance(doc, dict):
            raise ConfigError(["configuration must be a mapping"])
        problems = [f"unknown key {k!r}" for k in doc if k not in KEYS]
        merged = {**self.to_dict(), **{k: v for k, v in doc.items() if k in KEYS}}
        for k in ("lambda_ob", "lambda_bg", "lambda_csd", "sal_threshold", "fg_threshold"):
            v = merged[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                problems.append(f"{k} must be a number, got {v!r}")
            elif k.startswith("lambda") and not v >= 0:
                problems.append(f"{k} must be >= 0, got {v!r}")
            elif k.endswith("threshold") and not 0 < v < 1:
                problems.append(f"{k} must lie in (0, 1), got {v!r}")
        if merged["conflict_policy"] not in CONFLICT_POLICIES:
            problems.append(f"conflict_policy must be one of {CONFLICT_POLICIES}, got {merged['conflict_policy']!r}")
        for k in ("detach_prototypes", "copy_ignore"):
            if not isinstance(merged[k], bool):
                problems.append(f"{k} must be a boolean, got {merged[k]!r}")
        if problems:
            raise ConfigError(problems)
        weights = LossWeights(float(merged["lambda_ob"]), float(merged["lambda_bg"]),
                              float(merged["lambda_csd"]))
        labelgen = LabelGenConfig(float(merged["fg_threshold"]), float(merged["sal_threshold"]),
                                  merged["conflict_policy"])
        return PipelineConfig(weights, labelgen, merged["detach_prototypes"], merged["copy_ignore"])


def load_config(path=None, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    if path is None:
        return base
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return base.updated(doc)

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .backbone import PRESETS, BackboneConfig
from .errors import ConfigurationError
from .gcn import ViewGCNConfig
from .viewpoints import LAYOUTS, layout_viewpoints

logger = logging.getLogger(__name__)

AGGREGATORS = ("viewgcn", "maxpool")

# fields that change the shape or meaning of a trained model
MODEL_FIELDS = (
    "views",
    "normalize_viewpoints",
    "preset",
    "num_classes",
    "aggregator",
    "selector_hidden",
    "n_neighbors",
    "levels",
    "slope",
    "share_relation_mlp",
    "fps_seed_index",
)


@dataclass
class RunConfig:
    """
    Every setting of a run.

    Defaults follow the two-stage schedule: 30 backbone epochs at 5e-3, then 15 joint
    epochs at 1e-4 for the backbone and 5e-4 for the graph components, momentum 0.9
    and weight decay 1e-4 throughout.
    """

    seed: int = 0
    dataset: str = "data"
    out: str = "runs"

    views: str = "cube8"
    normalize_viewpoints: bool = False
    preset: str = "tiny"
    num_classes: int = 4
    frames_per_class: int = 200

    aggregator: str = "viewgcn"
    unclustered: bool = False
    selector_hidden: int = 64
    n_neighbors: int = 3
    levels: int = 3
    slope: float = 0.01
    share_relation_mlp: bool = True
    fps_seed_index: int = 0
    view_loss_weight: float = 1.0

    batch_size: int = 32
    epochs_backbone: int = 30
    epochs_gcn: int = 15
    lr_backbone_pretrain: float = 5e-3
    lr_backbone: float = 1e-4
    lr_gcn: float = 5e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_every: int = 10
    trials: int = 1

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys {unknown}")
        return cls(**payload)

    @classmethod
    def from_json(cls, path: Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"configuration file {path} does not exist")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            raise ConfigurationError(f"{path} is not valid JSON: {error}") from error
        return cls.from_dict(payload)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with the given fields replaced; None values are ignored."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def num_views(self) -> int:
        return len(self.viewpoints())

    @property
    def feature_dim(self) -> int:
        return PRESETS[self.preset][2]

    def viewpoints(self) -> np.ndarray:
        return layout_viewpoints(self.views, self.normalize_viewpoints)

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig.for_preset(self.preset, self.num_classes)

    def gcn_config(self) -> ViewGCNConfig:
        return ViewGCNConfig(
            num_views=self.num_views,
            feature_dim=self.feature_dim,
            num_classes=self.num_classes,
            selector_hidden=self.selector_hidden,
            levels=self.levels,
            n_neighbors=self.n_neighbors,
            slope=self.slope,
            share_relation_mlp=self.share_relation_mlp,
            fps_seed_index=self.fps_seed_index,
            view_loss_weight=self.view_loss_weight,
        )

    def model_config(self, stage: str = "joint") -> dict:
        """The settings a checkpoint of ``stage`` must agree with."""
        names = ("preset", "num_classes") if stage == "backbone" else MODEL_FIELDS
        values = asdict(self)
        return {name: values[name] for name in names}

    def config_hash(self, stage: str = "joint") -> str:
        canonical = json.dumps(self.model_config(stage), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def validate(self) -> "RunConfig":
        """
        Checks every field against the range its consumer accepts.

        Raises
        ------
        ConfigurationError
            Naming the first offending field.
        """
        if self.views not in LAYOUTS:
            raise ConfigurationError(f"views must be one of {LAYOUTS}, got '{self.views}'")
        if self.preset not in PRESETS:
            raise ConfigurationError(f"preset must be one of {sorted(PRESETS)}, got '{self.preset}'")
        if self.aggregator not in AGGREGATORS:
            raise ConfigurationError(f"aggregator must be one of {AGGREGATORS}, got '{self.aggregator}'")

        for name in ("num_classes", "batch_size"):
            if getattr(self, name) < 2:
                raise ConfigurationError(f"{name} must be at least 2, got {getattr(self, name)}")
        for name in ("frames_per_class", "selector_hidden", "levels", "lr_decay_every", "trials"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("epochs_backbone", "epochs_gcn", "seed"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("lr_backbone_pretrain", "lr_backbone", "lr_gcn", "weight_decay", "view_loss_weight"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0.0 <= self.slope < 1.0:
            raise ConfigurationError(f"slope must lie in [0, 1), got {self.slope}")

        # the hierarchy checks n_neighbors, levels and fps_seed_index against the layout
        self.gcn_config()
        return self


def load_config(path: Optional[Path] = None, **overrides) -> RunConfig:
    """Reads ``path`` (or the defaults), applies flag overrides and validates."""
    config = RunConfig.from_json(path) if path is not None else RunConfig()
    config = config.with_overrides(**overrides)
    logger.debug("run configuration %s", config)
    return config.validate()

"""Experiment configuration: dataclasses, flat key=value parsing, presets."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

BRANCH_MODES = ("full", "only_sr", "only_mc", "guided_sr", "guided_mc")
VALID_SCALES = (4, 8)


@dataclass
class ModelConfig:
    scale: int = 4
    stages: int = 4
    htl_depth: int = 6
    channels: int = 96
    heads: int = 6
    window: int = 8
    kernel: int = 3
    lambda_t: float = 0.5
    lambda_o: float = 0.5
    use_crme: bool = True
    use_pdtm: bool = True
    branch_mode: str = "full"

    @property
    def has_thermal_branch(self) -> bool:
        return self.branch_mode != "only_mc"

    @property
    def has_optical_branch(self) -> bool:
        return self.branch_mode != "only_sr"

    @property
    def has_mc_head(self) -> bool:
        return self.branch_mode in ("only_mc", "guided_mc")

    def validate(self) -> "ModelConfig":
        if self.scale not in VALID_SCALES:
            raise ConfigurationError(f"model.scale must be one of {VALID_SCALES}, got {self.scale}")
        for name in ("stages", "htl_depth", "channels", "heads", "window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"model.{name} must be >= 1")
        if self.channels % self.heads != 0:
            raise ConfigurationError(
                f"model.channels ({self.channels}) must be divisible by model.heads ({self.heads})"
            )
        if self.kernel % 2 != 1:
            raise ConfigurationError("model.kernel must be odd")
        if self.branch_mode not in BRANCH_MODES:
            raise ConfigurationError(
                f"model.branch_mode must be one of {BRANCH_MODES}, got {self.branch_mode!r}"
            )
        if self.branch_mode == "only_mc" and self.use_pdtm:
            raise ConfigurationError(
                "model.use_pdtm requires a thermal branch; disable it for branch_mode=only_mc"
            )
        return self


@dataclass
class LossWeights:
    lam: float = 0.03
    mc_aux: float | None = None  # resolved per branch mode, see resolve_mc_aux
    bins: int = 256

    def validate(self) -> "LossWeights":
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"loss.lambda must lie in [0, 1], got {self.lam}")
        if self.mc_aux is not None and self.mc_aux < 0:
            raise ConfigurationError("loss.mc_aux must be >= 0")
        if self.bins < 2:
            raise ConfigurationError("loss.bins must be >= 2")
        return self

    def resolve_mc_aux(self, branch_mode: str) -> float:
        if self.mc_aux is not None:
            return self.mc_aux
        return 1.0 if branch_mode in ("only_mc", "guided_mc") else 0.0


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    def validate(self) -> "OptimizerConfig":
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("optimizer betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigurationError("optimizer.eps must be > 0")
        return self


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr: float = 1e-4
    lr_halving_period: int = 200  # epochs
    batch: int = 8
    epochs: int = 1000
    max_steps: int | None = None
    seed: int = 0
    data: str = ""
    out_dir: str = "runs/default"
    dtype: str = "float32"
    grad_clip: float = 0.0  # 0 disables clipping
    checkpoint_every: int = 500
    log_every: int = 1
    patch: int = 48  # LR crop size during training
    eval_every: int = 0  # 0 disables in-training evaluation
    target_psnr: float | None = None  # early stop once reached (needs eval_every)

    def validate(self) -> "ExperimentConfig":
        self.model.validate()
        self.loss.validate()
        self.optimizer.validate()
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.lr_halving_period < 1:
            raise ConfigurationError("lr_halving_period must be >= 1")
        if self.batch < 1:
            raise ConfigurationError("batch must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64")
        if self.grad_clip < 0:
            raise ConfigurationError("grad_clip must be >= 0")
        if self.patch < 8:
            raise ConfigurationError("patch must be >= 8")
        if self.target_psnr is not None and self.eval_every < 1:
            raise ConfigurationError("target_psnr requires eval_every >= 1")
        return self


def desk_preset(cfg: ExperimentConfig) -> ExperimentConfig:
    """Small configuration sized for CPU-scale experiments on 256-px scenes."""
    cfg.model.stages = 2
    cfg.model.htl_depth = 2
    cfg.model.channels = 32
    cfg.model.heads = 4
    cfg.batch = 2
    cfg.max_steps = 2000
    return cfg


PRESETS = {"reference": lambda cfg: cfg, "desk": desk_preset}

# config-file key -> (attribute path, parser)
def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_optional_int(s: str):
    return None if s.strip().lower() == "none" else int(s)


def _parse_optional_float(s: str):
    return None if s.strip().lower() == "none" else float(s)


_KEY_TABLE = {
    "model.scale": ("model.scale", int),
    "model.stages": ("model.stages", int),
    "model.htl_depth": ("model.htl_depth", int),
    "model.channels": ("model.channels", int),
    "model.heads": ("model.heads", int),
    "model.window": ("model.window", int),
    "model.kernel": ("model.kernel", int),
    "model.lambda_t": ("model.lambda_t", float),
    "model.lambda_o": ("model.lambda_o", float),
    "model.use_crme": ("model.use_crme", _parse_bool),
    "model.use_pdtm": ("model.use_pdtm", _parse_bool),
    "model.branch_mode": ("model.branch_mode", str),
    "loss.lambda": ("loss.lam", float),
    "loss.mc_aux": ("loss.mc_aux", float),
    "loss.bins": ("loss.bins", int),
    "optimizer.beta1": ("optimizer.beta1", float),
    "optimizer.beta2": ("optimizer.beta2", float),
    "optimizer.eps": ("optimizer.eps", float),
    "lr": ("lr", float),
    "lr_halving_period": ("lr_halving_period", int),
    "batch": ("batch", int),
    "epochs": ("epochs", int),
    "max_steps": ("max_steps", _parse_optional_int),
    "seed": ("seed", int),
    "data": ("data", str),
    "out_dir": ("out_dir", str),
    "dtype": ("dtype", str),
    "grad_clip": ("grad_clip", float),
    "checkpoint_every": ("checkpoint_every", int),
    "log_every": ("log_every", int),
    "patch": ("patch", int),
    "eval_every": ("eval_every", int),
    "target_psnr": ("target_psnr", _parse_optional_float),
}


def _set_path(cfg: ExperimentConfig, path: str, value) -> None:
    obj = cfg
    parts = path.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    setattr(obj, parts[-1], value)


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse a flat ``key = value`` config. Unknown keys are rejected with line numbers."""
    cfg = ExperimentConfig()
    preset_name = "reference"
    assignments: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "preset":
            if value not in PRESETS:
                raise ConfigurationError(
                    f"{source}:{lineno}: unknown preset {value!r} (choose from {sorted(PRESETS)})"
                )
            preset_name = value
            continue
        if key not in _KEY_TABLE:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        assignments.append((lineno, key, value))

    cfg = PRESETS[preset_name](cfg)
    for lineno, key, value in assignments:
        path, parser = _KEY_TABLE[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
        _set_path(cfg, path, parsed)

    try:
        cfg.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def config_to_text(cfg: ExperimentConfig) -> str:
    """Resolved config as sorted key=value lines (used for echoing and hashing)."""
    lines = []
    for key, (path, _) in _KEY_TABLE.items():
        obj = cfg
        for p in path.split("."):
            obj = getattr(obj, p)
        if key == "loss.mc_aux" and obj is None:
            obj = cfg.loss.resolve_mc_aux(cfg.model.branch_mode)
        lines.append(f"{key} = {obj}")
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()


def replace(cfg, **kwargs):
    return dataclasses.replace(cfg, **kwargs)

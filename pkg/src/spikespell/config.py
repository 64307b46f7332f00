"""Pipeline configuration: a flat ``section.key = value`` text format.

Every key has a default; unknown keys are rejected so typos fail loudly.
``parse_value`` keeps the grammar small: ints, floats, booleans
(true/false) and bare strings. The same keys can be overridden from the
command line with repeated ``--set section.key=value`` flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .deploy import LifParamsDeploy, tau_m_from_beta
from .dvs import DvsConfig
from .network import LifParamsTrain
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SaliencyConfig:
    orientations: int = 8
    r0: float = 10.0
    rho: float = 0.1
    kernel_size: int = 0  # 0 -> 4*r0 + 1
    gain: float = 1.0
    steps: int = 35
    roi_side: int = 128  # clamped to the sensor at use sites
    mode: str = "sva"  # or "center_crop"


@dataclass(frozen=True)
class RasterConfig:
    dt_us: int = 1000


@dataclass(frozen=True)
class NetConfig:
    l1_spiking: bool = True


@dataclass(frozen=True)
class QuantConfig:
    f_bits: int = 8


@dataclass(frozen=True)
class EnergyConfig:
    p_s_nj: float = 8.0
    stages: int = 2
    dt_ms: float = 1.0
    window_ms: float = 35.0
    p_idle_mw: float = 0.0
    p_baseline_mw: float = 0.0
    p_per_neuron_mw: float = 0.0
    n_neurons: int = 0


# deploy.tau_m_ms is derived from lif.beta and deploy.dt_ms, never set directly
_DERIVED_KEYS = {"deploy.tau_m_ms"}


@dataclass(frozen=True)
class PipelineConfig:
    dvs: DvsConfig = field(default_factory=DvsConfig)
    saliency: SaliencyConfig = field(default_factory=SaliencyConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    net: NetConfig = field(default_factory=NetConfig)
    lif: LifParamsTrain = field(default_factory=LifParamsTrain)
    train: TrainConfig = field(default_factory=TrainConfig)
    deploy: LifParamsDeploy = field(default_factory=LifParamsDeploy)
    quant: QuantConfig = field(default_factory=QuantConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)

    def with_derived(self) -> "PipelineConfig":
        """Recompute deploy.tau_m_ms from lif.beta and the deploy clock."""
        tau = tau_m_from_beta(self.lif.beta, self.deploy.dt_ms)
        return replace(self, deploy=replace(self.deploy, tau_m_ms=tau))


def _sections(cfg: PipelineConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def known_keys(cfg: PipelineConfig | None = None) -> dict:
    """Maps 'section.key' -> field type for every settable key."""
    cfg = cfg or PipelineConfig()
    out = {}
    for sec_name, sec in _sections(cfg).items():
        for f in fields(sec):
            key = f"{sec_name}.{f.name}"
            if key not in _DERIVED_KEYS:
                out[key] = type(getattr(sec, f.name))
    return out


def parse_value(text: str, target_type: type):
    text = text.strip()
    if target_type is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text


def apply_overrides(cfg: PipelineConfig, items: dict) -> PipelineConfig:
    """Apply {'section.key': raw string} onto a config, with validation."""
    keys = known_keys(cfg)
    staged: dict[str, dict] = {}
    for key, raw in items.items():
        if key not in keys:
            raise ConfigError(f"unknown key {key!r}")
        sec, name = key.split(".", 1)
        staged.setdefault(sec, {})[name] = parse_value(raw, keys[key])
    sections = _sections(cfg)
    updates = {}
    for sec, vals in staged.items():
        try:
            updates[sec] = replace(sections[sec], **vals)
        except ValueError as exc:
            raise ConfigError(f"invalid value in section {sec!r}: {exc}") from exc
    return replace(cfg, **updates).with_derived()


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        items[key.strip()] = raw
    return apply_overrides(base or PipelineConfig(), items)


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def default_config_text() -> str:
    """Render every key with its default, as a documented starting point."""
    cfg = PipelineConfig()
    lines = []
    for sec_name, sec in _sections(cfg).items():
        lines.append(f"# [{sec_name}]")
        for f in fields(sec):
            key = f"{sec_name}.{f.name}"
            if key in _DERIVED_KEYS:
                continue
            val = getattr(sec, f.name)
            if isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)

"""Run configuration: flat dotted-key text files, presets, validation.

Config files are plain text, one ``section.key = value`` per line with ``#``
comments.  Every hyperparameter has a key; the "paper" preset pins the
published values, "desk" is the CPU-minutes default, "tiny" the gradient-
check geometry.
"""

from dataclasses import dataclass, field, fields as dc_fields

from .contrastive import ContrastiveConfig
from .errors import ConfigError
from .model import AblationConfig, ModelConfig
from .reconstruction import LossWeights
from .synth import SynthSpec

_MODALITY_KEYS = ("t", "v", "a")


@dataclass
class RunConfig:
    seed: int = 0
    precision: str = "standard"
    model: ModelConfig = None
    loss: LossWeights = None
    contrastive: ContrastiveConfig = None
    ablation: AblationConfig = None
    data: SynthSpec = None
    data_dir: str = ""              # when set, load datasets instead of generating
    epochs: int = 10
    batch_size: int = 32
    peak_lr: float = 2e-3
    warmup_frac: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    threads: int = 1

    def __post_init__(self):
        self.model = self.model or ModelConfig()
        self.loss = self.loss or LossWeights()
        self.contrastive = self.contrastive or ContrastiveConfig()
        self.ablation = self.ablation or AblationConfig()
        self.data = self.data or SynthSpec()
        if self.precision not in ("standard", "verify"):
            raise ConfigError(f"unknown precision {self.precision!r}", field="precision")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", field="train.epochs")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1", field="train.batch_size")
        # model geometry follows the data geometry unless set explicitly
        self.model.raw_dims = dict(self.data.raw_dims)
        self.model.seq_lens = dict(self.data.seq_lens)
        self.model.n_labels = self.data.n_labels

    def to_flat(self):
        """The full configuration as a flat dotted-key dict (config echo)."""
        flat = {"seed": self.seed, "precision": self.precision,
                "train.epochs": self.epochs, "train.batch_size": self.batch_size,
                "optim.peak_lr": self.peak_lr, "optim.warmup_frac": self.warmup_frac,
                "optim.beta1": self.beta1, "optim.beta2": self.beta2, "optim.eps": self.eps,
                "threads": self.threads,
                "model.d": self.model.hidden, "model.d_z": self.model.latent,
                "model.heads": self.model.heads, "model.ffn_dim": self.model.ffn_dim,
                "contrastive.temperature": self.contrastive.temperature,
                "contrastive.queue_capacity": self.contrastive.queue_capacity,
                "contrastive.momentum": self.contrastive.momentum,
                "data.dir": self.data_dir,
                "data.n_samples": self.data.n_samples, "data.n_labels": self.data.n_labels,
                "data.signal": self.data.signal, "data.noise": self.data.noise,
                "data.seed": self.data.seed,
                "data.priors": ",".join(f"{p:g}" for p in self.data.label_priors),
                "data.split_fractions": ",".join(f"{p:g}" for p in self.data.split_fractions),
                "data.preference": ",".join(str(p) for p in self.data.preference)}
        for m in _MODALITY_KEYS:
            flat[f"model.layers_{m}"] = self.model.layers[m]
            flat[f"data.seq_len_{m}"] = self.data.seq_lens[m]
            flat[f"data.raw_dim_{m}"] = self.data.raw_dims[m]
        for f in dc_fields(LossWeights):
            flat[f"loss.{f.name}"] = getattr(self.loss, f.name)
        for f in dc_fields(AblationConfig):
            flat[f"ablation.{f.name}"] = getattr(self.ablation, f.name)
        return flat


def _parse_value(raw):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",")]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text):
    """Flat dict from ``key = value`` lines."""
    flat = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", field=f"line:{lineno}")
        key, _, raw = line.partition("=")
        flat[key.strip()] = _parse_value(raw)
    return flat


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


PRESETS = {
    "desk": {},
    "paper": {
        "model.d": 256, "model.d_z": 64, "model.heads": 4,
        "model.layers_t": 6, "model.layers_v": 4, "model.layers_a": 4,
        "contrastive.queue_capacity": 8192,
        "optim.peak_lr": 5e-5, "train.batch_size": 64, "train.epochs": 20,
        "data.seq_len_t": 60, "data.seq_len_v": 60, "data.seq_len_a": 60,
        "data.raw_dim_t": 300, "data.raw_dim_v": 35, "data.raw_dim_a": 74,
    },
    "tiny": {
        "model.d": 8, "model.d_z": 4, "model.heads": 2, "model.ffn_dim": 16,
        "model.layers_t": 1, "model.layers_v": 1, "model.layers_a": 1,
        "contrastive.queue_capacity": 64,
        "train.batch_size": 2, "train.epochs": 2,
        "data.n_samples": 16, "data.n_labels": 3,
        "data.seq_len_t": 5, "data.seq_len_v": 5, "data.seq_len_a": 5,
        "data.raw_dim_t": 6, "data.raw_dim_v": 5, "data.raw_dim_a": 4,
        "data.priors": [0.5, 0.4, 0.3],
    },
}


def build_config(flat=None, preset="desk", overrides=None):
    """RunConfig from preset + flat dict + overrides, validating every key."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}", field="preset")
    merged = dict(PRESETS[preset])
    merged.update(flat or {})
    merged.update(overrides or {})

    def pop(key, default):
        return merged.pop(key, default)

    def pop_list(key, default):
        value = merged.pop(key, default)
        if isinstance(value, str) and value == "":
            return default
        if isinstance(value, (int, float)):
            return [value]
        return list(value) if value is not None else default

    loss_kwargs = {f.name: pop(f"loss.{f.name}", f.default) for f in dc_fields(LossWeights)}
    abl_kwargs = {f.name: pop(f"ablation.{f.name}", f.default) for f in dc_fields(AblationConfig)}

    layers = {m: int(pop(f"model.layers_{m}", 1)) for m in _MODALITY_KEYS}
    seq_lens = {m: int(pop(f"data.seq_len_{m}", 20)) for m in _MODALITY_KEYS}
    raw_dims = {m: int(pop(f"data.raw_dim_{m}", {"t": 16, "v": 12, "a": 14}[m]))
                for m in _MODALITY_KEYS}

    data = SynthSpec(
        n_samples=int(pop("data.n_samples", 2500)),
        n_labels=int(pop("data.n_labels", 6)),
        seq_lens=seq_lens, raw_dims=dict(raw_dims),
        label_priors=pop_list("data.priors", None),
        preference=[int(p) for p in pop_list("data.preference", [])] or None,
        signal=float(pop("data.signal", 2.0)),
        noise=float(pop("data.noise", 1.0)),
        seed=int(pop("data.seed", 0)),
        split_fractions=tuple(pop_list("data.split_fractions", [0.8, 0.1, 0.1])))

    model = ModelConfig(
        n_labels=data.n_labels,
        hidden=int(pop("model.d", 32)), latent=int(pop("model.d_z", 16)),
        heads=int(pop("model.heads", 4)), ffn_dim=int(pop("model.ffn_dim", 0)),
        layers=layers, raw_dims=dict(raw_dims), seq_lens=dict(seq_lens))

    cfg = RunConfig(
        seed=int(pop("seed", 0)),
        precision=str(pop("precision", "standard")),
        model=model,
        loss=LossWeights(**loss_kwargs),
        contrastive=ContrastiveConfig(
            temperature=float(pop("contrastive.temperature", 0.1)),
            queue_capacity=int(pop("contrastive.queue_capacity", 512)),
            momentum=float(pop("contrastive.momentum", 0.99))),
        ablation=AblationConfig(**abl_kwargs),
        data=data,
        data_dir=str(pop("data.dir", "")),
        epochs=int(pop("train.epochs", 10)),
        batch_size=int(pop("train.batch_size", 32)),
        peak_lr=float(pop("optim.peak_lr", 2e-3)),
        warmup_frac=float(pop("optim.warmup_frac", 0.1)),
        beta1=float(pop("optim.beta1", 0.9)),
        beta2=float(pop("optim.beta2", 0.999)),
        eps=float(pop("optim.eps", 1e-8)),
        threads=int(pop("threads", 1)))

    if merged:
        raise ConfigError(f"unknown config key {sorted(merged)[0]!r}", field=sorted(merged)[0])
    return cfg


def load_run_config(path=None, preset="desk", overrides=None):
    flat = read_config_file(path) if path else {}
    return build_config(flat, preset=preset, overrides=overrides)

"""Run configuration: nested dataclasses stored as a sectioned key = value file."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import os
import re
from dataclasses import dataclass, field

from .data import ShapeSpec
from .densify import DensifyConfig
from .errors import InvalidArgumentError
from .flow import ScheduleConfig
from .net import NetArch

SEED_ENV = "FLOWUP_SEED"

DEFAULT_TRAIN_SHAPES = (
    "sphere(radius=1.0)",
    "torus(major=1.0,minor=0.35)",
    "ellipsoid(a=1.0,b=0.7,c=0.5)",
    "cylinder(radius=0.5,height=1.5)",
    "plane-with-bump(extent=1.0,height=0.5,width=0.35)",
    "torus(major=1.0,minor=0.2)",
)
DEFAULT_EVAL_SHAPES = (
    "ellipsoid(a=1.0,b=0.8,c=0.6)",
    "plane-with-bump(extent=1.0,height=0.35,width=0.45)",
)

_SHAPE_RE = re.compile(r"^\s*([a-z0-9-]+)\s*(?:\((.*)\))?\s*$")


def parse_shape(text: str) -> ShapeSpec:
    """``kind(key=value,...)``; numeric values become floats."""
    m = _SHAPE_RE.match(text)
    if not m:
        raise InvalidArgumentError(f"cannot parse shape spec {text!r}")
    params = {}
    if m.group(2):
        for item in m.group(2).split(","):
            if not item.strip():
                continue
            if "=" not in item:
                raise InvalidArgumentError(f"shape parameter {item!r} is not key=value")
            k, v = (s.strip() for s in item.split("=", 1))
            try:
                params[k] = float(v)
            except ValueError:
                params[k] = v
    return ShapeSpec(m.group(1), params, name=text.strip())


def format_shape(spec: ShapeSpec) -> str:
    inner = ",".join(f"{k}={v}" for k, v in spec.params.items())
    return f"{spec.kind}({inner})"


@dataclass
class DataSection:
    train_shapes: tuple = DEFAULT_TRAIN_SHAPES
    eval_shapes: tuple = DEFAULT_EVAL_SHAPES
    patches_per_shape: int = 32
    surface_points: int = 8192
    dense_size: int = 1024
    sparse_size: int = 256
    oversample: int = 4
    out_dir: str = "data"

    @property
    def rate(self) -> int:
        return self.dense_size // self.sparse_size


@dataclass
class DensifySection:
    gamma: int = 4
    eta: float = 0.01
    # distinct noise draws per patch before they repeat; 0 means a new draw every epoch
    noise_variants: int = 0


@dataclass
class FlowSection:
    t_law: str = "cosine"
    num_steps: int = 5
    sampler_mode: str = "euler"
    # negative: reuse the training eta at inference
    inference_eta: float = -1.0


@dataclass
class NetSection:
    local_k: int = 8
    # 1 pools enc0 over each point's neighbourhood edges instead of concatenating offsets
    edge_pool: int = 0
    enc_hidden: int = 64
    point_dim: int = 128
    global_dim: int = 128
    time_dim: int = 64
    dec_hidden: int = 64
    time_max_freq: int = 10000
    seed: int = 0


@dataclass
class OptimSection:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 8
    iterations: int = 1000
    # constant or cosine (decays to zero at the last iteration)
    lr_schedule: str = "constant"
    # decay of the weight average used for sampling; 0 samples with the raw weights
    ema: float = 0.0


@dataclass
class TransportSection:
    align: bool = True
    solver: str = "auto"
    epsilon: float = 1e-3


@dataclass
class RunSection:
    seed: int = 0
    workers: int = 1
    method: str = "flow"
    ddpm_train_steps: int = 100
    checkpoint: str = "model.pufm"
    loss_log: str = "loss.log"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    densify: DensifySection = field(default_factory=DensifySection)
    flow: FlowSection = field(default_factory=FlowSection)
    net: NetSection = field(default_factory=NetSection)
    optim: OptimSection = field(default_factory=OptimSection)
    transport: TransportSection = field(default_factory=TransportSection)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> "RunConfig":
        if self.densify.gamma != self.data.rate:
            raise InvalidArgumentError(
                f"densify.gamma={self.densify.gamma} must equal the patch rate {self.data.rate}")
        if self.data.dense_size % self.data.sparse_size:
            raise InvalidArgumentError("data.dense_size must be a multiple of data.sparse_size")
        if self.run.method not in ("flow", "ddpm"):
            raise InvalidArgumentError(f"run.method must be flow or ddpm, got {self.run.method!r}")
        if self.transport.solver not in ("auto", "exact", "auction"):
            raise InvalidArgumentError(f"unknown transport.solver {self.transport.solver!r}")
        if self.optim.batch < 1 or self.optim.iterations < 0:
            raise InvalidArgumentError("optim.batch must be >= 1 and optim.iterations >= 0")
        if self.optim.lr_schedule not in ("constant", "cosine"):
            raise InvalidArgumentError(f"optim.lr_schedule must be constant or cosine, got {self.optim.lr_schedule!r}")
        if not 0.0 <= self.optim.ema < 1.0:
            raise InvalidArgumentError(f"optim.ema must be in [0, 1), got {self.optim.ema}")
        self.schedule()
        self.densify_config()
        self.arch()
        for s in self.data.train_shapes + self.data.eval_shapes:
            parse_shape(s)
        return self

    # typed views used by the library code
    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(self.flow.t_law, self.flow.num_steps, self.flow.sampler_mode)

    def densify_config(self, inference: bool = False) -> DensifyConfig:
        eta = self.densify.eta
        if inference and self.flow.inference_eta >= 0:
            eta = self.flow.inference_eta
        return DensifyConfig(self.densify.gamma, eta, self.run.seed)

    def arch(self) -> NetArch:
        n = self.net
        return NetArch(in_dim=3, cond_dim=3 if self.run.method == "ddpm" else 0, local_k=n.local_k,
                       enc_hidden=n.enc_hidden, point_dim=n.point_dim, global_dim=n.global_dim,
                       time_dim=n.time_dim, dec_hidden=n.dec_hidden, time_max_freq=n.time_max_freq,
                       edge_pool=n.edge_pool)

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            cp[f.name] = {k: _fmt(v) for k, v in dataclasses.asdict(section).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str, env: dict | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise InvalidArgumentError(f"malformed config: {exc}") from None
        cfg = cls()
        known = {f.name: f for f in dataclasses.fields(cfg)}
        for name in cp.sections():
            if name not in known:
                raise InvalidArgumentError(f"unknown config section [{name}]")
            section = getattr(cfg, name)
            types = {f.name: f for f in dataclasses.fields(section)}
            for key, raw in cp[name].items():
                if key not in types:
                    raise InvalidArgumentError(f"unknown key {key!r} in section [{name}]")
                setattr(section, key, _parse(raw, getattr(section, key), f"{name}.{key}"))
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            cfg.run.seed = _parse(env[SEED_ENV], 0, SEED_ENV)
        return cfg.validate()

    @classmethod
    def load(cls, path, env: dict | None = None) -> "RunConfig":
        try:
            text = open(path, encoding="utf-8").read()
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, env)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "; ".join(v)
    return str(v)


def _parse(raw: str, current, what: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(s.strip() for s in raw.split(";") if s.strip())
    except ValueError:
        raise InvalidArgumentError(f"bad value {raw!r} for {what}") from None
    return raw

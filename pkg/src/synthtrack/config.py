"""JSON pipeline configuration with strict key checking and named presets."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .embedcluster import ClusterParams
from .exceptions import ConfigError
from .hela import HelaConfig
from .metrics import AogmWeights
from .microvilli import MicrovilliConfig
from .refine import RefineOptions, RegistrationOptions
from .render import AppearanceParams

SCENARIOS = ("hela", "microvilli")


def _strict(cls, data, where, exclude=()):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _tuples(obj, names):
    for n in names:
        v = getattr(obj, n)
        if isinstance(v, list):
            setattr(obj, n, tuple(v))
    return obj


@dataclass
class EmbeddingOptions:
    source: str = "oracle"   # "oracle" or "file"
    dim: int = 8
    noise_sigma: float = 0.0
    min_distance: float = 0.1

    def validate(self):
        if self.source not in ("oracle", "file"):
            raise ConfigError("embedding.source must be 'oracle' or 'file'")
        if self.dim < 2:
            raise ConfigError("embedding.dim must be >= 2")
        if self.noise_sigma < 0:
            raise ConfigError("embedding.noise_sigma must be >= 0")
        return self


@dataclass
class IOOptions:
    out_dir: str = "run"
    frames_dir: str | None = None
    frames_pattern: str = "t%03d.png"
    embeddings_path: str | None = None


@dataclass
class PipelineConfig:
    scenario: str = "hela"
    seed: int = 0
    n_videos: int = 1
    split_quadrants: bool = False
    simulator: object = None
    appearance: AppearanceParams = field(default_factory=AppearanceParams)
    binarize: object = "otsu"
    refine: RefineOptions = field(default_factory=lambda: RefineOptions(enable_ad=False, enable_ac=False))
    embedding: EmbeddingOptions = field(default_factory=EmbeddingOptions)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    weights: AogmWeights = field(default_factory=AogmWeights)
    io: IOOptions = field(default_factory=IOOptions)

    def __post_init__(self):
        if self.simulator is None:
            self.simulator = HelaConfig() if self.scenario == "hela" else MicrovilliConfig()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        expected = HelaConfig if self.scenario == "hela" else MicrovilliConfig
        if not isinstance(self.simulator, expected):
            raise ConfigError(f"simulator block does not match scenario {self.scenario!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**63:
            raise ConfigError("seed must be a non-negative integer")
        if int(self.n_videos) != self.n_videos or self.n_videos < 1:
            raise ConfigError("n_videos must be a positive integer")
        if not (self.binarize == "otsu" or (isinstance(self.binarize, (int, float))
                                            and not isinstance(self.binarize, bool)
                                            and 0.0 <= self.binarize <= 1.0)):
            raise ConfigError("binarize must be 'otsu' or a threshold in [0, 1]")
        self.simulator.validate()
        self.appearance.validate()
        self.refine.validate()
        self.embedding.validate()
        self.cluster.validate()
        if self.embedding.source == "file" and not self.io.embeddings_path:
            raise ConfigError("embedding.source 'file' needs io.embeddings_path")
        return self

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        sim = self.simulator.to_dict()
        sim.pop("seed")
        app = self.appearance.to_dict()
        app.pop("seed")
        ref = asdict(self.refine)
        ref["registration"] = self.refine.registration.to_dict()
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "n_videos": self.n_videos,
            "split_quadrants": self.split_quadrants,
            "simulator": sim,
            "appearance": app,
            "binarize": self.binarize,
            "refine": ref,
            "embedding": asdict(self.embedding),
            "cluster": self.cluster.to_dict(),
            "weights": asdict(self.weights),
            "io": asdict(self.io),
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = copy.deepcopy(data)
        top = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - top)
        if unknown:
            raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
        scenario = data.get("scenario", "hela")
        if scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
        sim_cls = HelaConfig if scenario == "hela" else MicrovilliConfig
        kw = {k: data[k] for k in ("scenario", "seed", "n_videos", "split_quadrants", "binarize")
              if k in data}
        kw["simulator"] = _tuples(_strict(sim_cls, data.get("simulator", {}), "simulator",
                                          exclude=("seed",)),
                                  ("count_range", "width_range", "length_range")
                                  if scenario == "microvilli" else ("radius_range",))
        kw["appearance"] = _strict(AppearanceParams, data.get("appearance", {}), "appearance",
                                   exclude=("seed",))
        ref = dict(data.get("refine", {"enable_ad": False, "enable_ac": False}))
        reg = _tuples(_strict(RegistrationOptions, ref.pop("registration", {}), "refine.registration"),
                      ("levels",))
        ref.setdefault("enable_ad", False)
        ref.setdefault("enable_ac", False)
        kw["refine"] = _strict(RefineOptions, {**ref, "registration": reg}, "refine")
        kw["embedding"] = _strict(EmbeddingOptions, data.get("embedding", {}), "embedding")
        kw["cluster"] = _strict(ClusterParams, data.get("cluster", {}), "cluster")
        try:
            kw["weights"] = _strict(AogmWeights, data.get("weights", {}), "weights")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        kw["io"] = _strict(IOOptions, data.get("io", {}), "io")
        return cls(**kw).validate()

    def to_json(self):
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def digest(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def canonical_json(data):
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_json(fh.read())


def set_path(data, dotted, value):
    """Set ``a.b.c`` in a nested dict, creating intermediate objects."""
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not an object")
    cur[keys[-1]] = value
    return data


def merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ---------------------------------------------------------------------------
# desk-scale experiment presets


def _microvilli(n_videos, frames, split=False, count_range=None):
    sim = {"canvas_w": 140, "canvas_h": 140, "target_w": 128, "target_h": 128,
           "frame_count": frames, "object_count": 8, "length_range": [10, 20]}
    if count_range:
        sim["count_range"] = count_range
    return {"scenario": "microvilli", "n_videos": n_videos, "split_quadrants": split,
            "simulator": sim, "embedding": {"dim": 8, "noise_sigma": 0.05},
            "cluster": {"bandwidth": 0.5}}


def _hela(ad, ac):
    return {"scenario": "hela", "n_videos": 2,
            "simulator": {"canvas_w": 140, "canvas_h": 140, "target_w": 128, "target_h": 128,
                          "object_count": 10, "frame_count": 20, "radius_range": [6, 10],
                          "n_appear": 2, "n_disappear": 2, "n_mitosis": 1},
            "refine": {"enable_ad": ad, "enable_ac": ac},
            "embedding": {"dim": 8, "noise_sigma": 0.05},
            "cluster": {"bandwidth": 0.5}}


PRESETS = {
    "microvilli-1-10f": ("Microvilli-1", _microvilli(1, 10)),
    "microvilli-1": ("Microvilli-1", _microvilli(1, 20)),
    "microvilli-5": ("Microvilli-5", _microvilli(5, 20, count_range=[5, 14])),
    "microvilli-20": ("Microvilli-20", _microvilli(5, 20, split=True, count_range=[5, 14])),
    "hela": ("HeLa", _hela(False, False)),
    "hela-ad": ("HeLa-AD", _hela(True, False)),
    "hela-ad-ac": ("HeLa-AD+AC", _hela(True, True)),
}

SUITES = {
    "microvilli": ["microvilli-1-10f", "microvilli-1", "microvilli-5", "microvilli-20"],
    "hela": ["hela", "hela-ad", "hela-ad-ac"],
}


def preset(name, seed=0, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    data = merge(PRESETS[name][1], {"seed": seed})
    return PipelineConfig.from_dict(merge(data, overrides))

"""Run configuration: a sectioned ``key = value`` text file.

Every key has a default (the experimental values the simulations are built
around); unknown sections or keys are errors so that typos do not pass
silently.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

from .biphoton import DGSource
from .camera import CameraModel
from .optics import SlitSpec

# section -> key -> (type, default)
SCHEMA = {
    "source": {"sigma_plus_um": (float, 140.2), "sigma_minus_um": (float, 12.6),
               "lambda_nm": (float, 810.0)},
    "lens": {"u_mm": (float, 60.0), "f_mm": (float, 40.0)},
    "camera": {"width": (int, 64), "height": (int, 64), "pitch_um": (float, 16.0),
               "eta": (float, 0.6), "mu": (float, 0.0), "bloom_prob": (float, 0.0),
               "bloom_sigma_px": (float, 1.9), "bg_rate": (float, 0.0), "seed": (int, 0)},
    "slit": {"d_um": (float, 400.0), "a_um": (float, 150.0), "f3_mm": (float, 125.0),
             "relay_f1_mm": (float, 75.0), "relay_f2_mm": (float, 150.0)},
    "run": {"frames": (int, 100000), "roi": (str, "full"), "output": (str, "out"),
            "workers": (int, 1), "grid_n": (int, 1024)},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending ``section.key``."""


@dataclass(frozen=True)
class RunConfig:
    values: dict
    text: str = ""

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def digest(self) -> str:
        """SHA-256 of the resolved configuration (independent of file layout)."""
        canon = "\n".join(f"{s}.{k}={self.values[s][k]!r}" for s in sorted(self.values)
                          for k in sorted(self.values[s]))
        return hashlib.sha256(canon.encode()).hexdigest()

    def source(self) -> DGSource:
        s = self.values["source"]
        return _build("source", lambda: DGSource(s["sigma_plus_um"] * 1e-6, s["sigma_minus_um"] * 1e-6,
                                                 s["lambda_nm"] * 1e-9))

    def camera(self) -> CameraModel:
        c = self.values["camera"]
        return _build("camera", lambda: CameraModel(
            width=c["width"], height=c["height"], pitch=c["pitch_um"] * 1e-6, eta=c["eta"],
            mu=c["mu"], bloom_prob=c["bloom_prob"], bloom_sigma=c["bloom_sigma_px"],
            bg_rate=c["bg_rate"], seed=c["seed"]))

    def slit(self) -> SlitSpec:
        s = self.values["slit"]
        return _build("slit", lambda: SlitSpec(s["d_um"] * 1e-6, s["a_um"] * 1e-6))

    def lens(self) -> tuple[float, float]:
        u, f = self.values["lens"]["u_mm"] * 1e-3, self.values["lens"]["f_mm"] * 1e-3
        if not (u > f > 0):
            raise ConfigError(f"lens.u_mm must exceed lens.f_mm > 0, got u={u * 1e3}, f={f * 1e3}")
        return u, f

    def roi(self):
        text = self.values["run"]["roi"].strip()
        if text.lower() == "full":
            return None
        try:
            parts = tuple(int(p) for p in text.split(","))
        except ValueError:
            parts = ()
        if len(parts) != 4:
            raise ConfigError(f"run.roi must be 'full' or 'x0,y0,w,h', got {text!r}")
        return parts

    def with_overrides(self, **kw) -> "RunConfig":
        """Copy with ``section__key=value`` overrides."""
        vals = {s: dict(v) for s, v in self.values.items()}
        for name, v in kw.items():
            s, k = name.split("__")
            vals[s][k] = v
        return RunConfig(vals, self.text)


def _build(section, factory):
    try:
        return factory()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def defaults() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; missing keys take their defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    vals = defaults().values
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            typ = SCHEMA[section][key][0]
            try:
                vals[section][key] = typ(raw.strip())
            except ValueError:
                raise ConfigError(f"{section}.{key}: cannot read {raw!r} as {typ.__name__}") from None
    cfg = RunConfig(vals, text)
    cfg.source(), cfg.camera(), cfg.slit(), cfg.lens(), cfg.roi()  # validate eagerly
    if vals["run"]["frames"] < 2:
        raise ConfigError("run.frames must be at least 2")
    if vals["run"]["workers"] < 1:
        raise ConfigError("run.workers must be at least 1")
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())

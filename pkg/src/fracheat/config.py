"""INI run configuration: parsing, canonical serialization, environment overrides."""
from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .simulate import SimConfig
from .spectrum import SpectrumModel

ENV_PREFIX = "FRACHEAT_"
# flags that may also come from FRACHEAT_<NAME>
ENV_FLAGS = ("config", "seed", "threads", "out", "mode")


class ConfigError(ValueError):
    """Invalid configuration, with the offending section/field in the message."""


@dataclass
class RunConfig:
    spectrum: str = "white"
    H: float = 0.5
    d: int = 1
    t0: float = 0.5
    T: float = 1.0
    N_t: int = 17
    N_x: int = 129
    N_modes: int = 64
    seed: int = 0
    threads: int = 1
    mode: str = "exact"
    out: str = "fracheat_out"
    sections: dict = field(default_factory=dict)   # subcommand parameters, all strings

    # ------------------------------------------------------------ parsing
    @classmethod
    def from_string(cls, text, source="<string>"):
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        kw = {}
        if cp.has_section("run"):
            types = {f.name: f.type for f in fields(cls) if f.name != "sections"}
            for key, raw in cp.items("run"):
                if key not in types:
                    raise ConfigError(f"{source}: [run] unknown field {key!r}")
                conv = {"int": int, "float": float, "str": str}[types[key]]
                try:
                    kw[key] = conv(raw.strip())
                except ValueError:
                    raise ConfigError(f"{source}: [run] {key}: cannot read {raw!r} as {types[key]}") from None
        secs = {s: dict(cp.items(s)) for s in cp.sections() if s != "run"}
        cfg = cls(**kw, sections=secs)
        cfg.validate(source)
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            text = open(path, encoding="utf-8").read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_string(text, source=str(path))

    def validate(self, source="<config>"):
        def bad(key, why):
            raise ConfigError(f"{source}: [run] {key}: {why}")
        if self.d < 1:
            bad("d", "must be >= 1")
        if not 0 < self.t0 < self.T:
            bad("t0", "need 0 < t0 < T")
        if self.N_t < 1 or self.N_x < 1 or self.N_modes < 0:
            bad("N_t", "grid sizes must be positive")
        if self.threads < 1:
            bad("threads", "must be >= 1")
        if self.mode not in ("exact", "pathwise"):
            bad("mode", "must be exact or pathwise")

    # ------------------------------------------------------- serialization
    def to_string(self):
        """Canonical text: sections and keys sorted, floats in repr form."""
        lines = ["[run]"]
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name != "sections":
                lines.append(f"{f.name} = {getattr(self, f.name)!r}".replace("'", ""))
        for sec in sorted(self.sections):
            lines += ["", f"[{sec}]"]
            for k in sorted(self.sections[sec]):
                lines.append(f"{k} = {self.sections[sec][k]}")
        return "\n".join(lines) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.to_string().encode()).hexdigest()

    # ------------------------------------------------------------ overrides
    def with_overrides(self, **flags):
        """Apply non-None overrides (already merged flag > environment)."""
        for k, v in flags.items():
            if v is None or k == "config":
                continue
            setattr(self, k, type(getattr(self, k))(v))
        self.validate("<overrides>")
        return self

    # -------------------------------------------------------------- helpers
    def model(self):
        return SpectrumModel.parse(self.spectrum, self.H)

    def section(self, name):
        return self.sections.get(name, {})

    def sim_config(self):
        return SimConfig(self.model(), self.N_modes, np.linspace(self.t0, self.T, self.N_t), self.N_x,
                         d=self.d, seed=self.seed,
                         mode_sampler="exact_gaussian" if self.mode == "exact" else "pathwise")


def env_flags(environ=None):
    env = os.environ if environ is None else environ
    return {k: env.get(ENV_PREFIX + k.upper()) for k in ENV_FLAGS}


def merge_flags(cli, environ=None):
    """Flag value if given, else FRACHEAT_* value, else None."""
    env = env_flags(environ)
    return {k: cli.get(k) if cli.get(k) is not None else env.get(k) for k in ENV_FLAGS}


def get_list(sec, key, default=None, conv=float):
    raw = sec.get(key)
    if raw is None:
        return default
    return [conv(v) for v in raw.replace(",", " ").split()]

"""Run configuration: an INI file with [env], [house], [ppo], [policy] and [run] sections.

Values are Python literals (``3e-4``, ``true``, ``(2, 3)``); command-line
``--set section.key=value`` overrides win over the file.
"""
from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .env import EnvConfig, HouseParams
from .errors import ConfigError
from .policy import PolicyConfig
from .training import PpoConfig

SECTIONS = ("env", "house", "ppo", "policy", "run")
_WORDS = {"true": True, "false": False, "none": None}


def parse_value(text: str):
    low = text.strip().lower()
    if low in _WORDS:
        return _WORDS[low]
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()


@dataclass
class RunConfig:
    env: dict = field(default_factory=dict)
    house: dict = field(default_factory=dict)
    ppo: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def set(self, assignment: str) -> None:
        """Apply one ``section.key=value`` override."""
        key, sep, value = assignment.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}; choose from {list(SECTIONS)}")
        getattr(self, section)[name] = parse_value(value)

    def env_config(self, base: dict | None = None) -> EnvConfig:
        return EnvConfig.from_dict({**(base or {}), **self.env})

    def house_params(self) -> HouseParams:
        try:
            return HouseParams.from_dict(self.house)
        except TypeError as exc:
            raise ConfigError(f"bad [house] settings: {exc}") from None

    def ppo_config(self) -> PpoConfig:
        return PpoConfig.from_dict(self.ppo)

    def policy_config(self, kind: str, **fixed) -> PolicyConfig:
        return PolicyConfig.from_dict({**self.policy, **fixed, "kind": kind})

    def to_dict(self) -> dict:
        return {s: dict(getattr(self, s)) for s in SECTIONS}


def load_config(path=None, overrides=()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}] in {path}")
            for key, value in parser.items(section):
                getattr(cfg, section)[key] = parse_value(value)
    for item in overrides:
        cfg.set(item)
    return cfg

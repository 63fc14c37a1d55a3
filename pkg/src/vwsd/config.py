"""Run configuration: INI-style file, CLI overrides, run identity.

The config file uses plain key = value lines grouped into sections (see
README for the full key list).  CLI flags win over file values; the two
gateway environment variables win over both for endpoint and key.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

QA_FAMILIES = ("no_cot", "cot", "choose_no_cot", "choose_cot")


@dataclass
class RunConfig:
    # dataset
    data_path: str = ""
    gold_path: str = ""
    # embeddings
    embeddings_path: str = ""
    embedding_model: str = ""
    # captions
    captions_path: str = ""
    captioner: str = ""
    # retrieval
    measure: str = "cosine"
    penalty_enabled: bool = False
    penalty_lambda: float = 1.0
    enhanced_path: str = ""
    # enhancement
    enhance_template: str = "meaning_of"
    # qa
    qa_template: str = "no_cot"
    strategy: str = "greedy"
    shots: int = 0
    selection: str = "random"
    seed: int = 0
    # gateway
    llm_model: str = ""
    temperature: float = 0.0
    max_tokens: int = 150
    rpm: int = 0
    offline: bool = False
    base_url: str = ""
    api_key: str = ""
    cache_dir: str = "cache"
    # output
    out_dir: str = "out"
    jobs: int = 1


# (section, key) -> RunConfig field
_FILE_KEYS = {
    ("dataset", "data"): "data_path",
    ("dataset", "gold"): "gold_path",
    ("embeddings", "path"): "embeddings_path",
    ("embeddings", "model"): "embedding_model",
    ("captions", "path"): "captions_path",
    ("captions", "captioner"): "captioner",
    ("retrieval", "measure"): "measure",
    ("retrieval", "penalty"): "penalty_enabled",
    ("retrieval", "lambda"): "penalty_lambda",
    ("retrieval", "enhanced"): "enhanced_path",
    ("enhancement", "template"): "enhance_template",
    ("qa", "template"): "qa_template",
    ("qa", "strategy"): "strategy",
    ("qa", "shots"): "shots",
    ("qa", "selection"): "selection",
    ("qa", "seed"): "seed",
    ("gateway", "model"): "llm_model",
    ("gateway", "temperature"): "temperature",
    ("gateway", "max_tokens"): "max_tokens",
    ("gateway", "rpm"): "rpm",
    ("gateway", "offline"): "offline",
    ("gateway", "base_url"): "base_url",
    ("gateway", "api_key"): "api_key",
    ("gateway", "cache_dir"): "cache_dir",
    ("output", "dir"): "out_dir",
    ("output", "jobs"): "jobs",
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _coerce(field_name: str, raw: str, target_type: type) -> object:
    if target_type is bool:
        try:
            return _BOOL_WORDS[raw.strip().lower()]
        except KeyError:
            raise ConfigError(f"{field_name}: expected a boolean, got {raw!r}") from None
    try:
        return target_type(raw)
    except ValueError:
        raise ConfigError(f"{field_name}: expected {target_type.__name__}, got {raw!r}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    config = RunConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            field_name = _FILE_KEYS.get((section, key))
            if field_name is None:
                raise ConfigError(f"{path}: unknown config key [{section}] {key}")
            current = getattr(config, field_name)
            setattr(config, field_name, _coerce(field_name, raw, type(current)))
    return config


def resolve_qa_template(family: str, strategy: str) -> str:
    """Map a template family plus decoding strategy to a concrete template."""
    if family not in QA_FAMILIES:
        raise ConfigError(f"unknown qa template family {family!r}; valid: {', '.join(QA_FAMILIES)}")
    if strategy not in ("greedy", "beam"):
        raise ConfigError(f"unknown strategy {strategy!r}; valid: greedy, beam")
    if family == "cot":
        return f"think_{strategy}"
    return f"{family}_{strategy}"


def snapshot(config: RunConfig, kind: str) -> dict:
    """The config slice that identifies a run of the given kind."""
    if kind == "retrieve":
        return {
            "command": "retrieve",
            "measure": config.measure,
            "penalty": config.penalty_enabled,
            "lambda": config.penalty_lambda,
            "embedding_model": config.embedding_model,
            "phrases": "enhanced" if config.enhanced_path else "original",
        }
    if kind == "enhance":
        return {
            "command": "enhance",
            "template": config.enhance_template,
            "model": config.llm_model,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
    if kind == "qa":
        snap = {
            "command": "qa",
            "template": config.qa_template,
            "strategy": config.strategy,
            "captioner": config.captioner,
            "model": config.llm_model,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "shots": config.shots,
        }
        if config.shots:
            snap["selection"] = config.selection
            snap["seed"] = config.seed
        return snap
    raise ConfigError(f"unknown run kind {kind!r}")


def run_id_for(snap: dict) -> str:
    """Deterministic run identity: a short digest of the config snapshot."""
    payload = json.dumps(snap, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

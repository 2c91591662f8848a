"""Run configuration: INI-style file, environment and flag overrides.

Precedence is CLI flag > ``HNE_SECTION_KEY`` environment variable > config
file > built-in default.  The config digest covers every semantically
meaningful section (output location excluded) so identical settings hash
identically across hosts.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from dataclasses import dataclass, fields


METHODS = ("metapath2vec", "pte", "hin2vec", "heer",
           "transe", "distmult", "complex", "rotate", "rgcn")

_ENV_PREFIX = "HNE_"


@dataclass
class RunConfig:
    # [data]
    node_file: str = ""
    link_file: str = ""
    label_file: str = ""
    attr_mode: bool = False
    # [synthetic]
    type_counts: tuple = (100, 100)
    communities: int = 4
    p_in: float = 0.05
    p_out: float = 0.002
    link_types: str = "0-1"
    labeled_type: int = 0
    attr_dim: int = 0
    attr_noise: float = 0.1
    # [train]
    method: str = "metapath2vec"
    dim: int = 50
    learning_rate: float = 0.025
    negatives: int = 5
    epochs: int = 5
    batch: int = 128
    threads: int = 1
    seed: int = 0
    margin: float = 1.0
    p_norm: int = 2
    loss: str = ""
    fanout: int = 5
    hidden: int = 32
    layers: int = 2
    # [walks]
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    meta_paths: str = ""
    dump_walks: bool = False
    # [eval]
    holdout: float = 0.2
    repeats: int = 5
    tasks: str = "nc,lp"
    # [output]
    out_dir: str = "runs/out"
    strict: bool = False


_SECTIONS = {
    "data": ("node_file", "link_file", "label_file", "attr_mode"),
    "synthetic": ("type_counts", "communities", "p_in", "p_out", "link_types",
                  "labeled_type", "attr_dim", "attr_noise"),
    "train": ("method", "dim", "learning_rate", "negatives", "epochs", "batch",
              "threads", "seed", "margin", "p_norm", "loss", "fanout",
              "hidden", "layers"),
    "walks": ("walks_per_node", "walk_length", "window", "meta_paths",
              "dump_walks"),
    "eval": ("holdout", "repeats", "tasks"),
    "output": ("out_dir", "strict"),
}

_FIELD_SECTION = {k: s for s, ks in _SECTIONS.items() for k in ks}


class ConfigError(ValueError):
    pass


def _coerce(name, raw, target_type):
    raw = raw.strip()
    try:
        if target_type is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is tuple:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def load_config(path=None, env=None, overrides=None):
    """Merge defaults, config file, environment and explicit overrides."""
    cfg = RunConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                setattr(cfg, key, _coerce(key, raw, types[key]))
    env = os.environ if env is None else env
    for name, target in types.items():
        var = _ENV_PREFIX + _FIELD_SECTION[name].upper() + "_" + name.upper()
        if var in env:
            setattr(cfg, name, _coerce(var, env[var], target))
    for key, val in (overrides or {}).items():
        if val is not None:
            setattr(cfg, key, val)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg.method not in METHODS:
        raise ConfigError(
            f"unknown method {cfg.method!r}; choose from {', '.join(METHODS)}")
    if cfg.strict:
        cfg.threads = 1
    if not 0.0 < cfg.holdout < 1.0:
        raise ConfigError("holdout must be in (0, 1)")
    for t in cfg.tasks.split(","):
        if t.strip() not in ("nc", "lp", ""):
            raise ConfigError(f"unknown eval task {t.strip()!r}")
    return cfg


def config_digest(cfg):
    """Stable hash of every semantically meaningful field."""
    parts = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        if _FIELD_SECTION[f.name] == "output":
            continue
        parts.append(f"{f.name}={getattr(cfg, f.name)!r}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def parse_link_types(spec_str):
    """Parse ``A-B[d]`` comma-separated link-type declarations."""
    out = []
    for tok in spec_str.split(","):
        tok = tok.strip()
        if not tok:
            continue
        directed = tok.endswith("d")
        body = tok[:-1] if directed else tok
        try:
            a, b = body.split("-")
            out.append((int(a), int(b), directed))
        except ValueError:
            raise ConfigError(
                f"bad link type {tok!r}; expected like 0-1 or 0-1d") from None
    if not out:
        raise ConfigError("no link types configured")
    return out


def parse_meta_paths(spec_str):
    """Parse ``l1,l2|l3,...`` meta-path declarations into id lists."""
    out = []
    for tok in spec_str.split("|"):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append([int(x) for x in tok.replace(",", " ").split()])
        except ValueError:
            raise ConfigError(f"bad meta-path {tok!r}") from None
    return out


def package_version():
    """Version string, git-describe flavored when a repo is available."""
    from . import __version__
    try:
        import subprocess
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)))
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except Exception:
        pass
    return __version__


def write_manifest(out_dir, cfg, artifacts, started, status="ok", extra=None):
    manifest = {
        "status": status,
        "version": package_version(),
        "config_digest": config_digest(cfg),
        "seed": cfg.seed,
        "strict": cfg.strict,
        "threads": cfg.threads,
        "method": cfg.method,
        "wall_clock_sec": round(time.time() - started, 3),
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_failed_marker(out_dir, message):
    path = os.path.join(out_dir, "FAILED")
    with open(path, "w") as fh:
        fh.write(message.rstrip() + "\n")
    return path

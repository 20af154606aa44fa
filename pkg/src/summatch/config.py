"""Layered run configuration: defaults, config file, environment, flags.

The configuration is a flat key=value INI file with one section per module
area. Later layers override earlier ones (flag > environment > file >
default) and every resolved value remembers which layer set it, so a run
directory snapshot documents exactly where each setting came from.
Environment overrides use the ``SUMMATCH_<SECTION>_<KEY>`` naming scheme.
"""

from __future__ import annotations

import os
import re
from configparser import ConfigParser
from configparser import Error as IniError
from dataclasses import fields
from pathlib import Path
from typing import Mapping

from .analyze import DISPLAY_BIAS_DEFAULT
from .compose import InputMode
from .data import PLACEHOLDER
from .encoder import EncoderConfig
from .errors import ConfigError
from .train import TrainConfig

ENV_PREFIX = "SUMMATCH_"
SNAPSHOT_NAME = "config.resolved.ini"

# [data] holds free-form task keys such as `imperceptibility_train = path`.
_DATA_KEY_RE = re.compile(r"^[a-z0-9][a-z0-9_]*_(train|dev|test)$")
_SPLITS = ("train", "dev", "test")


def _text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, InputMode):
        return value.value
    return str(value)


def _dataclass_defaults(cls, exclude: tuple[str, ...] = ()) -> dict[str, str]:
    return {
        f.name: _text(f.default) for f in fields(cls) if f.name not in exclude
    }


DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"out_root": "runs", "task": ""},
    "data": {"placeholder": PLACEHOLDER},
    # checkpoint_dir is always the run directory, never configured directly.
    "train": {
        **_dataclass_defaults(TrainConfig, exclude=("checkpoint_dir",)),
        "train_file": "",
        "dev_file": "",
    },
    # An empty encoder seed means "inherit the training seed".
    "encoder": {
        **_dataclass_defaults(EncoderConfig, exclude=("seed", "checkpoint")),
        "seed": "",
        "checkpoint": "",
    },
    "validate": {"data": "", "split": ""},
    "eval": {"checkpoint": "", "data": "", "split": "dev"},
    "crosseval": {
        "ckpt_i": "",
        "ckpt_n": "",
        "data_i": "",
        "data_n": "",
        "task_i": "imperceptibility",
        "task_n": "nonspecificity",
        "split": "dev",
    },
    "ablate": {
        "modes": ",".join(mode.value for mode in InputMode),
        "tasks": "",
    },
    "analyze": {
        "checkpoint": "",
        "data": "",
        "split": "dev",
        "ids": "",
        "bias": _text(DISPLAY_BIAS_DEFAULT),
        "format": "csv",
    },
}


def _check_key(section: str, key: str, origin: str) -> None:
    if section not in DEFAULTS:
        raise ConfigError(f"unknown config section [{section}] ({origin})")
    if section == "data":
        if key == "placeholder" or _DATA_KEY_RE.match(key):
            return
        raise ConfigError(
            f"[data] keys must be 'placeholder' or '<task>_<split>' with "
            f"split one of {_SPLITS}; got {key!r} ({origin})"
        )
    if key not in DEFAULTS[section]:
        raise ConfigError(f"unknown config key {key!r} in [{section}] ({origin})")


class RunConfig:
    """Resolved configuration with per-key provenance.

    Keys are addressed as (section, key) pairs; all values are stored as
    strings and converted on access so a snapshot round-trips exactly.
    """

    def __init__(
        self,
        values: dict[tuple[str, str], str],
        provenance: dict[tuple[str, str], str],
    ):
        self._values = values
        self._provenance = provenance

    @classmethod
    def load(
        cls,
        config_path: str | Path | None = None,
        env: Mapping[str, str] | None = None,
        flags: Mapping[tuple[str, str], str] | None = None,
    ) -> "RunConfig":
        values = {
            (section, key): value
            for section, entries in DEFAULTS.items()
            for key, value in entries.items()
        }
        provenance = {target: "default" for target in values}

        if config_path is not None:
            parser = ConfigParser(interpolation=None)
            try:
                with open(config_path, encoding="utf-8") as handle:
                    parser.read_file(handle)
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}")
            except IniError as exc:
                raise ConfigError(f"malformed config file {config_path}: {exc}")
            for section in parser.sections():
                for key, raw in parser.items(section):
                    _check_key(section, key, f"in {config_path}")
                    values[(section, key)] = raw.strip()
                    provenance[(section, key)] = "file"

        for name in sorted(env or {}):
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX):]
            section, _, key = rest.partition("_")
            section, key = section.lower(), key.lower()
            if not key:
                raise ConfigError(
                    f"environment variable {name} does not name a key; "
                    f"expected {ENV_PREFIX}<SECTION>_<KEY>"
                )
            _check_key(section, key, f"from environment variable {name}")
            values[(section, key)] = env[name]
            provenance[(section, key)] = "env"

        for (section, key), value in (flags or {}).items():
            _check_key(section, key, "from command-line flag")
            values[(section, key)] = value
            provenance[(section, key)] = "flag"

        return cls(values, provenance)

    def get(self, section: str, key: str) -> str:
        try:
            return self._values[(section, key)]
        except KeyError:
            raise ConfigError(f"no such config entry [{section}] {key}")

    def provenance(self, section: str, key: str) -> str:
        self.get(section, key)
        return self._provenance[(section, key)]

    def is_default(self, section: str, key: str) -> bool:
        return self.provenance(section, key) == "default"

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}")

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}")

    def get_list(self, section: str, key: str) -> list[str]:
        raw = self.get(section, key)
        return [item.strip() for item in raw.split(",") if item.strip()]

    def get_mode(self, section: str = "train", key: str = "input_mode") -> InputMode:
        raw = self.get(section, key)
        try:
            return InputMode(raw)
        except ValueError:
            valid = ", ".join(mode.value for mode in InputMode)
            raise ConfigError(
                f"[{section}] {key} must be one of {valid}; got {raw!r}"
            )

    @property
    def placeholder(self) -> str:
        value = self.get("data", "placeholder")
        if not value:
            raise ConfigError("[data] placeholder must be non-empty")
        return value

    def data_path(self, task: str, split: str) -> str:
        if split not in _SPLITS:
            raise ConfigError(f"unknown split {split!r}; expected one of {_SPLITS}")
        if not task:
            raise ConfigError(
                "no task selected; pass --task or configure [run] task"
            )
        key = f"{task}_{split}"
        path = self._values.get(("data", key), "")
        if not path:
            raise ConfigError(
                f"no data path for task {task!r} split {split!r}; "
                f"add `[data] {key} = <path>` or pass an explicit file flag"
            )
        return path

    def train_config(self, checkpoint_dir: str | None = None) -> TrainConfig:
        clip_raw = self.get("train", "clip_norm").lower()
        clip_norm = None if clip_raw in ("", "none") else self.get_float("train", "clip_norm")
        config = TrainConfig(
            epochs=self.get_int("train", "epochs"),
            learning_rate=self.get_float("train", "learning_rate"),
            beta1=self.get_float("train", "beta1"),
            beta2=self.get_float("train", "beta2"),
            adam_eps=self.get_float("train", "adam_eps"),
            batch_size=self.get_int("train", "batch_size"),
            max_len=self.get_int("train", "max_len"),
            input_mode=self.get_mode(),
            seed=self.get_int("train", "seed"),
            clip_norm=clip_norm,
            checkpoint_dir=checkpoint_dir,
        )
        config.validate()
        return config

    def encoder_config(self) -> EncoderConfig:
        seed_raw = self.get("encoder", "seed")
        seed = self.get_int("train", "seed") if seed_raw == "" else self.get_int("encoder", "seed")
        config = EncoderConfig(
            kind=self.get("encoder", "kind"),
            hidden_dim=self.get_int("encoder", "hidden_dim"),
            num_layers=self.get_int("encoder", "num_layers"),
            num_heads=self.get_int("encoder", "num_heads"),
            ffn_dim=self.get_int("encoder", "ffn_dim"),
            vocab_size=self.get_int("encoder", "vocab_size"),
            max_positions=self.get_int("encoder", "max_positions"),
            pos_scale=self.get_float("encoder", "pos_scale"),
            emb_init_std=self.get_float("encoder", "emb_init_std"),
            seed=seed,
            checkpoint=self.get("encoder", "checkpoint") or None,
        )
        config.validate()
        return config

    def write_snapshot(self, path: str | Path, command: str) -> Path:
        """Serialize the resolved configuration so it can replay the run.

        Non-default entries carry a comment naming the layer that set them;
        the file parses back through `--config` unchanged.
        """
        path = Path(path)
        lines = [
            f"# resolved configuration for `summatch {command}`",
            f"# replay with: summatch {command} --config {path.name}",
        ]
        sections: dict[str, list[tuple[str, str]]] = {s: [] for s in DEFAULTS}
        for (section, key), value in self._values.items():
            sections[section].append((key, value))
        for section, entries in sections.items():
            lines.append("")
            lines.append(f"[{section}]")
            ordered = [k for k in DEFAULTS[section] if k in dict(entries)]
            extras = sorted(k for k, _ in entries if k not in DEFAULTS[section])
            for key in ordered + extras:
                value = self._values[(section, key)]
                source = self._provenance[(section, key)]
                if source != "default":
                    lines.append(f"# source: {source}")
                lines.append(f"{key} = {value}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

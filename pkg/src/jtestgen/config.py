"""Run configuration: one YAML file, ``${VAR}`` interpolation, flag overrides."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .complexity import ComplexityWeights
from .errors import ConfigError
from .pipeline import SessionConfig

_VAR = re.compile(r"\$\{(\w+)(?::-([^}]*))?\}")
BACKENDS = ("live", "replay", "stub", "record")


def interpolate(value: Any, env: dict[str, str] | None = None) -> Any:
    env = os.environ if env is None else env
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            if m.group(1) in env:
                return env[m.group(1)]
            if m.group(2) is not None:
                return m.group(2)
            raise ConfigError(f"environment variable {m.group(1)} is not set")
        return _VAR.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate(v, env) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate(v, env) for v in value]
    return value


@dataclass
class BackendConfig:
    kind: str = "replay"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    transcript: Path | None = None
    stub_script: Path | None = None
    max_in_flight: int = 4
    tokens_per_minute: int | None = None
    context_tokens: int = 16384


@dataclass
class ToolchainPaths:
    jdk_home: Path | None = None
    junit_jar: Path | None = None
    hamcrest_jar: Path | None = None
    jacoco_agent: Path | None = None
    jacoco_cli: Path | None = None
    classpath: list[Path] = field(default_factory=list)
    project_classes: Path | None = None
    evosuite_jar: Path | None = None
    evosuite_tests: Path | None = None
    evosuite_budget: int = 60


@dataclass
class RunConfig:
    project_root: Path
    output_root: Path
    project_name: str = ""
    backend: BackendConfig = field(default_factory=BackendConfig)
    toolchain: ToolchainPaths = field(default_factory=ToolchainPaths)
    session: SessionConfig = field(default_factory=SessionConfig)
    weights: ComplexityWeights = field(default_factory=ComplexityWeights)
    exclude: list[str] = field(default_factory=list)
    templates_dir: Path | None = None

    def validate(self, need_project: bool = True, need_backend: bool = True) -> None:
        if need_project and not self.project_root.is_dir():
            raise ConfigError(f"project root does not exist: {self.project_root}")
        if self.backend.kind not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend.kind!r}; expected one of {BACKENDS}")
        if self.templates_dir is not None and not self.templates_dir.is_dir():
            raise ConfigError(f"template directory does not exist: {self.templates_dir}")
        if need_backend:
            self._validate_backend()

    def _validate_backend(self) -> None:
        if self.backend.kind == "replay" and (self.backend.transcript is None or not self.backend.transcript.exists()):
            raise ConfigError(f"replay backend needs an existing transcript, got {self.backend.transcript}")
        if self.backend.kind == "stub" and (self.backend.stub_script is None or not self.backend.stub_script.exists()):
            raise ConfigError("stub backend needs an existing stub_script file")


def _path(v, base: Path) -> Path | None:
    if v in (None, ""):
        return None
    p = Path(str(v)).expanduser()
    return p if p.is_absolute() else (base / p)


def from_mapping(data: dict, base: Path) -> RunConfig:
    data = interpolate(data or {})
    try:
        b = data.get("backend", {}) or {}
        t = data.get("toolchain", {}) or {}
        s = data.get("session", {}) or {}
        backend = BackendConfig(
            kind=b.get("kind", "replay"),
            base_url=b.get("base_url", BackendConfig.base_url),
            api_key_env=b.get("api_key_env", "OPENAI_API_KEY"),
            transcript=_path(b.get("transcript"), base),
            stub_script=_path(b.get("stub_script"), base),
            max_in_flight=int(b.get("max_in_flight", 4)),
            tokens_per_minute=b.get("tokens_per_minute"),
            context_tokens=int(b.get("context_tokens", 16384)),
        )
        tool = ToolchainPaths(
            jdk_home=_path(t.get("jdk_home"), base),
            junit_jar=_path(t.get("junit_jar"), base),
            hamcrest_jar=_path(t.get("hamcrest_jar"), base),
            jacoco_agent=_path(t.get("jacoco_agent"), base),
            jacoco_cli=_path(t.get("jacoco_cli"), base),
            classpath=[_path(p, base) for p in t.get("classpath", [])],
            project_classes=_path(t.get("project_classes"), base),
            evosuite_jar=_path(t.get("evosuite_jar"), base),
            evosuite_tests=_path(t.get("evosuite_tests"), base),
            evosuite_budget=int(t.get("evosuite_budget", 60)),
        )
        session = SessionConfig(**s)
        weights = ComplexityWeights.of(data["weights"]) if "weights" in data else ComplexityWeights()
        return RunConfig(
            project_root=_path(data.get("project_root", "."), base),
            output_root=_path(data.get("output_root", "jtestgen-out"), base),
            project_name=str(data.get("project_name", "")),
            backend=backend,
            toolchain=tool,
            session=session,
            weights=weights,
            exclude=list(data.get("exclude", [])),
            templates_dir=_path(data.get("templates_dir"), base),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | None) -> RunConfig:
    if path is None:
        return from_mapping({}, Path.cwd())
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return from_mapping(data or {}, path.parent)

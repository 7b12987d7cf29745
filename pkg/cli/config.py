import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from rich.console import Console

console = Console()

DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": 0,
    "trace_dir": ".",
    "solver": {
        "sigma": 0.5,
        "gamma": 1.0,
        "alpha": 0.3,
        "beta0": 1.0,
        "lambda_value": 1.0,
        "rho_tol": 1e-8,
        "max_iter": 10000,
    },
}

ENV_SETTINGS = {
    "PS_SEED": ("seed", int),
    "PS_TRACE_DIR": ("trace_dir", str),
    "PS_SIGMA": ("solver.sigma", float),
    "PS_GAMMA": ("solver.gamma", float),
    "PS_MAX_ITER": ("solver.max_iter", int),
}


def _set_path(cfg: Dict[str, Any], key: str, value: Any) -> None:
    keys = key.split(".")
    current = cfg
    for k in keys[:-1]:
        current = current.setdefault(k, {})
    current[keys[-1]] = value


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def env_seed() -> Optional[int]:
    """PS_SEED, when set, overrides every generator seed."""
    raw = os.getenv("PS_SEED")
    return int(raw) if raw not in (None, "") else None


class ConfigManager:
    """
    Handles loading, writing, and updating config.json
    with priority: config.json > environment > built-in defaults
    """

    def __init__(self, config_path: Optional[str] = None):
        if config_path is None:
            self.path = Path.home() / ".ps-solve" / "config.json"
        else:
            self.path = Path(config_path)

    def load(self) -> Dict[str, Any]:
        cfg = self._load_from_env()
        if self.path.exists():
            try:
                cfg = _merge(cfg, json.loads(self.path.read_text()))
            except json.JSONDecodeError as e:
                console.print(f"[red]Error reading config file: {e}[/red]")
        return cfg

    def _load_from_env(self) -> Dict[str, Any]:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        for var, (key, cast) in ENV_SETTINGS.items():
            raw = os.getenv(var)
            if raw not in (None, ""):
                try:
                    _set_path(cfg, key, cast(raw))
                except ValueError:
                    console.print(f"[yellow]Ignoring {var}={raw!r}: not a valid {cast.__name__}[/yellow]")
        return cfg

    def write(self, data: Dict[str, Any]) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w") as f:
                json.dump(data, f, indent=2)
        except OSError as e:
            console.print(f"[red]Error writing config file: {e}[/red]")
            raise

    def _stored(self) -> Dict[str, Any]:
        if self.path.exists():
            try:
                return json.loads(self.path.read_text())
            except json.JSONDecodeError:
                return {}
        return {}

    def show(self) -> None:
        console.print("[blue]Current Configuration:[/blue]")
        console.print(json.dumps(self.load(), indent=2))
        console.print(f"\n[dim]Config file location: {self.path}[/dim]")

    def solver_settings(self) -> Dict[str, Any]:
        return dict(self.load().get("solver", {}))

    def get_setting(self, key: str, default: Any = None) -> Any:
        """Get a configuration setting using dot notation (e.g., 'solver.sigma')"""
        value: Any = self.load()
        try:
            for k in key.split("."):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set_setting(self, key: str, value: Any) -> None:
        """Persist one dot-notation setting; only explicitly set keys are written."""
        cfg = self._stored()
        _set_path(cfg, key, value)
        self.write(cfg)

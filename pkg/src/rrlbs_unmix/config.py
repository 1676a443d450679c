"""Solver configuration defaults and helpers."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .core import RejectedInputError

USER_CONFIG_PATH = Path("~/.config/rrlbs-unmix/config.ini").expanduser()
USER_CONFIG_SECTION = "rrlbs-unmix"
DEFAULT_LOG_DIR = Path("~/.cache/rrlbs-unmix/logs").expanduser()
DEFAULT_WORKERS = 1

LOSSES = ("frobenius", "l21", "l2p")
SPARSITY_MODES = ("none", "fixed", "learned")
NORM_MODES = ("l1_rows", "l2_rows")
INIT_STRATEGIES = ("random", "pixel_sample")
INNER_STOPS = ("cadence", "tolerance")


@dataclass(frozen=True)
class SolverConfig:
    k: int = 3
    lam: float = 0.1
    loss: str = "l21"
    p: float = 1.0
    sparsity: str = "learned"
    fixed_p: float = 0.5
    xi: float = 1e-6
    eps_guard: float = 1e-8
    phi: float = 1e-8
    sigma: float = 0.02
    # H refresh cadence for inner_stop="cadence"
    q: int = 10
    inner_tol: float = 1e-6
    outer_tol: float = 1e-6
    max_inner: int = 300
    max_outer: int = 10
    seed: int = 0
    norm_mode: str = "l1_rows"
    init: str = "random"
    inner_stop: str = "cadence"

    def with_overrides(self, **overrides: object) -> "SolverConfig":
        """Return a copy with every non-``None`` override applied."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise RejectedInputError(f"unknown config field(s): {', '.join(unknown)}")
        changes = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **changes)

    @property
    def effective_lam(self) -> float:
        """λ actually used by the solver; sparsity "none" switches the penalty off."""
        return 0.0 if self.sparsity == "none" else self.lam

    def validate(self) -> "SolverConfig":
        _require(self.k >= 1, "k", f"must be >= 1, got {self.k}")
        _require(self.lam >= 0, "lam", f"must be >= 0, got {self.lam}")
        _require_choice("loss", self.loss, LOSSES)
        _require(0 < self.p <= 1, "p", f"must lie in (0, 1], got {self.p}")
        _require_choice("sparsity", self.sparsity, SPARSITY_MODES)
        _require(
            0.5 <= self.fixed_p <= 1, "fixed_p", f"must lie in [0.5, 1], got {self.fixed_p}"
        )
        for name in ("xi", "eps_guard", "phi", "sigma"):
            value = getattr(self, name)
            _require(value > 0, name, f"must be > 0, got {value}")
        for name in ("q", "max_inner", "max_outer"):
            value = getattr(self, name)
            _require(value >= 1, name, f"must be >= 1, got {value}")
        for name in ("inner_tol", "outer_tol"):
            value = getattr(self, name)
            _require(value >= 0, name, f"must be >= 0, got {value}")
        _require_choice("norm_mode", self.norm_mode, NORM_MODES)
        _require_choice("init", self.init, INIT_STRATEGIES)
        _require_choice("inner_stop", self.inner_stop, INNER_STOPS)
        _require(self.seed >= 0, "seed", f"must be >= 0, got {self.seed}")
        return self

    def as_dict(self) -> dict[str, object]:
        return asdict(self)


def _require(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise RejectedInputError(f"{name} {message}")


def _require_choice(name: str, value: str, choices: tuple[str, ...]) -> None:
    _require(value in choices, name, f"must be one of {', '.join(choices)}; got {value!r}")


def load_user_config(config_path: Path = USER_CONFIG_PATH) -> dict[str, str]:
    """Read ~/.config/rrlbs-unmix/config.ini and return overrides as a dict.

    Only keys that are explicitly set in the file are returned so callers can
    tell "not set" from "set to default".  Any SolverConfig field may appear
    in the ``[rrlbs-unmix]`` section, plus ``log_dir`` and ``workers``::

        [rrlbs-unmix]
        lam = 0.05
        loss = l2p
        p = 0.9
        log_dir = /tmp/rrlbs-logs
        workers = 4
    """
    if not config_path.exists():
        return {}
    parser = configparser.ConfigParser()
    parser.read(config_path, encoding="utf-8")
    if not parser.has_section(USER_CONFIG_SECTION):
        return {}
    return dict(parser[USER_CONFIG_SECTION])


def solver_overrides_from_user_config(user_cfg: dict[str, str]) -> dict[str, object]:
    """Coerce the SolverConfig keys of *user_cfg* to their field types."""
    defaults = SolverConfig()
    out: dict[str, object] = {}
    for f in fields(SolverConfig):
        raw = user_cfg.get(f.name)
        if raw is None:
            continue
        kind = type(getattr(defaults, f.name))
        try:
            out[f.name] = kind(raw.strip())
        except ValueError as exc:
            raise RejectedInputError(
                f"config file: {f.name} = {raw!r} is not a valid {kind.__name__}"
            ) from exc
    return out


def config_defaults_table() -> str:
    """The hyperparameter defaults as printed at the bottom of ``--help``."""
    defaults = SolverConfig()
    rows = [(f.name, repr(getattr(defaults, f.name))) for f in fields(SolverConfig)]
    rows.append(("log_dir", str(DEFAULT_LOG_DIR)))
    rows.append(("workers", str(DEFAULT_WORKERS)))
    width = max(len(name) for name, _ in rows)
    lines = ["defaults (override in %s):" % USER_CONFIG_PATH]
    lines.extend(f"  {name.ljust(width)}  {value}" for name, value in rows)
    return "\n".join(lines)

"""System parameters and the combinatorial primitives shared by every phase."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from typing import Dict, Tuple, Union

__all__ = [
    "ConfigError",
    "NodeSubset",
    "SystemConfig",
    "enumerate_subsets",
    "load_config",
    "parse_config_text",
    "validate_config",
]

Number = Union[int, float, str, Fraction]

# Sorted tuple of 1-based node ids; tuples keep equality structural and hashable.
NodeSubset = Tuple[int, ...]


class ConfigError(ValueError):
    """A configuration value violates one of the model's rules."""

    def __init__(self, field: str, rule: str):
        self.field = field
        self.rule = rule
        super().__init__(f"{field}: {rule}")


def _as_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # go through the decimal repr so 0.5 -> 1/2 and 0.25 -> 1/4 exactly
        return Fraction(repr(value))
    return Fraction(value)


def _as_alpha(value: Number) -> Union[Fraction, float]:
    if isinstance(value, float):
        frac = Fraction(repr(value))
        # keep floats that have no short rational form as floats
        return frac if frac.denominator <= 10**6 else value
    return _as_fraction(value)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the wireless Map-Shuffle-Reduce system.

    ``mu`` is held as an exact :class:`~fractions.Fraction`; ``alpha`` is a
    Fraction whenever the input has a rational form, otherwise a float.
    Identifiers for nodes, files and functions are 1-based.
    """

    K: int
    mu: Fraction
    N: int
    Q: int
    eta: int = 1
    F: int = 240
    L: int = 256
    B: int = 64
    alpha: Union[Fraction, float] = Fraction(2, 3)
    P: float = 1e6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_fraction(self.mu))
        object.__setattr__(self, "alpha", _as_alpha(self.alpha))
        object.__setattr__(self, "P", float(self.P))

    @classmethod
    def build(cls, K: int, mu: Number, Q: int, eta: int = 1, **kwargs) -> "SystemConfig":
        """Create a config with ``N = C(K, mu*K) * eta`` filled in."""
        mu = _as_fraction(mu)
        r = mu * K
        if r.denominator != 1 or not 0 < r <= K:
            raise ConfigError("mu", f"mu*K must be an integer in 1..K, got {r}")
        return cls(K=K, mu=mu, N=math.comb(K, int(r)) * eta, Q=Q, eta=eta, **kwargs)

    @property
    def r(self) -> int:
        """Replication factor mu*K (number of nodes storing each file)."""
        return int(self.mu * self.K)

    @property
    def cluster_size(self) -> int:
        """Size of each ZF cluster: min(K, 2 mu K) // 2."""
        return min(self.K, 2 * self.r) // 2

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` unchanged if it is valid, else raise :class:`ConfigError`."""
    if not isinstance(cfg.K, int) or cfg.K < 1:
        raise ConfigError("K", "K must be a positive integer")
    if not 0 < cfg.mu <= 1:
        raise ConfigError("mu", f"mu must lie in (0, 1], got {cfg.mu}")
    r = cfg.mu * cfg.K
    if r.denominator != 1:
        raise ConfigError("mu", f"mu*K must be an integer, got mu*K = {float(r):g}")
    if not isinstance(cfg.eta, int) or cfg.eta < 1:
        raise ConfigError("eta", "eta must be a positive integer")
    expected_n = math.comb(cfg.K, int(r)) * cfg.eta
    if cfg.N != expected_n:
        raise ConfigError(
            "N", f"N must equal C(K, mu*K)*eta = C({cfg.K}, {int(r)})*{cfg.eta} = {expected_n}, got {cfg.N}"
        )
    if not isinstance(cfg.Q, int) or cfg.Q < 1 or cfg.Q % cfg.K:
        raise ConfigError("Q", f"Q must be a positive multiple of K={cfg.K}, got {cfg.Q}")
    if not 0 <= cfg.alpha <= 1:
        raise ConfigError("alpha", f"alpha must lie in [0, 1], got {cfg.alpha}")
    if not cfg.P > 1:
        raise ConfigError("P", f"P must be greater than 1, got {cfg.P}")
    for name in ("F", "L", "B"):
        value = getattr(cfg, name)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(name, f"{name} must be an integer >= 1, got {value}")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
    return cfg


def enumerate_subsets(K: int, r: int) -> list:
    """All size-``r`` subsets of ``{1..K}`` in lexicographic order."""
    if not 0 < r <= K:
        raise ValueError(f"subset size must satisfy 0 < r <= K, got r={r}, K={K}")
    return list(itertools.combinations(range(1, K + 1), r))


_INT_KEYS = {"K", "N", "Q", "eta", "F", "L", "B", "seed"}


def parse_config_text(text: str, overrides: Dict[str, str] = None) -> SystemConfig:
    """Parse flat ``key = value`` lines (``#`` comments allowed).

    ``N`` may be omitted, in which case it is derived from K, mu and eta.
    """
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("<file>", f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    raw.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    return _from_raw(raw)


def _from_raw(raw: Dict[str, str]) -> SystemConfig:
    known = {f.name for f in fields(SystemConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    for required in ("K", "mu", "Q"):
        if required not in raw:
            raise ConfigError(required, "missing required key")
    kwargs = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(float(value)) if "e" in value.lower() else int(value)
            elif key == "P":
                kwargs[key] = float(value)
            else:
                kwargs[key] = Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(key, f"cannot parse value {value!r}") from None
    if "N" not in kwargs:
        r = kwargs["mu"] * kwargs["K"]
        if r.denominator != 1 or not 0 < r <= kwargs["K"]:
            raise ConfigError("mu", f"mu*K must be an integer in 1..K, got {r}")
        kwargs["N"] = math.comb(kwargs["K"], int(r)) * kwargs.get("eta", 1)
    return validate_config(SystemConfig(**kwargs))


def load_config(path, overrides: Dict[str, str] = None) -> SystemConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def format_config_text(cfg: SystemConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.as_dict().items())


"""Code configuration files (JSON) and how they turn into code objects."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .balanced import PRESETS, BalancedCode, BibdDesign, build_balanced_code, load_preset
from .base_msr import BaseParams
from .piggyback import INJECTIONS, InjectionTable, PiggybackedCode, build_piggybacked_code


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CodeConfig:
    mode: str = "piggyback"
    k: int = 4
    r: int = 3
    s: int = 3
    w: int = 16
    seed: int = 0
    injection: object = "main-diag"
    bibd: object = None

    def __post_init__(self):
        if self.mode not in ("piggyback", "balanced"):
            raise ConfigError(f"mode must be 'piggyback' or 'balanced', got {self.mode!r}")
        try:
            BaseParams(self.k, self.r, self.w, self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 2 <= self.s <= self.r:
            raise ConfigError(f"need 2 <= s <= r, got s={self.s}, r={self.r}")
        if isinstance(self.injection, str):
            if self.injection not in INJECTIONS:
                raise ConfigError(f"unknown injection {self.injection!r}")
        elif isinstance(self.injection, (list, tuple)):
            object.__setattr__(self, "injection", tuple(tuple(int(x) for x in row) for row in self.injection))
        else:
            raise ConfigError("injection must be 'main-diag', 'anti-diag' or an r x s array")
        if self.mode == "balanced":
            if self.s != self.r:
                raise ConfigError("balanced mode needs s = r")
            if self.injection != "main-diag":
                raise ConfigError("balanced mode uses the main-diagonal injection")
            if self.bibd is None:
                raise ConfigError("balanced mode needs a bibd (preset name or inline design)")
            design = self.design()
            if design.n != self.k + self.r or design.block_size != self.r:
                raise ConfigError(f"design ({design.n}, {design.block_size}) does not fit k={self.k}, r={self.r}")

    def design(self) -> BibdDesign:
        if isinstance(self.bibd, str):
            try:
                return load_preset(self.bibd)
            except KeyError:
                raise ConfigError(f"unknown BIBD preset {self.bibd!r}; known: {', '.join(PRESETS)}") from None
        if isinstance(self.bibd, dict):
            return BibdDesign.from_json(self.bibd)
        raise ConfigError("bibd must be a preset name or an object {n, r, lambda, blocks}")

    @classmethod
    def from_dict(cls, obj: dict) -> CodeConfig:
        known = {"mode", "k", "r", "s", "w", "seed", "injection", "bibd"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        obj = dict(obj)
        if obj.get("mode") == "balanced" and "s" not in obj and "r" in obj:
            obj["s"] = obj["r"]
        return cls(**obj)

    @classmethod
    def load(cls, path) -> CodeConfig:
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "k": self.k, "r": self.r, "s": self.s, "w": self.w, "seed": self.seed,
               "injection": self.injection if isinstance(self.injection, str) else [list(r) for r in self.injection]}
        if self.mode == "balanced":
            out["bibd"] = self.bibd
        return out

    def canonical(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical()).digest()

    def table(self) -> InjectionTable | None:
        if isinstance(self.injection, str):
            return None
        return InjectionTable.from_json(self.injection)

    def build(self, allow_suboptimal: bool = False, verify: bool = True) -> PiggybackedCode | BalancedCode:
        if self.mode == "balanced":
            return build_balanced_code(self.design(), self.k, self.w, self.seed, verify=verify)
        injection = self.table() or self.injection
        return build_piggybacked_code(BaseParams(self.k, self.r, self.w, self.seed), self.s, injection,
                                      allow_suboptimal=allow_suboptimal, verify=verify)

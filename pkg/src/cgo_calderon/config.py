"""YAML pipeline configuration with a strict schema (unknown keys are errors)."""
from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .geometry import DomainSpec
from .phantoms import DEFAULTS, Phantom, PhantomError
from .reconstruction import ReconConfig, ReconError


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainSection(_Strict):
    kind: Literal["ball", "star_shaped"] = "ball"
    radius_omega: float = Field(1.0, gt=0)
    perturbation: list[tuple[int, int, float]] = []

    def build(self) -> DomainSpec:
        if self.kind == "ball" and self.perturbation:
            raise ValueError("a ball takes no perturbation")
        return DomainSpec(self.kind, self.radius_omega, tuple(tuple(p) for p in self.perturbation))


class PhantomSection(_Strict):
    kind: str = "radial_gaussian"
    params: dict = {}

    @model_validator(mode="after")
    def _known(self):
        if self.kind not in DEFAULTS:
            raise ValueError(f"unknown phantom {self.kind!r}; choose from {sorted(DEFAULTS)}")
        try:
            self.build()
        except PhantomError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> Phantom:
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in self.params.items()}
        return Phantom(self.kind, params)


class BoxSection(_Strict):
    n: int = 64
    side: float | None = None

    @field_validator("n")
    @classmethod
    def _pow2(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("box n must be a power of two >= 8")
        return v

    @model_validator(mode="after")
    def _side(self):
        if self.side is not None and not self.side > 0:
            raise ValueError("box side must be positive")
        return self


class ReconSection(_Strict):
    T: float = 3.0
    n_tau: int = 2
    n_theta: int = 8
    c: float = 1.0
    mode: Literal["full", "simplified"] = "simplified"
    recovery: Literal["semilinear", "simplified_image"] = "simplified_image"
    xi: list[tuple[float, float, float]] | None = None

    def build(self, R: float, box_n: int) -> ReconConfig:
        return ReconConfig(self.T, self.n_tau, self.n_theta, self.c, R, self.mode, self.recovery, box_n)


class VerifySection(_Strict):
    lambdas: list[float] = [2.0, 4.0]
    rho_factors: list[float] = [4.0, 8.0]
    n_samples: int = Field(50, ge=1)
    box_n: int = 64
    slack: float = 0.05


class PipelineConfig(_Strict):
    """Every knob of a run; ``seed`` drives all random sampling."""

    domain: DomainSection = DomainSection()
    phantom: PhantomSection = PhantomSection()
    mesh_h: float = Field(0.1, gt=0, le=0.5)
    box: BoxSection = BoxSection()
    basis_L: int = Field(8, ge=0, le=40)
    recon: ReconSection = ReconSection()
    verify: VerifySection = VerifySection()
    seed: int = 0
    out: str = "out"

    @model_validator(mode="after")
    def _recon_valid(self):
        try:
            self.recon.build(self.domain.build().R, self.box.n)
        except (ReconError, ValueError) as exc:
            raise ValueError(f"recon: {exc}") from exc
        return self

    @model_validator(mode="after")
    def _side_covers(self):
        R = self.domain.build().R
        if self.box.side is not None and self.box.side < 4 * R - 1e-12:
            raise ValueError(f"box side {self.box.side} is below 4R = {4 * R}")
        return self

    def recon_config(self) -> ReconConfig:
        return self.recon.build(self.domain.build().R, self.box.n)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def parse_config(text: str) -> PipelineConfig:
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a mapping")
    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text())

"""Scenario configuration files (TOML).

Schema::

    name = "table2-mdo-rho0"
    n = 100                      # default arm size
    replicates = 1000
    imputations = 50
    bootstrap = 0                # bootstrap replicates; 0 disables
    bootstrap_imputations = 10   # imputations inside each bootstrap replicate
    methods = ["tim", "nim-mean"]
    alpha = 0.05
    mc_subjects = 1000000        # subjects for the truth oracle
    pooled_baseline = true

    [missingness]
    mechanism = "MDO"            # or "MCAR"
    alpha0 = -1.0
    alpha1 = 1.0

    [[arms]]
    label = "P"
    means = [0.0, 0.0]
    cov = { kind = "compound-symmetry", sigma = 1.0, rho = 0.0 }

    [[arms]]
    label = "E"
    means = [0.0, -1.0]
    cov = { kind = "explicit", matrix = [[1.0, 0.16], [0.16, 0.64]] }

An explicit matrix may instead be given as ``sd`` (one per visit) plus a
common ``corr``, with ``kind = "sd-corr"``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .datagen import ArmSpec, MissingnessSpec
from .methods import METHODS
from .mvn import CovarianceSpec, ParameterError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "shipped_configs"]

FULL_SCALE = {"replicates": 5000, "imputations": 200}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    arms: tuple[ArmSpec, ...]
    missingness: MissingnessSpec
    replicates: int = 1000
    imputations: int = 50
    bootstrap: int = 0
    bootstrap_imputations: int = 10
    methods: tuple[str, ...] = ("tim", "nim-mean")
    alpha: float = 0.05
    seed: int | None = None
    mc_subjects: int = 1_000_000
    pooled_baseline: bool = True
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        needs_mi = any(m not in ("bocf", "direct-ml") for m in self.methods)
        if needs_mi and self.imputations < 2:
            raise ConfigError("multiple-imputation methods need imputations >= 2")
        if self.bootstrap and self.bootstrap < 2:
            raise ConfigError("bootstrap must be 0 or >= 2")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if not self.methods:
            raise ConfigError("no methods requested")
        if len({a.K for a in self.arms}) != 1:
            raise ConfigError("arms disagree on the number of visits")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")

    @property
    def K(self) -> int:
        return self.arms[0].K

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.arms]

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "methods" in kw:
            kw["methods"] = tuple(kw["methods"])
        return replace(self, **kw)

    def full_scale(self) -> "ScenarioConfig":
        """Replicate and imputation counts for full-size runs."""
        return replace(self, **FULL_SCALE)


def _cov(raw: dict, dim: int) -> CovarianceSpec:
    kind = raw.get("kind", "compound-symmetry")
    if kind == "compound-symmetry":
        return CovarianceSpec(kind, sigma=float(raw.get("sigma", 1.0)), rho=float(raw.get("rho", 0.0)))
    if kind == "explicit":
        return CovarianceSpec("explicit", matrix=np.array(raw["matrix"], dtype=float))
    if kind == "sd-corr":
        sd = np.array(raw["sd"], dtype=float)
        if sd.size != dim:
            raise ConfigError(f"sd needs {dim} entries, got {sd.size}")
        corr = np.full((dim, dim), float(raw["corr"]))
        np.fill_diagonal(corr, 1.0)
        return CovarianceSpec("explicit", matrix=corr * np.outer(sd, sd))
    raise ConfigError(f"unknown covariance kind {kind!r}")


def parse_config(data: dict, source: str | None = None) -> ScenarioConfig:
    try:
        n_default = data.get("n")
        arms = []
        for raw in data["arms"]:
            means = np.array(raw["means"], dtype=float)
            n = raw.get("n", n_default)
            if n is None:
                raise ConfigError(f"arm {raw.get('label')!r} has no size and no default n is set")
            arms.append(ArmSpec(str(raw["label"]), int(n), means, _cov(raw.get("cov", {}), means.size)))
        miss = data.get("missingness", {})
        alpha1 = float(miss.get("alpha1", 0.0))
        missingness = MissingnessSpec(
            miss.get("mechanism", "MCAR" if alpha1 == 0 else "MDO"),
            float(miss.get("alpha0", 0.0)),
            alpha1,
        )
        known = {f for f in ScenarioConfig.__dataclass_fields__} | {"n", "arms", "missingness"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        scalars = {
            k: data[k]
            for k in ("replicates", "imputations", "bootstrap", "bootstrap_imputations",
                      "alpha", "seed", "mc_subjects", "pooled_baseline")
            if k in data
        }
        return ScenarioConfig(
            name=str(data.get("name", Path(source).stem if source else "scenario")),
            arms=tuple(arms),
            missingness=missingness,
            methods=tuple(data.get("methods", ("tim", "nim-mean"))),
            source=source,
            **scalars,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, source=str(path))


def shipped_configs(prefix: str = "") -> list[ScenarioConfig]:
    """Scenario files bundled with the package, sorted by file name."""
    root = resources.files("rtbmi") / "scenarios"
    names = sorted(p.name for p in root.iterdir() if p.name.endswith(".toml"))
    out = []
    for name in names:
        if name.startswith(prefix):
            with resources.as_file(root / name) as path:
                out.append(load_config(path))
    return out

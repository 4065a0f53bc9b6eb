"""Run configuration: feature schema, preprocessing, split sizes, model params."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .data import (
    DataError,
    FeatureSpec,
    StratifiedSplit,
    UndersampleSplit,
)
from .fairness import REDUCTIONS
from .gbdt import GbdtParams


@dataclass
class RunConfig:
    schema: tuple[FeatureSpec, ...]
    amount_features: tuple[str, ...] = ()
    bins: dict[str, list[float]] = field(default_factory=dict)
    seed: int = 0
    id_column: str = "id"
    target_column: str = "target"
    split: UndersampleSplit | StratifiedSplit | None = None
    display_n: int = 0
    display_path: str | None = None
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    alpha: float = 1.0
    consistency_k: int = 5
    report_attributes: tuple[str, ...] = ()
    cdd_strata: dict[str, str] = field(default_factory=dict)
    reduction: str = "minmax"
    flip_source: str = "predicted"

    def __post_init__(self):
        names = {f.name for f in self.schema}
        for a in self.amount_features:
            if a not in names:
                raise DataError(f"amount feature {a!r} not in schema")
        for b in self.bins:
            if b not in names:
                raise DataError(f"binning for unknown feature {b!r}")
        if not self.report_attributes:
            self.report_attributes = tuple(f.name for f in self.schema if f.protected)
        for a in self.report_attributes:
            if a not in names:
                raise DataError(f"report attribute {a!r} not in schema")
        if self.reduction not in REDUCTIONS:
            raise DataError(f"reduction must be one of {REDUCTIONS}")

    @property
    def protected(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.schema if f.protected)

    def to_dict(self) -> dict:
        split: dict | None = None
        if isinstance(self.split, UndersampleSplit):
            split = {"undersample": {"train": self.split.n_train, "holdout": self.split.n_holdout}}
        elif isinstance(self.split, StratifiedSplit):
            split = {"stratified": {"train": self.split.n_train, "test": self.split.n_test}}
        return {
            "features": [f.to_dict() for f in self.schema],
            "amount_features": list(self.amount_features),
            "bins": {k: list(v) for k, v in self.bins.items()},
            "seed": self.seed,
            "id_column": self.id_column,
            "target_column": self.target_column,
            "split": split,
            "display": (
                {"path": self.display_path} if self.display_path else {"n": self.display_n}
            ),
            "gbdt": self.gbdt.to_dict(),
            "alpha": self.alpha,
            "consistency_k": self.consistency_k,
            "report_attributes": list(self.report_attributes),
            "cdd_strata": dict(self.cdd_strata),
            "reduction": self.reduction,
            "flip_source": self.flip_source,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "RunConfig":
        if "features" not in d:
            raise DataError("config is missing the 'features' list")
        schema = tuple(FeatureSpec.from_dict(f) for f in d["features"])
        split = None
        sconf = d.get("split")
        if sconf:
            if "undersample" in sconf:
                u = sconf["undersample"]
                split = UndersampleSplit(int(u["train"]), int(u["holdout"]))
            elif "stratified" in sconf:
                s = sconf["stratified"]
                n_test = s.get("test")
                split = StratifiedSplit(int(s["train"]), None if n_test is None else int(n_test))
            else:
                raise DataError(f"unknown split config: {sorted(sconf)}")
        display = d.get("display", {})
        gbdt_conf = dict(d.get("gbdt", {}))
        gbdt_conf.setdefault("seed", int(d.get("seed", 0)))
        return RunConfig(
            schema=schema,
            amount_features=tuple(d.get("amount_features", ())),
            bins={k: [float(e) for e in v] for k, v in d.get("bins", {}).items()},
            seed=int(d.get("seed", 0)),
            id_column=d.get("id_column", "id"),
            target_column=d.get("target_column", "target"),
            split=split,
            display_n=int(display.get("n", 0)),
            display_path=display.get("path"),
            gbdt=GbdtParams.from_dict(gbdt_conf),
            alpha=float(d.get("alpha", 1.0)),
            consistency_k=int(d.get("consistency_k", 5)),
            report_attributes=tuple(d.get("report_attributes", ())),
            cdd_strata=dict(d.get("cdd_strata", {})),
            reduction=d.get("reduction", "minmax"),
            flip_source=d.get("flip_source", "predicted"),
        )

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def with_seed(self, seed: int) -> "RunConfig":
        d = self.to_dict()
        d["seed"] = seed
        d["gbdt"]["seed"] = seed
        return RunConfig.from_dict(d)

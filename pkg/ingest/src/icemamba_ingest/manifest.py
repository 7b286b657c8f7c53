"""Source manifests: what to fetch, how source variables map to series ids."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConvertError

DATASETS = ("nsidc_cdr_v4", "era5_single", "era5_pressure", "oras5")

KNOWN_VARIABLE_IDS = {
    "siconc", "t2m", "t500", "sst", "ohc300", "ohc700", "mld001", "mld003",
    "ussr", "dssr", "gp500", "gp250", "slp", "u10m", "v10m", "u10",
}


@dataclass
class VariableMapping:
    source: str          # name in the raw file (netCDF variable or GRIB param key)
    target: str          # series id the forecasting package expects
    units: str
    scale: float = 1.0   # value_out = value_in * scale + offset
    offset: float = 0.0


@dataclass
class SourceManifest:
    dataset: str
    variables: list[VariableMapping]
    start: str  # "YYYY-MM"
    end: str
    urls: list[str] = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    credentials: str | None = None  # reference only; never stored inline

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConvertError(f"unknown dataset id {self.dataset!r}; expected one of {DATASETS}")
        for vm in self.variables:
            if vm.target not in KNOWN_VARIABLE_IDS:
                raise ConvertError(f"variable map target {vm.target!r} is not a known series id")
        if not self.variables:
            raise ConvertError("manifest maps no variables")

    def mapping_for(self, source: str) -> VariableMapping | None:
        for vm in self.variables:
            if vm.source == source:
                return vm
        return None


def load_manifest(path) -> SourceManifest:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConvertError(f"cannot read manifest {path}: {exc}") from exc
    try:
        variables = [VariableMapping(**vm) for vm in raw["variables"]]
        return SourceManifest(
            dataset=raw["dataset"],
            variables=variables,
            start=raw["start"],
            end=raw["end"],
            urls=raw.get("urls", []),
            grid=raw.get("grid", {}),
            credentials=raw.get("credentials"),
        )
    except (KeyError, TypeError) as exc:
        raise ConvertError(f"manifest {path} missing field: {exc}") from exc

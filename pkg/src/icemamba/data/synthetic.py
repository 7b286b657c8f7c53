"""Deterministic synthetic dataset for desk-scale training and verification.

The generated set holds monthly SIC plus three covariates on a pole-centered
grid with a fixed land mask:

* ``t2m``  - leads the SIC anomaly by two months (a genuinely causal input),
* ``v10m`` - red noise unrelated to SIC (a pure distractor),
* ``u10``  - a pure per-cell linear trend whose spatial pattern matches the
  SIC trend component (useful to the model until it is detrended away).
"""

from __future__ import annotations

import numpy as np

from .. import months as cal
from ..errors import DataError
from .gridio import GridSeries


def _radius(h: int, w: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r = np.hypot((yy - cy) / max(cy, 1), (xx - cx) / max(cx, 1))
    return r / np.sqrt(2.0)


def _land(h: int, w: int) -> np.ndarray:
    r = _radius(h, w)
    land = r > 0.92
    land[: max(1, h // 8), : max(1, w // 3)] = True  # a continent in one corner
    return land


def _smooth(field: np.ndarray, passes: int = 2) -> np.ndarray:
    out = field
    for _ in range(passes):
        acc = out.copy()
        n = np.ones_like(out)
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            acc += np.roll(out, (dy, dx), axis=(0, 1))
            n += 1
        out = acc / n
    return out


def _red_noise(rng: np.random.Generator, t: int, h: int, w: int, phi: float, sigma: float) -> np.ndarray:
    """AR(1) in time, spatially smoothed innovations."""
    out = np.zeros((t, h, w))
    scale = sigma * np.sqrt(1 - phi * phi)
    state = _smooth(rng.normal(0, 1, size=(h, w))) * sigma * 3.0
    for k in range(t):
        state = phi * state + scale * _smooth(rng.normal(0, 1, size=(h, w))) * 3.0
        out[k] = state
    return out


def generate_synthetic(
    h: int,
    w: int,
    years: int,
    seed: int,
    start_year: int = 2000,
    trend_scale: float = 0.30,
    anomaly_sigma: float = 0.11,
    seasonal_trend: bool = True,
    anomaly_phi: float = 0.55,
    amplitude_trend: float = 0.0,
) -> dict[str, GridSeries]:
    """Build the four-variable synthetic series set; identical for equal seeds.

    With amplitude_trend > 0 the anomaly amplitude grows along the record
    (variability rises as the ice thins) and the trend covariate becomes the
    spatially uniform record progress, so reading the covariate is the only
    clean way to calibrate the anomaly scale.
    """
    if years < 15:
        raise DataError(f"generate_synthetic: need >= 15 years, got {years}")
    rng = np.random.default_rng(seed)
    t_total = 12 * years
    months = [cal.month_id(start_year, 1) + k for k in range(t_total)]
    land = _land(h, w)
    r = _radius(h, w)

    base = 1.15 - 1.75 * r
    amp = 0.30 + 0.25 * r
    trend_pattern = np.exp(-(((r - 0.25) / 0.18) ** 2))  # inside the September ice edge

    # anomaly process extended 2 months so the causal covariate can lead it
    anom = _red_noise(rng, t_total + 2, h, w, phi=anomaly_phi, sigma=anomaly_sigma)

    k = np.arange(t_total)
    month_no = k % 12 + 1
    season = np.cos(2 * np.pi * (month_no - 3) / 12.0)
    progress = k / max(t_total - 1, 1)
    if seasonal_trend:
        # the decline expresses mostly in late summer, like the observed record
        month_dist = np.minimum(np.abs(month_no - 9), 12 - np.abs(month_no - 9))
        trend_season = np.exp(-((month_dist / 1.6) ** 2))
    else:
        trend_season = np.ones_like(month_no, dtype=np.float64)

    if amplitude_trend > 0:
        modulation = 1.0 + amplitude_trend * (progress - 0.5)
        anom_in_sic = anom[:t_total] * modulation[:, None, None]
        trend = np.broadcast_to(progress[:, None, None], (t_total, h, w)).copy()
    else:
        anom_in_sic = anom[:t_total]
        trend = progress[:, None, None] * trend_pattern[None, :, :]

    sic = (
        base[None, :, :]
        + amp[None, :, :] * season[:, None, None]
        - trend_scale * (progress * trend_season)[:, None, None] * trend_pattern[None, :, :]
        + anom_in_sic
    )
    sic = np.clip(sic, 0.0, 1.0)
    sic[:, land] = 0.0

    causal = 5.0 * anom[2 : t_total + 2] + 0.05 * rng.normal(0, 1, size=(t_total, h, w))
    noise = _red_noise(rng, t_total, h, w, phi=0.5, sigma=1.0)

    def series(vid: str, units: str, fields: np.ndarray) -> GridSeries:
        return GridSeries(vid, units, list(months), fields.astype(np.float32), land)

    return {
        "siconc": series("siconc", "fraction", sic),
        "t2m": series("t2m", "K", causal),
        "v10m": series("v10m", "m s-1", noise),
        "u10": series("u10", "m s-1", trend),
    }


def synthetic_specs() -> list:
    """Variable settings matched to the generator's value ranges."""
    from .pipeline import VariableSpec

    return [
        VariableSpec("siconc", 12, anomaly=False, normalize=False),
        VariableSpec("t2m", 3, anomaly=False, normalize=True),
        VariableSpec("v10m", 3, anomaly=False, normalize=True),
        VariableSpec("u10", 3, anomaly=False, normalize=False),
    ]

"""Least-squares fit of the free device constants to the published anchors.

Fitted: ``horowitz_k``, ``c_inv``, ``c_stair_per_stack``, ``w_per_row``.  All
other constants stay at the prior values in ``data/tech_prior.yaml``.

Anchors (log-residuals are minimised jointly):

* Size A (256x2048x128) PIM latency with 8-bit inputs = 2.0 us
* conventional plane (5600x32768x128) page read = 35 us, middle of 20-50 us
* C_stair == C_cell at n_col=512, n_stack=128
* Size A cell density = 12.84 Gib/mm^2
"""

from __future__ import annotations

import dataclasses
import math
from importlib import resources

import numpy as np
import yaml
from scipy.optimize import least_squares

from .config import CONVENTIONAL, SIZE_A, SIZE_B, PlaneConfig, TechParams
from .tech_model import cell_density, derive_rc, page_read_latency, pim_latency, plane_area

FITTED = ("horowitz_k", "c_inv", "c_stair_per_stack", "w_per_row")

TARGET_PIM_A = 2.0e-6
TARGET_READ_CONV = 35e-6
TARGET_DENSITY_A = 12.84
STAIR_CHECK = PlaneConfig(256, 512, 128)


def load_prior() -> TechParams:
    text = resources.files("flashpim.data").joinpath("tech_prior.yaml").read_text()
    values = yaml.safe_load(text)["tech"]
    return TechParams(**{k: float(v) for k, v in values.items()})


def anchor_values(tech: TechParams) -> dict[str, float]:
    rc = derive_rc(STAIR_CHECK, tech)
    return {
        "pim_latency_size_a": pim_latency(SIZE_A, tech, 8).total,
        "read_latency_conventional": page_read_latency(CONVENTIONAL, tech),
        "c_stair_over_c_cell_512x128": rc.c_stair / rc.c_cell,
        "density_size_a": cell_density(SIZE_A, tech),
    }


TARGETS = {
    "pim_latency_size_a": TARGET_PIM_A,
    "read_latency_conventional": TARGET_READ_CONV,
    "c_stair_over_c_cell_512x128": 1.0,
    "density_size_a": TARGET_DENSITY_A,
}


def _residuals(x: np.ndarray, prior: TechParams) -> np.ndarray:
    tech = dataclasses.replace(prior, **{k: float(math.exp(v)) for k, v in zip(FITTED, x)})
    got = anchor_values(tech)
    return np.array([math.log(got[k] / TARGETS[k]) for k in TARGETS])


def calibrate(prior: TechParams | None = None) -> tuple[TechParams, dict]:
    """Return the fitted TechParams and a report of anchors and residuals."""
    prior = prior or load_prior()
    x0 = np.array([math.log(getattr(prior, k)) for k in FITTED])
    sol = least_squares(_residuals, x0, args=(prior,), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    fitted = {k: float(f"{math.exp(v):.6e}") for k, v in zip(FITTED, sol.x)}
    tech = dataclasses.replace(prior, **fitted)
    got = anchor_values(tech)
    report = {
        "method": "scipy.optimize.least_squares on log(model/target)",
        "fitted": list(FITTED),
        "anchors": {
            k: {"target": TARGETS[k], "model": got[k],
                "log_residual": math.log(got[k] / TARGETS[k])}
            for k in TARGETS
        },
        "checks": {
            "pim_latency_size_b": pim_latency(SIZE_B, tech, 8).total,
            "pim_latency_conventional": pim_latency(CONVENTIONAL, tech, 8).total,
            "density_ratio_b_over_a": cell_density(SIZE_B, tech) / cell_density(SIZE_A, tech),
            "plane_area_size_a_mm2": plane_area(SIZE_A, tech),
            "area_256_planes_size_a_mm2": 256 * plane_area(SIZE_A, tech),
        },
    }
    return tech, report


def dump(tech: TechParams, report: dict) -> str:
    body = {"tech": dataclasses.asdict(tech), "calibration": report}
    header = ("# Calibrated device constants, generated by scripts/calibrate.py.\n"
              "# Do not edit by hand; edit tech_prior.yaml and re-run.\n")
    return header + yaml.safe_dump(body, sort_keys=False)

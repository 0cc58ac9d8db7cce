"""Emission dipoles along <111> observed through the (001) surface.

Angles are in degrees in the sample plane, 0 deg along [110] and 90 deg
along [-110]. Intensity-only measurements cannot tell theta from
theta + 180, so fitted orientations are reported in [0, 180).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fitting import FAILED, FitResult, curve_fit, get_model
from .rng import SeedLike, as_generator

AXES: dict[str, tuple[int, int, int]] = {
    "[111]": (1, 1, 1),
    "[-111]": (-1, 1, 1),
    "[1-11]": (1, -1, 1),
    "[11-1]": (1, 1, -1),
}

_X110 = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
_Y1M10 = np.array([-1.0, 1.0, 0.0]) / np.sqrt(2)


@dataclass(frozen=True)
class DipoleAxis:
    name: str

    def __post_init__(self):
        if self.name not in AXES:
            raise ValueError(f"{self.name!r} is not a <111> axis; choose from {list(AXES)}")

    @property
    def vector(self) -> np.ndarray:
        v = np.array(AXES[self.name], dtype=float)
        return v / np.linalg.norm(v)


ALL_AXES = tuple(DipoleAxis(n) for n in AXES)


@dataclass(frozen=True)
class PolarizationDiagram:
    angles: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        if np.shape(self.angles) != np.shape(self.intensities):
            raise ValueError("angles and intensities must have the same length")
        if np.any(np.asarray(self.intensities) < 0):
            raise ValueError("intensities must be >= 0")

    def visibility(self) -> float:
        i = np.asarray(self.intensities, dtype=float)
        return float((i.max() - i.min()) / (i.max() + i.min()))

    def __add__(self, other: "PolarizationDiagram") -> "PolarizationDiagram":
        if not np.array_equal(self.angles, other.angles):
            raise ValueError("diagrams sampled at different angles")
        return PolarizationDiagram(self.angles, self.intensities + other.intensities)


def project_to_001(axis: DipoleAxis) -> float:
    """In-plane orientation (0 or 90 deg) of the dipole seen along [001]."""
    v = axis.vector
    inplane = np.array([v[0], v[1], 0.0])
    ang = np.rad2deg(np.arctan2(inplane @ _Y1M10, inplane @ _X110)) % 180.0
    # <111> projections are exactly along [110] or [-110]; snap rounding noise
    return float(round(ang / 90.0) * 90.0 % 180.0)


def malus_diagram(theta0: float, i_max: float, visibility: float, angles) -> PolarizationDiagram:
    """cos^2 polarization diagram with (I_max - I_min)/(I_max + I_min) = visibility."""
    if not 0 <= visibility <= 1:
        raise ValueError("visibility must lie in [0, 1]")
    angles = np.asarray(angles, dtype=float)
    return PolarizationDiagram(angles, get_model("malus")(angles, [theta0, i_max, visibility]))


def dipole_diagram(axis: DipoleAxis, i_max: float, angles, visibility: float = 1.0) -> PolarizationDiagram:
    return malus_diagram(project_to_001(axis), i_max, visibility, angles)


def ensemble_diagram(weights: dict[str, float], i_max: float, angles) -> PolarizationDiagram:
    """Sum of single-axis diagrams weighted per axis name."""
    angles = np.asarray(angles, dtype=float)
    total = np.zeros_like(angles)
    for name, w in weights.items():
        total += w * dipole_diagram(DipoleAxis(name), i_max, angles).intensities
    return PolarizationDiagram(angles, total)


@dataclass(frozen=True)
class PolarizationFit:
    theta0: float
    i_max: float
    visibility: float
    result: FitResult

    @property
    def status(self) -> str:
        return self.result.status


def fit_polarization(diagram: PolarizationDiagram, y_err=None) -> PolarizationFit:
    """Fit theta0 (mod 180), I_max and visibility of a cos^2 diagram.

    Weights default to Poisson errors on the intensities.
    """
    ang = np.asarray(diagram.angles, dtype=float)
    inten = np.asarray(diagram.intensities, dtype=float)
    if np.unique(ang % 180.0).size < 6 or np.ptp(ang) < 90:
        raise ValueError("need at least 6 distinct angles spanning 90 deg or more")
    if not np.any(inten > 0):
        res = curve_fit("malus", ang, inten, p0=np.array([0.0, 1.0, 0.5]), max_iter=0)
        res = replace(res, status=FAILED, message="all-zero intensities")
        return PolarizationFit(np.nan, np.nan, np.nan, res)
    res = curve_fit("malus", ang, inten, y_err=y_err)
    return PolarizationFit(res["theta0"] % 180.0, res["i_max"], res["visibility"], res)


def orientation_histogram(n_emitters: int, seed: SeedLike = 0, stratified: bool = False) -> dict[int, int]:
    """Projected orientation counts {0: n0, 90: n90} for randomly oriented emitters.

    Axes are drawn uniformly from the four <111> directions. With
    ``stratified`` the draw cycles through all four axes before repeating.
    """
    if n_emitters < 1:
        raise ValueError("n_emitters must be >= 1")
    rng = as_generator(seed, "dipole", "orientation")
    if stratified:
        idx = np.concatenate([rng.permutation(4) for _ in range(-(-n_emitters // 4))])[:n_emitters]
    else:
        idx = rng.integers(0, 4, size=n_emitters)
    proj = np.array([project_to_001(a) for a in ALL_AXES])[idx]
    return {0: int(np.sum(proj == 0.0)), 90: int(np.sum(proj == 90.0))}


def write_csv(diagram: PolarizationDiagram, path) -> None:
    with open(path, "w") as fh:
        fh.write("angle_deg,intensity\n")
        for a, i in zip(diagram.angles, diagram.intensities):
            fh.write(f"{a:.6g},{i:.10g}\n")

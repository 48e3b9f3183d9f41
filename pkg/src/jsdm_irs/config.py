"""System configuration: scenario parameters, geometry and validation.

All internal computation is linear; fields carrying the ``_dB`` suffix are
decibel inputs that get converted exactly once, where they are consumed.
Distances and positions are in meters, powers in watts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, InfeasibleDimensionError


def _largest_divisor_at_most_sqrt(n: int) -> int:
    best = 1
    for k in range(1, int(math.isqrt(n)) + 1):
        if n % k == 0:
            best = k
    return best


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters for one IRS-assisted downlink setup.

    Antenna geometry: the BS is a ULA along the y axis with spacing ``d_BS``;
    the IRS is a UPA in the y-z plane with element pitch ``d_H`` (horizontal)
    and ``d_V`` (vertical). Group centers sit on an arc of azimuths around the
    BS boresight (+x axis).
    """

    # Array / user dimensions
    M: int = 64            # BS antennas
    N: int = 32            # IRS elements
    G: int = 3             # UE groups
    K_bar: int = 4         # UEs per group
    b_bar: int = 6         # effective channel dimension per group
    r_star: int = 6        # dominant eigenmodes per group used for BD

    # CSI / power
    tau: float = 0.0       # CSI accuracy in [0, 1]; 0 = perfect
    P_max: float = 1.0     # total transmit power budget (W)
    sigma2: float = 0.1    # noise power (W)

    # Carrier / array spacings (meters)
    lambda_c: float = 0.12     # carrier wavelength (2.5 GHz)
    d_BS: float = 0.06         # BS antenna spacing (lambda/2)
    d_IRS: float = 0.03        # IRS steering-phase spacing (lambda/4)
    d_H: float = 0.03          # IRS element width (lambda/4)
    d_V: float = 0.03          # IRS element height (lambda/4)

    # Path-loss model (reference losses in dB at 1 m, exponents linear)
    alpha1: float = 2.2        # BS-IRS exponent
    alpha2: float = 2.2        # IRS-UE / BS-UE exponent
    C1_dB: float = 26.0        # BS-IRS reference loss
    C2_dB: float = 28.0        # IRS-UE / BS-UE reference loss
    penetration_dB: float = 15.0   # extra loss on the direct BS-UE link only

    # Geometry (meters / degrees)
    bs_position: Tuple[float, float, float] = (0.0, 0.0, 10.0)
    irs_position: Tuple[float, float, float] = (30.0, 20.0, 10.0)
    group_distances: Tuple[float, ...] = (80.0, 100.0, 120.0)  # BS to group center
    group_arc_deg: Tuple[float, float] = (-60.0, 60.0)         # azimuth arc for group centers
    angular_spread_deg: float = 10.0                           # local-scattering spread

    # IRS UPA grid columns; None derives the most square grid dividing N
    n_h: Optional[int] = None

    # Reproducibility
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        counts = {"M": self.M, "N": self.N, "G": self.G, "K_bar": self.K_bar,
                  "b_bar": self.b_bar, "r_star": self.r_star}
        for name, value in counts.items():
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {value!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau", f"must lie in [0, 1], got {self.tau!r}")
        if not self.P_max > 0:
            raise ConfigError("P_max", f"must be > 0, got {self.P_max!r}")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2", f"must be > 0, got {self.sigma2!r}")
        for name in ("lambda_c", "d_BS", "d_IRS", "d_H", "d_V"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if len(self.group_distances) != self.G:
            raise ConfigError("group_distances",
                              f"needs {self.G} entries, got {len(self.group_distances)}")
        if any(d <= 0 for d in self.group_distances):
            raise ConfigError("group_distances", "distances must be > 0")
        if self.n_h is not None and (self.n_h < 1 or self.N % self.n_h != 0):
            raise ConfigError("n_h", f"must divide N={self.N}, got {self.n_h!r}")
        if not self.angular_spread_deg >= 0:
            raise ConfigError("angular_spread_deg", "must be >= 0")
        self.check_feasibility()

    def check_feasibility(self) -> None:
        """Enforce K_bar <= b_bar <= M - r_star*(G-1) (approximate-BD feasibility)."""
        bound = self.M - self.r_star * (self.G - 1)
        if not (self.K_bar <= self.b_bar <= bound):
            raise InfeasibleDimensionError(
                f"infeasible JSDM dimensions: require K_bar <= b_bar <= M - r_star*(G-1), "
                f"got {self.K_bar} <= {self.b_bar} <= {self.M} - {self.r_star}*({self.G}-1) "
                f"= {bound}"
            )

    # -- derived geometry --------------------------------------------------

    @property
    def K_total(self) -> int:
        return self.G * self.K_bar

    @property
    def snr_dB(self) -> float:
        """Transmit SNR rho = P_max / sigma2 in dB."""
        return 10.0 * math.log10(self.P_max / self.sigma2)

    @property
    def irs_grid(self) -> Tuple[int, int]:
        """(columns, rows) of the IRS UPA."""
        n_h = self.n_h if self.n_h is not None else _largest_divisor_at_most_sqrt(self.N)
        return n_h, self.N // n_h

    def group_azimuths(self) -> np.ndarray:
        """Group-center azimuths (radians), uniform on the configured arc."""
        lo, hi = np.deg2rad(self.group_arc_deg)
        if self.G == 1:
            return np.array([(lo + hi) / 2.0])
        return np.linspace(lo, hi, self.G)

    def group_centers(self) -> np.ndarray:
        """(G, 3) group-center positions at ground level on the azimuth arc."""
        az = self.group_azimuths()
        d = np.asarray(self.group_distances, dtype=float)
        bs = np.asarray(self.bs_position)
        centers = np.stack([bs[0] + d * np.cos(az), bs[1] + d * np.sin(az),
                            np.zeros(self.G) + 1.5], axis=1)
        return centers

    def bs_antenna_positions(self) -> np.ndarray:
        """(M, 3) ULA positions along y."""
        bs = np.asarray(self.bs_position)
        offsets = np.zeros((self.M, 3))
        offsets[:, 1] = np.arange(self.M) * self.d_BS
        return bs + offsets

    def irs_element_positions(self) -> np.ndarray:
        """(N, 3) UPA positions in the y-z plane at the IRS location."""
        n_h, n_v = self.irs_grid
        irs = np.asarray(self.irs_position)
        idx = np.arange(self.N)
        offsets = np.zeros((self.N, 3))
        offsets[:, 1] = (idx % n_h) * self.d_H
        offsets[:, 2] = (idx // n_h) * self.d_V
        return irs + offsets


def replace_config(config: SystemConfig, **changes) -> SystemConfig:
    """dataclasses.replace with re-validation (frozen dataclass)."""
    return replace(config, **changes)


# Sweepable scenario parameters and how they map onto SystemConfig.
SWEEP_PARAMETERS = ("snr_dB", "N", "M", "G", "K_bar", "b_bar", "r_star", "tau")


def apply_sweep_value(config: SystemConfig, parameter: str, value) -> SystemConfig:
    """Return a copy of `config` with one swept parameter applied.

    ``snr_dB`` varies sigma2 at fixed P_max so the RZF regularizer
    M/(b_bar*P_max) stays constant across the sweep. Sweeping ``G`` re-uses
    the first group distance for any newly added groups.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError("sweep.parameter",
                          f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    if parameter == "snr_dB":
        return replace_config(config, sigma2=config.P_max / 10.0 ** (float(value) / 10.0))
    if parameter == "tau":
        return replace_config(config, tau=float(value))
    value = int(value)
    if parameter == "G":
        dists = tuple(config.group_distances[i % len(config.group_distances)]
                      for i in range(value))
        return replace_config(config, G=value, group_distances=dists)
    if parameter == "N":
        return replace_config(config, N=value, n_h=None)
    return replace_config(config, **{parameter: value})


def config_from_dict(raw: dict) -> SystemConfig:
    """Build a SystemConfig from the nested dict of a scenario file."""
    system = dict(raw)
    geometry = system.pop("geometry", {})
    known = set(SystemConfig.__dataclass_fields__)
    fields = {}
    for source in (system, geometry):
        for key, value in source.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration field")
            if key in ("bs_position", "irs_position", "group_arc_deg"):
                value = tuple(float(v) for v in value)
            elif key == "group_distances":
                value = tuple(float(v) for v in value)
            fields[key] = value
    try:
        return SystemConfig(**fields)
    except TypeError as exc:  # wrong type for a field
        raise ConfigError("system", str(exc)) from None

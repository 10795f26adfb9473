"""Rician-shadowed satellite-to-ground channel sampling.

Each channel element is h_l = Z * exp(j*theta_l) + h'_l where Z is a single
Nakagami-m line-of-sight amplitude shared by all L antennas, the phases
theta_l are i.i.d. uniform on [0, 2*pi) per coherence block, and the scatter
h'_l is i.i.d. complex Gaussian with per-element power 2*beta (real and
imaginary parts each of variance beta).  AWGN power is normalised to 1, so
the transmit power P_t absorbs pathloss and antenna gains.

All samplers are pure given an explicit numpy Generator; use `substream` to
derive named, order-independent generators from one master seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ShadowingParams:
    """Rician-shadowed fading triple (m, beta, omega).

    m     : Nakagami shape of the LOS amplitude (m -> inf: unobstructed LOS).
    beta  : half the scattering power; per-element scatter power is 2*beta.
    omega : average LOS power E[Z^2].
    """

    m: float
    beta: float
    omega: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"shadowing shape m must be > 0, got {self.m}")
        if self.beta < 0:
            raise ValueError(f"scatter power parameter beta must be >= 0, got {self.beta}")
        if self.omega < 0:
            raise ValueError(f"LOS power omega must be >= 0, got {self.omega}")

    @property
    def mean_element_power(self) -> float:
        """E[|h_l|^2] = 2*beta + omega."""
        return 2.0 * self.beta + self.omega

    def with_estimation_noise(self, sigma_e2: float) -> "ShadowingParams":
        """Statistics of the estimated channel: same m and omega, scatter
        power increased to 2*beta + sigma_e2."""
        if sigma_e2 < 0:
            raise ValueError(f"sigma_e2 must be >= 0, got {sigma_e2}")
        return ShadowingParams(self.m, self.beta + 0.5 * sigma_e2, self.omega)


# Frequent heavy / average / infrequent light shadowing presets.
SCENARIOS = {
    "FHS": ShadowingParams(m=0.739, beta=0.063, omega=8.97e-4),
    "AS": ShadowingParams(m=10.1, beta=0.126, omega=0.835),
    "ILS": ShadowingParams(m=19.4, beta=0.158, omega=1.29),
}


def scenario(name: str) -> ShadowingParams:
    """Look up a shadowing preset by name (FHS, AS or ILS)."""
    try:
        return SCENARIOS[name.upper()]
    except KeyError:
        raise ValueError(
            f"unknown shadowing scenario {name!r}; choose from {sorted(SCENARIOS)}"
        ) from None


@dataclass(frozen=True)
class UserChannel:
    """One user's channel for one coherence block, kept in component form."""

    los_amplitude: float
    los_phases: np.ndarray
    scatter: np.ndarray

    @property
    def n_antennas(self) -> int:
        return self.los_phases.shape[-1]

    @property
    def h(self) -> np.ndarray:
        return self.los_amplitude * np.exp(1j * self.los_phases) + self.scatter


@dataclass(frozen=True)
class EstimatedChannel:
    """CSIT view of a channel: h_hat = h + error, error ~ CN(0, sigma_e2 I)."""

    h_hat: np.ndarray
    sigma_e2: float


def substream(seed: int, *key: int) -> np.random.Generator:
    """Named RNG substream: deterministic in (seed, key), independent of the
    order in which substreams are created or consumed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def sample_nakagami(m, omega, rng, size=None):
    """Nakagami-m amplitude(s) Z with E[Z^2] = omega, via Z = sqrt(Gamma(m, omega/m)).

    The construction gives the exact moments E[Z^2] = omega and
    E[Z^4] = (1 + 1/m) * omega^2.
    """
    if not m > 0:
        raise ValueError(f"Nakagami shape m must be > 0, got {m}")
    if not omega > 0:
        raise ValueError(f"Nakagami mean-square omega must be > 0, got {omega}")
    return np.sqrt(rng.gamma(shape=m, scale=omega / m, size=size))


def _los_amplitudes(params: ShadowingParams, size, rng) -> np.ndarray:
    if params.omega == 0.0:
        return np.zeros(size)
    return np.sqrt(rng.gamma(shape=params.m, scale=params.omega / params.m, size=size))


def _scatter(beta, size_with_l, rng) -> np.ndarray:
    g = rng.standard_normal(tuple(size_with_l) + (2,))
    return np.sqrt(beta) * (g[..., 0] + 1j * g[..., 1])


def sample_channel(params: ShadowingParams, n_antennas: int, rng) -> UserChannel:
    """Draw one Rician-shadowed channel: shared LOS amplitude, i.i.d. phases,
    i.i.d. scatter."""
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    z = float(_los_amplitudes(params, (), rng))
    phases = rng.uniform(0.0, TWO_PI, size=n_antennas)
    scatter = _scatter(params.beta, (n_antennas,), rng)
    return UserChannel(los_amplitude=z, los_phases=phases, scatter=scatter)


def sample_channel_array(params: ShadowingParams, n_antennas: int, rng, size=()) -> np.ndarray:
    """Vectorised channel draw of shape (*size, n_antennas).

    Draw order is fixed (LOS amplitudes, phases, scatter) so results are
    reproducible for a given generator state.
    """
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    size = tuple(np.atleast_1d(size).astype(int)) if not isinstance(size, tuple) else size
    z = _los_amplitudes(params, size, rng)
    phases = rng.uniform(0.0, TWO_PI, size=size + (n_antennas,))
    scatter = _scatter(params.beta, size + (n_antennas,), rng)
    return z[..., None] * np.exp(1j * phases) + scatter


def estimation_noise(shape, sigma_e2, rng) -> np.ndarray:
    """i.i.d. CN(0, sigma_e2) estimation-error samples."""
    if sigma_e2 < 0:
        raise ValueError(f"sigma_e2 must be >= 0, got {sigma_e2}")
    if sigma_e2 == 0.0:
        return np.zeros(shape, dtype=complex)
    g = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return np.sqrt(0.5 * sigma_e2) * (g[..., 0] + 1j * g[..., 1])


def apply_estimation_error(user_channel: UserChannel, sigma_e2, rng) -> EstimatedChannel:
    """CSIT model: h_hat = h + error with error independent of h; sigma_e2 = 0
    returns h_hat identical to h."""
    h = user_channel.h
    if sigma_e2 == 0.0:
        return EstimatedChannel(h_hat=h, sigma_e2=0.0)
    return EstimatedChannel(h_hat=h + estimation_noise(h.shape, sigma_e2, rng), sigma_e2=sigma_e2)


def snr_ave_db(p_t_linear, params: ShadowingParams) -> float:
    """Average single-antenna downlink SNR, 10*log10(P_t * (2*beta + omega))."""
    if not p_t_linear > 0:
        raise ValueError(f"p_t_linear must be > 0, got {p_t_linear}")
    return float(10.0 * np.log10(p_t_linear * params.mean_element_power))


# ---------------------------------------------------------------------------
# Dynamic LOS/NLOS channel over a coverage disk
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicScenario:
    """Coverage geometry plus LOS/NLOS fading models for the dynamic channel.

    Users are uniform on a disk of radius `radius_km`; the serving satellite
    sits at the zenith of the disk centre at `altitude_km`.  Per user and per
    block the channel is LOS (params `los_params`) with probability
    exp(-eta * cot(elevation)) and NLOS (params `nlos_params`) otherwise.
    """

    radius_km: float = 10.0
    altitude_km: float = 600.0
    eta: float = 0.35
    los_params: ShadowingParams = SCENARIOS["ILS"]
    nlos_params: ShadowingParams = SCENARIOS["FHS"]

    def __post_init__(self):
        if not self.radius_km > 0:
            raise ValueError(f"radius_km must be > 0, got {self.radius_km}")
        if not self.altitude_km > 0:
            raise ValueError(f"altitude_km must be > 0, got {self.altitude_km}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")


def elevation_angle(horizontal_distance_km, altitude_km):
    """Elevation angle in degrees seen by a ground user at the given
    horizontal distance from the sub-satellite point; 90 deg at distance 0."""
    if not np.all(np.asarray(altitude_km) > 0):
        raise ValueError("altitude_km must be > 0")
    if np.any(np.asarray(horizontal_distance_km) < 0):
        raise ValueError("horizontal_distance_km must be >= 0")
    return np.degrees(np.arctan2(altitude_km, horizontal_distance_km))


def los_probability(eta, elevation_deg):
    """LOS probability exp(-eta * cot(elevation)); 1 at zenith, increasing in
    elevation."""
    elevation = np.asarray(elevation_deg, dtype=float)
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    if np.any(elevation <= 0) or np.any(elevation > 90):
        raise ValueError("elevation_deg must lie in (0, 90]")
    zeta = np.radians(elevation)
    cot = np.cos(zeta) / np.sin(zeta)
    out = np.exp(-eta * cot)
    return float(out) if np.isscalar(elevation_deg) else out


def sample_user_positions(radius_km, count, rng) -> np.ndarray:
    """Uniform positions on the coverage disk, returned as (count, 2) x/y km."""
    if not radius_km > 0:
        raise ValueError(f"radius_km must be > 0, got {radius_km}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    r = radius_km * np.sqrt(rng.random(count))
    ang = rng.uniform(0.0, TWO_PI, size=count)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def sample_dynamic_channel(scen: DynamicScenario, elevation_deg, n_antennas: int, rng) -> UserChannel:
    """Draw one user's channel from the LOS/NLOS mixture at the given
    elevation.  The LOS/NLOS state is an independent Bernoulli draw per block
    with the stationary probability exp(-eta * cot(elevation))."""
    p = los_probability(scen.eta, elevation_deg)
    params = scen.los_params if rng.random() < p else scen.nlos_params
    return sample_channel(params, n_antennas, rng)


def sample_dynamic_channel_array(scen: DynamicScenario, elevations_deg, n_antennas: int, rng) -> np.ndarray:
    """Vectorised mixture draw: elevations_deg of shape `size` gives channels
    of shape (*size, n_antennas).

    Only the selected branch of the mixture is observed, so the LOS and NLOS
    branches may share phase/scatter noise sources without changing the
    sampled distribution.
    """
    elev = np.asarray(elevations_deg, dtype=float)
    p = los_probability(scen.eta, elev)
    states = rng.random(elev.shape) < p
    z_los = _los_amplitudes(scen.los_params, elev.shape, rng)
    z_nlos = _los_amplitudes(scen.nlos_params, elev.shape, rng)
    z = np.where(states, z_los, z_nlos)
    phases = rng.uniform(0.0, TWO_PI, size=elev.shape + (n_antennas,))
    g = rng.standard_normal(elev.shape + (n_antennas, 2))
    scatter_std = np.where(states, np.sqrt(scen.los_params.beta), np.sqrt(scen.nlos_params.beta))
    scatter = scatter_std[..., None] * (g[..., 0] + 1j * g[..., 1])
    return z[..., None] * np.exp(1j * phases) + scatter


def disk_mean_los_probability(scen: DynamicScenario) -> float:
    """LOS probability averaged over a uniform user position on the disk.

    With a = eta / altitude, E[exp(-a r)] over the radial density 2r/D^2 is
    (2 / (a D)^2) * (1 - exp(-a D) (1 + a D)).
    """
    x = scen.eta * scen.radius_km / scen.altitude_km
    if x < 1e-4:
        # series expansion; the direct formula loses precision for tiny x
        return 1.0 - 2.0 * x / 3.0 + x * x / 4.0
    return 2.0 / (x * x) * (1.0 - np.exp(-x) * (1.0 + x))


def dynamic_mean_element_power(scen: DynamicScenario, sigma_e2: float = 0.0) -> float:
    """Position-averaged mean element power of the (estimated) dynamic channel."""
    p = disk_mean_los_probability(scen)
    los = scen.los_params.mean_element_power + sigma_e2
    nlos = scen.nlos_params.mean_element_power + sigma_e2
    return p * los + (1.0 - p) * nlos

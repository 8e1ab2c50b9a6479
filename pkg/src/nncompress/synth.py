"""Band-limited synthetic fields standing in for reanalysis data at desk scale."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kvtext
from .gridfield import GridField4D


@dataclass(frozen=True)
class Mode:
    amp: float
    n: int  # zonal wavenumber
    m: int  # meridional wavenumber
    omega: float  # rad / hour
    p_exp: float = 0.0  # vertical profile (p / p_max) ** p_exp


@dataclass
class SynthSpec:
    nt: int = 8
    nlat: int = 46
    nlon: int = 90
    pressures: tuple = (250.0, 500.0, 850.0)
    dt: float = 6.0
    n_modes: int = 6
    max_zonal: int = 4
    max_meridional: int = 3
    max_freq: float = 2 * np.pi / 48.0
    amplitude: float = 1.0
    baseline: float = 0.0
    strat_p: float = 0.0
    strat_lat: float = 0.0
    modes: list = dc_field(default_factory=list)
    allow_constant: bool = False
    name: str = "synthetic"
    units: str = "1"

    def __post_init__(self):
        if min(self.nt, self.nlat, self.nlon) < 1 or len(self.pressures) < 1:
            raise ValueError("grid dimensions must be positive")
        if self.nlat < 2:
            raise ValueError("need at least two latitude rows")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_modes < 0:
            raise ValueError("n_modes must be nonnegative")
        if np.any(np.diff(np.asarray(self.pressures, dtype=float)) <= 0) or min(self.pressures) <= 0:
            raise ValueError("pressures must be positive and increasing")
        has_modes = bool(self.modes) or self.n_modes > 0
        has_base = self.baseline != 0 or self.strat_p != 0 or self.strat_lat != 0
        if not has_modes and not has_base and not self.allow_constant:
            raise ValueError("degenerate spec: no modes and zero baseline (set allow_constant to request it)")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.nt, len(self.pressures), self.nlat, self.nlon)

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "SynthSpec":
        ints = {"nt", "nlat", "nlon", "n_modes", "max_zonal", "max_meridional"}
        floats = {"dt", "max_freq", "amplitude", "baseline", "strat_p", "strat_lat"}
        kw: dict = {}
        for key, raw in pairs.items():
            if key in ints:
                kw[key] = int(raw)
            elif key in floats:
                kw[key] = float(raw)
            elif key == "pressures":
                kw[key] = tuple(kvtext.parse_floats(raw))
            elif key == "allow_constant":
                kw[key] = kvtext.parse_bool(raw)
            elif key in ("name", "units"):
                kw[key] = raw
            elif key == "modes":
                kw[key] = parse_modes(raw)
            else:
                raise kvtext.KVError(f"unknown synth spec key {key!r}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_pairs(kvtext.load(path))


def parse_modes(text: str) -> list[Mode]:
    """``amp:n:m:omega[:p_exp]`` entries separated by ``;``."""
    modes = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise kvtext.KVError(f"bad mode {item!r}")
        amp, n, m, omega = float(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
        modes.append(Mode(amp, n, m, omega, float(parts[4]) if len(parts) == 5 else 0.0))
    return modes


def grid_coords(spec: SynthSpec):
    times = np.arange(spec.nt, dtype=np.float64) * spec.dt
    lats = np.linspace(-90.0, 90.0, spec.nlat)
    lons = np.arange(spec.nlon, dtype=np.float64) * (360.0 / spec.nlon)
    return times, np.asarray(spec.pressures, dtype=np.float64), lats, lons


def draw_modes(spec: SynthSpec, rng: np.random.Generator) -> list[Mode]:
    if spec.modes:
        return list(spec.modes)
    modes = []
    for k in range(spec.n_modes):
        modes.append(
            Mode(
                amp=spec.amplitude * rng.uniform(0.5, 1.0) / np.sqrt(1.0 + k),
                n=int(rng.integers(0, spec.max_zonal + 1)),
                m=int(rng.integers(0, spec.max_meridional + 1)),
                omega=float(rng.uniform(0.0, spec.max_freq)),
                p_exp=float(rng.uniform(-1.0, 1.0)),
            )
        )
    return modes


def synth_field(spec: SynthSpec, seed: int) -> GridField4D:
    """Sum of sphere-smooth modes plus an optional (p, lat) stratified baseline."""
    rng = np.random.default_rng(seed)
    modes = draw_modes(spec, rng)
    times, pressures, lats, lons = grid_coords(spec)
    t = times[:, None, None, None]
    p = pressures[None, :, None, None]
    psi = np.deg2rad(lats)[None, None, :, None]
    phi = np.deg2rad(lons)[None, None, None, :]
    p_max = pressures.max()

    values = np.full(spec.shape, spec.baseline, dtype=np.float64)
    values += spec.strat_p * np.log(p_max / p) + spec.strat_lat * np.cos(psi) ** 2
    for mode in modes:
        delta, rho = rng.uniform(0.0, 2 * np.pi, size=2)
        # cos(psi)**n keeps zonal structure regular at the poles
        horiz = np.cos(mode.n * phi + delta) * np.cos(mode.m * psi) * np.cos(psi) ** mode.n
        values += mode.amp * horiz * np.cos(mode.omega * t + rho) * (p / p_max) ** mode.p_exp
    return GridField4D(spec.name, spec.units, times, pressures, lats, lons, values.astype(np.float32))


def desk_spec(**overrides) -> SynthSpec:
    """The reference desk-scale field: 8 times, 3 levels, 46 x 90 sphere grid."""
    base = dict(
        nt=8, nlat=46, nlon=90, pressures=(250.0, 500.0, 850.0), dt=6.0,
        n_modes=6, max_zonal=4, max_meridional=3, amplitude=1.0,
        strat_p=2.0, strat_lat=1.0,
    )
    base.update(overrides)
    return SynthSpec(**base)


def ablation_spec(**overrides) -> SynthSpec:
    """Multi-frequency variant of the desk field with strong stratification, for feature ablations."""
    base = dict(
        n_modes=16, max_zonal=12, max_meridional=8, max_freq=2 * np.pi / 24.0,
        strat_p=4.0, strat_lat=2.0,
    )
    base.update(overrides)
    return desk_spec(**base)

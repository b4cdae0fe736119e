"""Experiment harness: run configuration, parameter sweeps and CSV tables.

Configuration layers, lowest to highest priority: built-in defaults, an INI
file with sections ``[run] [source] [spread] [wien] [sim] [quadrature]``,
then command-line flags.  Every CSV written here carries the fully resolved
configuration in its ``#`` header and no timestamps, so repeated runs with
the same inputs are byte-identical.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrival import (
    QuadratureSettings,
    SpreadModel,
    build_distribution,
    detection_window,
)
from .channel import missed_detection, mutual_information, ook_rate, slot_from_band
from .csvio import write_csv
from .errors import ConfigError
from .linksim import SimConfig, binomial_agreement, run_link
from .physics import SourceConfig, get_species
from .wien import MODES as WIEN_MODES
from .wien import matched_wien, pass_band, pass_probability

log = logging.getLogger(__name__)

TOF_SUMMARY_COLUMNS = (
    "species", "V2_V", "L_m", "mean_s", "std_s", "window_start_s", "window_length_s",
    "window_policy", "missed_detection", "rate_bps",
)
RATE_COLUMNS = ("sweep", "species", "V2_V", "L_m", "window_policy", "slot_s", "missed_detection", "rate_bps")
WIEN_COLUMNS = (
    "species", "mode", "aperture_m", "kappa", "v_select_mps", "v_low_mps", "v_high_mps", "p_v",
    "slot_s", "rate_bps", "mutual_info_bits", "info_rate_bps", "unfiltered_slot_s",
    "unfiltered_rate_bps", "band_slot_s", "status",
)
LINK_COLUMNS = (
    "species", "mode", "aperture_m", "n_bits", "sent_ones", "detected_ones", "filtered_out", "late",
    "false_alarms", "empirical_missed", "ci95_halfwidth", "predicted_missed", "agreement",
    "slot_s", "empirical_rate_bps",
)


def _floats(text):
    return tuple(float(x) for x in re.split(r"[,\s]+", text.strip()) if x)


def _names(text):
    return tuple(x.strip().lower() for x in text.split(",") if x.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """Resolved settings for every subcommand.

    Defaults reproduce the reference operating table: grid potentials
    ``V0 = 65.96 V`` and ``V1 = -65.96 V``, ``V2`` in {-950, -1000, -1050} V,
    300 K, drift lengths {0.632, 0.8, 1.0} m and the four ion species.
    """

    species: tuple = ("hydrogen", "nitrogen", "argon", "benzene")
    V0: float = 65.96
    V1: float = -65.96
    V2_values: tuple = (-950.0, -1000.0, -1050.0)
    L_values: tuple = (0.632, 0.8, 1.0)
    d1: float = 0.0116
    d2: float = 0.010
    temperature: float = 300.0
    x0_mean: float | None = None
    sigma_x: float = 1.0e-4
    sigma_t: float = 2.0e-9
    window_policy: str = "sigma"
    # rate sweeps: V2 at fixed L, L at fixed V2, zero-field lengths
    rate_V2_values: tuple = tuple(float(v) for v in np.arange(-900.0, -1100.1, -25.0))
    rate_V2_L: float = 1.0
    rate_L_values: tuple = (0.632, 0.7, 0.8, 0.9, 1.0, 1.25, 1.5, 2.0)
    rate_L_V2: float = -1000.0
    zero_field_L_values: tuple = tuple(float(x) for x in np.round(np.linspace(0.5, 20.0, 40), 6))
    # selector
    wien_E_field: float = 4000.0
    wien_plate_length: float = 0.3937
    wien_aperture_distance: float = 3.45
    wien_apertures: tuple = (1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
    wien_mode: str = "both"
    wien_V2: float = -1000.0
    wien_L: float = 0.6236
    prior: float = 0.5
    # link simulation
    sim_species: tuple = ("benzene",)
    sim_n_bits: int = 200_000
    sim_prior: float = 0.5
    sim_mode: str = "unfiltered"
    sim_aperture: float = 1e-3
    sim_V2: float = -1000.0
    sim_L: float = 0.6236
    sim_batch_size: int = 1 << 16
    sim_transcript: bool = False
    # numerics and bookkeeping
    quadrature_order: int = 64
    seed: int = 42
    workers: int = 1
    out: str = "out"
    plot: bool = False

    def validate(self):
        for name in self.species + self.sim_species:
            get_species(name)
        if self.window_policy not in ("sigma", "quantile"):
            raise ConfigError(f"[spread] window_policy must be sigma or quantile, got {self.window_policy!r}")
        if self.wien_mode not in WIEN_MODES + ("both",):
            raise ConfigError(f"[wien] mode must be one of {WIEN_MODES + ('both',)}")
        if self.sim_n_bits <= 0:
            raise ConfigError(f"[sim] n_bits must be positive, got {self.sim_n_bits}")
        if self.quadrature_order < 16:
            raise ConfigError("[quadrature] order must be at least 16")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        # build one source per configured point to surface geometry errors early
        for V2 in self.V2_values:
            for L in self.L_values:
                self.source(V2, L)
        return self

    def source(self, V2, L) -> SourceConfig:
        return SourceConfig(V0=self.V0, V1=self.V1, V2=V2, d1=self.d1, d2=self.d2, L=L,
                            x0_mean=self.x0_mean, sigma_x=self.sigma_x, sigma_t=self.sigma_t,
                            temperature=self.temperature)

    def zero_field_source(self, L) -> SourceConfig:
        return SourceConfig.zero_field_config(d1=self.d1, d2=self.d2, L=L, x0_mean=self.x0_mean,
                                              sigma_x=self.sigma_x, sigma_t=self.sigma_t,
                                              temperature=self.temperature)

    def quadrature(self) -> QuadratureSettings:
        return QuadratureSettings.from_order(self.quadrature_order)

    def as_meta(self) -> dict:
        # scheduling, plotting and the output location do not affect the numbers
        meta = dataclasses.asdict(self)
        for key in ("workers", "plot", "out"):
            meta.pop(key)
        return meta


# INI key -> (RunConfig field, parser)
_INI_SCHEMA = {
    "run": {
        "species": ("species", _names), "seed": ("seed", int), "out": ("out", str),
        "plot": ("plot", _bool), "workers": ("workers", int),
    },
    "source": {
        "V0": ("V0", float), "V1": ("V1", float), "V2": ("V2_values", _floats), "L": ("L_values", _floats),
        "d1": ("d1", float), "d2": ("d2", float), "temperature": ("temperature", float),
        "x0_mean": ("x0_mean", float),
        "rate_V2": ("rate_V2_values", _floats), "rate_V2_L": ("rate_V2_L", float),
        "rate_L": ("rate_L_values", _floats), "rate_L_V2": ("rate_L_V2", float),
        "zero_field_L": ("zero_field_L_values", _floats),
    },
    "spread": {
        "sigma_x": ("sigma_x", float), "sigma_t": ("sigma_t", float), "window_policy": ("window_policy", str),
    },
    "wien": {
        "E_field": ("wien_E_field", float), "plate_length": ("wien_plate_length", float),
        "aperture_distance": ("wien_aperture_distance", float), "apertures": ("wien_apertures", _floats),
        "mode": ("wien_mode", str), "V2": ("wien_V2", float), "L": ("wien_L", float), "prior": ("prior", float),
    },
    "sim": {
        "species": ("sim_species", _names), "n_bits": ("sim_n_bits", int), "prior": ("sim_prior", float),
        "mode": ("sim_mode", str), "aperture": ("sim_aperture", float), "V2": ("sim_V2", float),
        "L": ("sim_L", float), "batch_size": ("sim_batch_size", int), "transcript": ("sim_transcript", _bool),
    },
    "quadrature": {"order": ("quadrature_order", int)},
}


def _key_lines(text):
    """Map (section, key) to its 1-based line number in an INI text."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
        elif section and "=" in s and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip())] = no
    return where


def load_config(path=None, overrides=None) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, an INI file and overrides."""
    run = RunConfig()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        lines = _key_lines(text)
        for section in parser.sections():
            schema = _INI_SCHEMA.get(section)
            if schema is None:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                line = lines.get((section, key), "?")
                if key not in schema:
                    raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{section}]")
                attr, conv = schema[key]
                try:
                    setattr(run, attr, conv(raw))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{line}: [{section}] {key}: {exc}") from None
    for attr, val in (overrides or {}).items():
        if val is not None:
            setattr(run, attr, val)
    try:
        return run.validate()
    except ConfigError as exc:
        where = f"{path}: " if path is not None else ""
        raise ConfigError(f"{where}{exc}") from None


# --------------------------------------------------------------------------
# sweep helpers


def _pmap(fn, items, workers):
    """Map in input order, optionally on a thread pool."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x):
    return f"{x:g}".replace("-", "m").replace(".", "p")


def _point(run: RunConfig, species_name, config, policy):
    sp = get_species(species_name)
    spread = SpreadModel.from_config(sp, config)
    dist = build_distribution(sp, config, spread, settings=run.quadrature())
    window = detection_window(dist, policy)
    return dist, window, missed_detection(dist, window)


def cmd_tof_dist(run: RunConfig):
    """One distribution CSV per (species, V2, L) plus a summary table."""
    out = Path(run.out)
    points = [(s, V2, L) for s in run.species for V2 in run.V2_values for L in run.L_values]

    def job(p):
        s, V2, L = p
        return _point(run, s, run.source(V2, L), run.window_policy)

    results = _pmap(job, points, run.workers)
    meta = {"command": "tof-dist", "config": run.as_meta()}
    rows, dists = [], []
    for (s, V2, L), (dist, window, pd) in zip(points, results):
        name = f"{s}_V2_{_fmt(V2)}_L_{_fmt(L)}.csv"
        dist.to_csv(out / "tof_dist" / name, {"species": s, "V2_V": V2, "L_m": L, **meta})
        rows.append((s, V2, L, dist.mean, dist.std, window.start, window.length, window.policy, pd,
                     ook_rate(window.length)))
        dists.append(((s, V2, L), dist))
    summary = write_csv(out / "tof_summary.csv", TOF_SUMMARY_COLUMNS, rows, meta)
    if run.plot:
        from .plotting import plot_tof

        plot_tof(dists, out / "tof_dist.png")
    return summary, rows


def cmd_rate_sweep(run: RunConfig):
    """Rate against V2 (fixed L), against L (fixed V2), and for the zero-field source."""
    points = []
    for s in run.species:
        points += [("V2", s, V2, run.rate_V2_L) for V2 in run.rate_V2_values]
        points += [("L", s, run.rate_L_V2, L) for L in run.rate_L_values]
        points += [("zero-field", s, 0.0, L) for L in run.zero_field_L_values]

    def job(p):
        sweep, s, V2, L = p
        if sweep == "zero-field":
            config, policy = run.zero_field_source(L), "quantile"
        else:
            config, policy = run.source(V2, L), run.window_policy
        _, window, pd = _point(run, s, config, policy)
        return window, pd

    results = _pmap(job, points, run.workers)
    rows = [(sweep, s, V2, L, w.policy, w.length, pd, ook_rate(w.length))
            for (sweep, s, V2, L), (w, pd) in zip(points, results)]
    meta = {"command": "rate-sweep", "config": run.as_meta(), "zero_field_window_policy": "quantile"}
    path = write_csv(Path(run.out) / "rate_sweep.csv", RATE_COLUMNS, rows, meta)
    if run.plot:
        from .plotting import plot_rate_sweep

        plot_rate_sweep(rows, Path(run.out) / "rate_sweep.png")
    return path, rows


def _wien_modes(run):
    return WIEN_MODES if run.wien_mode == "both" else (run.wien_mode,)


def cmd_wien(run: RunConfig):
    """Filtered slot, pass probability and mutual information over aperture sizes."""
    settings = run.quadrature()
    rows = []
    for s in run.species:
        sp = get_species(s)
        config = run.source(run.wien_V2, run.wien_L)
        spread = SpreadModel.from_config(sp, config)
        base = build_distribution(sp, config, spread, settings=settings)
        base_slot = detection_window(base, run.window_policy).length
        for aperture in run.wien_apertures:
            wien = matched_wien(sp, config, aperture, E_field=run.wien_E_field,
                                plate_length=run.wien_plate_length,
                                aperture_distance=run.wien_aperture_distance)
            if wien.kappa >= 1:
                log.warning("%s aperture %g m: kappa %.3g >= 1, skipped", s, aperture, wien.kappa)
                for mode in _wien_modes(run):
                    rows.append((s, mode, aperture, wien.kappa) + ("",) * 11 + ("skipped: kappa >= 1",))
                continue
            band = pass_band(wien)
            dist = build_distribution(sp, config, spread, settings=settings, band=tuple(band))
            slot = detection_window(dist, run.window_policy).length
            for mode in _wien_modes(run):
                p_v = pass_probability(sp, config, wien, mode, spread, settings)
                mi = mutual_information(p_v, run.prior)
                rows.append((s, mode, aperture, wien.kappa, wien.E_field / wien.B_field, band.v_low,
                             band.v_high, p_v, slot, ook_rate(slot), mi, mi / slot, base_slot,
                             ook_rate(base_slot), slot_from_band(config.L, band), "ok"))
    meta = {"command": "wien", "config": run.as_meta()}
    path = write_csv(Path(run.out) / "wien.csv", WIEN_COLUMNS, rows, meta)
    if run.plot:
        from .plotting import plot_wien

        plot_wien(rows, Path(run.out) / "wien.png")
    return path, rows


def cmd_link_sim(run: RunConfig):
    """Monte-Carlo link runs compared against the closed-form miss probability."""
    settings = run.quadrature()
    rows = []
    out = Path(run.out)
    for index, s in enumerate(run.sim_species):
        sp = get_species(s)
        config = run.source(run.sim_V2, run.sim_L)
        spread = SpreadModel.from_config(sp, config)
        band = None
        if run.sim_mode == "wien-filtered":
            band = tuple(pass_band(matched_wien(sp, config, run.sim_aperture, E_field=run.wien_E_field,
                                                plate_length=run.wien_plate_length,
                                                aperture_distance=run.wien_aperture_distance)))
        dist = build_distribution(sp, config, spread, settings=settings, band=band)
        window = detection_window(dist, run.window_policy)
        in_window = dist.integrate(window.start, window.stop)
        predicted = 1.0 - in_window  # filter loss and late arrival combined
        sim = SimConfig(n_bits=run.sim_n_bits, slot=window.length, offset=window.start,
                        prior=run.sim_prior, seed=run.seed, mode=run.sim_mode,
                        batch_size=run.sim_batch_size, workers=run.workers)
        transcript = out / f"transcript_{s}.csv" if run.sim_transcript else None
        # each species gets its own substream family
        sim = dataclasses.replace(sim, seed=(run.seed + index) % 2**64)
        result = run_link(sp, config, spread, sim, band=band, transcript=transcript)
        ok = binomial_agreement(result, predicted)
        rows.append((s, run.sim_mode, run.sim_aperture if band else "", sim.n_bits, result.sent_ones,
                     result.detected_ones, result.filtered_out, result.late, result.false_alarms,
                     result.empirical_missed, result.confidence_halfwidth, predicted,
                     "pass" if ok else "fail", sim.slot, result.empirical_rate))
    meta = {"command": "link-sim", "config": run.as_meta()}
    path = write_csv(out / "link_sim.csv", LINK_COLUMNS, rows, meta)
    return path, rows


COMMANDS = {
    "tof-dist": cmd_tof_dist,
    "rate-sweep": cmd_rate_sweep,
    "wien": cmd_wien,
    "link-sim": cmd_link_sim,
}

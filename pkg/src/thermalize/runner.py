"""Config-driven experiments that write CSV/JSON artifacts and SVG plots."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, gas, lattice, plotting, qdyn, spectrum, tower
from .errors import ParameterError

KINDS = ("modes", "collide", "recurrence", "dos", "planck", "tower", "gas")

_CHAIN = {"n_atoms": 8, "mass": 1.0, "stiffness": 1.0, "spacing": 1.0, "boundary": "free"}
_COLLIDE = {
    "n_a": 16, "n_b": 16, "mass": 1.0, "stiffness": 1.0, "spacing": 1.0,
    "joint_stiffness": 1.0,
    # internal energy per atom as a fraction of hbar * omega_max; ignored
    # when relative_velocity is given
    "energy_per_atom_fraction": 0.1,
    "relative_velocity": None,
    "zero_mode_width": 4.0,
    "periods": 100.0,
    "n_samples": 201,
    "energy_samples": 11,
}

DEFAULTS = {
    "modes": dict(_CHAIN),
    "collide": dict(_COLLIDE),
    "recurrence": dict(_COLLIDE, phase_tol=0.05, width_threshold=None, cm_threshold=None,
                       t_max=2000.0),
    "dos": {"n_modes": 40, "omega": 1.0, "frequencies": None, "e_max": 220.0, "bin": 1.0,
            "window": 5},
    "planck": {"n_modes": 40, "omega": 1.0, "frequencies": None, "e_total": 200.0, "bin": 1.0,
               "window": 5},
    "tower": {"matter_modes": 50, "matter_omega": 1.0, "e_total": 250.0,
              "photon_frequencies": [1.0], "mu0": 1.0, "steps": 200000, "burn_in": 2000,
              "n_cap": None, "record_stride": 100, "n_batches": 50, "window": 5},
    "gas": {"n": 16, "mass": 1.0, "mass_dispersion": 0.1, "temperature": 1.0,
            "stiffness": 1.0e4, "contact_radius": 0.05, "box_length": 100.0, "width": 0.01,
            "t_end": 1000.0, "dt": None, "record_every": 2000, "bins": 50, "substeps": 64,
            "min_collisions": 100,
            "initial": "maxwell"},
}


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    seed: int = 0
    output_dir: str = "runs"
    units: dict = field(default_factory=lambda: {"hbar": 1.0, "k_B": 1.0})

    @classmethod
    def from_dict(cls, d: dict, kind: str | None = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ParameterError("config must be a JSON object")
        unknown = set(d) - {"kind", "params", "seed", "output_dir", "units"}
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        k = d.get("kind", kind)
        if kind is not None and k != kind:
            raise ParameterError(f"config kind {k!r} does not match command {kind!r}")
        if k not in KINDS:
            raise ParameterError(f"unknown experiment kind {k!r}")
        params = copy.deepcopy(DEFAULTS[k])
        given = d.get("params", {}) or {}
        bad = set(given) - set(params)
        if bad:
            raise ParameterError(f"unknown {k} parameters {sorted(bad)}")
        params.update(given)
        units = {"hbar": 1.0, "k_B": 1.0}
        extra = set(d.get("units", {})) - set(units)
        if extra:
            raise ParameterError(f"unknown units {sorted(extra)}")
        units.update(d.get("units", {}))
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        return cls(k, params, seed, str(d.get("output_dir", "runs")), units)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "seed": self.seed,
                "output_dir": self.output_dir, "units": self.units}

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _positive(p: dict, *names):
    for n in names:
        v = p[n]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
            raise ParameterError(f"{n} must be a positive number, got {v!r}")


def _count(p: dict, *names, minimum: int = 1):
    for n in names:
        v = p[n]
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ParameterError(f"{n} must be an integer >= {minimum}, got {v!r}")


def _freq_list(v, name):
    if not isinstance(v, list) or not v or any(
            not isinstance(x, (int, float)) or isinstance(x, bool) or not x > 0 for x in v):
        raise ParameterError(f"{name} must be a non-empty list of positive numbers")


def validate(cfg: ExperimentConfig) -> None:
    """Check every precondition the owning modules impose, before any work."""
    p, k = cfg.params, cfg.kind
    _positive(cfg.units, "hbar", "k_B")
    if k in ("modes", "collide", "recurrence") and cfg.units["hbar"] != 1.0:
        raise ParameterError("chain dynamics run in natural units; hbar must be 1")
    if k == "modes":
        _count(p, "n_atoms")
        _positive(p, "mass", "stiffness", "spacing")
        lattice.build_chain(p["n_atoms"], p["mass"], p["stiffness"], p["spacing"], p["boundary"])
    elif k in ("collide", "recurrence"):
        _count(p, "n_a", "n_b")
        _count(p, "n_samples", "energy_samples", minimum=2)
        _positive(p, "mass", "stiffness", "spacing", "joint_stiffness", "zero_mode_width", "periods")
        if p["relative_velocity"] is None:
            _positive(p, "energy_per_atom_fraction")
        elif not isinstance(p["relative_velocity"], (int, float)):
            raise ParameterError("relative_velocity must be a number")
        if k == "recurrence":
            _positive(p, "t_max")
            if not 0 < p["phase_tol"] < 1:
                raise ParameterError("phase_tol must lie in (0, 1)")
            for n in ("width_threshold", "cm_threshold"):
                if p[n] is not None:
                    _positive(p, n)
    elif k in ("dos", "planck"):
        if p["frequencies"] is not None:
            _freq_list(p["frequencies"], "frequencies")
        else:
            _count(p, "n_modes")
            _positive(p, "omega")
        _positive(p, "bin")
        if not isinstance(p["window"], int) or not (p["window"] == 1 or (p["window"] >= 3 and p["window"] % 2)):
            raise ParameterError("window must be 1 or an odd integer >= 3")
        if k == "dos":
            _positive(p, "e_max")
            if p["bin"] > p["e_max"]:
                raise ParameterError("bin wider than the energy range")
        else:
            _positive(p, "e_total")
    elif k == "tower":
        _count(p, "matter_modes", "steps", "record_stride")
        _count(p, "n_batches", minimum=2)
        _count(p, "burn_in", minimum=0)
        if p["burn_in"] >= p["steps"]:
            raise ParameterError("burn_in must be smaller than steps")
        _positive(p, "matter_omega", "e_total", "mu0")
        _freq_list(p["photon_frequencies"], "photon_frequencies")
        if p["n_cap"] is not None:
            _count(p, "n_cap", minimum=0)
        modes = tower.PhotonModeSet(tuple(p["photon_frequencies"]), p["mu0"], cfg.units["hbar"])
        modes.steps(cfg.units["hbar"] * p["matter_omega"])
    elif k == "gas":
        _count(p, "n", "record_every", "bins", "substeps")
        _count(p, "min_collisions", minimum=0)
        _positive(p, "mass", "temperature", "stiffness", "contact_radius", "box_length", "width", "t_end")
        if not 0 <= p["mass_dispersion"] < 1:
            raise ParameterError("mass_dispersion must lie in [0, 1)")
        if p["initial"] not in ("maxwell", "alternating"):
            raise ParameterError("initial must be 'maxwell' or 'alternating'")
        if 2 * p["contact_radius"] >= p["box_length"] / p["n"]:
            raise ParameterError("contact diameter must be smaller than the mean spacing")
        g = _make_gas(cfg)
        if p["dt"] is not None:
            _positive(p, "dt")
            if p["dt"] >= gas.max_stable_dt(g):
                raise ParameterError(f"dt must be below {gas.max_stable_dt(g):.6g}")


class _Outputs:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content)
        return p

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header: str, rows) -> Path:
        lines = [header] + [",".join(_fmt(x) for x in row) for row in rows]
        return self.text(name, "\n".join(lines) + "\n")

    def cleanup(self):
        for p in self.files:
            p.unlink(missing_ok=True)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _spectrum(p: dict, hbar: float) -> spectrum.ModeSpectrum:
    if p["frequencies"] is not None:
        return spectrum.ModeSpectrum(tuple(p["frequencies"]), hbar)
    return spectrum.einstein_solid(p["n_modes"], p["omega"], hbar)


def _run_modes(cfg, o: _Outputs) -> dict:
    p = cfg.params
    lat = lattice.build_chain(p["n_atoms"], p["mass"], p["stiffness"], p["spacing"], p["boundary"])
    basis = lattice.normal_modes(lat)
    o.text("lattice.json", lat.to_json() + "\n")
    o.csv("modes.csv", "mode,omega", enumerate(basis.frequencies))
    exact = None
    if lat.boundary == lattice.FIXED:
        exact = lattice.fixed_chain_frequencies(lat.n_atoms, p["mass"], p["stiffness"])
    plotting.mode_spectrum(o.path("mode_spectrum.svg"), basis.frequencies, exact)
    return {"zero_mode_count": basis.zero_mode_count}


def _collision(p: dict):
    a = lattice.build_chain(p["n_a"], p["mass"], p["stiffness"], p["spacing"])
    b = lattice.build_chain(p["n_b"], p["mass"], p["stiffness"], p["spacing"])
    fused = lattice.merge_lattices(a, b, p["joint_stiffness"])
    basis = lattice.normal_modes(fused)
    m_a, m_b = a.total_mass, b.total_mass
    mu = m_a * m_b / (m_a + m_b)
    if p["relative_velocity"] is None:
        e_int = p["energy_per_atom_fraction"] * basis.frequencies.max() * fused.n_atoms
        dv = math.sqrt(2 * e_int / mu)
    else:
        dv = float(p["relative_velocity"])
    # centre of mass at rest
    v_a, v_b = dv * m_b / (m_a + m_b), -dv * m_a / (m_a + m_b)
    fused, basis, state = qdyn.collision_state(a, b, p["joint_stiffness"], v_a, v_b, p["zero_mode_width"])
    return fused, basis, state, mu, dv


def _run_collide(cfg, o: _Outputs) -> dict:
    p = cfg.params
    fused, basis, s0, mu, dv = _collision(p)
    bound = ~basis.is_zero_mode
    w_min = basis.frequencies[bound].min()
    horizon = p["periods"] * 2 * math.pi / w_min
    times = np.linspace(0.0, horizon, p["n_samples"])
    widths, cm, states = [], [], []
    s = s0
    for t in times:
        s = qdyn.evolve_to(s, float(t))
        widths.append(np.sqrt(qdyn.position_variances(s, internal=True)))
        cm.append(qdyn.cm_width(s))
        states.append(s)
    widths = np.array(widths)
    cm = np.array(cm)
    sigma0 = cm[0]
    M = fused.total_mass
    cm_law = np.sqrt(sigma0 ** 2 + (times / (2 * M * sigma0)) ** 2)

    o.text("lattice.json", fused.to_json() + "\n")
    o.csv("widths.csv", "t,atom_index,width",
          ((t, j, w) for t, row in zip(times, widths) for j, w in enumerate(row)))
    o.csv("cm_width.csv", "t,cm_width,free_spreading_law", zip(times, cm, cm_law))
    e_idx = np.unique(np.linspace(0, len(times) - 1, p["energy_samples"]).round().astype(int))
    o.csv("energies.csv", "t,mode_index,energy",
          ((times[i], m, e) for i in e_idx for m, e in enumerate(qdyn.mode_energies(states[i]))))
    plotting.widths_vs_time(o.path("widths.svg"), times, widths, fused.spacing / 2, cm, cm_law)
    plotting.mode_energies(o.path("mode_energies.svg"), basis.frequencies,
                           qdyn.mode_energies(s0) - 0.5 * basis.frequencies)
    internal = qdyn.internal_excitation_energy(s0)
    cm_rel = float(np.max(np.abs(cm - cm_law) / cm_law))
    summary = {
        "relative_velocity": dv,
        "reduced_mass": mu,
        "internal_energy": internal,
        "expected_internal_energy": 0.5 * mu * dv ** 2,
        "max_internal_width": float(widths.max()),
        "half_spacing": fused.spacing / 2,
        "localized": bool(widths.max() < fused.spacing / 2),
        "cm_law_max_rel_error": cm_rel,
        "horizon": horizon,
    }
    o.json("collide_summary.json", summary)
    return summary


def _run_recurrence(cfg, o: _Outputs) -> dict:
    p = cfg.params
    fused, basis, s0, _, _ = _collision(p)
    wt = p["width_threshold"] if p["width_threshold"] is not None else fused.spacing / 2
    ct = p["cm_threshold"] if p["cm_threshold"] is not None else fused.spacing / 2
    report = qdyn.recurrence_times(s0, p["phase_tol"], wt, ct, p["t_max"])
    o.json("recurrence.json", report.to_dict())
    excited = (~basis.is_zero_mode) & (qdyn.coherent_amplitudes(s0) > qdyn.EXCITATION_FLOOR)
    omegas = basis.frequencies[excited]
    t_plot = min(p["t_max"], 4 * (report.t_vib or p["t_max"]))
    ts = np.linspace(0, t_plot, 4001)
    mism = qdyn._phase_mismatch(omegas)(ts) if omegas.size else np.zeros_like(ts)
    plotting.phase_mismatch(o.path("phase_mismatch.svg"), ts, mism, p["phase_tol"], report.t_vib)
    return report.to_dict()


def _run_dos(cfg, o: _Outputs) -> dict:
    p, u = cfg.params, cfg.units
    spec = _spectrum(p, u["hbar"])
    ld = spectrum.level_counts(spec, p["e_max"], p["bin"])
    o.text("level_density.csv", ld.to_csv())
    rows = []
    for b in range(ld.n_bins):
        e = b * ld.bin
        try:
            t = spectrum.microcanonical_temperature(ld, e, p["window"], u["k_B"]).temperature
        except Exception:
            continue
        rows.append((e, t))
    o.csv("temperature.csv", "E,T", rows)
    temps = (np.array([r[0] for r in rows]), np.array([r[1] for r in rows])) if rows else None
    plotting.level_density(o.path("level_density.svg"), ld.energies, ld.log_counts(), temps)
    return {"n_bins": ld.n_bins, "total_states": str(ld.total())}


def _run_planck(cfg, o: _Outputs) -> dict:
    p, u = cfg.params, cfg.units
    spec = _spectrum(p, u["hbar"])
    rows = spectrum.occupancy_comparison(spec, p["e_total"], p["bin"], p["window"], u["k_B"])
    o.csv("occupancy_comparison.csv", "mode,omega,n_microcanonical,n_bose_einstein,rel_diff",
          ((r["mode"], r["omega"], r["n_microcanonical"], r["n_bose_einstein"], r["rel_diff"]) for r in rows))
    plotting.occupancy_vs_planck(o.path("occupancy_vs_planck.svg"), [r["omega"] for r in rows],
                                 [r["n_microcanonical"] for r in rows], [r["n_bose_einstein"] for r in rows])
    relevant = [r["rel_diff"] for r in rows if r["n_microcanonical"] >= 0.1]
    return {"max_rel_diff": max(relevant) if relevant else None}


def _run_tower(cfg, o: _Outputs) -> dict:
    p, u = cfg.params, cfg.units
    hbar = u["hbar"]
    bin_ = hbar * p["matter_omega"]
    modes = tower.PhotonModeSet(tuple(p["photon_frequencies"]), p["mu0"], hbar)
    h = max(p["window"] // 2, 1)
    matter = spectrum.level_counts(spectrum.einstein_solid(p["matter_modes"], p["matter_omega"], hbar),
                                   p["e_total"] + (h + 1) * bin_, bin_)
    start = tower.photon_free_tower(modes, matter, p["e_total"])
    final, traj = tower.equilibrate(start, p["steps"], cfg.seed)
    steps = modes.steps(bin_)
    n_cap = p["n_cap"] if p["n_cap"] is not None else int(p["e_total"] / bin_) // min(steps)
    rows = tower.stationary_comparison(modes, matter, p["e_total"], n_cap, p["window"], u["k_B"])
    avg = traj.time_averaged_occupancy(p["burn_in"])
    se = traj.standard_errors(p["n_batches"], p["burn_in"])

    o.text("trajectory.csv", traj.to_csv(p["record_stride"]))
    o.csv("stationary_comparison.csv", "mode,omega,n_stationary,n_planck,rel_diff",
          ((r["mode"], r["omega"], r["n_stationary"], r["n_planck"], r["rel_diff"]) for r in rows))
    inv = tower.tower_invariants(final)
    summary = {
        "time_averaged_occupancy": avg.tolist(),
        "standard_error": se.tolist(),
        "n_stationary": [r["n_stationary"] for r in rows],
        "n_planck": [r["n_planck"] for r in rows],
        "z_scores": [float((a - r["n_stationary"]) / s) if s > 0 else None
                     for a, r, s in zip(avg, rows, se)],
        "norm_sum": inv.norm_sum,
        "total_energy": inv.total_energy,
        "energy_quanta_constant": bool(np.all(traj.energy_quanta() == traj.total_quanta)),
        "emissions": int(np.sum(traj.event_sign == 1)),
        "absorptions": int(np.sum(traj.event_sign == -1)),
        "n_cap": n_cap,
    }
    o.json("tower_summary.json", summary)
    idx = np.arange(0, traj.occupancy.shape[0], p["record_stride"])
    plotting.occupancy_trace(o.path("occupancy_trace.svg"), idx, traj.occupancy[idx],
                             [r["n_stationary"] for r in rows])
    plotting.occupancy_vs_planck(o.path("stationary_vs_planck.svg"), list(modes.frequencies),
                                 [r["n_stationary"] for r in rows], [r["n_planck"] for r in rows],
                                 label="stationary")
    return {"seed": cfg.seed, "n_cap": n_cap, "steps": p["steps"]}


def _make_gas(cfg) -> gas.PacketGas:
    p = cfg.params
    return gas.make_gas(p["n"], p["mass"], p["temperature"] * cfg.units["k_B"], p["stiffness"],
                        p["contact_radius"], p["box_length"], p["width"], cfg.seed, p["mass_dispersion"],
                        p["initial"])


def _run_gas(cfg, o: _Outputs) -> dict:
    p = cfg.params
    g = _make_gas(cfg)
    dt = p["dt"] if p["dt"] is not None else gas.max_stable_dt(g) / 2
    traj = gas.simulate_gas(g, p["t_end"], dt, cfg.seed, p["record_every"], cfg.units["hbar"], p["substeps"])
    o.text("trajectory.csv", traj.to_csv())
    h = gas.energy_partition_histograms(traj, p["bins"], min_collisions=p["min_collisions"])
    o.text("histograms.csv", h.to_csv())
    ks = gas.velocity_ks_statistic(traj)
    summary = h.summary(ks)
    o.json("summary.json", summary)
    plotting.partition_histograms(o.path("histograms.svg"), h.energies, h.h_ke, h.h_pe)
    return {"collisions_per_particle": traj.collisions_per_particle(), "dt": dt,
            "pe_time_fraction": h.pe_time_fraction}


_RUNNERS = {"modes": _run_modes, "collide": _run_collide, "recurrence": _run_recurrence,
            "dos": _run_dos, "planck": _run_planck, "tower": _run_tower, "gas": _run_gas}


def _versions() -> dict:
    import matplotlib
    import numba
    import scipy

    return {"thermalize": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__, "numba": numba.__version__}


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Validate, run, write all outputs plus ``manifest.json``; returns the manifest path.

    On failure every file this run created is removed before re-raising.
    """
    validate(cfg)
    out = Path(cfg.output_dir)
    created_dir = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    o = _Outputs(out)
    t0 = time.perf_counter()
    try:
        result = _RUNNERS[cfg.kind](cfg, o)
        outputs = sorted(p.name for p in o.files)
        manifest = {
            "kind": cfg.kind,
            "config": cfg.to_dict(),
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "versions": _versions(),
            "wall_time_s": time.perf_counter() - t0,
            "outputs": outputs,
            "result": result,
        }
        path = o.json("manifest.json", manifest)
    except BaseException:
        o.cleanup()
        if created_dir and not any(out.iterdir()):
            out.rmdir()
        raise
    return path

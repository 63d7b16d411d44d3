"""Config-driven command line: ``nvsim run <config>`` and ``nvsim validate <config>``.

The config is a single JSON document::

    {
      "experiment": "cpt",
      "seed": 7,
      "output": "runs/cpt_a2",
      "format": "csv",
      "plot": true,
      "parameters": { ... experiment-specific keys ... }
    }

Every parameter has a default except where noted; ``validate`` echoes the
fully resolved tree.  ``run`` writes ``<output>.csv`` (or ``.json``), a
``<output>.meta.json`` with the resolved config, seed, and package version,
and a ``<output>.png`` figure unless ``plot`` is false.  Exit codes: 0 on
success, 2 for config problems (messages name the offending key), 3 for
numerical failures.
"""
from __future__ import annotations

import os

# NVSIM_THREADS caps the numeric thread pools.  The BLAS/OpenMP variables
# must be set before numpy initializes them, hence before any other import.
_threads = os.environ.get("NVSIM_THREADS", "").strip()
if _threads.isdigit() and int(_threads) >= 1:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .analysis import fit_exponential_decay, fit_lorentzian, fit_oscillation  # noqa: E402
from .dynamics import NoiseProcess, build_nv_model  # noqa: E402
from .errors import (  # noqa: E402
    InvalidDataError,
    NoSignalError,
    NonUniqueSteadyStateError,
    NvsimError,
    StiffnessError,
)
from .experiments import (  # noqa: E402
    BathConfig,
    CPTConfig,
    EntanglementConfig,
    PLEProtocol,
    cpt_linewidth,
    readout_pulse,
    simulate_bath_preparation,
    simulate_cpt,
    simulate_entanglement_run,
    simulate_nuclear_cooling,
    simulate_ple,
    simulate_rabi,
)
from .levels import (  # noqa: E402
    BASIS_LABELS,
    ExcitedStateParams,
    GroundParams,
    solve_levels,
)
from .photonics import (  # noqa: E402
    CavityParams,
    CollectionGeometry,
    cavity_coupling_rates,
    collection_efficiency,
    cooperativity,
    purcell_from_cavity,
    purcell_from_lifetimes,
    required_q,
    zpl_enhancement,
    zpl_fraction_enhanced,
)
from .records import _fmt, write_text_atomic  # noqa: E402

EXPERIMENTS = (
    "levels", "ple", "rabi", "cpt", "cool", "bath", "entangle",
    "purcell", "collect", "fit",
)
_STOCHASTIC = ("ple", "rabi", "cpt", "cool", "bath", "entangle")


class _NumericalFailure(RuntimeError):
    """Raised by runners for failures that map to exit code 3."""


# ---------------------------------------------------------------------------
# value checkers: each returns (coerced_value, None) or (None, reason)

_REQUIRED = object()


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _bound_txt(b: float) -> str:
    return f"{b:g}"


def _num(*, gt=None, ge=None, lt=None, le=None, allow_inf=False):
    def check(v):
        if not _is_num(v):
            return None, "must be a number"
        v = float(v)
        if not (math.isfinite(v) or (allow_inf and v == math.inf)):
            return None, "must be finite"
        if gt is not None and not v > gt:
            return None, f"must be > {_bound_txt(gt)}"
        if ge is not None and not v >= ge:
            return None, f"must be >= {_bound_txt(ge)}"
        if lt is not None and not v < lt:
            return None, f"must be < {_bound_txt(lt)}"
        if le is not None and not v <= le:
            return None, f"must be <= {_bound_txt(le)}"
        return v, None
    return check


def _int(*, ge=None, le=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return None, "must be an integer"
        if ge is not None and v < ge:
            return None, f"must be >= {ge}"
        if le is not None and v > le:
            return None, f"must be <= {le}"
        return v, None
    return check


def _bool(v):
    if not isinstance(v, bool):
        return None, "must be true or false"
    return v, None


def _str(v):
    if not isinstance(v, str) or not v.strip():
        return None, "must be a non-empty string"
    return v, None


def _choice(*options):
    def check(v):
        if v not in options:
            return None, "must be one of " + ", ".join(options)
        return v, None
    return check


def _spin_value(v):
    if isinstance(v, bool) or v not in (-1, 0, 1):
        return None, "must be -1, 0, or 1"
    return int(v), None


def _nullable(check):
    def wrapped(v):
        if v is None:
            return None, None
        return check(v)
    return wrapped


def _weights3(v):
    if not isinstance(v, (list, tuple)) or len(v) != 3 or not all(_is_num(w) for w in v):
        return None, "must be a list of 3 numbers"
    w = tuple(float(t) for t in v)
    if any(t < 0 for t in w) or sum(w) <= 0:
        return None, "must be nonnegative with a positive sum"
    return w, None


class _Tree:
    """Marks a nested sub-schema inside an experiment schema."""

    def __init__(self, schema: dict):
        self.schema = schema


# ---------------------------------------------------------------------------
# experiment schemas: key -> (default, checker) or _Tree

_MODEL_SCHEMA = {
    "strain_d1": (0.0, _num()),
    "strain_d2": (0.0, _num()),
    "d_gs": (2880.0, _num(gt=0)),
    "zeeman_per_gauss": (2.8, _num(gt=0)),
    "b_field": (0.0, _num()),
    "excited_lifetime": (12.2, _num(gt=0)),
    "singlet_lifetime": (300.0, _num(gt=0)),
    "cross_leak_ey": (0.01, _num(ge=0, le=1)),
    "ground_mixing_rate": (0.0, _num(ge=0)),
}

_SCHEMAS: dict[str, dict] = {
    "levels": {
        "lambda_z": (2750.0, _num(ge=0)),
        "delta": (1420.0 / 3.0, _num(ge=0)),
        "delta_prime": (1550.0, _num(ge=0)),
        "delta_dprime": (200.0, _num()),
        "strain_d1": (0.0, _num()),
        "strain_d2": (0.0, _num()),
    },
    "ple": {
        "detuning_start": (-200.0, _num()),
        "detuning_stop": (200.0, _num()),
        "n_points": (81, _int(ge=2)),
        "mode": ("repump_each_point", _choice("repump_each_point", "repump_each_scan")),
        "dwell": (2e6, _num(gt=0)),
        "repump": (1e3, _num(gt=0)),
        "probe": (1e4, _num(gt=0)),
        "n_scans": (1, _int(ge=1)),
        "probe_rabi_mhz": (1.0, _num(gt=0)),
        "collection_eff": (0.01, _num(gt=0, le=1)),
        "noise_kind": (None, _nullable(_choice("ornstein_uhlenbeck", "repump_jump"))),
        "noise_std_mhz": (0.0, _num(ge=0)),
        "noise_correlation_ns": (None, _nullable(_num(gt=0))),
        "model": _Tree(_MODEL_SCHEMA),
    },
    "rabi": {
        "rabi_mhz": (40.0, _num(gt=0)),
        "detuning_mhz": (0.0, _num()),
        "ground_spin": (0, _spin_value),
        "excited": ("Ey", _choice(*BASIS_LABELS)),
        "pulse_start": (50.0, _num(ge=0)),
        "pulse_stop": (90.0, _num(gt=0)),
        "pulse_rise": (1.0, _num(gt=0)),
        "window_ns": (200.0, _num(gt=0)),
        "bin_ns": (0.5, _num(gt=0)),
        "n_shots": (1_000_000, _int(ge=1)),
        "collection_eff": (0.01, _num(gt=0, le=1)),
        "jitter_std_ns": (0.0, _num(ge=0)),
        "model": _Tree(_MODEL_SCHEMA),
    },
    "cpt": {
        "lambda_state": ("A2", _choice("A1", "A2")),
        "r_a_mhz": (0.5, _num(gt=0)),
        "r_e_mhz": (2.0, _num(gt=0)),
        "eta": (2.6, _num(gt=0)),
        "b_start": (-2.0, _num()),
        "b_stop": (2.0, _num()),
        "b_points": (161, _int(ge=2)),
        "hyperfine_gs": (2.2, _num(ge=0)),
        "hyperfine_es_factor": (20.0, _num(ge=0)),
        "carbon13_overhauser_std": (0.0, _num(ge=0)),
        "count_window": (3e6, _num(gt=0)),
        "collection_eff": (0.02, _num(gt=0, le=1)),
        "m_i_weights": ((1.0, 1.0, 1.0), _weights3),
        "model": _Tree(_MODEL_SCHEMA),
    },
    "cool": {
        "resonant_m_i": (0, _spin_value),
        "n_cycles": (10_000, _int(ge=1)),
        "n_traj": (300, _int(ge=1)),
        "dark_excitation": (0.01, _num(ge=0, le=1)),
        "record_every": (None, _nullable(_int(ge=1))),
        "hyperfine_gs": (2.2, _num(ge=0)),
        "hyperfine_es_factor": (20.0, _num(ge=0)),
        "model": _Tree(_MODEL_SCHEMA),
    },
    "bath": {
        "b_start": (-1.5, _num()),
        "b_stop": (1.5, _num()),
        "b_points": (61, _int(ge=2)),
        "n_runs": (10_000, _int(ge=1)),
        "n_carbon": (50, _int(ge=0)),
        "coupling_mhz": (0.4, _num(ge=0)),
        "t1_nuc": (5e9, _num(gt=0)),
        "b_prep": (0.0, _num()),
        "t_cond": (3e5, _num(gt=0)),
        "n_cond": (0, _int(ge=0)),
        "delay": (1e6, _num(ge=0)),
        "readout_window": (3e5, _num(gt=0)),
        "dip_fwhm_mhz": (1.0, _num(gt=0)),
        "dip_contrast": (0.95, _num(gt=0, le=1)),
        "bright_rate_per_ns": (1e-5, _num(gt=0)),
        "model": _Tree(_MODEL_SCHEMA),
    },
    "entangle": {
        "basis": ("HV", _choice("HV", "SIGMA")),
        "delta_omega": (122.0, _num(ge=0)),
        "phi_plus_minus": (0.0, _num()),
        "jitter_std": (0.3, _num(ge=0)),
        "signal_to_background": (math.inf, _num(gt=0, allow_inf=True)),
        "depolarization": (0.0, _num(ge=0, le=1)),
        "phase_noise_std": (0.0, _num(ge=0)),
        "n_events": (1000, _int(ge=1)),
        "window_ns": (20.0, _num(gt=0)),
        "bin_ns": (1.0, _num(gt=0)),
        "tau_ns": (12.2, _num(gt=0)),
    },
    "purcell": {
        "tau0": (18.5, _num(gt=0)),
        "tau": (11.6, _num(gt=0)),
        "xi": (0.03, _num(gt=0, lt=1)),
        "q": (None, _nullable(_num(gt=0))),
        "mode_volume": (1.0, _num(gt=0)),
        "lambda0": (637.0, _num(gt=0)),
        "n_eff": (1.7, _num(ge=1, le=2.4)),
        "field_overlap": (1.0, _num(gt=0, le=1)),
        "dipole_overlap": (1.0, _num(gt=0, le=1)),
        "linewidth_gamma_ext": (None, _nullable(_num(ge=0))),
        "gamma_rad": (13.0, _num(gt=0)),
    },
    "collect": {
        "na": (0.95, _num(gt=0)),
        "n1": (1.0, _num(gt=0)),
        "n2": (2.4, _num(gt=0)),
        "phi_em": (math.pi / 2.0, _num(ge=0, le=math.pi / 2.0)),
    },
    "fit": {
        "input": (_REQUIRED, _str),
        "kind": ("lorentzian", _choice("lorentzian", "oscillation", "decay")),
        "y_column": ("sampled", _str),
        "n_peaks": (1, _int(ge=1)),
        "x_min": (None, _nullable(_num())),
        "x_max": (None, _nullable(_num())),
        "expected_frequency_mhz": (None, _nullable(_num(gt=0))),
        "fit_offset": (True, _bool),
    },
}

_TCSPC_FLOOR_NS = 0.195  # matches the rabi histogram resolution guard


def _cross_checks(experiment: str, p: dict, errors: list) -> None:
    """Constraints that couple two or more already-valid keys."""
    def need(key, reason):
        errors.append((f"parameters.{key}", reason))

    if experiment == "ple":
        if p["detuning_stop"] <= p["detuning_start"]:
            need("detuning_stop", "must exceed detuning_start")
        if p["dwell"] < p["repump"] + p["probe"]:
            need("dwell", "must fit at least one repump+probe cycle")
        if p["noise_kind"] == "ornstein_uhlenbeck" and p["noise_correlation_ns"] is None:
            need("noise_correlation_ns", "missing (ornstein_uhlenbeck noise needs one)")
    elif experiment == "rabi":
        if p["pulse_stop"] <= p["pulse_start"]:
            need("pulse_stop", "must exceed pulse_start")
        if p["bin_ns"] < _TCSPC_FLOOR_NS:
            need("bin_ns", f"must be >= the {_TCSPC_FLOOR_NS} ns timing resolution")
        if p["bin_ns"] > p["window_ns"]:
            need("bin_ns", "must not exceed window_ns")
    elif experiment in ("cpt", "bath"):
        if p["b_stop"] <= p["b_start"]:
            need("b_stop", "must exceed b_start")
    elif experiment == "entangle":
        if p["bin_ns"] > p["window_ns"]:
            need("bin_ns", "must not exceed window_ns")
    elif experiment == "collect":
        if p["na"] > p["n1"]:
            need("na", "cannot exceed n1")
    elif experiment == "fit":
        path = p.get("input")
        if isinstance(path, str):
            if not os.path.isfile(path):
                need("input", f"cannot read {path}")
            else:
                with open(path, encoding="utf-8") as handle:
                    header = handle.readline().strip()
                columns = [tok.strip() for tok in header.split(",")]
                if p["y_column"] not in columns[1:]:
                    need("y_column", f"no column {p['y_column']!r} in {path}")
        if p["x_min"] is not None and p["x_max"] is not None and p["x_min"] >= p["x_max"]:
            need("x_max", "must exceed x_min")


# ---------------------------------------------------------------------------
# config resolution

def _resolve_tree(doc, schema: dict, prefix: str, errors: list) -> dict:
    resolved: dict = {}
    if not isinstance(doc, dict):
        errors.append((prefix.rstrip("."), "must be a JSON object"))
        doc = {}
    for key in doc:
        if key not in schema:
            errors.append((prefix + key, "unknown key"))
    for key, spec in schema.items():
        if isinstance(spec, _Tree):
            resolved[key] = _resolve_tree(doc.get(key, {}), spec.schema, prefix + key + ".", errors)
            continue
        default, check = spec
        if key not in doc:
            if default is _REQUIRED:
                errors.append((prefix + key, "missing"))
            else:
                resolved[key] = default
            continue
        value, reason = check(doc[key])
        if reason is not None:
            errors.append((prefix + key, reason))
        else:
            resolved[key] = value
    return resolved


def validate_config(doc) -> tuple[dict | None, list[tuple[str, str]]]:
    """Resolve a parsed config document against the schemas.

    Returns (resolved, errors); resolved is None whenever errors is
    non-empty, so a failed validation never leaks a partial resolution.
    """
    errors: list[tuple[str, str]] = []
    if not isinstance(doc, dict):
        return None, [("config", "must be a JSON object")]

    known_top = ("experiment", "parameters", "seed", "output", "format", "plot")
    for key in doc:
        if key not in known_top:
            errors.append((key, "unknown key"))

    experiment = doc.get("experiment")
    if experiment is None:
        errors.append(("experiment", "missing"))
    elif experiment not in EXPERIMENTS:
        errors.append(
            ("experiment", f"unknown experiment {experiment!r}; choose from "
             + ", ".join(EXPERIMENTS))
        )

    resolved: dict = {"experiment": experiment}

    seed, reason = _int(ge=0)(doc.get("seed", 0))
    if reason is not None:
        errors.append(("seed", reason))
    else:
        resolved["seed"] = seed

    default_prefix = experiment if isinstance(experiment, str) else "nvsim"
    output, reason = _str(doc.get("output", default_prefix))
    if reason is not None:
        errors.append(("output", reason))
    else:
        resolved["output"] = output

    fmt, reason = _choice("csv", "json")(doc.get("format", "csv"))
    if reason is not None:
        errors.append(("format", reason))
    else:
        resolved["format"] = fmt

    plot, reason = _bool(doc.get("plot", True))
    if reason is not None:
        errors.append(("plot", reason))
    else:
        resolved["plot"] = plot

    if isinstance(experiment, str) and experiment in _SCHEMAS:
        params = _resolve_tree(
            doc.get("parameters", {}), _SCHEMAS[experiment], "parameters.", errors
        )
        if not errors:
            _cross_checks(experiment, params, errors)
        resolved["parameters"] = params

    if errors:
        return None, errors
    return resolved, []


# ---------------------------------------------------------------------------
# serialization helpers

def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)


def _table_csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _spectrum_obj(spec) -> dict:
    obj = {
        "axis_label": spec.axis_label,
        "axis": spec.axis,
        "expected": spec.expected,
        "sampled": spec.sampled,
    }
    if spec.per_scan is not None:
        obj["per_scan"] = spec.per_scan
    return obj


def _build_model(m: dict):
    return build_nv_model(
        ExcitedStateParams(strain_d1=m["strain_d1"], strain_d2=m["strain_d2"]),
        GroundParams(
            d_gs=m["d_gs"],
            zeeman_per_gauss=m["zeeman_per_gauss"],
            b_field=m["b_field"],
        ),
        excited_lifetime=m["excited_lifetime"],
        singlet_lifetime=m["singlet_lifetime"],
        cross_leak_ey=m["cross_leak_ey"],
        ground_mixing_rate=m["ground_mixing_rate"],
    )


# ---------------------------------------------------------------------------
# runners: each returns {"csv": {suffix: text}, "json": obj, "plot": fn|None,
# "summary": [lines]}

def _run_levels(p: dict, seed: int) -> dict:
    level_set = solve_levels(ExcitedStateParams(
        lambda_z=p["lambda_z"], delta=p["delta"], delta_prime=p["delta_prime"],
        delta_dprime=p["delta_dprime"], strain_d1=p["strain_d1"],
        strain_d2=p["strain_d2"],
    ))
    labels = [
        BASIS_LABELS[int(np.argmax(level_set.characters[i]))] for i in range(6)
    ]
    rows = [
        (labels[i], level_set.energies[i], *level_set.characters[i])
        for i in range(6)
    ]
    header = "level,energy_mhz," + ",".join(l.lower() for l in BASIS_LABELS)
    by_label = {labels[i]: float(level_set.energies[i]) for i in range(6)}
    summary = []
    if "A1" in by_label and "A2" in by_label:
        summary.append(f"A2 - A1 = {by_label['A2'] - by_label['A1']:.3f} MHz")
    json_obj = {
        "levels": [
            {
                "label": labels[i],
                "energy_mhz": float(level_set.energies[i]),
                "characters": {
                    b.lower(): float(level_set.characters[i, j])
                    for j, b in enumerate(BASIS_LABELS)
                },
            }
            for i in range(6)
        ]
    }
    from .plotting import save_levels_plot

    return {
        "csv": {"": _table_csv(header, rows)},
        "json": json_obj,
        "plot": lambda path: save_levels_plot(level_set, path, title="excited levels"),
        "summary": summary,
    }


def _run_ple(p: dict, seed: int) -> dict:
    model = _build_model(p["model"])
    axis = np.linspace(p["detuning_start"], p["detuning_stop"], p["n_points"])
    protocol = PLEProtocol(
        detunings_mhz=tuple(float(x) for x in axis),
        mode=p["mode"], dwell=p["dwell"], repump=p["repump"], probe=p["probe"],
        n_scans=p["n_scans"], probe_rabi_mhz=p["probe_rabi_mhz"],
        collection_eff=p["collection_eff"],
    )
    noise = None
    if p["noise_kind"] is not None and p["noise_std_mhz"] > 0:
        noise = NoiseProcess(
            kind=p["noise_kind"],
            stationary_std=p["noise_std_mhz"],
            correlation_time=p["noise_correlation_ns"],
        )
    spec = simulate_ple(model, protocol, noise, seed)
    csv_files = {"": spec.to_csv_text()}
    if spec.per_scan is not None:
        csv_files[".scans"] = spec.per_scan_csv_text()
    from .plotting import save_spectrum_plot

    return {
        "csv": csv_files,
        "json": _spectrum_obj(spec),
        "plot": lambda path: save_spectrum_plot(spec, path, title="PLE scan"),
        "summary": [f"total counts {int(spec.sampled.sum())}"],
    }


def _run_rabi(p: dict, seed: int) -> dict:
    model = _build_model(p["model"])
    pulse = readout_pulse(
        p["rabi_mhz"], start=p["pulse_start"], stop=p["pulse_stop"],
        rise=p["pulse_rise"], ground_spin=p["ground_spin"], excited=p["excited"],
        detuning_mhz=p["detuning_mhz"],
    )
    spec = simulate_rabi(
        model, pulse, window_ns=p["window_ns"], bin_ns=p["bin_ns"], seed=seed,
        n_shots=p["n_shots"], collection_eff=p["collection_eff"],
        jitter_std_ns=p["jitter_std_ns"],
    )
    from .plotting import save_histogram_plot

    return {
        "csv": {"": spec.to_csv_text()},
        "json": _spectrum_obj(spec),
        "plot": lambda path: save_histogram_plot(
            spec, path, title=f"optical Rabi, {p['rabi_mhz']:g} MHz"
        ),
        "summary": [f"total counts {int(spec.sampled.sum())}"],
    }


def _cpt_config(p: dict, b_scan) -> CPTConfig:
    return CPTConfig(
        lambda_state=p["lambda_state"], r_a_mhz=p["r_a_mhz"], r_e_mhz=p["r_e_mhz"],
        eta=p["eta"], b_scan=tuple(float(b) for b in b_scan),
        hyperfine_gs=p["hyperfine_gs"], hyperfine_es_factor=p["hyperfine_es_factor"],
        carbon13_overhauser_std=p["carbon13_overhauser_std"],
        count_window=p["count_window"], collection_eff=p["collection_eff"],
    )


def _run_cpt(p: dict, seed: int) -> dict:
    model = _build_model(p["model"])
    axis = np.linspace(p["b_start"], p["b_stop"], p["b_points"])
    config = _cpt_config(p, axis)
    spec = simulate_cpt(model, config, seed=seed, m_i_weights=p["m_i_weights"])
    gamma = 1e3 / model.excited_lifetime
    width = cpt_linewidth(p["r_a_mhz"], p["r_e_mhz"], gamma, p["eta"])
    from .plotting import save_spectrum_plot

    return {
        "csv": {"": spec.to_csv_text()},
        "json": _spectrum_obj(spec),
        "plot": lambda path: save_spectrum_plot(
            spec, path, title=f"CPT on {p['lambda_state']}"
        ),
        "summary": [f"closed-form dip FWHM {width:.4f} MHz (two-photon detuning)"],
    }


def _run_cool(p: dict, seed: int) -> dict:
    model = _build_model(p["model"])
    config = CPTConfig(
        hyperfine_gs=p["hyperfine_gs"],
        hyperfine_es_factor=p["hyperfine_es_factor"],
    )
    result = simulate_nuclear_cooling(
        model, config, seed, resonant_m_i=p["resonant_m_i"],
        n_cycles=p["n_cycles"], n_traj=p["n_traj"],
        dark_excitation=p["dark_excitation"], record_every=p["record_every"],
    )
    rows = [
        (int(result.cycles[i]), *result.populations[i])
        for i in range(result.cycles.size)
    ]
    dark_col = (-1, 0, 1).index(result.resonant_m_i)
    final = float(result.populations[-1, dark_col])
    json_obj = {
        "resonant_m_i": result.resonant_m_i,
        "cycles": result.cycles,
        "populations": {
            "m_minus1": result.populations[:, 0],
            "m_zero": result.populations[:, 1],
            "m_plus1": result.populations[:, 2],
        },
    }
    from .plotting import save_cooling_plot

    return {
        "csv": {"": _table_csv("cycle,p_minus1,p_zero,p_plus1", rows)},
        "json": json_obj,
        "plot": lambda path: save_cooling_plot(result, path, title="nuclear cooling"),
        "summary": [f"final dark-projection population {final:.3f}"],
    }


def _run_bath(p: dict, seed: int) -> dict:
    model = _build_model(p["model"])
    axis = np.linspace(p["b_start"], p["b_stop"], p["b_points"])
    config = BathConfig(
        b_ro=tuple(float(b) for b in axis),
        n_carbon=p["n_carbon"], coupling_mhz=p["coupling_mhz"],
        t1_nuc=p["t1_nuc"], b_prep=p["b_prep"], t_cond=p["t_cond"],
        n_cond=p["n_cond"], delay=p["delay"], readout_window=p["readout_window"],
        dip_fwhm_mhz=p["dip_fwhm_mhz"], dip_contrast=p["dip_contrast"],
        bright_rate_per_ns=p["bright_rate_per_ns"],
    )
    uncond, cond = simulate_bath_preparation(config, model, seed, n_runs=p["n_runs"])
    rows = []
    for j in range(axis.size):
        rows.append((
            axis[j], uncond.expected[j], int(uncond.sampled[j]),
            cond.expected[j], int(cond.sampled[j]),
        ))
    header = ("field_gauss,unconditioned_expected,unconditioned_sampled,"
              "conditioned_expected,conditioned_sampled")
    json_obj = {
        "unconditioned": _spectrum_obj(uncond),
        "conditioned": _spectrum_obj(cond),
        "overhauser_std_mhz": config.overhauser_std_mhz,
    }
    from .plotting import save_bath_plot

    return {
        "csv": {"": _table_csv(header, rows)},
        "json": json_obj,
        "plot": lambda path: save_bath_plot(uncond, cond, path, title="bath preparation"),
        "summary": [
            f"overhauser std {config.overhauser_std_mhz:.3f} MHz",
        ],
    }


def _run_entangle(p: dict, seed: int) -> dict:
    config = EntanglementConfig(
        delta_omega=p["delta_omega"], phi_plus_minus=p["phi_plus_minus"],
        jitter_std=p["jitter_std"], signal_to_background=p["signal_to_background"],
        depolarization=p["depolarization"], n_events=p["n_events"],
        basis=p["basis"], window_ns=p["window_ns"], bin_ns=p["bin_ns"],
        tau_ns=p["tau_ns"], phase_noise_std=p["phase_noise_std"],
    )
    run = simulate_entanglement_run(config, seed)
    c0, c1 = run.channels
    header = "t_d_ns," + ",".join(
        f"{c}_{field}" for c in (c0, c1) for field in ("observed", "expected", "counts")
    )
    rows = []
    for j in range(run.bin_centers.size):
        rows.append((
            run.bin_centers[j],
            run.observed[c0][j], run.expected[c0][j], int(run.counts[c0][j]),
            run.observed[c1][j], run.expected[c1][j], int(run.counts[c1][j]),
        ))
    json_obj = {
        "basis": config.basis,
        "bin_centers": run.bin_centers,
        "observed": {c: run.observed[c] for c in (c0, c1)},
        "expected": {c: run.expected[c] for c in (c0, c1)},
        "counts": {c: run.counts[c] for c in (c0, c1)},
        "visibility_dilution": config.visibility_dilution,
    }
    summary = [f"dilution factor {config.visibility_dilution:.4f}"]
    if config.basis == "SIGMA":
        corr = run.sigma_correlations()
        summary.append(
            f"P(+1|sigma-) = {corr[0]:.4f}, P(-1|sigma+) = {corr[1]:.4f}"
        )
    from .plotting import save_entanglement_plot

    return {
        "csv": {
            "": _table_csv(header, rows),
            ".events": run.record.to_csv_text(),
        },
        "json": json_obj,
        "plot": lambda path: save_entanglement_plot(run, path, title="spin-photon run"),
        "summary": summary,
    }


def _run_purcell(p: dict, seed: int) -> dict:
    rows: list[tuple[str, float]] = []
    p_life = purcell_from_lifetimes(p["tau0"], p["tau"])
    rows.append(("p", p_life))
    if p_life >= 0:
        rows.append(("p_zpl", zpl_enhancement(p_life, p["xi"])))
        rows.append(("zpl_fraction", zpl_fraction_enhanced(p_life, p["xi"])))
    if p["q"] is not None:
        cavity = CavityParams(
            q=p["q"], mode_volume=p["mode_volume"], lambda0=p["lambda0"],
            n_eff=p["n_eff"], field_overlap=p["field_overlap"],
            dipole_overlap=p["dipole_overlap"], xi=p["xi"],
        )
        p_cav = purcell_from_cavity(cavity)
        g, kappa, gamma = cavity_coupling_rates(cavity, p["gamma_rad"])
        rows += [
            ("p_cavity", p_cav),
            ("g_mhz", g),
            ("kappa_mhz", kappa),
            ("gamma_mhz", gamma),
            ("cooperativity", cooperativity(g, kappa, gamma)),
        ]
    if p["linewidth_gamma_ext"] is not None:
        rows.append(("required_q", required_q(
            p["linewidth_gamma_ext"], p["xi"], p["mode_volume"],
            p["field_overlap"], p["dipole_overlap"], p["gamma_rad"],
        )))
    return {
        "csv": {"": _table_csv("quantity,value", rows)},
        "json": {name: value for name, value in rows},
        "plot": None,
        "summary": [f"P = {p_life:.4f} from lifetimes {p['tau0']:g}/{p['tau']:g} ns"],
    }


def _run_collect(p: dict, seed: int) -> dict:
    geometry = CollectionGeometry(
        na=p["na"], n1=p["n1"], n2=p["n2"], phi_em=p["phi_em"]
    )
    eff = collection_efficiency(geometry)
    rows = [
        ("collection_efficiency", eff),
        ("theta_max_rad", geometry.theta_max),
    ]
    return {
        "csv": {"": _table_csv("quantity,value", rows)},
        "json": {name: value for name, value in rows},
        "plot": None,
        "summary": [f"collection efficiency {eff:.4f}"],
    }


def _read_xy_csv(path: str, y_column: str) -> tuple[np.ndarray, np.ndarray, str]:
    with open(path, encoding="utf-8") as handle:
        lines = [ln for ln in handle.read().split("\n") if ln.strip()]
    if len(lines) < 2:
        raise InvalidDataError(f"{path} has no data rows")
    columns = [tok.strip() for tok in lines[0].split(",")]
    col = columns.index(y_column)
    xs, ys = [], []
    for ln in lines[1:]:
        tokens = ln.split(",")
        try:
            xs.append(float(tokens[0]))
            ys.append(float(tokens[col]))
        except (ValueError, IndexError):
            raise InvalidDataError(f"{path}: cannot parse row {ln!r}")
    return np.asarray(xs), np.asarray(ys), columns[0]


def _fit_model_curve(kind: str, params: dict, x: np.ndarray) -> np.ndarray:
    if kind == "lorentzian":
        y = np.full_like(x, params["offset"])
        k = 0
        while f"center_{k}" in params:
            hw2 = (params[f"fwhm_{k}"] / 2.0) ** 2
            y = y + params[f"amplitude_{k}"] * hw2 / ((x - params[f"center_{k}"]) ** 2 + hw2)
            k += 1
        return y
    if kind == "oscillation":
        phase = 2.0e-3 * np.pi * params["frequency_mhz"] * x + params["phase"]
        return 0.5 * (1.0 + params["visibility"] * np.cos(phase))
    return params["amplitude"] * np.exp(-x / params["tau"]) + params.get("offset", 0.0)


def _run_fit(p: dict, seed: int) -> dict:
    x, y, x_label = _read_xy_csv(p["input"], p["y_column"])
    keep = np.isfinite(x) & np.isfinite(y)
    if p["x_min"] is not None:
        keep &= x >= p["x_min"]
    if p["x_max"] is not None:
        keep &= x <= p["x_max"]
    x, y = x[keep], y[keep]
    if x.size < 4:
        raise InvalidDataError(
            f"only {x.size} usable rows in {p['input']} after range/NaN filtering"
        )

    kind = p["kind"]
    if kind == "lorentzian":
        result = fit_lorentzian((x, y), n_peaks=p["n_peaks"])
    elif kind == "oscillation":
        result = fit_oscillation(x, y, p["expected_frequency_mhz"])
    else:
        result = fit_exponential_decay(x, y, fit_offset=p["fit_offset"])
    if not result.converged:
        raise _NumericalFailure(
            f"{kind} fit did not converge after {result.n_iter} iterations "
            f"(residual norm {result.residual_norm:.3g})"
        )

    rows = [
        (name, result.params[name], result.uncertainties.get(name, float("nan")))
        for name in result.params
    ]
    y_fit = _fit_model_curve(kind, result.params, x)
    curve_rows = [(x[j], y[j], y_fit[j]) for j in range(x.size)]
    from .plotting import save_fit_plot

    return {
        "csv": {
            "": _table_csv("parameter,value,uncertainty", rows),
            ".curve": _table_csv(f"{x_label},data,fit", curve_rows),
        },
        "json": result.as_dict(),
        "plot": lambda path: save_fit_plot(
            x, y, y_fit, path, title=f"{kind} fit", xlabel=x_label
        ),
        "summary": [
            f"{name} = {result.params[name]:.6g}" for name in result.params
        ] + [f"converged in {result.n_iter} iterations"],
    }


_RUNNERS = {
    "levels": _run_levels,
    "ple": _run_ple,
    "rabi": _run_rabi,
    "cpt": _run_cpt,
    "cool": _run_cool,
    "bath": _run_bath,
    "entangle": _run_entangle,
    "purcell": _run_purcell,
    "collect": _run_collect,
    "fit": _run_fit,
}


# ---------------------------------------------------------------------------
# entry point

def _load_document(path: str):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        return None, f"config: cannot read {path} ({exc.strerror})"
    if not text.strip():
        return {}, None  # empty file resolves to an empty document
    try:
        return json.loads(text), None
    except json.JSONDecodeError as exc:
        return None, f"config: invalid JSON ({exc.msg} at line {exc.lineno})"


def run_config(resolved: dict) -> list[str]:
    """Execute a resolved config; returns the list of files written."""
    runner = _RUNNERS[resolved["experiment"]]
    out = runner(resolved["parameters"], resolved["seed"])
    prefix = resolved["output"]
    written: list[str] = []

    if resolved["format"] == "csv":
        for suffix, text in out["csv"].items():
            path = f"{prefix}{suffix}.csv"
            write_text_atomic(path, text)
            written.append(path)
    else:
        path = f"{prefix}.json"
        write_text_atomic(path, _dump_json(out["json"]))
        written.append(path)

    meta = {
        "version": __version__,
        "experiment": resolved["experiment"],
        "seed": resolved["seed"],
        "output": resolved["output"],
        "format": resolved["format"],
        "plot": resolved["plot"],
        "parameters": resolved["parameters"],
    }
    meta_path = f"{prefix}.meta.json"
    write_text_atomic(meta_path, _dump_json(meta))
    written.append(meta_path)

    if resolved["plot"] and out["plot"] is not None:
        png_path = f"{prefix}.png"
        out["plot"](png_path)
        written.append(png_path)

    for line in out["summary"]:
        print(line)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nvsim",
        description="NV-center quantum-optics simulations from a JSON config.",
    )
    parser.add_argument("--version", action="version", version=f"nvsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment and write artifacts")
    p_run.add_argument("config", help="path to the JSON config")
    p_val = sub.add_parser("validate", help="resolve a config and echo it")
    p_val.add_argument("config", help="path to the JSON config")
    args = parser.parse_args(argv)

    doc, load_error = _load_document(args.config)
    if load_error is not None:
        print(load_error, file=sys.stderr)
        return 2

    resolved, errors = validate_config(doc)
    if errors:
        for key_path, reason in errors:
            print(f"{key_path}: {reason}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(_dump_json(resolved), end="")
        return 0

    try:
        written = run_config(resolved)
    except (
        StiffnessError,
        NonUniqueSteadyStateError,
        NoSignalError,
        _NumericalFailure,
        np.linalg.LinAlgError,
        FloatingPointError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except NvsimError as exc:
        # library-level validation that slipped past the schema
        print(str(exc), file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

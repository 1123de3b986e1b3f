"""Bench configuration: YAML files checked against a versioned schema.

Unknown keys are rejected everywhere. ``load_config`` returns the config
with every default filled in; ``dump_config`` of that dict loads back to
the same dict.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .frontend import DetectorModel, LightSource, ModulationSpec
from .optics import ChainScenario, OpticalElement, quantum_efficiency_from_responsivity

SCHEMA_VERSION = 1
STAGES = ("responsivity", "spectra", "power_sweep", "cmrr", "cutoff", "clearance_spectra")
FIGURES = ("inpsd_spectra", "cmrr", "power_sweep", "clearance_spectra", "clearance_fit",
           "responsivity")


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_frac = {"type": "number", "minimum": 0, "maximum": 1}
_table = {
    "oneOf": [
        _pos,
        {"type": "array", "minItems": 1,
         "items": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}},
    ]
}


def _obj(props, required=(), defaults=None):
    schema = {"type": "object", "additionalProperties": False, "properties": props,
              "required": list(required)}
    for key, value in (defaults or {}).items():
        schema["properties"][key] = dict(schema["properties"][key], default=value)
    return schema


_detector = _obj(
    {
        "name": {"type": "string"},
        "responsivity": _table,
        "saturation_power_w": _pos,
        "dark_noise_psd": _nonneg,
        "bandwidth_hz": _pos,
        "ac_corner_hz": _pos,
        "transimpedance_v_per_a": _pos,
        "ac_stage_gain": _pos,
    },
    required=("responsivity",),
    defaults={"name": "detector", "saturation_power_w": 2.0e-3, "dark_noise_psd": 0.0,
              "bandwidth_hz": 120e6, "ac_corner_hz": 10e3, "transimpedance_v_per_a": 1.0e3,
              "ac_stage_gain": 26.5},
)

SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "source": _obj(
            {"wavelength_um": _pos, "power_w": _nonneg, "fano": _nonneg,
             "excess_corner_hz": _pos},
            required=("wavelength_um",),
            defaults={"power_w": 0.0, "fano": 1.0, "excess_corner_hz": 150e6},
        ),
        "chain": _obj(
            {
                "mode": {"enum": ["homodyne_signal_path", "source_characterization"]},
                "elements": {"type": "array", "minItems": 1, "items": _obj(
                    {"name": {"type": "string"}, "transmissivity": _table,
                     "after_splitter": {"type": "boolean"}},
                    required=("name", "transmissivity"), defaults={"after_splitter": False})},
            },
            required=("elements",), defaults={"mode": "source_characterization"},
        ),
        "splitter_imbalance": {"type": "number", "minimum": -1, "maximum": 1, "default": 0.002},
        "detectors": {"type": "array", "minItems": 2, "maxItems": 2, "items": _detector},
        "modulation": _obj(
            {"kind": {"enum": ["none", "square_wave"]}, "fundamental_hz": _pos, "depth": _frac},
            defaults={"kind": "none", "fundamental_hz": 1e6, "depth": 0.0},
        ),
        "interferer": {"oneOf": [
            {"type": "null"},
            _obj({"frequency_hz": _pos, "amplitude_a": _nonneg},
                 required=("frequency_hz", "amplitude_a")),
        ], "default": None},
        "acquisition": _obj(
            {"sample_rate": _pos, "duration_s": _pos,
             "records": {"type": "integer", "minimum": 1},
             "background_records": {"type": "integer", "minimum": 0}},
            defaults={"sample_rate": 625e6, "duration_s": 1e-3, "records": 1,
                      "background_records": 1},
        ),
        "analysis": _obj(
            {
                "segment_len": {"type": "integer", "minimum": 2},
                "window": {"type": "string"},
                "overlap": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "band_width_hz": _pos,
                "band_centers_hz": {"type": "array", "minItems": 1, "items": _pos},
                "flat_band_hz": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                "cmrr_harmonics": {"type": "integer", "minimum": 1},
                "deembed": {"type": "boolean"},
                "shot_tolerance": _frac,
                "spectra_power_w": {"oneOf": [{"type": "null"}, _pos]},
                "cutoff_segment_len": {"type": "integer", "minimum": 2},
            },
            defaults={"segment_len": 16384, "window": "hann", "overlap": 0.5,
                      "band_width_hz": 3e6, "band_centers_hz": [30e6],
                      "flat_band_hz": [1e6, 5e6], "cmrr_harmonics": 5, "deembed": False,
                      "shot_tolerance": 0.05, "spectra_power_w": None,
                      "cutoff_segment_len": 512},
        ),
        "sweep": _obj(
            {"incident_power_w": {"type": "array", "minItems": 1, "items": _nonneg},
             "dc_noise_rel": _nonneg},
            required=("incident_power_w",), defaults={"dc_noise_rel": 0.0},
        ),
        "stages": {"type": "array", "uniqueItems": True, "items": {"enum": list(STAGES)}},
        "figures": {"type": "array", "uniqueItems": True, "items": {"enum": list(FIGURES)}},
    },
    required=("schema_version", "name", "seed", "source", "chain", "detectors", "sweep",
              "stages"),
    defaults={"workers": 1, "figures": []},
)


def _fill_defaults(schema, value):
    if schema.get("type") == "object" and isinstance(value, dict):
        for key, sub in schema["properties"].items():
            if key not in value and "default" in sub:
                value[key] = copy.deepcopy(sub["default"])
            if key in value:
                value[key] = _fill_defaults(sub, value[key])
        return value
    if schema.get("type") == "array" and isinstance(value, list) and "items" in schema:
        return [_fill_defaults(schema["items"], v) for v in value]
    if "oneOf" in schema and isinstance(value, dict):
        for option in schema["oneOf"]:
            if option.get("type") == "object":
                return _fill_defaults(option, value)
    return value


def _fill_missing_sections(cfg):
    for key in ("modulation", "acquisition", "analysis"):
        cfg.setdefault(key, {})


def _location(error):
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def validate_config(raw):
    """Check ``raw`` against the schema and cross-references.

    Returns the normalized config. Raises ``ConfigError`` listing every
    problem found.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    cfg = copy.deepcopy(raw)
    _fill_missing_sections(cfg)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_location(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    cfg = _fill_defaults(SCHEMA, cfg)
    cfg.setdefault("output_dir", cfg["name"])
    problems = []
    if not cfg["sweep"]["incident_power_w"]:
        problems.append("sweep/incident_power_w: empty sweep")
    try:
        build_components(cfg)
    except ValueError as exc:
        problems.append(str(exc))
    if "cmrr" in cfg["stages"] and cfg["modulation"]["kind"] != "square_wave":
        problems.append("stages: cmrr needs modulation.kind = square_wave")
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return cfg


def build_components(cfg):
    """Domain objects described by a normalized config.

    Also resolves every wavelength-dependent table at the source
    wavelength, so unresolvable cross-references fail here.
    """
    wl = cfg["source"]["wavelength_um"]
    src = cfg["source"]
    source = LightSource(wl, src["power_w"], src["fano"], src["excess_corner_hz"])
    detectors = []
    for d in cfg["detectors"]:
        det = DetectorModel(d["responsivity"], d["saturation_power_w"], d["dark_noise_psd"],
                            d["bandwidth_hz"], d["ac_corner_hz"], d["transimpedance_v_per_a"],
                            d["ac_stage_gain"], d["name"])
        try:
            det.responsivity_at(wl)
        except ValueError as exc:
            raise ValueError(f"detectors/{d['name']}: {exc}") from None
        detectors.append(det)
    qe = quantum_efficiency_from_responsivity(detectors[0].responsivity_at(wl), wl)
    if not 0 < qe <= 1:
        raise ValueError(f"detector quantum efficiency {qe:.3g} outside (0, 1]")
    elements = [OpticalElement(e["name"], e["transmissivity"], e["after_splitter"])
                for e in cfg["chain"]["elements"]]
    for e in elements:
        try:
            e.at(wl)
        except ValueError as exc:
            raise ValueError(f"chain/{exc}") from None
    chain = ChainScenario(cfg["chain"]["mode"], elements, qe)
    m = cfg["modulation"]
    modulation = ModulationSpec(m["kind"], m["fundamental_hz"], m["depth"])
    return source, chain, tuple(detectors), modulation


def parse_config(text):
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from None
    return validate_config(raw)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of a normalized config."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def bundled_configs():
    """Names of the configs shipped with the package."""
    root = resources.files("bhdsim") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_config_path(name):
    return Path(str(resources.files("bhdsim") / "configs" / f"{name}.yaml"))

"""Scenario files: a strict TOML dialect with unit-suffixed keys.

Sections: [source], repeated [[load]], [phil], [solver], repeated
[[schedule]].  Every physical quantity is an SI number whose unit is spelled
in the key name (l_f_h = 100e-6); unknown keys are rejected and required
keys must be present.  No expression evaluation, so bundled parameter tables
reproduce bit-exactly.
"""

from __future__ import annotations

import math
import os
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .blocks import (
    AvgInverterParams,
    BoostParams,
    LcFilterParams,
    ReducedOrderLoadParams,
)
from .engine import Scenario
from .errors import ConfigError, DomainError, ParseError, ValidationError

__all__ = ["parse_scenario", "parse_scenario_text", "emit_scenario",
           "resolve_scenario_path", "bundled_scenario_names"]

_TOP_KEYS = {"source", "load", "phil", "solver", "schedule"}

# (toml_key, constructor_field, required)
_SOURCE_FIELDS = {
    "lc_filter": [
        ("v_source_v", "v_source", True),
        ("l_f_h", "l_f", True),
        ("r_f_ohm", "r_f", True),
        ("c_f_f", "c_f", True),
    ],
    "boost": [
        ("l_h", "l", True),
        ("r_l_ohm", "r_l", True),
        ("c_o_f", "c_o", True),
        ("r_co_ohm", "r_co", True),
        ("v_in_v", "v_in", True),
        ("v_out_ref_v", "v_out_ref", True),
        ("kp", "kp", True),
        ("ki", "ki", True),
        ("k_damp", "k_damp", False),
    ],
}
# accepted but not carried by the model (averaged stage does not switch)
_SOURCE_METADATA = {"boost": {"f_sw_hz"}, "lc_filter": set()}

_LOAD_FIELDS = {
    "avg_inverter": [
        ("c_i_f", "c_i", True),
        ("l_o_h", "l_o", True),
        ("r_o_ohm", "r_o", True),
        ("p_ref_w", "p_ref", True),
        ("v_ac_ll_rms_v", "v_ac_ll_rms", False),
        ("grid_freq_hz", "grid_freq_hz", False),
        ("eta", "eta", False),
        ("pi_kp", "pi_kp", False),
        ("pi_ki", "pi_ki", False),
        ("q_ref_var", "q_ref", False),
    ],
    "reduced_order": [
        ("v_nom_v", "v_nom", True),
        ("eta", "eta", True),
        ("p_o_w", "p_o", True),
        ("c_i_f", "c_i", True),
        ("lpf_cutoff_hz", "lpf_cutoff_hz", True),
    ],
}

_SOURCE_TYPES = {"lc_filter": LcFilterParams, "boost": BoostParams}
_LOAD_TYPES = {"avg_inverter": AvgInverterParams,
               "reduced_order": ReducedOrderLoadParams}


def _require_number(section: str, key: str, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"[{section}] {key} must be a number")
    return float(value)


def _build_from_fields(section: str, table: dict, kind: str, fields, metadata,
                       cls):
    allowed = {"kind"} | {k for k, _, _ in fields} | metadata
    unknown = set(table) - allowed
    if unknown:
        raise ValidationError(
            f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, attr, required in fields:
        if key in table:
            kwargs[attr] = _require_number(section, key, table[key])
        elif required:
            raise ValidationError(f"[{section}] missing required key {key}")
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ValidationError(f"[{section}] {exc}") from exc


def _parse_source(table: dict):
    kind = table.get("kind")
    if kind not in _SOURCE_TYPES:
        raise ValidationError(
            f"[source] kind must be one of {sorted(_SOURCE_TYPES)}, got {kind!r}")
    return _build_from_fields("source", table, kind, _SOURCE_FIELDS[kind],
                              _SOURCE_METADATA[kind], _SOURCE_TYPES[kind])


def _parse_load(table: dict, index: int):
    kind = table.get("kind")
    if kind not in _LOAD_TYPES:
        raise ValidationError(
            f"[[load]] #{index}: kind must be one of {sorted(_LOAD_TYPES)}, "
            f"got {kind!r}")
    return _build_from_fields(f"load#{index}", table, kind,
                              _LOAD_FIELDS[kind], set(), _LOAD_TYPES[kind])


def _parse_plain_section(name: str, table: dict, keys: tuple[str, ...]):
    unknown = set(table) - set(keys)
    if unknown:
        raise ValidationError(
            f"[{name}] unknown key(s): {', '.join(sorted(unknown))}")
    out = []
    for key in keys:
        if key not in table:
            raise ValidationError(f"[{name}] missing required key {key}")
        out.append(_require_number(name, key, table[key]))
    return out


def parse_scenario_text(text: str, name: str = "") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from exc
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(
            f"unknown top-level section(s): {', '.join(sorted(unknown))}")
    for required in ("source", "load", "phil", "solver"):
        if required not in doc:
            raise ValidationError(f"missing [{required}] section")
    source = _parse_source(doc["source"])
    load_tables = doc["load"]
    if not isinstance(load_tables, list) or not load_tables:
        raise ValidationError("need at least one [[load]] table")
    loads = tuple(_parse_load(t, i) for i, t in enumerate(load_tables))
    tau1, tau2, cutoff = _parse_plain_section(
        "phil", doc["phil"], ("tau1_s", "tau2_s", "interface_cutoff_hz"))
    dt, t_end = _parse_plain_section("solver", doc["solver"],
                                     ("dt_s", "t_end_s"))
    schedule = []
    for i, ev in enumerate(doc.get("schedule", [])):
        t, k, p = _parse_plain_section(f"schedule#{i}", ev,
                                       ("t_s", "load", "p_ref_w"))
        if k != int(k):
            raise ValidationError(f"[[schedule]] #{i}: load must be an integer")
        schedule.append((t, int(k), p))
    try:
        return Scenario(
            source=source,
            loads=loads,
            tau1_s=tau1,
            tau2_s=tau2,
            interface_cutoff_hz=cutoff,
            dt_s=dt,
            t_end_s=t_end,
            schedule=tuple(schedule),
            name=name,
        )
    except ConfigError as exc:
        raise ValidationError(str(exc)) from exc


def bundled_scenario_names() -> list[str]:
    base = resources.files("philab") / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".toml"))


def resolve_scenario_path(name_or_path: str):
    """A filesystem path as-is, otherwise a bundled scenario by bare name."""
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = resources.files("philab") / "scenarios" / f"{name_or_path}.toml"
    if candidate.is_file():
        return candidate
    raise ParseError(
        f"no such scenario file or bundled name: {name_or_path!r} "
        f"(bundled: {', '.join(bundled_scenario_names())})")


def parse_scenario(path) -> Scenario:
    """Parse and validate a scenario file (path or bundled name)."""
    resolved = resolve_scenario_path(str(path))
    try:
        text = resolved.read_text(encoding="utf-8") if hasattr(
            resolved, "read_text") else open(resolved, encoding="utf-8").read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    stem = os.path.basename(str(resolved))
    if stem.endswith(".toml"):
        stem = stem[:-5]
    return parse_scenario_text(text, name=stem)


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def emit_scenario(scenario: Scenario, path) -> None:
    """Write a scenario back out; parse(emit(s)) reproduces s field-by-field."""
    lines = ["[source]"]
    if isinstance(scenario.source, LcFilterParams):
        kind = "lc_filter"
    else:
        kind = "boost"
    lines.append(f'kind = "{kind}"')
    for key, attr, _ in _SOURCE_FIELDS[kind]:
        lines.append(f"{key} = {_fmt(getattr(scenario.source, attr))}")
    for ld in scenario.loads:
        lines.append("")
        lines.append("[[load]]")
        kind = "avg_inverter" if isinstance(ld, AvgInverterParams) else "reduced_order"
        lines.append(f'kind = "{kind}"')
        for key, attr, _ in _LOAD_FIELDS[kind]:
            lines.append(f"{key} = {_fmt(getattr(ld, attr))}")
    lines += [
        "",
        "[phil]",
        f"tau1_s = {_fmt(scenario.tau1_s)}",
        f"tau2_s = {_fmt(scenario.tau2_s)}",
        f"interface_cutoff_hz = {_fmt(scenario.interface_cutoff_hz)}",
        "",
        "[solver]",
        f"dt_s = {_fmt(scenario.dt_s)}",
        f"t_end_s = {_fmt(scenario.t_end_s)}",
    ]
    for t, k, p in scenario.schedule:
        lines += [
            "",
            "[[schedule]]",
            f"t_s = {_fmt(t)}",
            f"load = {k}",
            f"p_ref_w = {_fmt(p)}",
        ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

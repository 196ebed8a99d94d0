"""Scenario configuration: JSON documents validated against the shipped schema.

A user file only needs the keys it changes; everything else falls back to the
shipped deployment scenario.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .energy import UJ, UW, Battery, EnergyTable, EventRates, Storage
from .errors import ConfigError, FormatError

# JSON key suffix -> (suffix of the EnergyTable field, SI scale)
_ENERGY_UNITS = {"_uW": ("", UW), "_uJ": ("", UJ), "_pJ_per_bit": ("_per_bit", 1e-12),
                 "_nJ_per_bit": ("_per_bit", 1e-9)}


def _data(name):
    return resources.files("tcam").joinpath("data", name).read_text()


def schema() -> dict:
    return json.loads(_data("scenario.schema.json"))


def default_document() -> dict:
    return json.loads(_data("paper-scenario.json"))


def pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate(doc: dict):
    v = jsonschema.Draft202012Validator(schema())
    errs = sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        e = errs[0]
        raise ConfigError(e.message, pointer(e.absolute_path))


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class Scenario:
    doc: dict  # effective, fully merged document

    @property
    def method(self) -> str:
        return self.doc["method"]

    @property
    def rates(self) -> EventRates:
        r = self.doc["rates"]
        return EventRates(r["motion_interval_s"], r["p_person"], r["p_face"], r["p_unregistered"])

    @property
    def table(self) -> EnergyTable:
        kw = {}
        for key, val in self.doc["energy"].items():
            for suffix, (tail, scale) in _ENERGY_UNITS.items():
                if key.endswith(suffix):
                    kw[key[: -len(suffix)] + tail] = val * scale
                    break
        return EnergyTable(**kw)

    @property
    def battery(self) -> Battery:
        b = self.doc["battery"]
        return Battery(b["voltage_V"], b["capacity_mAh"], b["usable_fraction"],
                       b["max_current_uA"] * 1e-6, b["pmu_efficiency"])

    @property
    def recharge(self) -> bool:
        return bool(self.doc["battery"].get("recharge", False))

    @property
    def storage(self) -> Storage:
        s = self.doc["storage"]
        if s["radio_mode"] not in s["radio_modes_bps"]:
            raise ConfigError(f"radio mode {s['radio_mode']!r} is not one of the defined modes",
                              "/storage/radio_mode")
        return Storage(s["flash_bytes"] * 8, dict(s["frame_bits"]), dict(s["radio_modes_bps"]),
                       s["radio_mode"], s["egress"])

    @property
    def days(self) -> float:
        return self.doc["simulation"]["days"]

    @property
    def seed(self) -> int:
        return self.doc["simulation"]["seed"]

    def section(self, name) -> dict:
        return self.doc.get(name, {})

    def to_json(self, indent=None) -> str:
        return json.dumps(self.doc, indent=indent, sort_keys=True)


def from_document(doc: dict, overrides: dict | None = None) -> Scenario:
    validate(doc)
    eff = merge(default_document(), doc)
    if overrides:
        eff = merge(eff, overrides)
    validate(eff)
    return Scenario(eff)


def load_scenario(path=None, overrides: dict | None = None) -> Scenario:
    """Read, validate and default-fill a scenario file (None = shipped scenario)."""
    if path is None:
        doc = {}
    else:
        with open(path) as f:
            text = f.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: not valid JSON ({e})") from None
    return from_document(doc, overrides)

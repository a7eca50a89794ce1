"""JSON model files: load, save, validate.

Interface units: GHz for frequencies, MHz for couplings and decay rates,
ns/us for times.  A file may carry a tight-binding section, an effective
section, or both; bundled models (``table_s1``) resolve by bare name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import InvalidSpecError, ScenarioError
from .model import EmitterSpec, LatticeSpec, TlsSpec
from .units import ghz, mhz


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


def _bundled(name: str):
    return resources.files("apbs.data").joinpath(f"{name}.json")


def read_model_json(path_or_name) -> dict:
    """Read a model file; a bare name (no extension, no separator) resolves
    to the bundled data directory."""
    s = str(path_or_name)
    if "/" not in s and not s.endswith(".json"):
        ref = _bundled(s)
        if ref.is_file():
            return json.loads(ref.read_text())
    p = Path(s)
    if not p.is_file():
        raise ScenarioError(f"model file not found: {s}")
    return json.loads(p.read_text())


def validate_model(doc: dict) -> list[Violation]:
    """Schema and physics checks; returns an empty list when valid."""
    out = []

    def need(section, key, typ=(int, float)):
        if key not in section[1]:
            out.append(Violation(f"{section[0]}.{key}", "missing"))
            return None
        val = section[1][key]
        if not isinstance(val, typ):
            out.append(Violation(f"{section[0]}.{key}", f"expected {typ}"))
            return None
        return val

    if not isinstance(doc, dict):
        return [Violation("$", "model file must hold a JSON object")]
    if doc.get("schema_version") != 1:
        out.append(Violation("schema_version", "must be 1"))
    emitter = doc.get("emitter")
    if not isinstance(emitter, dict):
        out.append(Violation("emitter", "missing section"))
    else:
        sec = ("emitter", emitter)
        wmax = need(sec, "omega_max_GHz")
        wmin = need(sec, "omega_min_GHz")
        need(sec, "e_c_MHz")
        if wmax is not None and wmin is not None and not wmin < wmax:
            out.append(Violation("emitter.omega_min_GHz",
                                 "must be below omega_max_GHz"))
    tb = doc.get("tight_binding")
    eff = doc.get("effective")
    if tb is None and eff is None:
        out.append(Violation("$", "needs a tight_binding or effective section"))
    if tb is not None:
        sec = ("tight_binding", tb)
        n = need(sec, "n_sites", int)
        need(sec, "omega_r_GHz")
        need(sec, "j_nn_MHz")
        if n is not None and n < 1:
            out.append(Violation("tight_binding.n_sites", "must be >= 1"))
        for key in ("kappa_in_MHz", "kappa_out_MHz", "j_nnn_MHz"):
            if key in tb and tb[key] < 0:
                out.append(Violation(f"tight_binding.{key}", "must be >= 0"))
        site = emitter.get("coupling_site") if isinstance(emitter, dict) else None
        if site is not None and n is not None and not 1 <= site <= n:
            out.append(Violation("emitter.coupling_site",
                                 f"outside [1, {n}]"))
    if eff is not None:
        freqs = eff.get("mode_freqs_GHz")
        gs = eff.get("g_modes_MHz")
        kaps = eff.get("mode_kappas_MHz")
        if not isinstance(freqs, list) or not freqs:
            out.append(Violation("effective.mode_freqs_GHz",
                                 "missing or empty list"))
        else:
            if any(b <= a for a, b in zip(freqs, freqs[1:])):
                out.append(Violation("effective.mode_freqs_GHz",
                                     "not strictly increasing"))
            if any(f <= 0 for f in freqs):
                out.append(Violation("effective.mode_freqs_GHz",
                                     "must be positive"))
        if not isinstance(gs, list):
            out.append(Violation("effective.g_modes_MHz", "missing list"))
        elif isinstance(freqs, list) and len(gs) != len(freqs):
            out.append(Violation(
                "effective.g_modes_MHz",
                f"length {len(gs)} does not match {len(freqs)} mode frequencies",
            ))
        elif any(g < 0 for g in gs):
            out.append(Violation("effective.g_modes_MHz", "must be >= 0"))
        if kaps is not None:
            if isinstance(freqs, list) and len(kaps) != len(freqs):
                out.append(Violation(
                    "effective.mode_kappas_MHz",
                    f"length {len(kaps)} does not match {len(freqs)} mode frequencies",
                ))
            elif any(k < 0 for k in kaps):
                out.append(Violation("effective.mode_kappas_MHz", "must be >= 0"))
    tls = doc.get("tls")
    if tls is not None:
        sec = ("tls", tls)
        f = need(sec, "freq_GHz")
        g = need(sec, "g_tls_MHz")
        if f is not None and f <= 0:
            out.append(Violation("tls.freq_GHz", "must be positive"))
        if g is not None and g < 0:
            out.append(Violation("tls.g_tls_MHz", "must be >= 0"))
    return out


class ModelBundle:
    """A loaded model file, convertible to spec objects in either form."""

    def __init__(self, doc: dict, source: str = "<dict>"):
        violations = validate_model(doc)
        if violations:
            raise InvalidSpecError(
                f"invalid model {source}: " + "; ".join(map(str, violations))
            )
        self.doc = doc
        self.source = source
        self.name = doc.get("name", Path(source).stem)

    @classmethod
    def load(cls, path_or_name) -> "ModelBundle":
        return cls(read_model_json(path_or_name), source=str(path_or_name))

    @property
    def forms(self) -> tuple[str, ...]:
        out = []
        if "tight_binding" in self.doc:
            out.append("tight_binding")
        if "effective" in self.doc:
            out.append("effective")
        return tuple(out)

    def _emitter_common(self):
        e = self.doc["emitter"]
        return dict(
            omega_max=ghz(e["omega_max_GHz"]),
            omega_min=ghz(e["omega_min_GHz"]),
            e_c=mhz(e["e_c_MHz"]),
        )

    def tight_binding(self) -> tuple[LatticeSpec, EmitterSpec]:
        if "tight_binding" not in self.doc:
            raise InvalidSpecError(f"{self.name} has no tight_binding section")
        tb = self.doc["tight_binding"]
        lattice = LatticeSpec(
            n_sites=tb["n_sites"],
            omega_r=ghz(tb["omega_r_GHz"]),
            j_nn=mhz(tb["j_nn_MHz"]),
            j_nnn=mhz(tb.get("j_nnn_MHz", 0.0)),
            kappa_in=mhz(tb.get("kappa_in_MHz", 0.0)),
            kappa_out=mhz(tb.get("kappa_out_MHz", 0.0)),
        )
        e = self.doc["emitter"]
        emitter = EmitterSpec(
            **self._emitter_common(),
            coupling_site=e.get("coupling_site"),
            g_site=mhz(e.get("g_site_MHz", 0.0)),
        )
        return lattice, emitter

    def effective(self) -> tuple[LatticeSpec, EmitterSpec]:
        if "effective" not in self.doc:
            raise InvalidSpecError(f"{self.name} has no effective section")
        eff = self.doc["effective"]
        kaps = eff.get("mode_kappas_MHz")
        lattice = LatticeSpec(
            mode_freqs=tuple(ghz(f) for f in eff["mode_freqs_GHz"]),
            mode_kappas=None if kaps is None else tuple(mhz(k) for k in kaps),
        )
        emitter = EmitterSpec(
            **self._emitter_common(),
            g_modes=tuple(mhz(g) for g in eff["g_modes_MHz"]),
        )
        return lattice, emitter

    def lattice_emitter(self, form: str):
        if form == "tight_binding":
            return self.tight_binding()
        if form == "effective":
            return self.effective()
        raise InvalidSpecError(f"unknown model form '{form}'")

    @property
    def tls(self) -> TlsSpec | None:
        t = self.doc.get("tls")
        if t is None:
            return None
        return TlsSpec(freq=ghz(t["freq_GHz"]), g_tls=mhz(t["g_tls_MHz"]))


def save_model(doc: dict, path):
    violations = validate_model(doc)
    if violations:
        raise InvalidSpecError("refusing to save invalid model: "
                               + "; ".join(map(str, violations)))
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")

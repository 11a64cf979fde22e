"""JSON encodings of matrices, states, channels, instruments and ensembles.

Complex matrices are nested lists whose entries are either real numbers or
``[re, im]`` pairs.  Spaces are lists of ``[name, dim]`` pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ensemble import InputEnsemble, adder_ensemble
from .errors import DimensionMismatch, InvalidConfig, QmacError
from .qcore import (
    DensityOperator,
    InstrumentBranch,
    KrausChannel,
    QuantumInstrument,
    adder_channel,
    adder_instrument,
    density_from_matrix,
    identity_channel,
    identity_instrument,
)

__all__ = [
    "load_json",
    "matrix_from_json",
    "matrix_to_json",
    "state_from_json",
    "state_to_json",
    "channel_from_json",
    "instrument_from_json",
    "ensemble_from_json",
]

MAX_U = 4


def load_json(spec):
    """A dict/list as is, or the parsed content of a JSON file path."""
    if isinstance(spec, (dict, list)):
        return spec
    path = Path(spec)
    if not path.is_file():
        raise InvalidConfig(f"file not found: {spec}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{spec}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _entry(x) -> complex:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise InvalidConfig(f"matrix entry must be a number or [re, im], got {x!r}")


def matrix_from_json(obj) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise InvalidConfig("matrix must be a nonempty list of rows")
    width = {len(r) for r in obj}
    if len(width) != 1:
        raise DimensionMismatch(f"ragged matrix rows of lengths {sorted(width)}")
    m = np.array([[_entry(x) for x in r] for r in obj], dtype=complex)
    return m


def matrix_to_json(m) -> list:
    m = np.asarray(m)
    if np.iscomplexobj(m) and np.any(m.imag != 0):
        return [[[float(z.real), float(z.imag)] for z in row] for row in m]
    return [[float(z) for z in np.real(row)] for row in m]


def _space(obj, where: str):
    if obj is None:
        return None
    if not isinstance(obj, list) or not all(isinstance(p, list) and len(p) == 2 for p in obj):
        raise InvalidConfig(f"{where}: space must be a list of [name, dim] pairs")
    return [(str(a), int(d)) for a, d in obj]


def state_from_json(spec) -> DensityOperator:
    """``{"space": [[name, dim], ...], "matrix": ...}``, a bare matrix, or a path to either."""
    obj = load_json(spec)
    if isinstance(obj, list):
        return density_from_matrix(matrix_from_json(obj))
    unknown = set(obj) - {"space", "matrix"}
    if unknown:
        raise InvalidConfig(f"state: unknown keys {sorted(unknown)}")
    if "matrix" not in obj:
        raise InvalidConfig("state: missing key 'matrix'")
    return density_from_matrix(matrix_from_json(obj["matrix"]), _space(obj.get("space"), "state"))


def state_to_json(rho: DensityOperator) -> dict:
    return {"space": [[s.name, s.dimension] for s in rho.space], "matrix": matrix_to_json(rho.matrix)}


def channel_from_json(spec) -> KrausChannel:
    """``"adder"``, ``{"builtin": "adder"}``, ``{"builtin": "identity", "space": ...}`` or explicit Kraus data."""
    obj = {"builtin": spec} if spec in ("adder", "identity") else load_json(spec)
    if "builtin" in obj:
        if obj["builtin"] == "adder":
            return adder_channel()
        if obj["builtin"] == "identity":
            return identity_channel(_space(obj.get("space"), "channel") or [("B", 4)])
        raise InvalidConfig(f"channel: unknown builtin {obj['builtin']!r}")
    unknown = set(obj) - {"input_space", "output_space", "kraus"}
    if unknown:
        raise InvalidConfig(f"channel: unknown keys {sorted(unknown)}")
    try:
        return KrausChannel(_space(obj["input_space"], "channel"), _space(obj["output_space"], "channel"),
                            [matrix_from_json(k) for k in obj["kraus"]])
    except KeyError as exc:
        raise InvalidConfig(f"channel: missing key {exc.args[0]!r}") from None


def instrument_from_json(spec) -> QuantumInstrument:
    """``"adder"``, ``"adder-lueders"``, ``"identity"`` or explicit branch data."""
    builtins = {"adder": lambda: adder_instrument("classical"),
                "adder-lueders": lambda: adder_instrument("lueders"),
                "identity": identity_instrument}
    obj = {"builtin": spec} if isinstance(spec, str) and spec in builtins else load_json(spec)
    if "builtin" in obj:
        if obj["builtin"] not in builtins:
            raise InvalidConfig(f"instrument: unknown builtin {obj['builtin']!r}")
        return builtins[obj["builtin"]]()
    unknown = set(obj) - {"input_space", "output_space", "branches"}
    if unknown:
        raise InvalidConfig(f"instrument: unknown keys {sorted(unknown)}")
    try:
        branches = [InstrumentBranch(tuple(int(v) for v in b["outcome"]), [matrix_from_json(k) for k in b["kraus"]])
                    for b in obj["branches"]]
        return QuantumInstrument(_space(obj["input_space"], "instrument"),
                                 _space(obj["output_space"], "instrument"), branches)
    except KeyError as exc:
        raise InvalidConfig(f"instrument: missing key {exc.args[0]!r}") from None


def ensemble_from_json(spec) -> InputEnsemble:
    """Either ``{"adder": [a0, a1, b0, b1], "p_u": p, "v1_of_x1": ..., "v2_of_x2": ...}``
    or explicit tables ``p_u``, ``p_x1_u``, ``p_x2_u`` with states ``theta`` and ``phi``
    (lists of state specs indexed by x)."""
    obj = load_json(spec)
    allowed = {"adder", "p_u", "p_x1_u", "p_x2_u", "theta", "phi", "v1_of_x1", "v2_of_x2"}
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidConfig(f"ensemble: unknown keys {sorted(unknown)}")
    v1, v2 = obj.get("v1_of_x1"), obj.get("v2_of_x2")
    p_u = obj.get("p_u")
    if isinstance(p_u, list) and len(p_u) > MAX_U:
        raise InvalidConfig(f"ensemble.p_u: |U| = {len(p_u)} exceeds the cap {MAX_U}")
    try:
        if "adder" in obj:
            a = [float(x) for x in obj["adder"]]
            if len(a) != 4:
                raise InvalidConfig("ensemble.adder needs [alpha0, alpha1, beta0, beta1]")
            p = float(obj.get("p_u", 0.5))
            return adder_ensemble(a[:2], a[2:], [1 - p, p], v1, v2)
        theta = {x: state_from_json(s) for x, s in enumerate(obj["theta"])}
        phi = {x: state_from_json(s) for x, s in enumerate(obj["phi"])}
        return InputEnsemble.from_x_tables(np.asarray(obj["p_u"], float), np.asarray(obj["p_x1_u"], float),
                                           np.asarray(obj["p_x2_u"], float), theta, phi, v1, v2)
    except KeyError as exc:
        raise InvalidConfig(f"ensemble: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, QmacError):
            raise
        raise InvalidConfig(f"ensemble: {exc}") from None

"""Text file formats: device configs, layered models, surveys and results.

A survey file is a CSV table preceded by ``#``-prefixed header lines::

    # emi-survey 1
    # rho: 1.48 2.82 4.49
    # heights: 0.9 1.8
    # freqs: 10000
    # orientations: 0 1
    # units: rho=m heights=m freqs=Hz readings=HS/HP
    # layout: orientation (vertical first), height, spacing, frequency
    position,elevation,re_0,im_0,re_1,im_1,...

Every record holds the m complex readings of one sounding in layout order,
real and imaginary parts in separate columns.  Numbers are written with 17
significant digits so a write/read cycle reproduces every double exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmiError
from .model import DeviceConfig, LayeredEarthModel

SURVEY_MAGIC = "emi-survey"
SURVEY_VERSION = 1
RESULT_VERSION = 1


class ParseError(EmiError, ValueError):
    """Malformed input file; ``lineno`` points at the offending line when known."""

    def __init__(self, message, path=None, lineno=None):
        where = f"{path}:{lineno}: " if path is not None and lineno is not None else (
            f"{path}: " if path is not None else "")
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


def fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class Survey:
    """Soundings sharing one device configuration."""

    device: DeviceConfig
    positions: list
    readings: np.ndarray                       # (n_soundings, m) complex
    elevations: list = field(default_factory=list)

    def __post_init__(self):
        self.readings = np.atleast_2d(np.asarray(self.readings, dtype=complex))
        if self.readings.shape != (len(self.positions), self.device.m):
            raise EmiError(
                f"readings shape {self.readings.shape} does not match "
                f"{len(self.positions)} soundings of {self.device.m} values")
        if not self.elevations:
            self.elevations = [""] * len(self.positions)


# -- device configuration ---------------------------------------------------

def load_device(path) -> DeviceConfig:
    """Device configuration from a JSON object (``rho``, ``heights``, ``freqs``, ``orientations``).

    A ``device`` sub-object is accepted as well, so one file can also carry
    inversion options.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    obj = obj.get("device", obj) if isinstance(obj, dict) else obj
    try:
        return DeviceConfig.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"incomplete device configuration ({exc})", path) from exc


def save_device(device: DeviceConfig, path) -> None:
    Path(path).write_text(json.dumps(device.to_dict(), indent=2, sort_keys=True) + "\n")


# -- layered models -----------------------------------------------------------

def load_model(path) -> LayeredEarthModel:
    """Model CSV with columns ``depth`` (layer top, m) and ``sigma`` (S/m)."""
    path = Path(path)
    depths, sigma = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh)
        header = None
        for lineno, row in enumerate(rows, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip().lower() for h in row]
                if "depth" not in header or "sigma" not in header:
                    raise ParseError("model file needs 'depth' and 'sigma' columns", path, lineno)
                continue
            try:
                depths.append(float(row[header.index("depth")]))
                sigma.append(float(row[header.index("sigma")]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad model row ({exc})", path, lineno) from exc
    if not depths:
        raise ParseError("model file has no layers", path)
    return LayeredEarthModel(depths, sigma)


def save_model(model: LayeredEarthModel, path) -> None:
    lines = ["depth,sigma"] + [f"{fmt(z)},{fmt(s)}" for z, s in zip(model.depths, model.sigma)]
    Path(path).write_text("\n".join(lines) + "\n")


# -- surveys -------------------------------------------------------------------

def survey_text(survey: Survey) -> str:
    d = survey.device
    out = io.StringIO()
    out.write(f"# {SURVEY_MAGIC} {SURVEY_VERSION}\n")
    out.write("# rho: " + " ".join(fmt(v) for v in d.rho) + "\n")
    out.write("# heights: " + " ".join(fmt(v) for v in d.heights) + "\n")
    out.write("# freqs: " + " ".join(fmt(v) for v in d.freqs) + "\n")
    out.write("# orientations: " + " ".join(str(o) for o in d.orientations) + "\n")
    out.write("# units: rho=m heights=m freqs=Hz readings=HS/HP\n")
    out.write("# layout: orientation (vertical first), height, spacing, frequency\n")
    cols = ["position", "elevation"]
    for i in range(d.m):
        cols += [f"re_{i}", f"im_{i}"]
    out.write(",".join(cols) + "\n")
    for pos, elev, row in zip(survey.positions, survey.elevations, survey.readings):
        vals = [str(pos), str(elev)]
        for v in row:
            vals += [fmt(v.real), fmt(v.imag)]
        out.write(",".join(vals) + "\n")
    return out.getvalue()


def save_survey(survey: Survey, path) -> None:
    Path(path).write_text(survey_text(survey))


def _floats(text, path, lineno, name):
    try:
        return [float(t) for t in text.split()]
    except ValueError as exc:
        raise ParseError(f"bad number in header field {name!r}", path, lineno) from exc


def load_survey(path) -> Survey:
    path = Path(path)
    lines = path.read_text().splitlines()
    header = {}
    body_start = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            text = line[1:].strip()
            if lineno == 1:
                parts = text.split()
                if len(parts) != 2 or parts[0] != SURVEY_MAGIC:
                    raise ParseError(f"missing '{SURVEY_MAGIC}' header", path, lineno)
                if parts[1] != str(SURVEY_VERSION):
                    raise ParseError(f"unsupported survey version {parts[1]}", path, lineno)
                header["version"] = parts[1]
                continue
            if ":" in text:
                key, _, value = text.partition(":")
                header[key.strip()] = (value.strip(), lineno)
            continue
        body_start = lineno
        break
    if "version" not in header:
        raise ParseError(f"missing '{SURVEY_MAGIC}' header", path, 1)
    for key in ("rho", "heights", "freqs", "orientations"):
        if key not in header:
            raise ParseError(f"header field {key!r} missing", path)

    def numbers(key):
        value, lineno = header[key]
        return _floats(value, path, lineno, key)

    try:
        device = DeviceConfig(numbers("rho"), numbers("heights"), numbers("freqs"),
                              tuple(int(v) for v in numbers("orientations")))
    except ParseError:
        raise
    except EmiError as exc:
        raise ParseError(f"invalid device header ({exc})", path) from exc
    if body_start is None:
        raise ParseError("survey has no column header", path)
    cols = lines[body_start - 1].split(",")
    if cols[:2] != ["position", "elevation"] or len(cols) != 2 + 2 * device.m:
        raise ParseError(f"expected position, elevation and {2 * device.m} value columns",
                         path, body_start)
    positions, elevations, rows = [], [], []
    for lineno in range(body_start + 1, len(lines) + 1):
        line = lines[lineno - 1]
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ParseError(f"expected {len(cols)} fields, found {len(parts)}", path, lineno)
        try:
            vals = np.array([float(p) for p in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"bad reading ({exc})", path, lineno) from exc
        if not np.all(np.isfinite(vals)):
            raise ParseError("non-finite reading", path, lineno)
        positions.append(parts[0])
        elevations.append(parts[1])
        rows.append(vals[0::2] + 1j * vals[1::2])
    if not rows:
        raise ParseError("survey has no soundings", path)
    return Survey(device, positions, np.array(rows), elevations)


# -- results -------------------------------------------------------------------

def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def result_record(position, res) -> dict:
    """JSON-ready record of one :class:`~emiinv.inversion.InversionResult`."""
    def floats(a):
        return [float(v) for v in np.asarray(a, dtype=float)]

    return {
        "position": position,
        "depths": floats(res.depths),
        "sigma": floats(res.sigma),
        "sensitivity": floats(res.sensitivity),
        "doi": res.doi,
        "misfit": float(res.misfit),
        "converged": bool(res.converged),
        "reason": res.reason,
        "start": float(res.start),
        "active_rows": int(res.active_rows),
        "ells": [int(it.ell) for it in res.iterations],
        "alphas": [float(it.alpha) for it in res.iterations],
        "rnorm_history": floats(res.rnorm_history),
        "error": res.error,
    }


def save_result(path, records, meta: dict) -> None:
    """Result file: JSON object with run metadata and one record per sounding.

    Keys are sorted and floats use Python's round-trip repr, so two runs with
    identical inputs differ only in ``meta.created``.
    """
    doc = {"format": "emi-result", "version": RESULT_VERSION, "meta": meta, "soundings": records}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n")


def load_result(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    if not isinstance(doc, dict) or doc.get("format") != "emi-result":
        raise ParseError("not an emi result file", path)
    if doc.get("version") != RESULT_VERSION:
        raise ParseError(f"unsupported result version {doc.get('version')}", path)
    return doc


def write_csv(path, header, rows) -> None:
    """Plain CSV with 17-significant-digit floats."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return fmt(v)
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])

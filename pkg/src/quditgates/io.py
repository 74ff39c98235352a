"""Readers and writers for the artifacts a run leaves on disk.

CSV files carry a header row and are UTF-8; JSON is written with sorted
keys so identical results give identical bytes.
"""
import csv
import json
from pathlib import Path

import numpy as np

from ._validation import DomainError
from .grape import ControlWaveform
from .liegroup import LayeredCircuit

WAVEFORM_HEADER = ("step_index", "phase_over_pi")
SPECTRUM_HEADER = ("g_index", "k", "q", "coefficient")
SWEEP_HEADER = ("total_time_over_pi", "total_time_over_pi_per_k",
                "infidelity_closed", "infidelity_open", "status")
PAIR_SPECTRUM_HEADER = ("f_index", "i", "j", "energy", "decay")
RATIO_HEADER = ("level", "m", "rabi_ratio")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps_json(data):
    return json.dumps(_to_jsonable(data), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, data):
    Path(path).write_text(dumps_json(data), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        found = tuple(next(reader, ()))
        if found != tuple(header):
            raise DomainError(f"{path}: expected header {header}, found {found}")
        return [row for row in reader if row]


def write_waveform(path, waveform):
    """Phases as ``(step_index, phase_over_pi)`` rows; ``dt`` goes in the report."""
    rows = [(i, repr(float(c))) for i, c in enumerate(waveform.phases)]
    _write_rows(path, WAVEFORM_HEADER, rows)


def read_waveform(path, dt=None, total_time=None):
    """Inverse of :func:`write_waveform`; give either ``dt`` or ``total_time``."""
    rows = _read_rows(path, WAVEFORM_HEADER)
    idx = [int(r[0]) for r in rows]
    if idx != list(range(len(rows))):
        raise DomainError(f"{path}: step indices are not 0..{len(rows) - 1}")
    phases = np.array([float(r[1]) for r in rows])
    if (dt is None) == (total_time is None):
        raise DomainError("give exactly one of dt and total_time")
    if dt is None:
        return ControlWaveform.from_total_time(phases, total_time)
    return ControlWaveform(phases, dt)


def write_circuit(path, circuit):
    write_json(path, circuit.to_dict())


def read_circuit(path):
    return LayeredCircuit.from_dict(read_json(path))


def write_spectrum(path, spectrum):
    rows = [(g, k, q, repr(float(c))) for g, k, q, c in spectrum.items()]
    _write_rows(path, SPECTRUM_HEADER, rows)


def read_spectrum(path):
    """List of ``(g, k, q, coefficient)`` tuples."""
    return [(int(g), int(k), int(q), float(c))
            for g, k, q, c in _read_rows(path, SPECTRUM_HEADER)]


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def write_sweep(path, rows):
    """``rows`` are dicts with the keys of :data:`SWEEP_HEADER`."""
    out = [(_fmt(r["total_time_over_pi"]), _fmt(r["total_time_over_pi_per_k"]),
            _fmt(r["infidelity_closed"]), _fmt(r["infidelity_open"]), r["status"])
           for r in rows]
    _write_rows(path, SWEEP_HEADER, out)


def read_sweep(path):
    def num(s):
        return float(s) if s != "" else float("nan")
    return [{"total_time_over_pi": num(a), "total_time_over_pi_per_k": num(b),
             "infidelity_closed": num(c), "infidelity_open": num(d), "status": e}
            for a, b, c, d, e in _read_rows(path, SWEEP_HEADER)]


def write_pair_spectrum(path, model):
    """Entangling energies and decay rates of every dressed pair, indexed ``f = d i + j``."""
    d = model.d_phys
    rows = [(i * d + j, i, j, repr(float(model.energies[i, j])), repr(float(model.decay[i, j])))
            for i in range(d) for j in range(d)]
    _write_rows(path, PAIR_SPECTRUM_HEADER, rows)


def read_pair_spectrum(path):
    return [(int(f), int(i), int(j), float(e), float(g))
            for f, i, j, e, g in _read_rows(path, PAIR_SPECTRUM_HEADER)]


def write_ratios(path, F_a, ratios):
    m = F_a - np.arange(len(ratios))
    rows = [(i, repr(float(mi)), repr(float(r))) for i, (mi, r) in enumerate(zip(m, ratios))]
    _write_rows(path, RATIO_HEADER, rows)


def read_ratios(path):
    return [(int(i), float(m), float(r)) for i, m, r in _read_rows(path, RATIO_HEADER)]

"""Deterministic file output helpers for the command-line tools.

CSV floats are written with ``repr`` so the files round-trip bit-exactly;
JSON is emitted with sorted keys; grayscale images go out as binary PGM
with a float32 sidecar holding the unquantized values.
"""

import csv
import json

import numpy as np


def format_float(x):
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


def write_csv(path, header, rows):
    """Write rows of numbers/strings as CSV with repr-exact floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                format_float(v) if isinstance(v, (float, np.floating)) else v
                for v in row
            ])


def write_json(path, obj):
    """Write JSON with sorted keys and a trailing newline."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pgm(path, pixels, f32_sidecar=True):
    """Write a 2-D array as a binary 8-bit PGM, scaled to the full range.

    A ``.f32`` sidecar with the raw float32 values (row-major) is written
    next to it unless disabled; the PGM quantization is for viewing only.
    """
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {pixels.shape}")
    lo, hi = float(pixels.min()), float(pixels.max())
    span = hi - lo if hi > lo else 1.0
    quant = np.round((pixels - lo) / span * 255.0).astype(np.uint8)
    h, w = quant.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())
    if f32_sidecar:
        pixels.astype(np.float32).tofile(str(path) + ".f32")


def parse_config(path):
    """Parse a key=value config file; '#' starts a comment, blanks ignored.

    Values are left as strings; callers convert as needed.
    """
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def echo_config(path, values):
    """Write resolved settings as a key=value file with sorted keys."""
    with open(path, "w") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]}\n")

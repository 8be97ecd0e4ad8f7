"""Plain-text and PGM instance files.

Correspondences: one line per match, "x1 y1 x2 y2" with an optional
fifth 0/1 inlier flag, '#' comments allowed.  Images: binary 8-bit PGM
(P5, maxval 255), scaled from [0, 1] floats.  Manifests: "key = value"
lines recording the generator seed and ground truth.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def write_correspondences(path, x1: np.ndarray, x2: np.ndarray,
                          inlier_mask: np.ndarray | None = None) -> None:
    cols = [x1, x2]
    fmt = ["%.17g"] * 4
    if inlier_mask is not None:
        cols.append(inlier_mask.astype(int)[:, None])
        fmt.append("%d")
    np.savetxt(path, np.column_stack(cols), fmt=" ".join(fmt))


def read_correspondences(path):
    """Returns (x1, x2, inlier_mask or None)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] not in (4, 5):
        raise ValueError(
            f"{path}: expected 4 or 5 columns, found {data.shape[1]}")
    mask = data[:, 4].astype(bool) if data.shape[1] == 5 else None
    return data[:, 0:2].copy(), data[:, 2:4].copy(), mask


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM from a [0, 1] float image (values clipped)."""
    pixels = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    """Float [0, 1] image from a binary 8-bit PGM."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    data = raw[m.end():]
    if len(data) < w * h:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(data[: w * h], dtype=np.uint8)
    return pixels.reshape(h, w).astype(float) / 255.0


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, value in entries.items():
            if isinstance(value, (np.ndarray, list, tuple)):
                value = ",".join(repr(float(v)) for v in np.ravel(value))
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: bad manifest line {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def manifest_floats(entries: dict[str, str], key: str) -> np.ndarray:
    return np.array([float(v) for v in entries[key].split(",")])


def write_observations(path, observations: np.ndarray) -> None:
    """Bundle observations: one "camera point u v" line per measurement."""
    C, P = observations.shape[:2]
    with open(path, "w") as fh:
        for i in range(C):
            for j in range(P):
                u, v = observations[i, j]
                fh.write(f"{i} {j} {float(u)!r} {float(v)!r}\n")


def read_observations(path) -> np.ndarray:
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns, found {data.shape[1]}")
    cams = data[:, 0].astype(int)
    pnts = data[:, 1].astype(int)
    C, P = cams.max() + 1, pnts.max() + 1
    obs = np.full((C, P, 2), np.nan)
    obs[cams, pnts] = data[:, 2:4]
    if np.isnan(obs).any():
        raise ValueError(f"{path}: missing camera/point measurements")
    return obs

"""File formats: scene JSON, Fisher/covariance sidecars, views index, PPM/PGM, CSV."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .fisher import CovDiag, FisherDiag
from .renderer import CameraPose
from .scene import GaussianSplat, SceneParams

SPLAT_FIELDS = ("mu", "log_scale", "phi", "opacity_logit", "color_logit", "depth_rank", "object_id")
SCENE_FIELDS = ("splats", "background")
CAMERA_FIELDS = ("center", "psi", "zoom", "width", "height")


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# JSON with round-trip-exact reals
# --------------------------------------------------------------------------


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise FormatError(f"cannot serialize non-finite value {x}")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every real written to 17 significant digits."""
    return _encode(obj, 2, 0) + "\n"


def _load_json(path) -> object:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _check_keys(obj, expected, where: str, optional=()):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    missing = [k for k in expected if k not in obj]
    if missing:
        raise FormatError(f"{where}: missing field {missing[0]!r}")
    extra = [k for k in obj if k not in expected and k not in optional]
    if extra:
        raise FormatError(f"{where}: unknown field {extra[0]!r}")


# --------------------------------------------------------------------------
# scenes and cameras
# --------------------------------------------------------------------------


def scene_to_dict(scene: SceneParams) -> dict:
    return {
        "splats": [
            {
                "mu": list(s.mu),
                "log_scale": list(s.log_scale),
                "phi": s.phi,
                "opacity_logit": s.opacity_logit,
                "color_logit": list(s.color_logit),
                "depth_rank": s.depth_rank,
                "object_id": s.object_id,
            }
            for s in scene.splats
        ],
        "background": list(scene.background),
    }


def scene_from_dict(obj, where: str = "scene") -> SceneParams:
    _check_keys(obj, SCENE_FIELDS, where)
    if not isinstance(obj["splats"], list):
        raise FormatError(f"{where}: field 'splats' must be a list")
    splats = []
    for i, s in enumerate(obj["splats"]):
        _check_keys(s, SPLAT_FIELDS, f"{where}.splats[{i}]")
        try:
            splats.append(GaussianSplat(**s))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}.splats[{i}]: {exc}") from exc
    try:
        return SceneParams(tuple(splats), tuple(obj["background"]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


def save_scene(scene: SceneParams, path) -> None:
    Path(path).write_text(dumps(scene_to_dict(scene)), encoding="utf-8")


def load_scene(path) -> SceneParams:
    return scene_from_dict(_load_json(path), str(path))


def camera_to_dict(cam: CameraPose) -> dict:
    return {"center": list(cam.center), "psi": cam.psi, "zoom": cam.zoom, "width": cam.width, "height": cam.height}


def camera_from_dict(obj, where: str = "camera") -> CameraPose:
    _check_keys(obj, CAMERA_FIELDS, where)
    try:
        return CameraPose(**obj)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


# --------------------------------------------------------------------------
# Fisher / covariance sidecars
# --------------------------------------------------------------------------


def fisher_to_dict(fisher: FisherDiag) -> dict:
    return {
        "kind": "fisher_diag",
        "values": fisher.values,
        "step_count": fisher.step_count,
        "total_steps": fisher.total_steps,
    }


def cov_to_dict(cov: CovDiag) -> dict:
    return {"kind": "cov_diag", "values": cov.values, "lambda": cov.lam}


def save_sidecar(obj, path) -> None:
    if isinstance(obj, FisherDiag):
        data = fisher_to_dict(obj)
    elif isinstance(obj, CovDiag):
        data = cov_to_dict(obj)
    else:
        raise FormatError(f"cannot write sidecar for {type(obj).__name__}")
    Path(path).write_text(dumps(data), encoding="utf-8")


def load_sidecar(path):
    obj = _load_json(path)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise FormatError(f"{path}: missing field 'kind'")
    if obj["kind"] == "fisher_diag":
        _check_keys(obj, ("kind", "values", "step_count", "total_steps"), str(path))
        return FisherDiag(np.array(obj["values"], dtype=float), int(obj["step_count"]), int(obj["total_steps"]))
    if obj["kind"] == "cov_diag":
        _check_keys(obj, ("kind", "values", "lambda"), str(path))
        return CovDiag(np.array(obj["values"], dtype=float), float(obj["lambda"]))
    raise FormatError(f"{path}: unknown sidecar kind {obj['kind']!r}")


# --------------------------------------------------------------------------
# views index: cameras plus image file names, relative to the index file
# --------------------------------------------------------------------------


def save_views(entries, path) -> None:
    """``entries`` is a list of (view_id, CameraPose, image_filename)."""
    data = {"views": [{"id": int(i), "camera": camera_to_dict(c), "image": str(f)} for i, c, f in entries]}
    Path(path).write_text(dumps(data), encoding="utf-8")


def load_views(path, with_images: bool = True):
    """Returns a list of (view_id, CameraPose, image or None)."""
    path = Path(path)
    obj = _load_json(path)
    _check_keys(obj, ("views",), str(path))
    out = []
    for i, v in enumerate(obj["views"]):
        where = f"{path}.views[{i}]"
        _check_keys(v, ("id", "camera", "image"), where)
        cam = camera_from_dict(v["camera"], where + ".camera")
        img = None
        if with_images:
            img = read_ppm(path.parent / v["image"])
            if img.shape != (cam.height, cam.width, 3):
                raise FormatError(f"{where}: image size does not match camera")
        out.append((int(v["id"]), cam, img))
    return out


# --------------------------------------------------------------------------
# PPM / PGM
# --------------------------------------------------------------------------


def quantize8(image) -> np.ndarray:
    """[0, 1] -> 0..255 rounding half up."""
    x = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, image) -> None:
    img = quantize8(image)
    h, w, c = img.shape
    if c != 3:
        raise FormatError("PPM needs an (H, W, 3) image")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def _read_netpbm(path, magic: bytes):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    if tokens[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} header, got {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    return w, h, maxval, data[pos + 1 :]


def read_ppm(path) -> np.ndarray:
    w, h, maxval, body = _read_netpbm(path, b"P6")
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    arr = np.frombuffer(body, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
    return arr.astype(float) / 255.0


def write_pgm16(path, values) -> tuple[float, float]:
    """Write a scalar map as 16-bit PGM plus a ``.txt`` sidecar with the value range.

    Returns (vmin, vmax). A constant map is written as all zeros.
    """
    v = np.asarray(values, dtype=float)
    vmin, vmax = float(v.min()), float(v.max())
    span = vmax - vmin
    scaled = np.zeros_like(v) if span == 0 else (v - vmin) / span
    q = np.floor(scaled * 65535.0 + 0.5).astype(">u2")
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n65535\n" % (w, h))
        f.write(q.tobytes())
    Path(str(path) + ".txt").write_text(f"min {vmin:.17g}\nmax {vmax:.17g}\n", encoding="utf-8")
    return vmin, vmax


def read_pgm16(path) -> np.ndarray:
    """Read a 16-bit PGM and rescale it to the range recorded in its sidecar."""
    w, h, maxval, body = _read_netpbm(path, b"P5")
    if maxval != 65535:
        raise FormatError(f"{path}: only maxval 65535 is supported")
    q = np.frombuffer(body, dtype=">u2", count=w * h).reshape(h, w).astype(float)
    rng = {}
    for line in Path(str(path) + ".txt").read_text(encoding="utf-8").splitlines():
        key, val = line.split()
        rng[key] = float(val)
    return rng["min"] + q / 65535.0 * (rng["max"] - rng["min"])


# --------------------------------------------------------------------------
# CSV tables
# --------------------------------------------------------------------------

SCORE_HEADER = ("view_id", "object_id", "score", "pixel_count")
TRACE_HEADER = ("step", "view_id", "loss", "grad_norm", "alpha")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_scores(path, scores) -> None:
    write_csv(path, SCORE_HEADER, [(s.view_id, s.object_id, s.score, s.pixel_count) for s in scores])


def write_trace(path, trace) -> None:
    write_csv(path, TRACE_HEADER, [(r.step, r.view_id, r.loss, r.grad_norm, r.alpha) for r in trace.records])

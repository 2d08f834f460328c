"""File formats: PNG images, raw thermal field dumps, mask images, manifests.

Thermal fields travel as raw "TFD1" dumps (magic, then height/width/channels
as little-endian uint32, then row-major channel-interleaved float32) so the
pipeline keeps full precision; PNGs are written alongside for viewing.
Region masks serialize as an 8-bit label image (0 = unassigned, 1..K = region
id) plus a 1-bit boundary image.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError
from .losses import RegionMasks

TFD_MAGIC = b"TFD1"


def save_tfd(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise InvalidInputError(f"expected (H, W) or (H, W, C) array, got {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(TFD_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tfd(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != TFD_MAGIC:
            raise InvalidInputError(f"{path}: bad magic {magic!r}, expected {TFD_MAGIC!r}")
        h, w, c = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(h * w * c * 4), dtype="<f4")
    if data.size != h * w * c:
        raise InvalidInputError(f"{path}: truncated field dump")
    return data.reshape(h, w, c).astype(np.float64)


def save_png8(path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    q = np.round(arr * 255.0).astype(np.uint8)
    mode = "RGB" if q.ndim == 3 else "L"
    Image.fromarray(q, mode=mode).save(path)


def load_png8(path) -> np.ndarray:
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return img / 255.0


def save_png16(path, image: np.ndarray) -> None:
    """16-bit grayscale; a 3-channel input is reduced to its first channel."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    q = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(q).save(path)


def load_png16(path) -> np.ndarray:
    img = np.asarray(Image.open(path), dtype=np.float64)
    return img / 65535.0


def save_masks(masks: RegionMasks, label_path, boundary_path) -> None:
    if masks.labels.max(initial=0) > 255:
        raise InvalidInputError("more than 255 regions cannot serialize to an 8-bit label image")
    Image.fromarray(masks.labels.astype(np.uint8), mode="L").save(label_path)
    Image.fromarray(masks.boundary.astype(bool)).save(boundary_path)


def load_masks(label_path, boundary_path, source_id: str = "") -> RegionMasks:
    labels = np.asarray(Image.open(label_path), dtype=np.int32)
    boundary = np.asarray(Image.open(boundary_path), dtype=bool)
    return RegionMasks(labels, boundary, source_id or str(label_path))


@dataclass
class PairRecord:
    pair_id: str
    optical_path: str
    thermal_hr_path: str
    thermal_lr_path: str
    mask_path: str
    boundary_path: str
    meta: dict


class Manifest:
    """Dataset manifest: scale, degradation provenance, one record per pair."""

    def __init__(self, scale: int, degradation: dict, records: list[PairRecord],
                 root: Path):
        self.scale = scale
        self.degradation = degradation
        self.records = records
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.records)

    def load_pair(self, index: int):
        from .synth import ScenePair  # local import to avoid a cycle

        rec = self.records[index]
        root = self.root
        pair = ScenePair(
            optical=load_png8(root / rec.optical_path),
            thermal_hr=load_tfd(root / rec.thermal_hr_path),
            thermal_lr=load_tfd(root / rec.thermal_lr_path),
            masks=load_masks(root / rec.mask_path, root / rec.boundary_path,
                             source_id=rec.pair_id),
            scale=self.scale,
            meta=dict(rec.meta),
        )
        _check_registration(pair, rec.pair_id, self.scale)
        return pair

    def pairs(self):
        return [self.load_pair(i) for i in range(len(self.records))]


def _check_registration(pair, pair_id: str, scale: int) -> None:
    hh, wh = pair.thermal_hr.shape[:2]
    hl, wl = pair.thermal_lr.shape[:2]
    if (hh, wh) != (hl * scale, wl * scale):
        raise InvalidInputError(
            f"{pair_id}: HR size {(hh, wh)} is not {scale}x the LR size {(hl, wl)}"
        )
    if pair.optical.shape[:2] != (hh, wh):
        raise InvalidInputError(f"{pair_id}: optical and thermal HR sizes differ")
    if pair.masks.labels.shape != (hh, wh):
        raise InvalidInputError(f"{pair_id}: mask size does not match the HR image")


def _jsonify(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_manifest(path, scale: int, degradation: dict, records: list[PairRecord]) -> None:
    doc = {
        "scale": scale,
        "degradation": degradation,
        "pairs": [
            {
                "pair_id": r.pair_id,
                "optical_path": r.optical_path,
                "thermal_hr_path": r.thermal_hr_path,
                "thermal_lr_path": r.thermal_lr_path,
                "mask_path": r.mask_path,
                "boundary_path": r.boundary_path,
                "meta": r.meta,
            }
            for r in records
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonify))


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"manifest not found: {path}")
    doc = json.loads(path.read_text())
    records = [
        PairRecord(
            pair_id=p["pair_id"],
            optical_path=p["optical_path"],
            thermal_hr_path=p["thermal_hr_path"],
            thermal_lr_path=p["thermal_lr_path"],
            mask_path=p["mask_path"],
            boundary_path=p["boundary_path"],
            meta=p.get("meta", {}),
        )
        for p in doc["pairs"]
    ]
    root = path.parent
    for rec in records:
        for f in (rec.optical_path, rec.thermal_hr_path, rec.thermal_lr_path,
                  rec.mask_path, rec.boundary_path):
            if not (root / f).exists():
                raise InvalidInputError(f"manifest entry {rec.pair_id}: missing file {f}")
    return Manifest(int(doc["scale"]), doc.get("degradation", {}), records, root)


def save_scene(pair, out_dir, pair_id: str) -> PairRecord:
    """Write one scene pair (PNGs, field dumps, masks) and return its record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {
        "optical_path": f"{pair_id}_optical.png",
        "thermal_hr_path": f"{pair_id}_thermal_hr.tfd",
        "thermal_lr_path": f"{pair_id}_thermal_lr.tfd",
        "mask_path": f"{pair_id}_labels.png",
        "boundary_path": f"{pair_id}_boundary.png",
    }
    save_png8(out / names["optical_path"], pair.optical)
    save_tfd(out / names["thermal_hr_path"], pair.thermal_hr)
    save_tfd(out / names["thermal_lr_path"], pair.thermal_lr)
    save_masks(pair.masks, out / names["mask_path"], out / names["boundary_path"])
    save_png16(out / f"{pair_id}_thermal_hr.png", pair.thermal_hr)
    save_png16(out / f"{pair_id}_thermal_lr.png", pair.thermal_lr)
    return PairRecord(pair_id=pair_id, meta=dict(pair.meta), **names)

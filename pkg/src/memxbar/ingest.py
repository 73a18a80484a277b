"""Weight files, IDX image/label files and synthetic fixtures."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activation import Activation, by_name, tanh
from .circuit import split_weight
from .device import DeviceModel, RealizabilityError
from .oracle import AnnSpec

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed weight or IDX file."""


def load_weights(path, activation: Activation | None = None) -> AnnSpec:
    """Read ``{"widths": [n0, ..., nL], "layers": [[[...]], ...]}``.

    An optional ``"activation"`` name in the file is used when ``activation``
    is not given; the default is tanh.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return weights_from_dict(data, activation, str(path))


def weights_from_dict(data: dict, activation: Activation | None = None, source: str = "weights") -> AnnSpec:
    if not isinstance(data, dict) or "widths" not in data or "layers" not in data:
        raise FormatError(f"{source}: expected keys 'widths' and 'layers'")
    widths = [int(n) for n in data["widths"]]
    layers = data["layers"]
    if len(layers) != len(widths) - 1 or not layers:
        raise FormatError(f"{source}: {len(layers)} layers for widths {widths}")
    mats = []
    for l, rows in enumerate(layers, start=1):
        m = np.array(rows, dtype=float)
        if m.ndim != 2 or m.shape != (widths[l], widths[l - 1]) or m.size == 0:
            raise FormatError(f"{source}: layer {l} has shape {m.shape}, expected ({widths[l]}, {widths[l - 1]})")
        mats.append(m)
    if activation is None:
        activation = by_name(data["activation"]) if "activation" in data else tanh()
    return AnnSpec(mats, activation)


def save_weights(spec: AnnSpec, path) -> None:
    data = {"widths": list(spec.widths), "activation": spec.activation.name,
            "layers": [w.tolist() for w in spec.weights]}
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Raw uint8 array from an IDX file (optionally gzipped)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(raw) < hdr:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:hdr])
    count = int(np.prod(dims))
    if len(raw) - hdr < count:
        raise FormatError(f"{path}: truncated data ({len(raw) - hdr} of {count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=hdr).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | a.ndim
    header = struct.pack(f">I{a.ndim}I", magic, *a.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + a.tobytes())


@dataclass
class Dataset:
    images: np.ndarray  # (N, 784) in [0, 1]
    labels: np.ndarray  # (N,) digits
    scaling: str = "pixel/255"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.images = np.asarray(self.images, dtype=float)
        if self.images.ndim != 2:
            self.images = self.images.reshape(self.images.shape[0], -1)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("images and labels differ in length")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    imgs = read_idx(images_path, IMAGE_MAGIC)
    labs = read_idx(labels_path, LABEL_MAGIC)
    if imgs.shape[0] != labs.shape[0]:
        raise FormatError(f"{imgs.shape[0]} images but {labs.shape[0]} labels")
    n = imgs.shape[0] if limit is None else min(int(limit), imgs.shape[0])
    if n < 0:
        raise ValueError("limit must be non-negative")
    images = imgs[:n].reshape(n, int(np.prod(imgs.shape[1:]))).astype(float) / 255.0
    return Dataset(images, labs[:n].astype(np.int64),
                   meta={"images": str(images_path), "labels": str(labels_path)})


def save_idx(images_path, labels_path, images_u8: np.ndarray, labels: np.ndarray) -> None:
    write_idx(images_path, images_u8)
    write_idx(labels_path, labels)


def synthetic_idx(images_path, labels_path, n: int = 64, seed: int = 0, side: int = 28) -> None:
    """Deterministic stand-in for MNIST: sparse blobs on a dark background."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    imgs = np.zeros((n, side, side), dtype=np.uint8)
    for i in range(n):
        canvas = np.zeros((side, side))
        for _ in range(rng.integers(2, 5)):
            cy, cx = rng.uniform(6, side - 6, 2)
            r = rng.uniform(2, 5)
            canvas += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        canvas[canvas < 0.2] = 0
        imgs[i] = np.round(255 * np.clip(canvas, 0, 1)).astype(np.uint8)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    save_idx(images_path, labels_path, imgs, labels)


@dataclass
class RealizabilityReport:
    mode: str
    n_entries: int
    violators: list = field(default_factory=list)  # (layer, row, col, value), 1-based

    @property
    def ok(self) -> bool:
        return not self.violators

    def to_dict(self) -> dict:
        return {"mode": self.mode, "n_entries": self.n_entries, "ok": self.ok,
                "violators": [list(v) for v in self.violators]}


def weights_realizability(spec: AnnSpec, device: DeviceModel, mode: str = "single") -> RealizabilityReport:
    if mode not in ("single", "differential"):
        raise ValueError("mode must be 'single' or 'differential'")
    rep = RealizabilityReport(mode, int(sum(w.size for w in spec.weights)))
    for l, w in enumerate(spec.weights, start=1):
        for (k, j), v in np.ndenumerate(w):
            if mode == "single":
                good = device.W_min < v < device.W_max
            else:
                try:
                    split_weight(v, device)
                    good = True
                except RealizabilityError:
                    good = False
            if not good:
                rep.violators.append((l, k + 1, j + 1, float(v)))
    return rep


def synthetic_weights(widths, device: DeviceModel, mode: str = "single", seed: int = 0,
                      activation: Activation | None = None, margin: float = 0.05) -> AnnSpec:
    """Seeded random weights inside the realizable range.

    Single mode draws memductances uniformly from the interior of
    ``(W_min, W_max)``.  Differential mode draws signed weights with magnitude
    at most ``2 / sqrt(fan_in)`` (capped by the pair range) so deep fan-in
    layers stay out of saturation.
    """
    rng = np.random.default_rng(seed)
    mats = []
    span = device.W_max - device.W_min
    for l in range(1, len(widths)):
        shape = (widths[l], widths[l - 1])
        if mode == "single":
            lo, hi = device.W_min + margin * span, device.W_max - margin * span
            mats.append(rng.uniform(lo, hi, shape))
        else:
            a = min((1 - margin) * span, 2.0 / np.sqrt(widths[l - 1]))
            mats.append(rng.uniform(-a, a, shape))
    return AnnSpec(mats, activation or tanh())

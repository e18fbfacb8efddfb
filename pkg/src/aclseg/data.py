"""Deterministic synthetic 5-class thoracic-style segmentation benchmark.

Every generated image contains the same five structures (two large lungs,
a medium heart blob, a small high-contrast cord disc, and a thin dark
oesophagus sliver) drawn on a noisy body ellipse. Class
incrementality comes from which mask is labeled during training, not from
what is in the image, so the per-class train subsets are disjoint image
sets from one distribution.

File format per sample: a 16-byte little-endian header
(magic "ACLS", version u16, H u16, W u16, channels u16, dtype tag u16,
reserved u16) followed by the row-major payload. Images are f32 in [0,1],
masks u8 in {0,1}. The manifest is a JSON document with per-file sha256
checksums so loads can detect corruption.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, CorruptionError, UnsupportedVersionError
from .tensor import make_rng

FORMAT_VERSION = 1
_MAGIC = b"ACLS"
_HEADER = struct.Struct("<4sHHHHHH")  # magic, version, H, W, channels, dtype tag, reserved
_DTYPE_BY_TAG = {1: np.dtype("<f4"), 2: np.dtype("u1")}
_TAG_BY_KIND = {"f": 1, "u": 2}

DESK_IMAGE_SIZE = (128, 128)
DESK_TRAIN_PER_CLASS = 40
DESK_VAL = 16
DESK_TEST = 48


@dataclass(frozen=True)
class TaskSpec:
    """Geometry and intensity recipe for one structure class."""

    class_id: int
    name: str
    center: tuple[float, float]  # (cx, cy) as fractions of (W, H)
    axes: tuple[float, float]  # half-axes as fractions of (W, H)
    intensity: float
    rarity: float  # nominal positive-pixel fraction (pi * ax * ay)


# Rarity ordering is a hard invariant: oesophagus < cord < heart < lungs.
TASK_SPECS: dict[int, TaskSpec] = {
    1: TaskSpec(1, "cord", (0.50, 0.80), (0.040, 0.040), 0.85, 0.0050),
    2: TaskSpec(2, "right_lung", (0.36, 0.44), (0.130, 0.210), 0.15, 0.0858),
    3: TaskSpec(3, "left_lung", (0.66, 0.44), (0.120, 0.200), 0.15, 0.0754),
    4: TaskSpec(4, "heart", (0.53, 0.60), (0.105, 0.095), 0.68, 0.0313),
    5: TaskSpec(5, "oesophagus", (0.53, 0.72), (0.016, 0.052), 0.30, 0.0026),
}

_BODY = TaskSpec(0, "body", (0.50, 0.55), (0.42, 0.38), 0.45, 0.0)
# paint order: later structures overwrite earlier ones where they overlap
_DRAW_ORDER = (2, 3, 4, 5, 1)

ORDER_A = (1, 2, 3, 4, 5)
ORDER_B = (5, 4, 3, 2, 1)
ORDER_C = (3, 2, 1, 4, 5)
SCHEDULE_PRESETS = {"A": ORDER_A, "B": ORDER_B, "C": ORDER_C}


def _validate_rarity_ordering():
    r = {spec.name: spec.rarity for spec in TASK_SPECS.values()}
    if not (r["oesophagus"] < r["cord"] < r["heart"] < min(r["right_lung"], r["left_lung"])):
        raise ContractError(f"rarity ordering violated: {r}")


_validate_rarity_ordering()


# -- binary sample blobs --------------------------------------------------


def write_blob(path, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    if arr.ndim == 2:
        channels, (h, w) = 1, arr.shape
    elif arr.ndim == 3:
        channels, h, w = arr.shape
    else:
        raise ContractError(f"write_blob: expected 2-d or 3-d array, got shape {arr.shape}")
    tag = _TAG_BY_KIND.get(arr.dtype.kind)
    if tag is None:
        raise ContractError(f"write_blob: unsupported dtype {arr.dtype}")
    payload = arr.astype(_DTYPE_BY_TAG[tag], copy=False).tobytes()
    header = _HEADER.pack(_MAGIC, FORMAT_VERSION, h, w, channels, tag, 0)
    Path(path).write_bytes(header + payload)


def read_blob(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as exc:
        raise CorruptionError(f"missing sample file: {path}") from exc
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"truncated header in {path}: {len(raw)} bytes")
    magic, version, h, w, channels, tag, _ = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CorruptionError(f"bad magic in {path}: {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version}, supported {FORMAT_VERSION}")
    dtype = _DTYPE_BY_TAG.get(tag)
    if dtype is None:
        raise CorruptionError(f"unknown dtype tag {tag} in {path}")
    expected = h * w * channels * dtype.itemsize
    if len(raw) - _HEADER.size != expected:
        raise CorruptionError(f"truncated payload in {path}: {len(raw) - _HEADER.size} of {expected} bytes")
    arr = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size).reshape(channels, h, w)
    return arr.copy()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- synthesis ------------------------------------------------------------


def _ellipse_mask(h, w, cx, cy, ax, ay, theta) -> np.ndarray:
    ys = (np.arange(h, dtype=np.float64) + 0.5) / h
    xs = (np.arange(w, dtype=np.float64) + 0.5) / w
    gx, gy = np.meshgrid(xs, ys)
    dx, dy = gx - cx, gy - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def _jitter_spec(spec: TaskSpec, rng) -> tuple[float, float, float, float, float, float]:
    cx = spec.center[0] + rng.uniform(-0.02, 0.02)
    cy = spec.center[1] + rng.uniform(-0.02, 0.02)
    ax = spec.axes[0] * rng.uniform(0.9, 1.1)
    ay = spec.axes[1] * rng.uniform(0.9, 1.1)
    theta = rng.uniform(-0.12, 0.12)
    intensity = spec.intensity + rng.uniform(-0.02, 0.02)
    return cx, cy, ax, ay, theta, intensity


def _smooth_noise(h, w, rng, amplitude: float) -> np.ndarray:
    """Low-frequency noise: a coarse gaussian grid upsampled bilinearly."""
    ch, cw = h // 8 + 2, w // 8 + 2
    coarse = rng.normal(0.0, 1.0, size=(ch, cw))
    ys = np.linspace(0, ch - 1.001, h)
    xs = np.linspace(0, cw - 1.001, w)
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[np.ix_(y0, x0)]
    b = coarse[np.ix_(y0, x0 + 1)]
    c = coarse[np.ix_(y0 + 1, x0)]
    d = coarse[np.ix_(y0 + 1, x0 + 1)]
    return amplitude * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy)


def synthesize_sample(seed: int, index: int, size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Render one image and its 5 class masks.

    Returns (image (H,W) f32 in [0,1], masks (5,H,W) u8). Fully determined
    by (seed, index, size).
    """
    h, w = size
    rng = make_rng(seed, "sample", index)

    image = np.full((h, w), 0.08, dtype=np.float64)
    image += _smooth_noise(h, w, rng, 0.02)

    bx = _BODY.center[0] + rng.uniform(-0.03, 0.03)
    by = _BODY.center[1] + rng.uniform(-0.03, 0.03)
    bax = _BODY.axes[0] * rng.uniform(0.92, 1.08)
    bay = _BODY.axes[1] * rng.uniform(0.92, 1.08)
    btheta = rng.uniform(-0.06, 0.06)
    body = _ellipse_mask(h, w, bx, by, bax, bay, btheta)
    image[body] = _BODY.intensity + rng.uniform(-0.03, 0.03)

    masks = np.zeros((5, h, w), dtype=np.uint8)
    regions: dict[int, np.ndarray] = {}
    for cid in _DRAW_ORDER:
        cx, cy, ax, ay, theta, intensity = _jitter_spec(TASK_SPECS[cid], rng)
        region = _ellipse_mask(h, w, cx, cy, ax, ay, theta)
        regions[cid] = region
        image[region] = intensity
    for cid, region in regions.items():
        masks[cid - 1] = region.astype(np.uint8)

    image += rng.normal(0.0, 0.010, size=(h, w))
    return np.clip(image, 0.0, 1.0).astype(np.float32), masks


# -- manifest + generation ------------------------------------------------


@dataclass
class DatasetManifest:
    version: int
    seed: int
    image_size: tuple[int, int]
    n_train_per_class: int
    n_val: int
    n_test: int
    train_subsets: dict[int, list[int]]
    val: list[int]
    test: list[int]
    checksums: dict[str, str]

    def sample_indices(self) -> list[int]:
        out: list[int] = []
        for cid in sorted(self.train_subsets):
            out.extend(self.train_subsets[cid])
        return out + list(self.val) + list(self.test)

    def to_json(self, path):
        doc = {
            "version": self.version,
            "seed": self.seed,
            "image_size": list(self.image_size),
            "n_train_per_class": self.n_train_per_class,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "class_names": {str(c): s.name for c, s in TASK_SPECS.items()},
            "train_subsets": {str(c): ids for c, ids in sorted(self.train_subsets.items())},
            "val": list(self.val),
            "test": list(self.test),
            "checksums": dict(sorted(self.checksums.items())),
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptionError(f"cannot read manifest {path}: {exc}") from exc
        version = doc.get("version")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: manifest version {version}, supported {FORMAT_VERSION}")
        try:
            return cls(
                version=version,
                seed=doc["seed"],
                image_size=tuple(doc["image_size"]),
                n_train_per_class=doc["n_train_per_class"],
                n_val=doc["n_val"],
                n_test=doc["n_test"],
                train_subsets={int(c): list(ids) for c, ids in doc["train_subsets"].items()},
                val=list(doc["val"]),
                test=list(doc["test"]),
                checksums=dict(doc["checksums"]),
            )
        except KeyError as exc:
            raise CorruptionError(f"manifest {path} is missing field {exc}") from exc


def _sample_paths(index: int) -> list[str]:
    stem = f"samples/{index:05d}"
    return [f"{stem}.img"] + [f"{stem}.msk{c}" for c in range(1, 6)]


def generate_benchmark(
    seed: int,
    n_train_per_class: int,
    n_val: int,
    n_test: int,
    size: tuple[int, int],
    out_dir,
    force: bool = False,
) -> DatasetManifest:
    """Write the full benchmark to out_dir and return its manifest.

    Byte-identical output for identical arguments; refuses to overwrite an
    existing dataset unless force is set.
    """
    h, w = size
    if h % 16 != 0 or w % 16 != 0:
        raise ConfigError(f"image size {size} must be divisible by 16")
    if min(n_train_per_class, n_val, n_test) < 1:
        raise ConfigError("all sample counts must be >= 1")
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists() and not force:
        raise ConfigError(f"{manifest_path} already exists; pass force to regenerate")
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)

    n_total = 5 * n_train_per_class + n_val + n_test
    checksums: dict[str, str] = {}
    for index in range(n_total):
        image, masks = synthesize_sample(seed, index, (h, w))
        paths = _sample_paths(index)
        write_blob(out_dir / paths[0], image)
        for c in range(5):
            write_blob(out_dir / paths[c + 1], masks[c])
        for rel in paths:
            checksums[rel] = _sha256(out_dir / rel)

    train_subsets = {
        cid: list(range((cid - 1) * n_train_per_class, cid * n_train_per_class)) for cid in range(1, 6)
    }
    base = 5 * n_train_per_class
    manifest = DatasetManifest(
        version=FORMAT_VERSION,
        seed=seed,
        image_size=(h, w),
        n_train_per_class=n_train_per_class,
        n_val=n_val,
        n_test=n_test,
        train_subsets=train_subsets,
        val=list(range(base, base + n_val)),
        test=list(range(base + n_val, base + n_val + n_test)),
        checksums=checksums,
    )
    manifest.to_json(manifest_path)
    return manifest


# -- loading + batching ---------------------------------------------------


class Dataset:
    """Eagerly loaded, read-only view of a generated benchmark."""

    def __init__(self, manifest: DatasetManifest, images: np.ndarray, masks: np.ndarray, root: Path):
        self.manifest = manifest
        self.images = images  # (N, 1, H, W) f32
        self.masks = masks  # (N, 5, H, W) u8
        self.root = root
        self._index_of = {idx: row for row, idx in enumerate(manifest.sample_indices())}

    @property
    def image_size(self) -> tuple[int, int]:
        return self.manifest.image_size

    def split_indices(self, kind: str, class_id: int | None = None) -> list[int]:
        if kind == "train":
            if class_id not in self.manifest.train_subsets:
                raise ConfigError(f"no train subset for class {class_id}")
            return self.manifest.train_subsets[class_id]
        if kind == "val":
            return self.manifest.val
        if kind == "test":
            return self.manifest.test
        raise ConfigError(f"unknown split kind {kind!r}")

    def fetch(self, indices, class_id: int) -> tuple[np.ndarray, np.ndarray]:
        rows = [self._index_of[i] for i in indices]
        images = self.images[rows]
        masks = self.masks[rows, class_id - 1 : class_id].astype(np.float32)
        return images, masks

    def fetch_joint(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """All five masks at once, for joint (ideal) training."""
        rows = [self._index_of[i] for i in indices]
        return self.images[rows], self.masks[rows].astype(np.float32)

    def batches(self, kind: str, class_id: int, batch_size: int, shuffle_seed: int | None = None, with_indices: bool = False):
        """Yield (images N×1×H×W f32, masks N×1×H×W f32, class_id) covering
        the split exactly once; the final short batch is emitted.  With
        with_indices=True a fourth element carries the sample indices."""
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        indices = list(self.split_indices(kind, class_id))
        if shuffle_seed is not None:
            order = make_rng(shuffle_seed, "shuffle", kind, class_id).permutation(len(indices))
            indices = [indices[i] for i in order]
        for start in range(0, len(indices), batch_size):
            chunk = indices[start : start + batch_size]
            images, masks = self.fetch(chunk, class_id)
            if with_indices:
                yield images, masks, class_id, chunk
            else:
                yield images, masks, class_id


def load_dataset(manifest_path, verify: bool = True) -> Dataset:
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.from_json(manifest_path)
    root = manifest_path.parent
    h, w = manifest.image_size

    order = manifest.sample_indices()
    images = np.empty((len(order), 1, h, w), dtype=np.float32)
    masks = np.empty((len(order), 5, h, w), dtype=np.uint8)
    for row, index in enumerate(order):
        paths = _sample_paths(index)
        for rel in paths:
            full = root / rel
            if verify:
                if rel not in manifest.checksums:
                    raise CorruptionError(f"manifest has no checksum for {rel}")
                if not full.exists():
                    raise CorruptionError(f"missing sample file: {full}")
                if _sha256(full) != manifest.checksums[rel]:
                    raise CorruptionError(f"checksum mismatch for {full}")
        img = read_blob(root / paths[0])
        if img.shape != (1, h, w):
            raise CorruptionError(f"{paths[0]}: shape {img.shape} does not match manifest {manifest.image_size}")
        images[row] = img
        for c in range(5):
            msk = read_blob(root / paths[c + 1])
            if msk.shape != (1, h, w):
                raise CorruptionError(f"{paths[c + 1]}: shape {msk.shape} mismatch")
            masks[row, c] = msk[0]
    return Dataset(manifest, images, masks, root)

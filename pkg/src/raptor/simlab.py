"""Controlled digit-insertion benchmarks over host volumes.

The location task hides the same digit at one of two lateral positions;
the size task hides a digit of a given size at a random position or not
at all.  Hosts are seeded smooth phantoms or volumes read from disk.
Generation is deterministic in the SimSpec: per-sample seeds are derived
from (spec.seed, sample index).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import IdxParseError, OutOfBounds, UnknownDigit
from .volumes import Volume, load_volume, save_volume

TASK_LOCATION = "location"
TASK_SIZE = "size"

_GLYPH_ROWS = {
    0: ("..####..", ".##..##.", "##....##", "##....##",
        "##....##", "##....##", ".##..##.", "..####.."),
    1: ("...##...", "..###...", ".####...", "...##...",
        "...##...", "...##...", "...##...", ".######."),
    2: (".#####..", "##...##.", ".....##.", "....##..",
        "...##...", "..##....", ".##.....", "#######."),
    3: (".#####..", "##...##.", ".....##.", "..####..",
        ".....##.", ".....##.", "##...##.", ".#####.."),
    4: ("....###.", "...####.", "..##.##.", ".##..##.",
        "########", ".....##.", ".....##.", ".....##."),
    5: ("#######.", "##......", "##......", "######..",
        ".....##.", ".....##.", "##...##.", ".#####.."),
    6: ("..####..", ".##.....", "##......", "######..",
        "##...##.", "##...##.", ".##..##.", "..####.."),
    7: ("########", ".....##.", "....##..", "...##...",
        "..##....", "..##....", "..##....", "..##...."),
    8: (".#####..", "##...##.", "##...##.", ".#####..",
        "##...##.", "##...##.", "##...##.", ".#####.."),
    9: (".#####..", "##...##.", "##...##.", ".######.",
        ".....##.", ".....##.", "....##..", ".####..."),
}

GLYPHS = {
    digit: np.array([[c == "#" for c in row] for row in rows], dtype=np.float32)
    for digit, rows in _GLYPH_ROWS.items()
}


@dataclass(frozen=True)
class SimSpec:
    task: str
    resolution_px: int
    digit: int | None = None              # None = vary per sample
    digit_source: str = "glyph"           # "glyph" or "idx"
    idx_images: str | None = None
    idx_labels: str | None = None
    seed: int = 0
    n_samples: int = 160
    host_source: str = "phantom"          # "phantom" or a directory of volumes
    host_extent: int = 128
    digit_px: int = 16                    # digit size in the location task
    intensity: float = 1.0
    host_family_weight: float = 0.9       # phantom hosts: pull toward shared layout
    host_amp_range: tuple = (0.2, 0.6)    # phantom hosts: blob brightness range
    host_blobs: int = 5
    host_texture: float = 0.0             # per-sample voxel jitter amplitude

    def __post_init__(self):
        if self.task not in (TASK_LOCATION, TASK_SIZE):
            raise ValueError(f"unknown task {self.task!r}")
        if self.n_samples % 2 != 0:
            raise ValueError("n_samples must be even for balanced classes")
        if 2 * self.resolution_px > self.host_extent:
            raise ValueError(
                f"resolution {self.resolution_px}px exceeds half the host extent"
            )


@dataclass(frozen=True)
class InsertionRecord:
    digit: int
    px: int
    center: tuple          # in-plane (row, col) of the bitmap center
    axial_center: int      # slice index of the slab center
    thickness: int
    bitmap: np.ndarray


@dataclass
class SimDataset:
    spec: SimSpec
    volumes: list
    labels: np.ndarray
    records: list          # InsertionRecord or None per sample


def load_idx_images(path):
    """Images from an idx3-ubyte container, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise IdxParseError(f"{path}: header truncated")
    magic = int.from_bytes(data[:4], "big")
    if magic != 0x00000803:
        raise IdxParseError(f"{path}: magic 0x{magic:08x}, expected 0x00000803")
    n, h, w = (int.from_bytes(data[o : o + 4], "big") for o in (4, 8, 12))
    if len(data) < 16 + n * h * w:
        raise IdxParseError(f"{path}: payload truncated")
    arr = np.frombuffer(data, dtype=np.uint8, count=n * h * w, offset=16)
    return arr.reshape(n, h, w).astype(np.float32) / 255.0


def load_idx_labels(path):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise IdxParseError(f"{path}: header truncated")
    magic = int.from_bytes(data[:4], "big")
    if magic != 0x00000801:
        raise IdxParseError(f"{path}: magic 0x{magic:08x}, expected 0x00000801")
    n = int.from_bytes(data[4:8], "big")
    if len(data) < 8 + n:
        raise IdxParseError(f"{path}: payload truncated")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=8).copy()


def scale_nearest(img, out_size):
    """Nearest-neighbor rescale; block scaling round-trips exactly."""
    src = img.shape[0]
    idx = (np.arange(out_size) * src) // out_size
    return img[np.ix_(idx, idx)]


def scale_bilinear(img, out_size):
    """Align-corners bilinear rescale of a square image."""
    img = np.asarray(img, dtype=np.float64)
    src = img.shape[0]
    scale = (src - 1) / (out_size - 1) if out_size > 1 and src > 1 else 0.0
    pos = np.arange(out_size) * scale
    lo = np.clip(np.floor(pos).astype(int), 0, max(src - 2, 0))
    hi = np.minimum(lo + 1, src - 1)
    f = pos - lo
    top = img[np.ix_(lo, lo)] * (1 - f)[None, :] + img[np.ix_(lo, hi)] * f[None, :]
    bot = img[np.ix_(hi, lo)] * (1 - f)[None, :] + img[np.ix_(hi, hi)] * f[None, :]
    return (top * (1 - f)[:, None] + bot * f[:, None]).astype(np.float32)


def render_digit(digit, px, source="glyph", seed=0, idx_images=None, idx_labels=None):
    """px×px bitmap in [0, 1] for one digit class."""
    if digit not in GLYPHS:
        raise UnknownDigit(f"digit {digit!r} outside 0-9")
    if px < 8:
        raise ValueError("digit bitmaps need at least 8px")
    if source == "glyph":
        return scale_nearest(GLYPHS[digit], px).astype(np.float32)
    if source == "idx":
        images = load_idx_images(idx_images)
        labels = load_idx_labels(idx_labels)
        if len(images) != len(labels):
            raise IdxParseError("image and label counts differ")
        pool = np.nonzero(labels == digit)[0]
        if pool.size == 0:
            raise UnknownDigit(f"no samples of digit {digit} in {idx_images}")
        pick = pool[int(rng.words(seed, 1)[0] % pool.size)]
        return scale_bilinear(images[pick], px)
    raise ValueError(f"unknown digit source {source!r}")


def insert_digit(volume, bitmap, center, axial_center, intensity=1.0):
    """Max-composite the bitmap into a copy of the volume.

    The bitmap spans max(1, px // 4) consecutive slices along axis 0,
    centered on `axial_center`; `center` is the in-plane (row, col) of
    the bitmap center on each of those slices.
    """
    px = bitmap.shape[0]
    thickness = max(1, px // 4)
    a0 = axial_center - thickness // 2
    r0 = center[0] - px // 2
    c0 = center[1] - px // 2
    dx, dy, dz = volume.dims
    if a0 < 0 or a0 + thickness > dx or r0 < 0 or r0 + px > dy or c0 < 0 or c0 + px > dz:
        raise OutOfBounds(
            f"footprint [{a0}:{a0 + thickness}, {r0}:{r0 + px}, {c0}:{c0 + px}] "
            f"outside dims {volume.dims}"
        )
    voxels = volume.voxels.copy()
    stamp = (bitmap * np.float32(intensity))[None, :, :]
    region = voxels[a0 : a0 + thickness, r0 : r0 + px, c0 : c0 + px]
    np.maximum(region, stamp, out=region)
    record = InsertionRecord(
        digit=-1,
        px=px,
        center=(int(center[0]), int(center[1])),
        axial_center=int(axial_center),
        thickness=thickness,
        bitmap=np.asarray(bitmap, dtype=np.float32).copy(),
    )
    return Volume(id=volume.id, voxels=voxels), record


def synthetic_phantom(seed, extent, n_blobs=5, texture=0.0, volume_id=None,
                      family_seed=None, family_weight=0.75, amp_range=(0.3, 0.9)):
    """Smooth host volume: a seeded sum of separable 3D Gaussian bumps.

    With `family_seed` set, blob parameters are pulled toward a layout
    shared by every member of the family, imitating volumes drawn from
    one dataset.  `texture` adds deterministic per-voxel jitter of that
    amplitude, which makes the volume resist byte-level compression like
    scanner noise does.
    """
    params = rng.uniform(rng.derive_seed(seed, 41), n_blobs * 7)
    if family_seed is not None:
        shared = rng.uniform(rng.derive_seed(family_seed, 42), n_blobs * 7)
        params = family_weight * shared + (1.0 - family_weight) * params
    coords = np.arange(extent, dtype=np.float64)
    vol = np.zeros((extent, extent, extent), dtype=np.float64)
    amp_lo, amp_hi = amp_range
    for i in range(n_blobs):
        cx, cy, cz, sx, sy, sz, amp = params[7 * i : 7 * i + 7]
        centers = extent * (0.2 + 0.6 * np.array([cx, cy, cz]))
        scales = extent * (0.08 + 0.17 * np.array([sx, sy, sz]))
        gx = np.exp(-0.5 * ((coords - centers[0]) / scales[0]) ** 2)
        gy = np.exp(-0.5 * ((coords - centers[1]) / scales[1]) ** 2)
        gz = np.exp(-0.5 * ((coords - centers[2]) / scales[2]) ** 2)
        vol += (amp_lo + (amp_hi - amp_lo) * amp) * (
            gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
        )
    if texture > 0.0:
        jitter = rng.uniform(rng.derive_seed(seed, 43), extent ** 3) - 0.5
        vol += texture * jitter.reshape(extent, extent, extent)
    np.clip(vol, 0.0, 1.0, out=vol)
    vid = volume_id if volume_id is not None else f"phantom-{seed:016x}"
    return Volume(id=vid, voxels=vol.astype(np.float32))


def _host(spec, index, host_paths):
    if spec.host_source == "phantom":
        # one family per dataset: hosts share a layout, digits stand out
        return synthetic_phantom(
            rng.derive_seed(spec.seed, 2, index),
            spec.host_extent,
            volume_id=f"sim-{spec.task}-{spec.resolution_px}px-{index:04d}",
            family_seed=spec.seed,
            family_weight=spec.host_family_weight,
            amp_range=spec.host_amp_range,
            n_blobs=spec.host_blobs,
            texture=spec.host_texture,
        )
    path = host_paths[index % len(host_paths)]
    vol = load_volume(path, "rvol")
    return Volume(
        id=f"sim-{spec.task}-{spec.resolution_px}px-{index:04d}", voxels=vol.voxels
    )


def _host_paths(spec):
    if spec.host_source == "phantom":
        return None
    paths = sorted(Path(spec.host_source).glob("*.rvol"))
    if not paths:
        raise FileNotFoundError(f"no .rvol hosts under {spec.host_source}")
    return paths


def _sample_digit(spec, index):
    if spec.digit is not None:
        return spec.digit
    return int(rng.words(rng.derive_seed(spec.seed, 3, index), 1)[0] % 10)


def _render_for_sample(spec, index, px):
    digit = _sample_digit(spec, index)
    bitmap = render_digit(
        digit,
        px,
        source=spec.digit_source,
        seed=rng.derive_seed(spec.seed, 5, index),
        idx_images=spec.idx_images,
        idx_labels=spec.idx_labels,
    )
    return digit, bitmap


def make_location_task(spec):
    """Binary task: the digit sits at position A (class 0) or B (class 1).

    The two centers differ only along the first in-plane axis, separated
    by resolution_px; the digit itself is digit_px wide.
    """
    if spec.task != TASK_LOCATION:
        raise ValueError("spec.task must be 'location'")
    extent = spec.host_extent
    mid = extent // 2
    half_sep = spec.resolution_px // 2
    center_a = (mid - half_sep, mid)
    center_b = (mid + spec.resolution_px - half_sep, mid)
    host_paths = _host_paths(spec)
    volumes, labels, records = [], [], []
    for i in range(spec.n_samples):
        label = i % 2
        host = _host(spec, i, host_paths)
        digit, bitmap = _render_for_sample(spec, i, spec.digit_px)
        center = center_b if label else center_a
        vol, record = insert_digit(host, bitmap, center, mid, spec.intensity)
        record = InsertionRecord(
            digit=digit,
            px=record.px,
            center=record.center,
            axial_center=record.axial_center,
            thickness=record.thickness,
            bitmap=record.bitmap,
        )
        volumes.append(vol)
        labels.append(label)
        records.append(record)
    return SimDataset(
        spec=spec, volumes=volumes, labels=np.array(labels, dtype=np.int64),
        records=records,
    )


def make_size_task(spec):
    """Binary task: a digit of resolution_px is present (1) or absent (0)."""
    if spec.task != TASK_SIZE:
        raise ValueError("spec.task must be 'size'")
    extent = spec.host_extent
    px = spec.resolution_px
    thickness = max(1, px // 4)
    host_paths = _host_paths(spec)
    volumes, labels, records = [], [], []
    for i in range(spec.n_samples):
        label = i % 2
        host = _host(spec, i, host_paths)
        if label == 0:
            volumes.append(host)
            labels.append(0)
            records.append(None)
            continue
        digit, bitmap = _render_for_sample(spec, i, px)
        lo_plane = px // 2
        lo_axial = thickness // 2
        pos = rng.uniform(rng.derive_seed(spec.seed, 7, i), 3)
        row = lo_plane + int(pos[0] * (extent - px))
        col = lo_plane + int(pos[1] * (extent - px))
        axial = lo_axial + int(pos[2] * (extent - thickness))
        vol, record = insert_digit(host, bitmap, (row, col), axial, spec.intensity)
        record = InsertionRecord(
            digit=digit,
            px=record.px,
            center=record.center,
            axial_center=record.axial_center,
            thickness=record.thickness,
            bitmap=record.bitmap,
        )
        volumes.append(vol)
        labels.append(1)
        records.append(record)
    return SimDataset(
        spec=spec, volumes=volumes, labels=np.array(labels, dtype=np.int64),
        records=records,
    )


def make_task(spec):
    if spec.task == TASK_LOCATION:
        return make_location_task(spec)
    return make_size_task(spec)


def reconstruct_insertion(record, dims):
    """Voxel block implied by a record: (slices, rows, cols) slab of maxima."""
    thickness = record.thickness
    a0 = record.axial_center - thickness // 2
    r0 = record.center[0] - record.px // 2
    c0 = record.center[1] - record.px // 2
    return (slice(a0, a0 + thickness), slice(r0, r0 + record.px),
            slice(c0, c0 + record.px)), record.bitmap


def save_dataset(dataset, out_dir, compress=False):
    """Write volumes as RVOL plus a labels CSV; returns the labels path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for vol, label in zip(dataset.volumes, dataset.labels):
        path = out / f"{vol.id}.rvol"
        save_volume(vol, path, dtype="f32", compress=compress)
        rows.append((vol.id, int(label)))
    labels_path = out / "labels.csv"
    with labels_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"])
        writer.writerows(rows)
    return labels_path

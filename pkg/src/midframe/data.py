"""Frame ingestion, triplet extraction, synthetic-motion data and batching.

Frames are lossless 8-bit RGB rasters on disk, decoded to float arrays in
[0, 1] with (3, H, W) layout in memory.  Datasets are directory trees
``triplet_%06d/{a,b,gt}.png`` plus a tab-separated manifest; synthetic
datasets additionally carry the true normalized flow per triplet.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, ShapeError

FLOW_MAGIC = b"NFL1"


def read_frame(path):
    """Decode an 8-bit RGB raster to a (3, H, W) float64 array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_frame(frame, path):
    """Clamp to [0, 1], quantize round-half-up to 8 bits, and encode as PNG."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ShapeError("write_frame expects (3, H, W), got %r" % (frame.shape,))
    q = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def quantize_frame(frame):
    return np.floor(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5) / 255.0


def write_flow(flow, path):
    """Store a (2, H, W) normalized flow field as little-endian float32 pairs
    behind a magic + shape header."""
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ShapeError("write_flow expects (2, H, W), got %r" % (flow.shape,))
    _, h, w = flow.shape
    pairs = flow.transpose(1, 2, 0).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(pairs.tobytes())


def read_flow(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FLOW_MAGIC:
            raise ContractError("%s is not a flow file" % path)
        h, w = struct.unpack("<II", fh.read(8))
        pairs = np.frombuffer(fh.read(h * w * 2 * 4), dtype="<f4").reshape(h, w, 2)
    return np.ascontiguousarray(pairs.transpose(2, 0, 1)).astype(np.float64)


@dataclass
class FrameTriplet:
    """Consecutive frames (first, middle, last), all in [0, 1] and same size."""

    first: np.ndarray
    middle: np.ndarray
    last: np.ndarray
    source: str = ""
    indices: tuple = (0, 1, 2)
    true_flow: np.ndarray | None = None  # normalized (2, H, W), middle -> last

    def __post_init__(self):
        if not (self.first.shape == self.middle.shape == self.last.shape):
            raise ShapeError("triplet frames disagree in shape")

    @property
    def height(self):
        return self.first.shape[1]

    @property
    def width(self):
        return self.first.shape[2]


FRAME_SUFFIXES = (".png", ".bmp", ".tif", ".tiff")


def extract_triplets(frame_dir, dedup_threshold=1e-4, stride=1):
    """Sliding-window triplets over lexicographically ordered frames.

    A triplet is discarded when any two consecutive members are nearly
    identical (mean squared error below the threshold).  Unreadable or
    odd-sized frames produce a warning entry and skip the triplets that
    would contain them.  Returns (triplets, decisions) where decisions
    records one (index, status, detail) row per window for the manifest.
    """
    frame_dir = Path(frame_dir)
    paths = sorted(p for p in frame_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    frames = []
    for p in paths:
        try:
            frames.append((p.name, read_frame(p)))
        except Exception as exc:  # decode failure: warn and drop
            frames.append((p.name, None))
            print("warning: skipping unreadable frame %s (%s)" % (p, exc))

    triplets = []
    decisions = []
    for i in range(0, len(frames) - 2, stride):
        window = frames[i : i + 3]
        names = [n for n, _ in window]
        arrs = [a for _, a in window]
        if any(a is None for a in arrs):
            decisions.append((i, "skipped", "unreadable member"))
            continue
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            decisions.append((i, "skipped", "size mismatch"))
            continue
        mse01 = float(np.mean((arrs[0] - arrs[1]) ** 2))
        mse12 = float(np.mean((arrs[1] - arrs[2]) ** 2))
        if min(mse01, mse12) < dedup_threshold:
            decisions.append((i, "discarded", "near-duplicate mse=%.3e" % min(mse01, mse12)))
            continue
        decisions.append((i, "kept", ",".join(names)))
        triplets.append(
            FrameTriplet(arrs[0], arrs[1], arrs[2], source=str(frame_dir), indices=(i, i + 1, i + 2))
        )
    return triplets, decisions


# -- synthetic motion ---------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    height: int = 64
    width: int = 64
    count: int = 100
    max_shift: float = 4.0  # pixels, per-sequence translation cap
    min_shift: float | None = None  # defaults to max_shift / 4
    textures: tuple = ("noise_blobs", "ramps", "checker")
    seed: int = 0
    fixed_motion: tuple | None = None  # force one (dx, dy) for every sequence

    def __post_init__(self):
        if self.max_shift < 0:
            raise ContractError("max_shift must be non-negative")
        if self.fixed_motion is not None and max(map(abs, self.fixed_motion)) > self.max_shift:
            raise ContractError("fixed motion exceeds max_shift")

    def shift_range(self):
        lo = self.max_shift / 4.0 if self.min_shift is None else self.min_shift
        return min(lo, self.max_shift), self.max_shift


def _render_noise_blobs(rng, h, w):
    canvas = np.zeros((3, h, w))
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    for _ in range(int(rng.integers(12, 25))):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        sigma = rng.uniform(1.2, 3.5)
        color = rng.uniform(0.15, 1.0, size=3)
        blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma * sigma))
        canvas += color[:, None, None] * blob
    canvas += rng.uniform(0.0, 0.15)
    return np.clip(canvas / max(1.0, canvas.max()), 0.0, 1.0)


def _render_ramps(rng, h, w):
    ys, xs = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    canvas = np.zeros((3, h, w))
    for c in range(3):
        a, b = rng.uniform(-1, 1, size=2)
        canvas[c] = 0.5 + 0.5 * (a * (xs - 0.5) + b * (ys - 0.5))
    return np.clip(canvas, 0.0, 1.0)


def _render_checker(rng, h, w):
    cell = int(rng.integers(4, 12))
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    mask = ((ys // cell + xs // cell) % 2).astype(np.float64)
    c0 = rng.uniform(0.0, 0.45, size=3)
    c1 = rng.uniform(0.55, 1.0, size=3)
    return c0[:, None, None] * (1 - mask) + c1[:, None, None] * mask


_TEXTURES = {
    "noise_blobs": _render_noise_blobs,
    "ramps": _render_ramps,
    "checker": _render_checker,
}


def _bilinear_crop(texture, oy, ox, h, w):
    """Sample an (3, Ht, Wt) texture at fractional offset (oy, ox)."""
    y0 = int(np.floor(oy))
    x0 = int(np.floor(ox))
    fy = oy - y0
    fx = ox - x0
    patch = texture[:, y0 : y0 + h + 1, x0 : x0 + w + 1]
    top = (1 - fx) * patch[:, :h, :w] + fx * patch[:, :h, 1 : w + 1]
    bottom = (1 - fx) * patch[:, 1 : h + 1, :w] + fx * patch[:, 1 : h + 1, 1 : w + 1]
    return (1 - fy) * top + fy * bottom


def generate_synthetic(spec):
    """Render translating textures at t = 0, 0.5, 1 with the true flow attached.

    Each sequence draws a texture and a translation whose magnitude is uniform
    in [min_shift, max_shift] with a uniform direction; the middle frame is
    exactly the half-displacement render.  The stored flow is the normalized
    middle-to-last displacement field ((dx/2)/W, (dy/2)/H), constant over the
    frame.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0xDA7A]))
    h, w = spec.height, spec.width
    margin = int(np.ceil(spec.max_shift)) + 2
    lo, hi = spec.shift_range()
    triplets = []
    for idx in range(spec.count):
        kind = spec.textures[int(rng.integers(0, len(spec.textures)))]
        texture = _TEXTURES[kind](rng, h + 2 * margin, w + 2 * margin)
        if spec.fixed_motion is not None:
            dx, dy = map(float, spec.fixed_motion)
        else:
            r = float(rng.uniform(lo, hi))
            angle = float(rng.uniform(0.0, 2.0 * np.pi))
            dx = r * np.cos(angle)
            dy = r * np.sin(angle)
        if max(abs(dx), abs(dy)) / 2.0 + 1 > margin:
            raise ContractError("motion (%g, %g) exceeds canvas margin" % (dx, dy))
        frames = []
        for t in (0.0, 0.5, 1.0):
            # content moving by +d means the sampling window moves by -d
            frames.append(_bilinear_crop(texture, margin - t * dy, margin - t * dx, h, w))
        flow = np.empty((2, h, w))
        flow[0] = (dx / 2.0) / w
        flow[1] = (dy / 2.0) / h
        triplets.append(
            FrameTriplet(
                frames[0],
                frames[1],
                frames[2],
                source="synthetic:%s" % kind,
                indices=(idx, idx, idx),
                true_flow=flow,
            )
        )
    return triplets


# -- on-disk datasets ---------------------------------------------------


def save_dataset(triplets, out_dir):
    """Write the triplet tree, the manifest, and any ground-truth flows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["index\tsource\tframe_indices\tdecision"]
    for i, t in enumerate(triplets):
        tdir = out_dir / ("triplet_%06d" % i)
        tdir.mkdir(exist_ok=True)
        write_frame(t.first, tdir / "a.png")
        write_frame(t.last, tdir / "b.png")
        write_frame(t.middle, tdir / "gt.png")
        if t.true_flow is not None:
            write_flow(t.true_flow, tdir / "flow.bin")
        lines.append("%d\t%s\t%s\tkept" % (i, t.source, ",".join(str(k) for k in t.indices)))
    (out_dir / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return out_dir


def load_dataset(root):
    root = Path(root)
    dirs = sorted(root.glob("triplet_*"))
    if not dirs:
        raise ContractError("no triplets found under %s" % root)
    triplets = []
    for d in dirs:
        flow_path = d / "flow.bin"
        triplets.append(
            FrameTriplet(
                read_frame(d / "a.png"),
                read_frame(d / "gt.png"),
                read_frame(d / "b.png"),
                source=str(d),
                true_flow=read_flow(flow_path) if flow_path.exists() else None,
            )
        )
    return triplets


# -- batching -----------------------------------------------------------


@dataclass
class Batch:
    first: np.ndarray  # (B, 3, h, w)
    middle: np.ndarray
    last: np.ndarray

    def __len__(self):
        return self.first.shape[0]


def make_batches(dataset, crop, batch_size, seed, epoch, dtype=np.float64):
    """Deterministic shuffled crop batches: one random crop per triplet, the
    same window applied to all three frames; order and positions are a pure
    function of (seed, epoch)."""
    if not dataset:
        raise ContractError("empty dataset")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch), 0xBA7C]))
    order = rng.permutation(len(dataset))
    firsts, middles, lasts = [], [], []
    for idx in order:
        t = dataset[int(idx)]
        if crop > t.height or crop > t.width:
            raise ShapeError("crop %d larger than %dx%d frames" % (crop, t.height, t.width))
        top = int(rng.integers(0, t.height - crop + 1))
        left = int(rng.integers(0, t.width - crop + 1))
        sl = (slice(None), slice(top, top + crop), slice(left, left + crop))
        firsts.append(t.first[sl])
        middles.append(t.middle[sl])
        lasts.append(t.last[sl])
    batches = []
    for start in range(0, len(dataset), batch_size):
        stop = min(start + batch_size, len(dataset))
        batches.append(
            Batch(
                np.stack(firsts[start:stop]).astype(dtype),
                np.stack(middles[start:stop]).astype(dtype),
                np.stack(lasts[start:stop]).astype(dtype),
            )
        )
    return batches

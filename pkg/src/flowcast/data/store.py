"""On-disk clip container, split logic, and batch iteration.

A dataset directory holds header.json plus one blob per clip. Two payload
formats are supported: "f32" (raw little-endian float32 tensors, exact) and
"png" (8-bit grayscale frames, quantized). Both readers are always
available; the writer picks one via the header's "format" field.
"""

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
from PIL import Image

HEADER_NAME = "header.json"


def split_sizes(count, ratios):
    """Largest-remainder apportionment of `count` items into len(ratios) bins."""
    ratios = [float(r) for r in ratios]
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    base = [math.floor(r * count) for r in ratios]
    remainder = count - sum(base)
    by_fraction = sorted(range(len(ratios)),
                         key=lambda i: base[i] - ratios[i] * count)
    for i in by_fraction[:remainder]:
        base[i] += 1
    if any(b == 0 for b in base):
        raise ValueError(
            f"split of {count} items with ratios {ratios} leaves an empty part"
        )
    return tuple(base)


def split_indices(count, ratios, seed):
    """Disjoint seed-deterministic index arrays covering range(count)."""
    sizes = split_sizes(count, ratios)
    perm = np.random.default_rng(seed).permutation(count)
    out = []
    start = 0
    for s in sizes:
        out.append(np.sort(perm[start : start + s]))
        start += s
    return tuple(out)


def _clip_name(i):
    return f"clip_{i:05d}"


def write_dataset(out_dir, clips, seed, fmt="f32", extra_meta=None):
    """Persist clips (arrays of shape (T, C, H, W) in [0,1]) to a directory."""
    if fmt not in ("f32", "png"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clips = list(clips)
    if not clips:
        raise ValueError("no clips to write")
    t, c, h, w = clips[0].shape
    header = {
        "format": fmt,
        "count": len(clips),
        "frames": t,
        "channels": c,
        "height": h,
        "width": w,
        "seed": int(seed),
    }
    if extra_meta:
        header["meta"] = extra_meta
    for i, clip in enumerate(clips):
        clip = np.asarray(clip, dtype=np.float32)
        if clip.shape != (t, c, h, w):
            raise ValueError(
                f"clip {i} has shape {clip.shape}, expected {(t, c, h, w)}"
            )
        if fmt == "f32":
            (out_dir / f"{_clip_name(i)}.bin").write_bytes(
                clip.astype("<f4").tobytes()
            )
        else:
            clip_dir = out_dir / _clip_name(i)
            clip_dir.mkdir(exist_ok=True)
            for ft in range(t):
                frame = np.rint(clip[ft] * 255.0).astype(np.uint8)
                if c == 1:
                    img = Image.fromarray(frame[0], mode="L")
                else:
                    img = Image.fromarray(np.moveaxis(frame, 0, -1), mode="RGB")
                img.save(clip_dir / f"frame_{ft:03d}.png")
    (out_dir / HEADER_NAME).write_text(json.dumps(header, indent=1))
    return header


def dataset_fingerprint(dataset_dir):
    """Content hash over the header and every payload file, order-stable."""
    dataset_dir = Path(dataset_dir)
    digest = hashlib.sha256()
    for path in sorted(dataset_dir.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(dataset_dir)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


class ClipStore:
    """Read-only view over a dataset directory; clips load lazily."""

    def __init__(self, dataset_dir):
        self.dir = Path(dataset_dir)
        header_path = self.dir / HEADER_NAME
        if not header_path.is_file():
            raise FileNotFoundError(f"no {HEADER_NAME} in {self.dir}")
        self.header = json.loads(header_path.read_text())
        for key in ("format", "count", "frames", "channels", "height", "width"):
            if key not in self.header:
                raise ValueError(f"dataset header missing {key!r}")

    @property
    def clip_shape(self):
        h = self.header
        return (h["frames"], h["channels"], h["height"], h["width"])

    def __len__(self):
        return self.header["count"]

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(f"clip {i} out of range [0, {len(self)})")
        t, c, h, w = self.clip_shape
        if self.header["format"] == "f32":
            blob = (self.dir / f"{_clip_name(i)}.bin").read_bytes()
            expected = t * c * h * w * 4
            if len(blob) != expected:
                raise ValueError(
                    f"clip {i}: {len(blob)} bytes, expected {expected}"
                )
            return np.frombuffer(blob, dtype="<f4").reshape(t, c, h, w).copy()
        frames = np.zeros((t, c, h, w), dtype=np.float32)
        clip_dir = self.dir / _clip_name(i)
        for ft in range(t):
            img = np.asarray(Image.open(clip_dir / f"frame_{ft:03d}.png"))
            if c == 1:
                frames[ft, 0] = img.astype(np.float32) / 255.0
            else:
                frames[ft] = np.moveaxis(img, -1, 0).astype(np.float32) / 255.0
        return frames


class ClipSubset:
    """Indexable view over a subset of a clip collection."""

    def __init__(self, clips, indices):
        self.clips = clips
        self.indices = np.asarray(indices, dtype=np.int64)

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, i):
        return self.clips[int(self.indices[i])]


class BatchStream:
    """Re-iterable batch source over a subset of clips.

    Each pass yields (B, T, C, H, W) float32 arrays. With shuffle on, the
    order is reshuffled per pass, deterministically from (seed, pass index).
    """

    def __init__(self, clips, indices, batch_size, shuffle=False, seed=0,
                 drop_last=False):
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        self.clips = clips
        self.indices = np.asarray(indices, dtype=np.int64)
        if len(self.indices) == 0:
            raise ValueError("empty split")
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.drop_last = drop_last and len(self.indices) >= batch_size
        self._passes = 0

    def __len__(self):
        n = len(self.indices)
        return n // self.batch_size if self.drop_last else math.ceil(n / self.batch_size)

    def __iter__(self):
        order = self.indices
        if self.shuffle:
            rng = np.random.default_rng((self.seed, self._passes))
            order = order[rng.permutation(len(order))]
        self._passes += 1
        for start in range(0, len(order), self.batch_size):
            chosen = order[start : start + self.batch_size]
            if self.drop_last and len(chosen) < self.batch_size:
                return
            yield np.stack([np.asarray(self.clips[int(i)], dtype=np.float32)
                            for i in chosen])


def iter_batches(clips, indices, batch_size, shuffle=False, seed=0,
                 drop_last=False):
    return BatchStream(clips, indices, batch_size, shuffle, seed, drop_last)


def dataset_split(clips, ratios, seed, batch_size):
    """Split clips into train/val/test batch streams.

    Train shuffles and drops ragged tails; val and test iterate in index
    order and keep every clip.
    """
    train_ix, val_ix, test_ix = split_indices(len(clips), ratios, seed)
    train = BatchStream(clips, train_ix, batch_size, shuffle=True, seed=seed,
                        drop_last=True)
    val = BatchStream(clips, val_ix, batch_size, shuffle=False, seed=seed)
    test = BatchStream(clips, test_ix, batch_size, shuffle=False, seed=seed)
    return train, val, test

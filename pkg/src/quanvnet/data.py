"""MNIST ingestion, 14x14 downsampling, balanced splits and the QENC cache.

QENC layout (little-endian unless noted)::

    b"QENC" | version u8 | encoder u8 | n u8 | num_qubits u8 | storage u8
    | patches_per_image u16 | image_count u32
    per image: label u8, then per patch
        dense  (storage 0): 2**Q x (f64 re, f64 im)
        sparse (storage 1): u32 count, count x (u32 index, f64 re, f64 im)
"""

from __future__ import annotations

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoders import Encoder, encode_states, num_qubits
from .errors import (
    CacheFormatError,
    ConfigurationError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
)
from .prng import SplitMix64
from .quanvolution import FilterSpec, extract_patches
from .simulator import QuantumState

log = logging.getLogger(__name__)

DATA_DIR_ENV = "QUANVNET_DATA_DIR"
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10
DEFAULT_SIZES = (10000, 200, 1000)
DEFAULT_DATASET_SEED = 42
SPLITS = ("train", "val", "test")

QENC_MAGIC = b"QENC"
QENC_VERSION = 1
DENSE, SPARSE = 0, 1
_HEADER = struct.Struct("<4sBBBBBHI")
_SPARSE_ENTRY = np.dtype([("index", "<u4"), ("re", "<f8"), ("im", "<f8")])


# -- IDX -----------------------------------------------------------------------


@dataclass
class RawDataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __len__(self) -> int:
        return len(self.labels)


def _read_bytes(path: str | os.PathLike) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _parse_idx(data: bytes, magic: int, ndims: int, what: str) -> np.ndarray:
    header = 4 + 4 * ndims
    if len(data) < header:
        raise IdxTruncatedError(f"{what} file shorter than its header")
    found = struct.unpack(">I", data[:4])[0]
    if found != magic:
        raise IdxMagicError(f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndims}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise IdxTruncatedError(f"{what} file holds {len(data) - header} of {size} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path: str | os.PathLike, labels_path: str | os.PathLike) -> RawDataset:
    """Parse an IDX image/label pair; gzip-compressed files are accepted."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, "images")
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    return RawDataset(images.copy(), labels.copy())


def find_idx_pair(data_dir: str | os.PathLike | None = None) -> tuple[Path, Path]:
    """Locate an images/labels IDX pair, preferring the MNIST training files."""
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ConfigurationError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    root = Path(data_dir)
    for stem in ("train", "t10k", "mnist5k"):
        for suffix in ("", ".gz"):
            imgs = root / f"{stem}-images-idx3-ubyte{suffix}"
            labs = root / f"{stem}-labels-idx1-ubyte{suffix}"
            if imgs.exists() and labs.exists():
                return imgs, labs
    images = sorted(root.glob("*images-idx3-ubyte*"))
    for imgs in images:
        labs = Path(str(imgs).replace("images-idx3", "labels-idx1"))
        if labs.exists():
            return imgs, labs
    raise ConfigurationError(f"no IDX image/label pair in {root}")


# -- preprocessing -------------------------------------------------------------


def downsample(image: np.ndarray) -> np.ndarray:
    """2x2 mean pooling, rounded half up."""
    img = np.asarray(image, dtype=np.int64)
    h, w = img.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"cannot halve a {h}x{w} image")
    sums = img.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))
    return ((sums + 2) // 4).astype(np.uint8)


@dataclass
class Dataset:
    images: np.ndarray  # (count, 14, 14) uint8
    labels: np.ndarray
    split: str
    source_indices: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.labels)


def make_splits(
    raw: RawDataset,
    sizes: Sequence[int] = DEFAULT_SIZES,
    split_seed: int = DEFAULT_DATASET_SEED,
) -> tuple[Dataset, Dataset, Dataset]:
    """Balanced, disjoint train/val/test subsets, downsampled to 14x14.

    Per class the candidate indices are shuffled with one splitmix64 stream
    and cut into consecutive blocks; each split is then shuffled once so its
    fixed order interleaves the classes.
    """
    if len(sizes) != 3 or any(s < 0 or s % NUM_CLASSES for s in sizes):
        raise ConfigurationError(f"split sizes {sizes} must be three multiples of {NUM_CLASSES}")
    per_class = [s // NUM_CLASSES for s in sizes]
    rng = SplitMix64(split_seed)
    chosen: list[list[int]] = [[], [], []]
    labels = np.asarray(raw.labels)
    for c in range(NUM_CLASSES):
        pool = np.flatnonzero(labels == c).tolist()
        if len(pool) < sum(per_class):
            raise ConfigurationError(
                f"class {c} has {len(pool)} samples, {sum(per_class)} needed"
            )
        rng.shuffle(pool)
        start = 0
        for k, count in enumerate(per_class):
            chosen[k].extend(pool[start : start + count])
            start += count
    out = []
    for name, idx in zip(SPLITS, chosen):
        rng.shuffle(idx)
        idx_arr = np.array(idx, dtype=np.int64)
        imgs = raw.images[idx_arr] if idx else np.zeros((0,) + raw.images.shape[1:], np.uint8)
        if imgs.shape[1:] != (14, 14):
            imgs = np.stack([downsample(im) for im in imgs]) if len(imgs) else np.zeros((0, 14, 14), np.uint8)
        out.append(Dataset(imgs, labels[idx_arr].astype(np.uint8), name, idx_arr))
    return out[0], out[1], out[2]


# -- encoded datasets ----------------------------------------------------------


def storage_for(encoder: Encoder) -> int:
    return DENSE if encoder is Encoder.FRQI else SPARSE


def encode_image(
    image: np.ndarray,
    encoder: Encoder | str,
    spec: FilterSpec,
    *,
    threshold: int = 0,
    minimize: bool = True,
) -> list[QuantumState]:
    return encode_states(
        encoder, extract_patches(image, spec), threshold=threshold, minimize=minimize
    )


class _EncodedSource:
    encoder: Encoder
    n: int
    num_qubits: int
    patches_per_image: int
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def states(self, i: int) -> list[QuantumState]:
        raise NotImplementedError

    def label(self, i: int) -> int:
        return int(self.labels[i])


class EncodedDataset(_EncodedSource):
    """Pre-encoded patch states, in memory or read from a QENC file."""

    def __init__(
        self,
        encoder: Encoder | str,
        n: int,
        labels: Sequence[int],
        patch_states: Sequence[Sequence[QuantumState]],
    ) -> None:
        self.encoder = Encoder.parse(encoder)
        self.n = n
        self.num_qubits = num_qubits(self.encoder, n)
        self.labels = np.asarray(labels, dtype=np.uint8)
        self._states = [list(s) for s in patch_states]
        if len(self._states) != len(self.labels):
            raise CacheFormatError("one state list per label required")
        counts = {len(s) for s in self._states}
        if len(counts) > 1:
            raise CacheFormatError("images have differing patch counts")
        self.patches_per_image = counts.pop() if counts else 0

    @property
    def storage(self) -> int:
        return storage_for(self.encoder)

    def states(self, i: int) -> list[QuantumState]:
        return self._states[i]


class OnTheFlyDataset(_EncodedSource):
    """Encodes each image when asked; same interface as :class:`EncodedDataset`."""

    def __init__(
        self,
        dataset: Dataset,
        encoder: Encoder | str,
        spec: FilterSpec,
        *,
        threshold: int = 0,
        minimize: bool = True,
    ) -> None:
        self.dataset = dataset
        self.encoder = Encoder.parse(encoder)
        self.spec = spec
        self.n = spec.n
        self.num_qubits = num_qubits(self.encoder, spec.n)
        self.labels = np.asarray(dataset.labels, dtype=np.uint8)
        h, w = dataset.images.shape[1:] if len(dataset) else (14, 14)
        rows, cols = spec.grid(h, w)
        self.patches_per_image = rows * cols
        self.threshold = threshold
        self.minimize = minimize

    def states(self, i: int) -> list[QuantumState]:
        return encode_image(
            self.dataset.images[i],
            self.encoder,
            self.spec,
            threshold=self.threshold,
            minimize=self.minimize,
        )


def encode_dataset(
    dataset: Dataset,
    encoder: Encoder | str,
    spec: FilterSpec,
    *,
    threshold: int = 0,
    minimize: bool = True,
) -> EncodedDataset:
    encoder = Encoder.parse(encoder)
    states = [
        encode_image(img, encoder, spec, threshold=threshold, minimize=minimize)
        for img in dataset.images
    ]
    return EncodedDataset(encoder, spec.n, dataset.labels, states)


def write_cache(path: str | os.PathLike, enc: EncodedDataset) -> None:
    if enc.patches_per_image > 0xFFFF:
        raise CacheFormatError("patches_per_image does not fit in u16")
    storage = enc.storage
    dim = 1 << enc.num_qubits
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                QENC_MAGIC, QENC_VERSION, int(enc.encoder), enc.n, enc.num_qubits,
                storage, enc.patches_per_image, len(enc),
            )
        )
        for i in range(len(enc)):
            fh.write(struct.pack("<B", enc.label(i)))
            for state in enc.states(i):
                if storage == DENSE:
                    vec = state.amplitudes
                    buf = np.empty(2 * dim, dtype="<f8")
                    buf[0::2], buf[1::2] = vec.real, vec.imag
                    fh.write(buf.tobytes())
                else:
                    idx, amp = state.nonzero()
                    rec = np.empty(idx.size, dtype=_SPARSE_ENTRY)
                    rec["index"], rec["re"], rec["im"] = idx, amp.real, amp.imag
                    fh.write(struct.pack("<I", idx.size))
                    fh.write(rec.tobytes())


def read_cache(path: str | os.PathLike) -> EncodedDataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, enc_id, n, nq, storage, ppi, count = _HEADER.unpack_from(data, 0)
    if magic != QENC_MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r}")
    if version != QENC_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    try:
        encoder = Encoder(enc_id)
    except ValueError:
        raise CacheFormatError(f"{path}: unknown encoder id {enc_id}") from None
    if nq != num_qubits(encoder, n) or storage not in (DENSE, SPARSE):
        raise CacheFormatError(f"{path}: inconsistent header")
    dim = 1 << nq
    off = _HEADER.size
    labels, images = [], []
    try:
        for _ in range(count):
            labels.append(data[off])
            off += 1
            states = []
            for _ in range(ppi):
                if storage == DENSE:
                    buf = np.frombuffer(data, dtype="<f8", count=2 * dim, offset=off)
                    off += 16 * dim
                    states.append(QuantumState(nq, dense=buf[0::2] + 1j * buf[1::2]))
                else:
                    (k,) = struct.unpack_from("<I", data, off)
                    off += 4
                    rec = np.frombuffer(data, dtype=_SPARSE_ENTRY, count=k, offset=off)
                    off += k * _SPARSE_ENTRY.itemsize
                    states.append(
                        QuantumState(
                            nq,
                            indices=rec["index"].astype(np.int64),
                            amplitudes=rec["re"] + 1j * rec["im"],
                        )
                    )
            images.append(states)
    except (IndexError, ValueError, struct.error) as exc:
        raise CacheFormatError(f"{path}: truncated body ({exc})") from None
    if off != len(data):
        raise CacheFormatError(f"{path}: {len(data) - off} trailing bytes")
    enc = EncodedDataset(encoder, n, labels, images)
    enc.patches_per_image = ppi
    return enc


def preencode(
    dataset: Dataset,
    encoder: Encoder | str,
    spec: FilterSpec,
    out_path: str | os.PathLike,
    *,
    threshold: int = 0,
    minimize: bool = True,
) -> EncodedDataset:
    """Encode every image of ``dataset`` and write the QENC file."""
    enc = encode_dataset(dataset, encoder, spec, threshold=threshold, minimize=minimize)
    write_cache(out_path, enc)
    log.info("wrote %d encoded images to %s", len(enc), out_path)
    return enc

"""Dataset manifests, image/mask loading and stratified fold planning."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage as ndi

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("id", "image_path", "mask_path", "label", "source")
MIN_SIDE = 16
MIN_MASK_AREA = 32

DEV_TRAIN = "DEV_TRAIN"
META_TRAIN = "META_TRAIN"
TEST = "TEST"
ROLES = (DEV_TRAIN, META_TRAIN, TEST)

_EIGHT = np.ones((3, 3), dtype=bool)


class ManifestError(ValueError):
    pass


class SampleError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    id: str
    image_path: Path
    mask_path: Path
    label: int
    source: str


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass(frozen=True, eq=False)
class ImageSample:
    id: str
    image: np.ndarray  # uint8, (H, W)
    mask: np.ndarray   # bool, (H, W)
    label: int
    source: str = ""


# -- manifest ---------------------------------------------------------------

def load_manifest(path) -> Manifest:
    """Parse a manifest CSV; relative paths are resolved against its directory."""
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Manifest()
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ManifestError(f"bad header at line 1: expected {','.join(MANIFEST_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(MANIFEST_HEADER):
                raise ManifestError(f"malformed row at line {lineno}: expected 5 fields, got {len(rec)}")
            sid, img, msk, label, source = (f.strip() for f in rec)
            if not sid:
                raise ManifestError(f"empty id at line {lineno}")
            if label not in ("0", "1"):
                raise ManifestError(f"invalid label at line {lineno}: {label!r}")
            if sid in seen:
                raise ManifestError(f"duplicate id {sid!r} at line {lineno}")
            seen.add(sid)
            rows.append(ManifestRow(sid, base / img, base / msk, int(label), source))
    return Manifest(tuple(rows))


def write_manifest(path, rows: Iterable[ManifestRow], relative_to=None) -> None:
    path = Path(path)
    root = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            w.writerow([r.id, _rel(r.image_path, root), _rel(r.mask_path, root), r.label, r.source])


def _rel(p: Path, root: Path) -> str:
    try:
        return Path(p).relative_to(root).as_posix()
    except ValueError:
        return Path(p).as_posix()


# -- image files --------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated header integers, skipping # comments."""
    out, i = [], 2
    while len(out) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and data[j:j + 1].isdigit():
            j += 1
        if j == i:
            raise SampleError("corrupt PGM header")
        out.append(int(data[i:j]))
        i = j
    return out, i + 1  # single whitespace byte before raster


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise SampleError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), off = _pgm_tokens(data, 3)
    if maxval > 255:
        raise SampleError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    raster = data[off:off + w * h]
    if len(raster) != w * h:
        raise SampleError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    img = image.astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    """Decode an 8-bit grayscale image; PGM natively, anything else via Pillow."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".pgm":
            return read_pgm(path)
        from PIL import Image
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    except SampleError:
        raise
    except Exception as exc:  # OSError, PIL.UnidentifiedImageError, ...
        raise SampleError(f"cannot decode {path}: {exc}") from exc


# -- samples ------------------------------------------------------------------

def clean_mask(mask: np.ndarray, sample_id: str = "?") -> np.ndarray:
    """Binarize and keep the largest 8-connected component."""
    m = np.asarray(mask)
    if m.dtype != bool:
        m = m >= 128 if m.max(initial=0) > 1 else m > 0
    lab, n = ndi.label(m, structure=_EIGHT)
    if n == 0:
        raise SampleError(f"{sample_id}: empty mask")
    if n > 1:
        sizes = np.bincount(lab.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        log.warning("%s: mask has %d components; keeping largest (%d px)", sample_id, n, sizes[keep - 1])
        m = lab == keep
    area = int(m.sum())
    if area < MIN_MASK_AREA:
        raise SampleError(f"{sample_id}: lesion too small ({area} px < {MIN_MASK_AREA})")
    return m


def make_sample(sid, image, mask, label, source="") -> ImageSample:
    image = np.asarray(image)
    if image.ndim != 2 or np.asarray(mask).shape != image.shape:
        raise SampleError(f"{sid}: image/mask dimension mismatch {image.shape} vs {np.asarray(mask).shape}")
    if min(image.shape) < MIN_SIDE:
        raise SampleError(f"{sid}: image smaller than {MIN_SIDE}x{MIN_SIDE}")
    if label not in (0, 1):
        raise SampleError(f"{sid}: label must be 0 or 1")
    return ImageSample(sid, image.astype(np.uint8), clean_mask(mask, sid), int(label), source)


def load_sample(row: ManifestRow) -> ImageSample:
    image = read_image(row.image_path)
    mask = read_image(row.mask_path)
    return make_sample(row.id, image, mask, row.label, row.source)


# -- fold planning --------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    fold_count: int
    test_fold: dict = field(repr=False)   # id -> fold in which the sample is TEST
    roles: dict = field(repr=False)       # id -> tuple of role per fold

    def role(self, sid: str, fold: int) -> str:
        return self.roles[sid][fold]

    def ids(self, fold: int, role: str) -> list[str]:
        return [sid for sid, rs in self.roles.items() if rs[fold] == role]

    def to_dict(self) -> dict:
        return {
            "fold_count": self.fold_count,
            "assignments": [
                {"id": sid, "fold": k, "role": rs[k]}
                for sid, rs in self.roles.items()
                for k in range(self.fold_count)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        k = int(d["fold_count"])
        roles: dict[str, list] = {}
        for a in d["assignments"]:
            roles.setdefault(a["id"], [None] * k)[int(a["fold"])] = a["role"]
        roles_t = {sid: tuple(r) for sid, r in roles.items()}
        test = {sid: r.index(TEST) for sid, r in roles_t.items()}
        return cls(k, test, roles_t)


def _stratum_rng(seed: int, stratum: str) -> np.random.Generator:
    # Philox is counter-based; key = (seed, stable hash of the stratum name)
    digest = hashlib.blake2b(stratum.encode("utf-8"), digest_size=8).digest()
    key = ((int(seed) & 0xFFFFFFFFFFFFFFFF) << 64) | int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=key))


def _round_matrix(expected: np.ndarray, row_sums, col_sums) -> np.ndarray:
    """Integer matrix with entries floor/ceil of ``expected`` and the given margins.

    Controlled rounding as a max-flow: each fractional cell may take one extra
    unit on top of its floor.  Margins of ``expected`` must equal the targets.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_flow

    base = np.floor(expected + 1e-9).astype(np.int64)
    frac = (expected - base) > 1e-9
    need_r = np.asarray(row_sums) - base.sum(axis=1)
    need_c = np.asarray(col_sums) - base.sum(axis=0)
    s, k = expected.shape
    src, sink = 0, s + k + 1
    edges = []  # (from, to, capacity)
    for i in range(s):
        if need_r[i]:
            edges.append((src, 1 + i, need_r[i]))
        for j in range(k):
            if frac[i, j]:
                edges.append((1 + i, 1 + s + j, 1))
    for j in range(k):
        if need_c[j]:
            edges.append((1 + s + j, sink, need_c[j]))
    rows, cols, cap = (list(t) for t in zip(*edges)) if edges else ([], [], [])
    graph = csr_matrix((np.asarray(cap, dtype=np.int32), (rows, cols)), shape=(sink + 1, sink + 1))
    res = maximum_flow(graph, src, sink)
    if res.flow_value != need_r.sum():
        raise SplitError("stratified rounding infeasible")
    flow = res.flow.toarray()
    return base + flow[1:1 + s, 1 + s:1 + s + k]


def _split_counts(rows: np.ndarray, target: np.ndarray, lo: np.ndarray, hi: np.ndarray, total: int) -> np.ndarray:
    """Integers x with lo <= x <= hi, 0 <= x <= rows, sum(x) == total, close to target."""
    lo_i = np.maximum(np.ceil(lo - 1e-9), 0).astype(np.int64)
    hi_i = np.minimum(np.floor(hi + 1e-9), rows).astype(np.int64)
    x = np.clip(np.floor(target).astype(np.int64), lo_i, hi_i)
    frac = target - np.floor(target)
    while x.sum() < total:
        room = np.flatnonzero(x < hi_i)
        if room.size == 0:
            raise SplitError("stratified DEV/META split infeasible")
        x[room[np.argmax(frac[room])]] += 1
        frac[room[np.argmax(frac[room])]] = -1.0
    while x.sum() > total:
        room = np.flatnonzero(x > lo_i)
        if room.size == 0:
            raise SplitError("stratified DEV/META split infeasible")
        i = room[np.argmin(np.where(frac[room] < 0, 2.0, frac[room]))]
        x[i] -= 1
        frac[i] = 2.0
    return x


def make_split_plan(samples: Sequence[tuple], fold_count: int = 8, seed: int = 42) -> SplitPlan:
    """Stratified (source x label) assignment of samples to folds and roles.

    ``samples`` holds ``(id, label, source)`` triples.  Ids are shuffled within
    each stratum by a counter-based generator keyed on (seed, stratum).  The
    number of each stratum's samples per test fold, and per DEV_TRAIN /
    META_TRAIN cell, is the proportional share rounded so that every cell is
    within one sample of the global stratum proportion; shuffled ids are then
    handed out in order.
    """
    if fold_count < 2:
        raise SplitError("fold_count must be >= 2")
    strata: dict[str, list[str]] = defaultdict(list)
    seen = set()
    for sid, label, source in samples:
        if sid in seen:
            raise SplitError(f"duplicate id {sid!r}")
        seen.add(sid)
        strata[f"{source}|{int(label)}"].append(sid)
    names = sorted(strata)
    order: list[list[str]] = []
    for name in names:
        ids = sorted(strata[name])
        if len(ids) < fold_count:
            raise SplitError(f"stratum {name!r} has {len(ids)} samples < fold_count {fold_count}; cannot stratify")
        perm = _stratum_rng(seed, name).permutation(len(ids))
        order.append([ids[i] for i in perm])

    n_s = np.array([len(ids) for ids in order], dtype=np.int64)
    total = int(n_s.sum())
    n_k = np.full(fold_count, total // fold_count, dtype=np.int64)
    n_k[: total % fold_count] += 1
    counts = _round_matrix(np.outer(n_s, n_k) / total, n_s, n_k)

    test_fold: dict[str, int] = {}
    for ids, row in zip(order, counts):
        start = 0
        for k, c in enumerate(row):
            for sid in ids[start:start + c]:
                test_fold[sid] = k
            start += c

    roles = {sid: [DEV_TRAIN] * fold_count for ids in order for sid in ids}
    for k in range(fold_count):
        rest = total - int(n_k[k])
        n_dev = (rest + (k % 2)) // 2
        remaining = n_s - counts[:, k]
        exp_dev = n_s * n_dev / total
        exp_meta = n_s * (rest - n_dev) / total
        lo = np.maximum(exp_dev - 1, remaining - exp_meta - 1)
        hi = np.minimum(exp_dev + 1, remaining - exp_meta + 1)
        x = _split_counts(remaining, remaining * n_dev / rest, lo, hi, n_dev)
        for ids, n_dev_s in zip(order, x):
            taken = 0
            for sid in ids:
                if test_fold[sid] == k:
                    roles[sid][k] = TEST
                elif taken < n_dev_s:
                    taken += 1
                else:
                    roles[sid][k] = META_TRAIN
    ordered = {sid: tuple(roles[sid]) for ids in order for sid in ids}
    return SplitPlan(fold_count, test_fold, ordered)

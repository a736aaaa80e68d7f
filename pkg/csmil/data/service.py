# csmil/data/service.py
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from csmil.core.errors import DataFormatError, InvalidBagError, PreconditionError
from csmil.core.seeding import make_rng
from csmil.core.serialization import dump_json, load_json

from .schemas import Bag, Dataset, FoldAssignment, GroundTruth, Manifest, ManifestEntry

logger = logging.getLogger(__name__)

MAGIC = b"CSMILEMB"
HEADER = struct.Struct("<II")
HEADER_SIZE = len(MAGIC) + HEADER.size

PathLike = Union[str, Path]


def save_bag(bag: Bag, path: PathLike) -> None:
    """Write one bag in the CSMILEMB format (little-endian f32, row-major)"""
    embeddings = np.asarray(bag.embeddings)
    if not np.all(np.isfinite(embeddings)):
        raise InvalidBagError(f"refusing to write bag {bag.id!r}: non-finite values")
    payload = embeddings.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise InvalidBagError(f"refusing to write bag {bag.id!r}: values overflow float32")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, d = embeddings.shape
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(HEADER.pack(n, d))
            fh.write(np.ascontiguousarray(payload).tobytes(order="C"))
    except OSError as e:
        raise DataFormatError(f"failed writing {path}: {e}")


def read_embeddings(path: PathLike) -> np.ndarray:
    """Read a CSMILEMB file into a float64 matrix"""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"bag file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE or raw[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: magic number mismatch (expected {MAGIC.decode()})")
    n, d = HEADER.unpack_from(raw, len(MAGIC))
    expected = HEADER_SIZE + 4 * n * d
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {n}x{d}, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{path}: non-finite values")
    return values


def load_dataset(manifest_path: PathLike) -> Dataset:
    """Load a manifest and every bag it references, in manifest order"""
    manifest_path = Path(manifest_path)
    try:
        manifest = Manifest.model_validate(load_json(manifest_path))
    except ValidationError as e:
        raise DataFormatError(f"{manifest_path}: invalid manifest: {e}")
    if not manifest.bags:
        raise DataFormatError("dataset has no bags")

    root = manifest_path.parent
    bags = []
    for entry in manifest.bags:
        embeddings = read_embeddings(root / entry.path)
        if embeddings.shape[1] != manifest.dim:
            raise DataFormatError(
                f"bag {entry.id!r}: dimension {embeddings.shape[1]} does not match dataset dimension {manifest.dim}"
            )
        try:
            bags.append(Bag(id=entry.id, label=entry.label, embeddings=embeddings))
        except InvalidBagError as e:
            raise DataFormatError(str(e))

    dataset = Dataset(bags=tuple(bags), dim=manifest.dim, name=manifest.name)
    logger.info(f"Loaded {dataset.name}: M={len(dataset)} bags, N={dataset.n_instances} instances, d={dataset.dim}")
    return dataset


def save_dataset(dataset: Dataset, out_dir: PathLike, manifest_name: str = "manifest.json") -> Path:
    """Write every bag as <id>.emb next to a manifest"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for bag in dataset.bags:
        filename = f"{bag.id}.emb"
        if "/" in bag.id or "\\" in bag.id or bag.id in ("", ".", ".."):
            raise InvalidBagError(f"bag id {bag.id!r} cannot be used as a file name")
        save_bag(bag, out_dir / filename)
        entries.append(ManifestEntry(id=bag.id, label=bag.label, path=filename))
    manifest = Manifest(name=dataset.name, dim=dataset.dim, bags=entries)
    return dump_json(manifest.model_dump(), out_dir / manifest_name)


def save_ground_truth(truth: GroundTruth, path: PathLike) -> Path:
    return dump_json(
        {
            "informative_components": list(truth.informative_components),
            "component_of_instance": {k: list(v) for k, v in truth.component_of_instance.items()},
        },
        path,
    )


def load_ground_truth(path: PathLike) -> GroundTruth:
    raw = load_json(path)
    try:
        return GroundTruth(
            informative_components=tuple(int(c) for c in raw["informative_components"]),
            component_of_instance={k: tuple(int(c) for c in v) for k, v in raw["component_of_instance"].items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: invalid ground truth sidecar: {e}")


def split_folds(dataset: Dataset, n_folds: int, seed: int) -> FoldAssignment:
    """
    Stratified bag-level folds.
    Each class is sorted by id, shuffled with the seed, then dealt round-robin;
    the second class starts where the first stopped so total sizes stay within one.
    """
    if n_folds < 2:
        raise PreconditionError(f"n_folds must be >= 2, got {n_folds}")

    by_class: Dict[int, list] = {0: [], 1: []}
    for bag in dataset.bags:
        by_class[bag.label].append(bag.id)
    for label, ids in by_class.items():
        if len(ids) < n_folds:
            raise PreconditionError(
                f"class {label} has {len(ids)} bags, need at least n_folds={n_folds}"
            )

    rng = make_rng(seed, "folds")
    fold_of_bag: Dict[str, int] = {}
    cursor = 0
    for label in (1, 0):
        ids = sorted(by_class[label])
        for position in rng.permutation(len(ids)):
            fold_of_bag[ids[position]] = cursor % n_folds
            cursor += 1

    # manifest order for stable iteration
    ordered = {bag.id: fold_of_bag[bag.id] for bag in dataset.bags}
    return FoldAssignment(fold_of_bag=ordered, n_folds=n_folds)


def load_folds(path: PathLike, dataset: Dataset, n_folds: Optional[int] = None) -> FoldAssignment:
    raw = load_json(path)
    fold_of_bag = {str(k): int(v) for k, v in raw["fold_of_bag"].items()}
    missing = set(dataset.ids) - set(fold_of_bag)
    if missing:
        raise DataFormatError(f"{path}: {len(missing)} bags have no fold")
    n = n_folds or int(raw.get("n_folds", max(fold_of_bag.values()) + 1))
    return FoldAssignment({i: fold_of_bag[i] for i in dataset.ids}, n)


def save_folds(folds: FoldAssignment, path: PathLike) -> Path:
    return dump_json({"n_folds": folds.n_folds, "fold_of_bag": folds.fold_of_bag}, path)

import hashlib
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np
from tqdm import tqdm

from siamprint.constants import (
    ALPHA_FREQUENCY_FLOOR,
    MANIFEST_FILE,
    NUM_CLASSES,
)
from siamprint.core.config import settings
from siamprint.core.exceptions import ContractViolation, DataIOError
from siamprint.schemas.config import DatasetConfig
from siamprint.schemas.dataset import (
    SPLITS,
    DatasetManifest,
    PerturbationParams,
    SampleRecord,
    SplitSummary,
)
from siamprint.services.augmentation import (
    sample_perturbation,
    simulate_camera,
)
from siamprint.services.schematics import (
    Schematic,
    derive_defect_mask,
    generate_schematic,
    render_schematic,
)
from siamprint.storage.images import read_mask, read_rgb, write_mask, write_rgb
from siamprint.storage.manifest import manifest_store

logger = logging.getLogger(__name__)

SCHEMATIC_STREAM = 0
SPLIT_STREAM = 1
VARIANT_STREAM = 2
SAMPLE_STREAM = 3

PathLike = Union[str, Path]


def derive_seed(*keys: int) -> int:
    """Independent sub-seed for a tuple of integer keys."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def file_sha256(path: PathLike) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as error:
        raise DataIOError(f'Cannot read {path}: {error}.')


@dataclass
class Batch:
    sample_ids: list[str]
    i_ref: np.ndarray
    i_cam: np.ndarray
    mask: np.ndarray
    target: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.sample_ids)


class DatasetService:

    def check_split_feasibility(self, config: DatasetConfig) -> None:
        counts = self.schematic_counts(config)
        for split, count in counts.items():
            needs_pairs = (
                config.defect_fraction > 0 and
                getattr(config.samples, split) > 1
            )
            if needs_pairs and count < 2:
                raise ContractViolation(
                    f'Split {split} gets {count} schematic(s); defective '
                    'pairs need at least two.'
                )

    def check_sample_images(
        self,
        record: SampleRecord,
        shapes: dict[str, tuple[int, ...]],
        expected: tuple[int, int],
    ) -> None:
        for kind, shape in shapes.items():
            if tuple(shape[:2]) != expected:
                raise DataIOError(
                    f'{kind} image has shape {shape[:2]}, expected '
                    f'{expected}.',
                    sample_id=record.sample_id,
                )

    def check_checksums(self, record: SampleRecord, root: Path) -> None:
        for kind, digest in record.checksums.items():
            path = root / getattr(record, f'{kind}_path')
            if file_sha256(path) != digest:
                raise DataIOError(
                    f'{kind} file {path} does not match its checksum.',
                    sample_id=record.sample_id,
                )

    def schematic_counts(self, config: DatasetConfig) -> dict[str, int]:
        """Largest-remainder allocation with at least one schematic each."""
        ratios = np.asarray(config.split_ratios, dtype=np.float64)
        exact = ratios / ratios.sum() * config.n_schematics
        counts = np.floor(exact).astype(int)
        order = np.argsort(-(exact - counts), kind='stable')
        for index in order[:config.n_schematics - counts.sum()]:
            counts[index] += 1
        for index in np.flatnonzero(counts == 0):
            counts[int(np.argmax(counts))] -= 1
            counts[index] = 1
        return {
            split: int(count) for split, count in zip(SPLITS, counts)
        }

    def assign_schematics(self, config: DatasetConfig) -> dict[str, list[str]]:
        ids = [f's{index:04d}' for index in range(config.n_schematics)]
        rng = np.random.default_rng(derive_seed(config.seed, SPLIT_STREAM))
        shuffled = [ids[index] for index in rng.permutation(len(ids))]
        assignment, start = {}, 0
        for split, count in self.schematic_counts(config).items():
            assignment[split] = sorted(shuffled[start:start + count])
            start += count
        return assignment

    def build_schematics(self, config: DatasetConfig) -> dict[str, Schematic]:
        return {
            f's{index:04d}': generate_schematic(
                derive_seed(config.seed, SCHEMATIC_STREAM, index),
                config.schematic,
                schematic_id=f's{index:04d}',
            )
            for index in range(config.n_schematics)
        }

    def variant_params(
        self,
        config: DatasetConfig,
        schematic_index: int,
        variant: int,
    ) -> PerturbationParams:
        rng = np.random.default_rng(derive_seed(
            config.seed, VARIANT_STREAM, schematic_index, variant,
        ))
        return sample_perturbation(
            config.perturbation,
            config.schematic.height,
            config.schematic.width,
            rng,
        )

    def _pick_pair(
        self,
        schematics: dict[str, Schematic],
        candidates: list[str],
        defective: bool,
        rng: np.random.Generator,
    ) -> tuple[str, str]:
        true_id = candidates[int(rng.integers(len(candidates)))]
        if not defective:
            return true_id, true_id
        others = [item for item in candidates if item != true_id]
        for index in rng.permutation(len(others)):
            presented_id = others[int(index)]
            mask = derive_defect_mask(
                schematics[true_id], schematics[presented_id],
            )
            if mask.any():
                return true_id, presented_id
        raise ContractViolation(
            f'No schematic in the split differs from {true_id}.'
        )

    def _make_sample(
        self,
        config: DatasetConfig,
        schematics: dict[str, Schematic],
        split: str,
        candidates: list[str],
        index: int,
        defective: bool,
        out_dir: Path,
    ) -> SampleRecord:
        sample_id = f'{split}-{index:05d}'
        rng = np.random.default_rng(derive_seed(
            config.seed, SAMPLE_STREAM, SPLITS.index(split), index,
        ))
        true_id, presented_id = self._pick_pair(
            schematics, candidates, defective, rng,
        )
        variant = int(rng.integers(config.variants_per_schematic))
        params = self.variant_params(
            config, int(true_id[1:]), variant,
        )
        camera = simulate_camera(schematics[true_id], params, config.camera)
        mask = derive_defect_mask(
            schematics[true_id], schematics[presented_id],
        )
        camera_path = Path('camera') / f'{sample_id}.png'
        mask_path = Path('masks') / f'{sample_id}.png'
        schematic_path = Path('schematics') / f'{presented_id}.png'
        write_rgb(out_dir / camera_path, camera)
        write_mask(out_dir / mask_path, mask)
        return SampleRecord(
            sample_id=sample_id,
            split=split,
            presented_schematic_id=presented_id,
            true_schematic_id=true_id,
            variant_index=variant,
            defective=true_id != presented_id,
            schematic_path=schematic_path.as_posix(),
            camera_path=camera_path.as_posix(),
            mask_path=mask_path.as_posix(),
            perturbation=params,
            defect_pixels=int(np.count_nonzero(mask)),
            checksums={
                'schematic': file_sha256(out_dir / schematic_path),
                'camera': file_sha256(out_dir / camera_path),
                'mask': file_sha256(out_dir / mask_path),
            },
        )

    def assemble_dataset(
        self,
        config: DatasetConfig,
        out_dir: PathLike,
        workers: Optional[int] = None,
    ) -> DatasetManifest:
        """Generate schematics, camera images and masks; write the manifest.

        Every sample draws from its own sub-seed, so the result does not
        depend on ``workers``.
        """
        self.check_split_feasibility(config)
        out_dir = Path(out_dir)
        workers = settings.loader_workers if workers is None else workers
        schematics = self.build_schematics(config)
        for schematic_id, schematic in schematics.items():
            write_rgb(
                out_dir / 'schematics' / f'{schematic_id}.png',
                render_schematic(schematic),
            )
        assignment = self.assign_schematics(config)
        jobs = []
        for split in SPLITS:
            count = getattr(config.samples, split)
            flags = np.zeros(count, dtype=bool)
            flags[:int(round(config.defect_fraction * count))] = True
            rng = np.random.default_rng(derive_seed(
                config.seed, SAMPLE_STREAM, SPLITS.index(split), count,
            ))
            rng.shuffle(flags)
            jobs.extend(
                (split, assignment[split], index, bool(flag))
                for index, flag in enumerate(flags)
            )

        def make(job):
            split, candidates, index, defective = job
            return self._make_sample(
                config, schematics, split, candidates, index, defective,
                out_dir,
            )

        progress = tqdm(
            total=len(jobs),
            desc='gen-data',
            disable=not settings.progress_bars,
        )
        records = []
        if workers > 0:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(make, jobs):
                    records.append(record)
                    progress.update()
        else:
            for job in jobs:
                records.append(make(job))
                progress.update()
        progress.close()
        manifest = DatasetManifest(
            seed=config.seed,
            config=config,
            splits={
                split: SplitSummary(
                    schematic_ids=assignment[split],
                    samples=sum(1 for r in records if r.split == split),
                    defective=sum(
                        1 for r in records if r.split == split and r.defective
                    ),
                )
                for split in SPLITS
            },
            samples=records,
        )
        manifest_store.write(manifest, out_dir / MANIFEST_FILE)
        logger.info(
            'Wrote %d samples to %s (manifest %s).',
            len(records), out_dir, manifest_store.digest(manifest)[:12],
        )
        return manifest

    def load_sample(
        self,
        record: SampleRecord,
        root: Path,
        expected: tuple[int, int],
        verify: bool = False,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if verify:
            self.check_checksums(record, root)
        try:
            schematic = read_rgb(root / record.schematic_path)
            camera = read_rgb(root / record.camera_path)
            mask = read_mask(root / record.mask_path)
        except DataIOError as error:
            raise DataIOError(error.detail, sample_id=record.sample_id)
        self.check_sample_images(
            record,
            {
                'schematic': schematic.shape,
                'camera': camera.shape,
                'mask': mask.shape,
            },
            expected,
        )
        return schematic, camera, mask

    def load_batch(
        self,
        records: list[SampleRecord],
        root: Path,
        expected: tuple[int, int],
        verify: bool = False,
    ) -> Batch:
        loaded = [
            self.load_sample(record, root, expected, verify)
            for record in records
        ]
        return Batch(
            sample_ids=[record.sample_id for record in records],
            i_ref=np.stack([item[0] for item in loaded]).transpose(0, 3, 1, 2),
            i_cam=np.stack([item[1] for item in loaded]).transpose(0, 3, 1, 2),
            mask=np.stack([item[2] for item in loaded]),
        )


dataset_service = DatasetService()


def assemble_dataset(
    config: DatasetConfig,
    out_dir: PathLike,
    workers: Optional[int] = None,
) -> DatasetManifest:
    return dataset_service.assemble_dataset(config, out_dir, workers)


def load_manifest(path: PathLike) -> DatasetManifest:
    return manifest_store.read(path)


def select_records(
    manifest: DatasetManifest,
    split: str,
    only_clean: bool = False,
    max_samples: Optional[int] = None,
) -> list[SampleRecord]:
    if split not in SPLITS:
        raise ContractViolation(f'Unknown split {split!r}.')
    records = manifest.records(split)
    if only_clean:
        records = [record for record in records if not record.defective]
    return records[:max_samples] if max_samples else records


def prefetch(
    loaders: Iterable[Callable[[], Batch]],
    workers: int,
    queue_size: int,
) -> Iterator[Batch]:
    """Run batch loaders on a thread pool, at most ``queue_size`` ahead.

    Batches come out in submission order.
    """
    if workers <= 0:
        for load in loaders:
            yield load()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for load in loaders:
            pending.append(pool.submit(load))
            if len(pending) >= max(queue_size, 1):
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def iterate_batches(
    manifest: DatasetManifest,
    root: PathLike,
    split: str,
    batch_size: int,
    seed: Optional[int] = None,
    records: Optional[list[SampleRecord]] = None,
    verify: bool = False,
    workers: Optional[int] = None,
) -> Iterator[Batch]:
    """Batches of (reference, camera, mask) in NCHW float layout.

    ``seed`` shuffles deterministically; ``None`` keeps manifest order.
    """
    if batch_size <= 0:
        raise ContractViolation('batch_size must be positive.')
    root = Path(root)
    records = select_records(manifest, split) if records is None else records
    order = np.arange(len(records))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(records))
    expected = (
        manifest.config.schematic.height, manifest.config.schematic.width,
    )
    chunks = [
        [records[int(index)] for index in order[start:start + batch_size]]
        for start in range(0, len(records), batch_size)
    ]
    loaders = [
        (lambda chunk=chunk: dataset_service.load_batch(
            chunk, root, expected, verify,
        ))
        for chunk in chunks
    ]
    yield from prefetch(
        loaders,
        settings.loader_workers if workers is None else workers,
        settings.loader_queue_size,
    )


def class_frequencies(
    manifest: DatasetManifest,
    root: PathLike,
    split: str = 'train',
) -> np.ndarray:
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    root = Path(root)
    for record in select_records(manifest, split):
        try:
            mask = read_mask(root / record.mask_path)
        except DataIOError as error:
            raise DataIOError(error.detail, sample_id=record.sample_id)
        counts += np.bincount(mask.ravel(), minlength=NUM_CLASSES)
    if counts.sum() == 0:
        raise ContractViolation(f'Split {split} has no mask pixels.')
    return counts / counts.sum()


def alpha_from_frequencies(
    frequencies: np.ndarray,
) -> tuple[float, float, float]:
    """Inverse class frequency, normalized to mean 1."""
    inverse = 1.0 / np.maximum(
        np.asarray(frequencies, dtype=np.float64), ALPHA_FREQUENCY_FLOOR,
    )
    alpha = inverse / inverse.mean()
    return tuple(float(value) for value in alpha)

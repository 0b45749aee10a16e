"""End-to-end loop: train on noisy masks, watch ΣU_p, relabel once, keep training.

Clean masks never drive a decision. Test clean masks feed the D_clean column
and training clean masks (when present) only feed the relabeling audit.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from exceptions import ManifestError, NotEnoughDataError
from models.grids import BinaryMask, GrayImage, UncertaintyMap
from models.manifest import Manifest, ManifestEntry
from models.pipeline_config import PipelineConfig
from models.specs import DIHEDRAL_GROUP_SIZE, DetectorMode, EnsembleMethod, TrainConfig
from models.trace import EpochRecord, TrainingTrace
from services import codecs
from services.corpus import MANIFEST_NAME, generate_corpus
from services.ensemble_engine import build_ensemble, map_ordered
from services.epoch_detector import OnlineEpochDetector, detect_relabel_epoch, relative_change
from services.learner import PixelClassifier, PixelDataset, save_model
from services.metrics import evaluate_model, mean_dice
from services.noise_synth import corrupt_manifest
from services.relabel import relabel_with_audit
from services.uncertainty import aleatoric_map, cumulative_uncertainty

COMPARISON_COLUMNS = ["method", "d_clean", "d_noisy", "relabel_epoch", "seconds"]
NO_RELABEL_OUTCOME = "no relabeling performed"


@dataclass(frozen=True)
class SplitData:
    """Images with their masks for one split, in manifest order."""

    names: List[str]
    images: List[GrayImage]
    noisy: List[BinaryMask]
    clean: List[Optional[BinaryMask]]

    def __len__(self) -> int:
        return len(self.images)

    @property
    def has_clean(self) -> bool:
        return all(mask is not None for mask in self.clean)


@dataclass(frozen=True)
class RelabelAudit:
    """What the single relabeling step changed."""

    epoch: int
    flipped_fraction: float
    filled_pixels: int
    train_dice_noisy: Optional[float] = None
    train_dice_relabeled: Optional[float] = None


@dataclass(frozen=True)
class PipelineReport:
    """Before/after Dice and the relabeling outcome of a run."""

    method: EnsembleMethod
    detector_mode: DetectorMode
    epochs: int
    detected_epoch: Optional[int]
    relabel_enabled: bool
    d_clean_final: float
    d_noisy_final: float
    audit: Optional[RelabelAudit] = None
    d_clean_before: Optional[float] = None
    d_noisy_before: Optional[float] = None

    @property
    def relabel_epoch(self) -> Optional[int]:
        return self.audit.epoch if self.audit is not None else None

    @property
    def outcome(self) -> str:
        if self.audit is not None:
            return f"relabeled at epoch {self.audit.epoch}"
        if not self.relabel_enabled and self.detected_epoch is not None:
            return f"relabeling disabled (detected epoch {self.detected_epoch})"
        return NO_RELABEL_OUTCOME

    def rows(self) -> List[List[str]]:
        def fmt(value: Optional[object]) -> str:
            return "" if value is None else str(value)

        audit = self.audit
        return [
            ["method", self.method.value],
            ["detector_mode", self.detector_mode.value],
            ["epochs", str(self.epochs)],
            ["outcome", self.outcome],
            ["detected_epoch", fmt(self.detected_epoch)],
            ["relabel_epoch", fmt(self.relabel_epoch)],
            ["d_clean_before", fmt(self.d_clean_before)],
            ["d_noisy_before", fmt(self.d_noisy_before)],
            ["d_clean_final", fmt(self.d_clean_final)],
            ["d_noisy_final", fmt(self.d_noisy_final)],
            ["flipped_fraction", fmt(audit.flipped_fraction if audit else None)],
            ["filled_pixels", fmt(audit.filled_pixels if audit else None)],
            ["train_dice_noisy", fmt(audit.train_dice_noisy if audit else None)],
            ["train_dice_relabeled", fmt(audit.train_dice_relabeled if audit else None)],
        ]


@dataclass
class PipelineResult:
    """Artifacts of one run."""

    models: List[PixelClassifier]
    trace: TrainingTrace
    report: PipelineReport
    relabeled: Dict[str, BinaryMask] = field(default_factory=dict)
    uncorrected_trace: Optional[TrainingTrace] = None

    @property
    def model(self) -> PixelClassifier:
        """Reporting model (member 0 for deep ensembles)."""
        return self.models[0]


# --- data loading -------------------------------------------------------------------


def load_split(entries: Sequence[ManifestEntry], require_clean: bool) -> SplitData:
    names, images, noisy, clean = [], [], [], []
    fallback = 0
    for entry in entries:
        clean_mask = codecs.read_mask(entry.clean_mask) if entry.clean_mask is not None else None
        if entry.noisy_mask is not None:
            noisy_mask = codecs.read_mask(entry.noisy_mask)
        elif clean_mask is not None:
            noisy_mask = clean_mask
            fallback += 1
        else:
            raise ManifestError(f"{entry.image}: neither a noisy nor a clean mask is listed")
        if require_clean and clean_mask is None:
            raise ManifestError(f"{entry.image}: clean mask required but not listed")
        names.append(entry.name)
        images.append(codecs.read_image(entry.image))
        noisy.append(noisy_mask)
        clean.append(clean_mask)
    if fallback:
        logger.warning(f"{fallback} entries have no noisy mask; using their clean masks instead")
    return SplitData(names=names, images=images, noisy=noisy, clean=clean)


def prepare_manifest(cfg: PipelineConfig) -> Manifest:
    """Read or generate the corpus, then corrupt it when a noise spec is configured."""
    out = Path(cfg.output_dir)
    if cfg.manifest is None:
        manifest = generate_corpus(cfg.corpus_spec, out / "corpus")
    else:
        manifest = codecs.read_manifest(cfg.manifest)
    noise = cfg.noise_spec
    if noise is not None:
        noisy_dir = out / "noisy"
        manifest = corrupt_manifest(manifest, noise, noisy_dir)
        codecs.write_manifest(manifest, noisy_dir / MANIFEST_NAME)
    return manifest


def load_data(cfg: PipelineConfig) -> Tuple[SplitData, SplitData]:
    """Training and test splits of the configured corpus.

    Raises:
        ManifestError: If a split is empty or test entries lack masks
    """
    manifest = prepare_manifest(cfg)
    if not manifest.train or not manifest.test:
        raise ManifestError(
            f"need train and test entries, got {len(manifest.train)} and {len(manifest.test)}"
        )
    return load_split(manifest.train, require_clean=False), load_split(
        manifest.test, require_clean=True
    )


# --- the training loop --------------------------------------------------------------


class PipelineRunner:
    """Drives one pipeline run over loaded data."""

    def __init__(self, cfg: PipelineConfig, train: SplitData, test: SplitData):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.ensemble = cfg.ensemble_spec
        self.detector = cfg.detector_spec
        self.relabel_spec = cfg.relabel_spec
        base = cfg.train_config
        member_count = self.ensemble.n if self.ensemble.method == EnsembleMethod.DE else 1
        # deep-ensemble members differ only in init and shuffling seed
        self.member_configs: List[TrainConfig] = [
            base.model_copy(update={"seed": base.seed + i}) for i in range(member_count)
        ]

    def initial_models(self) -> List[PixelClassifier]:
        return [PixelClassifier.from_config(member) for member in self.member_configs]

    def dataset(self, masks: Sequence[BinaryMask]) -> PixelDataset:
        return PixelDataset.from_pairs(list(zip(self.train.images, masks)))

    def train_epoch(
        self, models: List[PixelClassifier], dataset: PixelDataset
    ) -> List[PixelClassifier]:
        return map_ordered(
            lambda i: models[i].fit_epoch(dataset, self.member_configs[i]),
            len(models),
            self.cfg.workers,
        )

    def measure(
        self, models: List[PixelClassifier], epoch: int
    ) -> Tuple[List[UncertaintyMap], EpochRecord]:
        """Aleatoric maps on every training image plus the epoch's trace record."""
        base_seed = self.ensemble.base_seed + 1000 * epoch

        def image_map(i: int) -> UncertaintyMap:
            ensemble = build_ensemble(self.ensemble, models, self.train.images[i], base_seed=base_seed)
            return aleatoric_map(ensemble)

        maps = map_ordered(image_map, len(self.train), self.cfg.workers)
        summary = cumulative_uncertainty(maps)
        dice = evaluate_model(models[0], self.test.images, self.test.clean, self.test.noisy)  # type: ignore[arg-type]
        logger.info(
            f"Epoch {epoch}/{self.cfg.epochs}: ΣU = {summary.sigma_u:.4f}, "
            f"D_clean = {dice.d_clean:.4f}, D_noisy = {dice.d_noisy:.4f}"
        )
        return maps, EpochRecord(
            epoch=epoch, sigma_u=summary.sigma_u, d_clean=dice.d_clean, d_noisy=dice.d_noisy
        )

    def relabel(
        self, maps: Sequence[UncertaintyMap], epoch: int
    ) -> Tuple[List[BinaryMask], RelabelAudit]:
        """Relabel every original noisy training mask with the maps of ``epoch``."""
        outcomes = map_ordered(
            lambda i: relabel_with_audit(self.train.noisy[i], maps[i], self.relabel_spec),
            len(self.train),
            self.cfg.workers,
        )
        masks = [outcome.mask for outcome in outcomes]
        pixels = sum(mask.height * mask.width for mask in masks)
        audit = RelabelAudit(
            epoch=epoch,
            flipped_fraction=sum(outcome.flipped for outcome in outcomes) / pixels,
            filled_pixels=sum(outcome.filled for outcome in outcomes),
        )
        if self.train.has_clean:
            clean = [mask for mask in self.train.clean if mask is not None]
            audit = RelabelAudit(
                epoch=epoch,
                flipped_fraction=audit.flipped_fraction,
                filled_pixels=audit.filled_pixels,
                train_dice_noisy=mean_dice(self.train.noisy, clean),
                train_dice_relabeled=mean_dice(masks, clean),
            )
        logger.info(
            f"Relabeled {len(masks)} training masks with epoch-{epoch} uncertainty: "
            f"{audit.flipped_fraction:.2%} pixels flipped, {audit.filled_pixels} filled"
        )
        return masks, audit

    def _report(
        self,
        trace: TrainingTrace,
        detected: Optional[int],
        audit: Optional[RelabelAudit],
        before: Optional[EpochRecord],
    ) -> PipelineReport:
        final = trace[-1]
        return PipelineReport(
            method=self.ensemble.method,
            detector_mode=self.detector.mode,
            epochs=self.cfg.epochs,
            detected_epoch=detected,
            relabel_enabled=self.cfg.relabel,
            d_clean_final=final.d_clean if final.d_clean is not None else 0.0,
            d_noisy_final=final.d_noisy if final.d_noisy is not None else 0.0,
            audit=audit,
            d_clean_before=before.d_clean if before else None,
            d_noisy_before=before.d_noisy if before else None,
        )

    def _relabeled(self, masks: Sequence[BinaryMask]) -> Dict[str, BinaryMask]:
        return dict(zip(self.train.names, masks))

    def run_online(self) -> PipelineResult:
        """Relabel as soon as the patience detector fires, then keep training."""
        detector = OnlineEpochDetector(self.detector.warmup, self.detector.patience)
        models = self.initial_models()
        dataset = self.dataset(self.train.noisy)
        maps, record = self.measure(models, 0)
        detector.observe(record)
        records, cached = [record], {0: maps}
        masks: Optional[List[BinaryMask]] = None
        audit: Optional[RelabelAudit] = None
        before: Optional[EpochRecord] = None

        for epoch in range(1, self.cfg.epochs + 1):
            models = self.train_epoch(models, dataset)
            maps, record = self.measure(models, epoch)
            records.append(record)
            cached[epoch] = maps
            fired = detector.observe(record)
            if fired is not None and self.cfg.relabel:
                masks, audit = self.relabel(cached[fired], fired)
                before = record
                dataset = self.dataset(masks)
            if detector.fired_epoch is not None:
                cached.clear()
            else:
                keep = detector.best_epoch if detector.best_epoch is not None else epoch
                cached = {e: m for e, m in cached.items() if e >= keep}

        if detector.fired_epoch is None:
            logger.warning(
                f"Detector did not fire within {self.cfg.epochs} epochs; {NO_RELABEL_OUTCOME}"
            )
        trace = TrainingTrace(records)
        trace = trace.with_delta(relative_change(trace))
        return PipelineResult(
            models=models,
            trace=trace,
            report=self._report(trace, detector.fired_epoch, audit, before),
            relabeled=self._relabeled(masks) if masks is not None else {},
        )

    def run_offline(self) -> PipelineResult:
        """Train the full budget uncorrected, pick t* retrospectively, restart from t*."""
        models = self.initial_models()
        dataset = self.dataset(self.train.noisy)
        maps, record = self.measure(models, 0)
        records = [record]
        snapshots: Dict[int, Tuple[List[PixelClassifier], List[UncertaintyMap]]] = {
            0: (models, maps)
        }
        for epoch in range(1, self.cfg.epochs + 1):
            models = self.train_epoch(models, dataset)
            maps, record = self.measure(models, epoch)
            records.append(record)
            snapshots[epoch] = (models, maps)

        uncorrected = TrainingTrace(records)
        uncorrected = uncorrected.with_delta(relative_change(uncorrected))
        try:
            detected: Optional[int] = detect_relabel_epoch(uncorrected, self.detector.warmup)
        except NotEnoughDataError as e:
            logger.warning(f"{e}; {NO_RELABEL_OUTCOME}")
            detected = None

        if detected is None or not self.cfg.relabel:
            return PipelineResult(
                models=models,
                trace=uncorrected,
                report=self._report(uncorrected, detected, None, None),
                uncorrected_trace=uncorrected,
            )

        logger.info(f"Offline detection picked epoch {detected}; restoring its snapshot")
        models, maps = snapshots[detected]
        snapshots.clear()
        masks, audit = self.relabel(maps, detected)
        dataset = self.dataset(masks)
        records = records[: detected + 1]
        for epoch in range(detected + 1, self.cfg.epochs + 1):
            models = self.train_epoch(models, dataset)
            _, record = self.measure(models, epoch)
            records.append(record)

        trace = TrainingTrace(records)
        trace = trace.with_delta(relative_change(trace))
        return PipelineResult(
            models=models,
            trace=trace,
            report=self._report(trace, detected, audit, uncorrected[detected]),
            relabeled=self._relabeled(masks),
            uncorrected_trace=uncorrected,
        )

    def run(self) -> PipelineResult:
        if self.detector.mode == DetectorMode.OFFLINE:
            return self.run_offline()
        return self.run_online()


def write_outputs(result: PipelineResult, out_dir: Path) -> None:
    """Write ``trace.csv``, ``report.csv``, ``relabeled/*.pgm`` and ``model.bin``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    codecs.write_trace(result.trace, out_dir / "trace.csv")
    if result.uncorrected_trace is not None:
        codecs.write_trace(result.uncorrected_trace, out_dir / "trace_uncorrected.csv")
    codecs.write_table(out_dir / "report.csv", ["key", "value"], result.report.rows())
    if result.relabeled:
        relabeled_dir = out_dir / "relabeled"
        relabeled_dir.mkdir(exist_ok=True)
        for name, mask in result.relabeled.items():
            codecs.write_mask(mask, relabeled_dir / f"{name}.pgm")
    save_model(result.model, out_dir / "model.bin")
    logger.info(f"Pipeline outputs written to {out_dir} ({result.report.outcome})")


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run the full detection-and-relabeling loop and write its outputs."""
    logger.info(
        f"Pipeline: method={cfg.method.value} n={cfg.ensemble_size} epochs={cfg.epochs} "
        f"detector={cfg.detector_mode.value} relabel={cfg.relabel}"
    )
    train, test = load_data(cfg)
    result = PipelineRunner(cfg, train, test).run()
    write_outputs(result, Path(cfg.output_dir))
    return result


@dataclass(frozen=True)
class MethodComparison:
    """One row of the method comparison table."""

    method: EnsembleMethod
    d_clean: float
    d_noisy: float
    relabel_epoch: Optional[int]
    seconds: float

    def row(self) -> List[str]:
        epoch = "" if self.relabel_epoch is None else str(self.relabel_epoch)
        return [
            self.method.value,
            repr(self.d_clean),
            repr(self.d_noisy),
            epoch,
            f"{self.seconds:.3f}",
        ]


def compare_methods(cfg: PipelineConfig) -> List[MethodComparison]:
    """Run the pipeline once per ensemble method on a shared corpus; write ``comparison.csv``.

    TTA runs use at most the eight dihedral transforms.
    """
    out = Path(cfg.output_dir)
    base = cfg
    if cfg.manifest is None:
        generate_corpus(cfg.corpus_spec, out / "corpus")
        base = cfg.model_copy(update={"manifest": out / "corpus" / MANIFEST_NAME})

    rows = []
    for method in EnsembleMethod:
        size = cfg.ensemble_size
        if method == EnsembleMethod.TTA:
            size = min(size, DIHEDRAL_GROUP_SIZE)
        run_cfg = base.model_copy(
            update={"method": method, "ensemble_size": size, "output_dir": out / method.value}
        )
        start = time.perf_counter()
        result = run_pipeline(run_cfg)
        seconds = time.perf_counter() - start
        rows.append(
            MethodComparison(
                method=method,
                d_clean=result.report.d_clean_final,
                d_noisy=result.report.d_noisy_final,
                relabel_epoch=result.report.relabel_epoch,
                seconds=seconds,
            )
        )
        logger.info(
            f"{method.value}: D_clean = {rows[-1].d_clean:.4f} in {seconds:.1f} s"
        )

    codecs.write_table(out / "comparison.csv", COMPARISON_COLUMNS, (r.row() for r in rows))
    return rows

"""Batch command line tool: discover a dataset, extract features per image,
aggregate per group, run ANOVA and write the CSV/SVG reports.

Exit codes: 0 success (warnings allowed), 2 configuration error, 3 dataset
root or output I/O error.  Re-running with identical inputs and any ``jobs``
value produces byte-identical CSV outputs: images are processed in a work
pool but aggregated and written in a fixed sorted order.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import (CellmorphError, ConfigError, DataRootError,
                     DimensionMismatchError, GeometryError)
from .mask_io import (BatchPlan, Channel, DEFAULT_PITCH_UM, ImageEntry,
                      PixelScale, discover_dataset, load_label_mask)
from .morphometry import (DEFAULT_MIN_SIZE_PX, MaskFeatures, extract_features,
                          summarize_image)
from .pairing import PairingResult, pair_subjects
from .report import (FLAG_CLAMPED, FLAG_MULTI_NUCLEATE, FLAG_SMALL, FeatureRecord,
                     ImageRecord, render_overlay_svg, render_voronoi_svg,
                     write_anova_csv, write_group_csv, write_image_csv,
                     write_subject_csv)
from .stats import one_way_anova, summarize_groups
from .tessellation import (MIN_CONFIDENT_INTERIOR, Rect, Tessellation, build_voronoi,
                           image_csm, voronoi_entropy)

ALL_FEATURES = frozenset({"shape", "pairs", "voronoi"})

#: Image-level feature names used for groups.csv and anova.csv, in row order.
IMAGE_FEATURES = (
    "cell_area_um2", "cell_roundness", "coverage_cells",
    "nucleus_area_um2", "nucleus_roundness", "coverage_nuclei",
    "ratio", "voronoi_entropy", "mean_csm",
    "density_per_mm2", "n_cells", "n_nuclei",
)


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs of one batch run."""

    root: Optional[Path] = None
    out: Optional[Path] = None
    pitch: float = DEFAULT_PITCH_UM
    suffix_cyto: str = "_cyto"
    suffix_nuclei: str = "_nuclei"
    min_size: int = DEFAULT_MIN_SIZE_PX
    strict_labels: bool = False
    jobs: int = 1
    features: frozenset[str] = ALL_FEATURES
    manifest: Optional[Path] = None


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite, got {raw!r}")
    return value


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _parse_features(key: str, raw: str) -> frozenset[str]:
    tokens = frozenset(t.strip() for t in raw.split(",") if t.strip())
    unknown = tokens - ALL_FEATURES
    if unknown:
        raise ConfigError(f"{key}: unknown feature(s) {sorted(unknown)}; "
                          f"choose from {sorted(ALL_FEATURES)}")
    if "shape" not in tokens:
        raise ConfigError(f"{key}: the 'shape' feature set cannot be disabled")
    return tokens


_CONFIG_PARSERS = {
    "root": lambda k, v: Path(v),
    "out": lambda k, v: Path(v),
    "pitch": _parse_float,
    "suffix_cyto": lambda k, v: v,
    "suffix_nuclei": lambda k, v: v,
    "min_size": _parse_int,
    "strict_labels": _parse_bool,
    "jobs": _parse_int,
    "features": _parse_features,
    "manifest": lambda k, v: Path(v),
}

# common wrong spellings worth a direct hint
_KEY_HINTS = {
    "pxsize": "pitch", "pixel_size": "pitch", "pixelsize": "pitch",
    "threads": "jobs", "parallelism": "jobs", "minsize": "min_size",
    "output": "out", "input": "root",
}


def _unknown_key_error(key: str) -> ConfigError:
    hint = _KEY_HINTS.get(key)
    if hint is None:
        close = difflib.get_close_matches(key, _CONFIG_PARSERS, n=1, cutoff=0.6)
        hint = close[0] if close else None
    suggestion = f' (did you mean "{hint}"?)' if hint else ""
    return ConfigError(f'unknown key "{key}"{suggestion}')


def parse_config_text(text: str) -> dict[str, object]:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_PARSERS:
            raise _unknown_key_error(key)
        if key in values:
            raise ConfigError(f'line {lineno}: duplicate key "{key}"')
        values[key] = _CONFIG_PARSERS[key](key, raw)
    return values


def _check_config(config: RunConfig) -> RunConfig:
    if config.pitch <= 0:
        raise ConfigError(f"pitch: must be positive, got {config.pitch}")
    if config.jobs < 1:
        raise ConfigError(f"jobs: must be >= 1, got {config.jobs}")
    if config.min_size < 0:
        raise ConfigError(f"min_size: must be >= 0, got {config.min_size}")
    if not config.suffix_cyto or not config.suffix_nuclei:
        raise ConfigError("channel suffixes must be non-empty")
    if config.suffix_cyto == config.suffix_nuclei:
        raise ConfigError("suffix_cyto and suffix_nuclei must differ")
    if (config.root is not None and config.out is not None
            and config.out.resolve() == config.root.resolve()):
        raise ConfigError("out: output directory must be distinct from root")
    return config


def validate_config(path: Path | str) -> RunConfig:
    """Load a config file, apply defaults and validate every field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return _check_config(RunConfig(**parse_config_text(text)))


def _load_manifest(path: Path) -> BatchPlan:
    """Dataset plan from an explicit manifest CSV:
    group,image_id,cyto_path,nuclei_path[,raw_fitc[,raw_dapi]]."""
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataRootError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent

    def respath(cell: str) -> Optional[Path]:
        cell = cell.strip()
        if not cell:
            return None
        p = Path(cell)
        return p if p.is_absolute() else base / p

    groups: dict[str, list[ImageEntry]] = {}
    for row in csv.reader(lines):
        if not row or (row[0].strip().startswith("#")):
            continue
        if len(row) < 4:
            raise DataRootError(f"manifest {path}: need at least 4 columns, got {row}")
        group, image_id = row[0].strip(), row[1].strip()
        groups.setdefault(group, []).append(ImageEntry(
            image_id=image_id,
            cyto_path=respath(row[2]),
            nuclei_path=respath(row[3]),
            raw_fitc=respath(row[4]) if len(row) > 4 else None,
            raw_dapi=respath(row[5]) if len(row) > 5 else None,
        ))
    plan_groups = tuple(
        (name, tuple(sorted(groups[name], key=lambda e: e.image_id)))
        for name in sorted(groups))
    warnings = () if plan_groups else (f"manifest {path} lists no images",)
    return BatchPlan(groups=plan_groups, warnings=warnings)


# ---------------------------------------------------------------------------
# Per-image pipeline
# ---------------------------------------------------------------------------

@dataclass
class ImageOutcome:
    group: str
    image_id: str
    subject_records: list[FeatureRecord] = field(default_factory=list)
    image_record: Optional[ImageRecord] = None
    feature_row: dict[str, object] = field(default_factory=dict)
    tessellation: Optional[Tessellation] = None
    cyto: Optional[MaskFeatures] = None
    nuclei: Optional[MaskFeatures] = None
    entry: Optional[ImageEntry] = None
    width: int = 0
    height: int = 0
    warnings: list[str] = field(default_factory=list)
    failed: bool = False


def _flags(subject, multi_nucleate: bool) -> tuple[str, ...]:
    flags = []
    if subject.small:
        flags.append(FLAG_SMALL)
    if multi_nucleate:
        flags.append(FLAG_MULTI_NUCLEATE)
    if subject.roundness_clamped:
        flags.append(FLAG_CLAMPED)
    return tuple(flags)


def _mean(values: list[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _analyze_entry(group: str, entry: ImageEntry, config: RunConfig) -> ImageOutcome:
    outcome = ImageOutcome(group=group, image_id=entry.image_id, entry=entry)
    tag = f"{group}/{entry.image_id}"
    scale = PixelScale(pitch=config.pitch)
    cells_mask = load_label_mask(entry.cyto_path, Channel.CYTOPLASM, scale,
                                 strict_labels=config.strict_labels)
    nuclei_mask = load_label_mask(entry.nuclei_path, Channel.NUCLEI, scale,
                                  strict_labels=config.strict_labels)
    if cells_mask.labels.shape != nuclei_mask.labels.shape:
        raise DimensionMismatchError(
            f"{tag}: cytoplasm {cells_mask.labels.shape} vs "
            f"nuclei {nuclei_mask.labels.shape}")
    outcome.width, outcome.height = cells_mask.width, cells_mask.height

    cyto = extract_features(cells_mask, min_size=config.min_size)
    nuclei = extract_features(nuclei_mask, min_size=config.min_size)
    outcome.cyto, outcome.nuclei = cyto, nuclei
    for channel, feats in (("cytoplasm", cyto), ("nuclei", nuclei)):
        split = sorted(l for l, chains in feats.contours.items() if len(chains) > 1)
        if split:
            outcome.warnings.append(
                f"{tag}: {channel} labels stored as split components: {split}")

    pairing: Optional[PairingResult] = None
    pair_of_nucleus = {}
    pairs_of_cell: dict[int, list] = {}
    if "pairs" in config.features:
        pairing = pair_subjects(cells_mask, nuclei_mask)
        pair_of_nucleus = {p.nucleus_label: p for p in pairing.pairs}
        for p in pairing.pairs:
            pairs_of_cell.setdefault(p.cell_label, []).append(p)
        if pairing.unpaired_nuclei:
            outcome.warnings.append(
                f"{tag}: {len(pairing.unpaired_nuclei)} unpaired nuclei")
        if pairing.unpaired_cells:
            outcome.warnings.append(
                f"{tag}: {len(pairing.unpaired_cells)} cells without nucleus")

    small_cells = {f.label for f in cyto.subjects if f.small}
    small_nuclei = {f.label for f in nuclei.subjects if f.small}

    for subject in cyto.subjects:
        cell_pairs = pairs_of_cell.get(subject.label, [])
        single = cell_pairs[0] if len(cell_pairs) == 1 else None
        outcome.subject_records.append(FeatureRecord(
            group=group, image_id=entry.image_id, channel=Channel.CYTOPLASM.value,
            label=subject.label, area_px=subject.area_px, area_um2=subject.area_um2,
            perimeter_um=subject.perimeter_um, roundness=subject.roundness,
            centroid_x_px=subject.centroid_px[0], centroid_y_px=subject.centroid_px[1],
            paired_label=single.nucleus_label if single else None,
            ratio=single.ratio if single else None,
            flags=_flags(subject, len(cell_pairs) > 1)))
    for subject in nuclei.subjects:
        pair = pair_of_nucleus.get(subject.label)
        outcome.subject_records.append(FeatureRecord(
            group=group, image_id=entry.image_id, channel=Channel.NUCLEI.value,
            label=subject.label, area_px=subject.area_px, area_um2=subject.area_um2,
            perimeter_um=subject.perimeter_um, roundness=subject.roundness,
            centroid_x_px=subject.centroid_px[0], centroid_y_px=subject.centroid_px[1],
            paired_label=pair.cell_label if pair else None,
            ratio=pair.ratio if pair else None,
            flags=_flags(subject, bool(pair and pair.multi_nucleate))))

    clamps = sum(1 for f in (*cyto.subjects, *nuclei.subjects) if f.roundness_clamped)
    if clamps:
        outcome.warnings.append(f"{tag}: {clamps} roundness values clamped to 1.0")
    smalls = len(small_cells) + len(small_nuclei)
    if smalls:
        outcome.warnings.append(
            f"{tag}: {smalls} subjects below {config.min_size} px excluded from aggregates")

    summary = summarize_image(cyto.subjects, nuclei.subjects, scale,
                              cells_mask.width, cells_mask.height)

    entropy = None
    mean_csm = None
    if "voronoi" in config.features:
        seeds = [f.centroid_um for f in nuclei.subjects if not f.small]
        if not seeds:
            outcome.warnings.append(f"{tag}: no nuclei seeds, Voronoi metrics skipped")
        else:
            bounds = Rect(0.0, 0.0, cells_mask.width * scale.pitch,
                          cells_mask.height * scale.pitch)
            try:
                tess = build_voronoi(seeds, bounds)
            except GeometryError as exc:
                # e.g. coinciding centroids of ring-shaped nuclei; keep the
                # shape features and drop only the spatial-order metrics
                outcome.warnings.append(f"{tag}: Voronoi metrics skipped ({exc})")
            else:
                outcome.tessellation = tess
                _, entropy = voronoi_entropy(tess)
                mean_csm = image_csm(tess)
                if entropy is None:
                    outcome.warnings.append(f"{tag}: no interior Voronoi cells, "
                                            f"entropy/CSM undefined")
                elif tess.n_interior < MIN_CONFIDENT_INTERIOR:
                    outcome.warnings.append(
                        f"{tag}: only {tess.n_interior} interior Voronoi cells, "
                        f"entropy/CSM low-confidence")
    summary = replace(summary, voronoi_entropy=entropy, mean_csm=mean_csm)

    outcome.image_record = ImageRecord(
        group=group, image_id=entry.image_id,
        n_cells=summary.n_cells, n_nuclei=summary.n_nuclei,
        coverage_cells=summary.coverage_cells, coverage_nuclei=summary.coverage_nuclei,
        density_per_mm2=summary.density_per_mm2,
        voronoi_entropy=summary.voronoi_entropy, mean_csm=summary.mean_csm)

    active_cells = [f for f in cyto.subjects if not f.small]
    active_nuclei = [f for f in nuclei.subjects if not f.small]
    ratios = [p.ratio for p in (pairing.pairs if pairing else ())
              if p.cell_label not in small_cells and p.nucleus_label not in small_nuclei]
    outcome.feature_row = {
        "group": group,
        "image_id": entry.image_id,
        "cell_area_um2": _mean([f.area_um2 for f in active_cells]),
        "cell_roundness": _mean([f.roundness for f in active_cells]),
        "coverage_cells": summary.coverage_cells,
        "nucleus_area_um2": _mean([f.area_um2 for f in active_nuclei]),
        "nucleus_roundness": _mean([f.roundness for f in active_nuclei]),
        "coverage_nuclei": summary.coverage_nuclei,
        "ratio": _mean(ratios),
        "voronoi_entropy": summary.voronoi_entropy,
        "mean_csm": summary.mean_csm,
        "density_per_mm2": summary.density_per_mm2,
        "n_cells": summary.n_cells,
        "n_nuclei": summary.n_nuclei,
    }
    return outcome


@dataclass(frozen=True)
class RunResult:
    """What a batch run produced."""

    out_dir: Path
    images_processed: int
    images_failed: int
    warnings: tuple[str, ...]


def run_batch(config: RunConfig) -> RunResult:
    """Execute the full workflow and write all report files.

    Per-image failures become warnings and leave every other image intact;
    configuration and root I/O problems raise and abort before any output.
    """
    config = _check_config(config)
    if config.root is None:
        raise ConfigError("root: dataset root is required")
    if config.out is None:
        raise ConfigError("out: output directory is required")
    if config.manifest is not None:
        plan = _load_manifest(config.manifest)
    else:
        plan = discover_dataset(config.root, config.suffix_cyto, config.suffix_nuclei)
    try:
        config.out.mkdir(parents=True, exist_ok=True)
        probe = config.out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise DataRootError(f"output directory {config.out} is not writable: {exc}") from exc

    warnings: list[str] = list(plan.warnings)
    entries = list(plan.iter_entries())

    def work(item: tuple[str, ImageEntry]) -> ImageOutcome:
        group, entry = item
        try:
            return _analyze_entry(group, entry, config)
        except (CellmorphError, OSError) as exc:
            failed = ImageOutcome(group=group, image_id=entry.image_id, failed=True)
            failed.warnings.append(f"{group}/{entry.image_id}: skipped ({exc})")
            return failed

    if config.jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(work, entries))
    else:
        outcomes = [work(item) for item in entries]

    outcomes.sort(key=lambda o: (o.group, o.image_id))
    for outcome in outcomes:
        warnings.extend(outcome.warnings)

    processed = [o for o in outcomes if not o.failed]
    subject_records = [r for o in processed for r in o.subject_records]
    image_records = [o.image_record for o in processed if o.image_record is not None]
    feature_rows = [o.feature_row for o in processed if o.feature_row]

    write_subject_csv(subject_records, config.out / "subjects.csv")
    write_image_csv(image_records, config.out / "images.csv")

    group_stats = []
    anova_results = []
    for feature in IMAGE_FEATURES:
        stats = summarize_groups(feature_rows, feature) if feature_rows else []
        group_stats.extend(stats)
        usable = [(s.group, [float(row[feature]) for row in feature_rows
                             if row["group"] == s.group and row[feature] is not None])
                  for s in stats]
        dropped = [g for g, values in usable if len(values) < 2]
        if dropped:
            warnings.append(f"anova[{feature}]: groups with <2 samples excluded: "
                            f"{sorted(dropped)}")
        samples = [values for _, values in usable if len(values) >= 2]
        if len(samples) >= 2:
            anova_results.append(one_way_anova(samples, feature=feature))
        else:
            warnings.append(f"anova[{feature}]: fewer than 2 usable groups, skipped")
    write_group_csv(group_stats, config.out / "groups.csv")
    write_anova_csv(anova_results, config.out / "anova.csv")

    figures = config.out / "figures"
    for outcome in processed:
        stem_dir = figures / outcome.group
        stem_dir.mkdir(parents=True, exist_ok=True)
        if outcome.tessellation is not None:
            render_voronoi_svg(outcome.tessellation,
                               stem_dir / f"{outcome.image_id}_voronoi.svg")
        if outcome.cyto is not None and outcome.entry is not None:
            render_overlay_svg(outcome.cyto, outcome.nuclei,
                               outcome.width, outcome.height,
                               stem_dir / f"{outcome.image_id}_overlay.svg",
                               raw_fitc=outcome.entry.raw_fitc,
                               raw_dapi=outcome.entry.raw_dapi)

    log_lines = [f"images processed: {len(processed)}",
                 f"images failed: {len(outcomes) - len(processed)}",
                 f"warnings: {len(warnings)}"]
    log_lines.extend(warnings)
    (config.out / "run_log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    return RunResult(out_dir=config.out, images_processed=len(processed),
                     images_failed=len(outcomes) - len(processed),
                     warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Command line interface
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellmorph",
        description="Batch morphometry of segmented cell images.")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="run the full batch workflow")
    analyze.add_argument("--root", type=Path, help="dataset root directory")
    analyze.add_argument("--out", type=Path, help="output directory")
    analyze.add_argument("--config", type=Path, help="key = value config file")
    analyze.add_argument("--pitch", type=float, help="pixel pitch in um/px")
    analyze.add_argument("--jobs", type=int, help="parallel image workers")
    analyze.add_argument("--strict-labels", action="store_const", const=True,
                         dest="strict_labels",
                         help="reject labels stored as split components")
    analyze.add_argument("--min-size", type=int, dest="min_size",
                         help="subjects below this pixel area are flagged")

    validate = sub.add_parser("validate", help="validate a config file")
    validate.add_argument("--config", type=Path, required=True)

    sub.add_parser("version", help="print the package version")
    return parser


def _merge_cli(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for key in ("root", "out", "pitch", "jobs", "strict_labels", "min_size"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return _check_config(replace(config, **overrides))


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "version":
            print(f"cellmorph {__version__}")
            return 0
        if args.command == "validate":
            config = validate_config(args.config)
            print(f"config OK: {args.config}")
            for key in ("root", "out", "pitch", "suffix_cyto", "suffix_nuclei",
                        "min_size", "strict_labels", "jobs", "manifest"):
                print(f"  {key} = {getattr(config, key)}")
            print(f"  features = {','.join(sorted(config.features))}")
            return 0
        # analyze
        config = validate_config(args.config) if args.config else RunConfig()
        config = _merge_cli(config, args)
        result = run_batch(config)
        print(f"processed {result.images_processed} images "
              f"({result.images_failed} failed), "
              f"{len(result.warnings)} warnings -> {result.out_dir}")
        if result.warnings:
            print(f"see {result.out_dir / 'run_log.txt'}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataRootError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

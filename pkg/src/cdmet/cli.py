"""Batch command-line front end.

Exit codes: 0 success, 1 any per-file failure, 2 usage or config error.
Reports are written atomically with fixed 6-decimal floats, so identical
inputs produce byte-identical output trees regardless of ``--jobs``.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluate, fresnel, merged, raster, srg, synth, transitions
from .config import ConfigError, RunConfig, build_run_config, parse_config_file
from .reportio import atomic_write_bytes, atomic_write_text, dump_csv, dump_json, fmt6
from .srg import Calibration

SUBCOMMANDS = (
    "srg",
    "fresnel",
    "ellipse",
    "merged",
    "islands",
    "mesh",
    "iou",
    "correlate",
    "synth",
    "overlay",
    "transitions",
)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--out-dir", type=Path, default=None, help="output directory (default .)")
    parser.add_argument("--nm-per-px-x", type=float, default=None, help="x calibration (default 1.0)")
    parser.add_argument("--nm-per-px-y", type=float, default=None, help="y calibration (default 1.0)")
    parser.add_argument("--threshold", type=int, default=None, help="binarization threshold (default 128)")
    parser.add_argument("--min-area", type=int, default=None, help="cleanup area in px (default 0)")
    parser.add_argument("--jump-threshold", type=float, default=None, help="bin jump size in px (default 5)")
    parser.add_argument("--mid-fraction", type=float, default=None, help="mid-row depth fraction (default 0.5)")
    parser.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")
    parser.add_argument("--figures", dest="figures", action="store_true", default=None, help="render figures (default on)")
    parser.add_argument("--no-figures", dest="figures", action="store_false", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdmet",
        description="Critical-dimension metrology from segmentation masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        _common_flags(p)
        return p

    p = add("srg", "extract SRG CDs from binary masks")
    p.add_argument("masks", nargs="+", type=Path)
    p.add_argument("--overlay", action="store_true", help="write contour overlay PNGs")
    p.add_argument("--image-dir", type=Path, default=None, help="originals for overlays (default: render the mask)")

    p = add("fresnel", "extract Fresnel bin depths")
    p.add_argument("masks", nargs="+", type=Path)
    p.add_argument("--bins", default=None, help="explicit bin ranges 'c0-c1,c2-c3,...' (skips detection)")

    p = add("ellipse", "fit isolated grating units with ellipses")
    p.add_argument("masks", nargs="+", type=Path)

    p = add("merged", "recover unit ellipses of merged columns")
    p.add_argument("masks", nargs="+", type=Path)

    p = add("islands", "recover unit ellipses of dog-bone islands")
    p.add_argument("masks", nargs="+", type=Path)

    p = add("mesh", "stitch a slice stack into an OBJ mesh")
    p.add_argument("manifest", type=Path, help="lines of '<z_nm> <mask path>' or 'z_step = <nm>' + paths")
    p.add_argument("--name", default=None, help="output stem (default: manifest stem)")
    p.add_argument("--max-points", type=int, default=512, help="resampling cap per contour ring")

    p = add("iou", "evaluate predicted vs truth masks")
    p.add_argument("manifest", type=Path, help="CSV with columns pred,truth,class")

    p = add("correlate", "regress extracted CDs against manual values")
    p.add_argument("manual", type=Path, help="CSV with columns id,cd,value")
    p.add_argument("extracted", type=Path, help="CSV with columns id,cd,value")

    p = add("synth", "generate synthetic masks with ground-truth sidecars")
    p.add_argument("spec", type=Path, help="spec config file (type = srg | fresnel | grating)")
    p.add_argument("--name", default=None, help="output stem (default: spec file stem)")
    p.add_argument("--mask-format", choices=("png", "pgm"), default="png")
    p.add_argument("--flip-prob", type=float, default=0.0, help="salt-and-pepper noise probability")

    p = add("overlay", "paint mask contours onto an image")
    p.add_argument("image", type=Path)
    p.add_argument("mask", type=Path)

    p = add("transitions", "debug dump of transition points as CSV")
    p.add_argument("masks", nargs="+", type=Path)

    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict[str, str] = {}
    if args.config is not None:
        file_values = parse_config_file(args.config)
    cli_values = {
        "nm_per_px_x": args.nm_per_px_x,
        "nm_per_px_y": args.nm_per_px_y,
        "threshold": args.threshold,
        "min_area": args.min_area,
        "jump_threshold": args.jump_threshold,
        "mid_fraction": args.mid_fraction,
        "out_dir": args.out_dir,
        "jobs": args.jobs,
        "figures": args.figures,
    }
    return build_run_config(file_values, cli_values)


def _calib(cfg: RunConfig) -> Calibration:
    return Calibration(nm_per_px_x=cfg.nm_per_px_x, nm_per_px_y=cfg.nm_per_px_y)


def _load_mask(path: Path, cfg: RunConfig) -> np.ndarray:
    return raster.binarize(raster.load_gray(path), cfg.threshold)


def _map_batch(items: list, worker, jobs: int) -> list[tuple[object, object | None, str | None]]:
    """Run worker over items, preserving input order; errors become strings."""

    def safe(item):
        try:
            return worker(item), None
        except Exception as exc:  # per-file isolation by design
            return None, f"{item}: {exc}"

    if jobs <= 1:
        results = [safe(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, items))
    return [(item, res, err) for item, (res, err) in zip(items, results)]


def _report_errors(errors: list[str]) -> int:
    for message in errors:
        print(f"error: {message}", file=sys.stderr)
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_srg(args: argparse.Namespace, cfg: RunConfig) -> int:
    calib = _calib(cfg)
    out = cfg.out_dir

    def worker(path: Path):
        mask = _load_mask(path, cfg)
        return mask, srg.extract_srg(mask, calib, cfg.min_area, cfg.mid_fraction)

    rows = []
    errors = []
    for path, result, err in _map_batch(list(args.masks), worker, cfg.jobs):
        if err is not None:
            errors.append(err)
            continue
        mask, report = result
        stem = Path(path).stem
        dump_json(report.as_dict(), out / f"{stem}.srg.json")
        pitch_after = {i: p for i, p in enumerate(report.pitches)}
        for idx, tooth in enumerate(report.teeth):
            rows.append(
                [
                    stem,
                    tooth.tooth_id,
                    tooth.mid_thickness,
                    tooth.left_slant,
                    tooth.right_slant,
                    tooth.depth,
                    fmt6(pitch_after[idx]) if idx in pitch_after else "",
                    report.etch_depth,
                ]
            )
        if cfg.figures:
            from . import figures

            figures.srg_report_plot(report, out / f"{stem}.srg.png")
        if args.overlay:
            base = (
                raster.load_gray(args.image_dir / Path(path).name)
                if args.image_dir is not None
                else np.where(mask, 255, 0).astype(np.uint8)
            )
            cleaned = raster.clean(mask, cfg.min_area)
            contours = [raster.trace_contour(cleaned, c) for c in raster.connected_components(cleaned)]
            rgb = evaluate.overlay(base, contours)
            _write_png(rgb, out / f"{stem}.overlay.png")

    dump_csv(
        rows,
        ["image", "tooth_id", "mid_thickness_nm", "left_slant_deg", "right_slant_deg", "depth_nm", "pitch_after_nm", "etch_depth_nm"],
        out / "srg_report.csv",
    )
    return _report_errors(errors)


def cmd_fresnel(args: argparse.Namespace, cfg: RunConfig) -> int:
    calib = _calib(cfg)
    out = cfg.out_dir
    explicit_bins = _parse_bin_ranges(args.bins) if args.bins else None

    def worker(path: Path):
        mask = raster.clean(_load_mask(path, cfg), cfg.min_area)
        profile = fresnel.surface_profile(mask)
        bins = explicit_bins or fresnel.detect_bins(profile, cfg.jump_threshold)
        return profile, fresnel.bin_depths(profile, bins, calib)

    rows = []
    errors = []
    for path, result, err in _map_batch(list(args.masks), worker, cfg.jobs):
        if err is not None:
            errors.append(err)
            continue
        profile, report = result
        stem = Path(path).stem
        dump_json(report.as_dict(), out / f"{stem}.fresnel.json")
        for b in report.bins:
            rows.append([stem, b["bin_id"], b["col_start"], b["col_end"], b["depth_nm"]])
        if cfg.figures:
            from . import figures

            figures.fresnel_profile_plot(profile, report, out / f"{stem}.fresnel.png")

    dump_csv(rows, ["image", "bin_id", "col_start", "col_end", "depth_nm"], out / "fresnel_report.csv")
    return _report_errors(errors)


def _parse_bin_ranges(text: str) -> list[tuple[int, int]]:
    try:
        ranges = []
        for token in text.split(","):
            lo, _, hi = token.partition("-")
            ranges.append((int(lo), int(hi)))
        return ranges
    except ValueError:
        raise ConfigError(f"bad --bins value: {text!r} (expected 'c0-c1,c2-c3')") from None


def cmd_ellipse(args: argparse.Namespace, cfg: RunConfig) -> int:
    from .ellipse import ellipse_from_contour

    calib = _calib(cfg)
    nm = (cfg.nm_per_px_x, cfg.nm_per_px_y)
    out = cfg.out_dir

    def worker(path: Path):
        mask = raster.clean(_load_mask(path, cfg), cfg.min_area)
        comps = raster.connected_components(mask)
        if not comps:
            raise ValueError("no components found")
        records = []
        ellipses = []
        for comp in comps:
            params, quality = ellipse_from_contour(raster.trace_contour(mask, comp))
            record = {"component": comp.id}
            record.update(params.as_dict(nm))
            record["rms"] = quality.rms_residual
            record["points"] = quality.point_count
            records.append(record)
            ellipses.append(params)
        return mask, records, ellipses

    rows = []
    errors = []
    for path, result, err in _map_batch(list(args.masks), worker, cfg.jobs):
        if err is not None:
            errors.append(err)
            continue
        mask, records, ellipses = result
        stem = Path(path).stem
        dump_json({"image": stem, "calibration": calib.as_dict(), "ellipses": records}, out / f"{stem}.ellipse.json")
        for r in records:
            rows.append([stem, r["component"], r["center_px"][0], r["center_px"][1], r["a_px"], r["b_px"], r["theta_deg"], r["rms"]])
        if cfg.figures:
            from . import figures

            figures.ellipse_overlay_plot(mask, ellipses, out / f"{stem}.ellipse.png")

    dump_csv(rows, ["image", "component", "center_x_px", "center_y_px", "a_px", "b_px", "theta_deg", "rms"], out / "ellipse_report.csv")
    return _report_errors(errors)


def _units_command(args: argparse.Namespace, cfg: RunConfig, kind: str) -> int:
    calib = _calib(cfg)
    nm = (cfg.nm_per_px_x, cfg.nm_per_px_y)
    out = cfg.out_dir

    def worker(path: Path):
        mask = _load_mask(path, cfg)
        if kind == "merged":
            units = merged.fit_merged_column(mask, calib, cfg.min_area, cfg.noise_floor)
        else:
            units = merged.fit_island_ellipses(mask, calib, cfg.min_area)
        return mask, units

    errors = []
    for path, result, err in _map_batch(list(args.masks), worker, cfg.jobs):
        if err is not None:
            errors.append(err)
            continue
        mask, units = result
        stem = Path(path).stem
        records = []
        for u in units:
            record: dict = {}
            if u.cell is not None:
                record["cell"] = list(u.cell)
            if u.component is not None:
                record["component"] = u.component
            if u.bundle is not None:
                record["bundle"] = u.bundle
            record.update(u.params.as_dict(nm))
            record["rms"] = u.quality.rms_residual
            record["points"] = u.quality.point_count
            records.append(record)
        dump_json(
            {"image": stem, "calibration": calib.as_dict(), "units": records},
            out / f"{stem}.{kind}.json",
        )
        if cfg.figures:
            from . import figures

            figures.ellipse_overlay_plot(mask, [u.params for u in units], out / f"{stem}.{kind}.png")
    return _report_errors(errors)


def cmd_mesh(args: argparse.Namespace, cfg: RunConfig) -> int:
    calib = _calib(cfg)
    slices = []
    try:
        entries = _parse_mesh_manifest(args.manifest)
        for z, mask_path in entries:
            mask = raster.clean(_load_mask(mask_path, cfg), cfg.min_area)
            comps = raster.connected_components(mask)
            if not comps:
                raise ValueError(f"{mask_path}: no components found")
            largest = max(comps, key=lambda c: c.area)
            contour = raster.trace_contour(mask, largest)
            slices.append(fresnel.Slice(z=z, points=contour.astype(float)))
        mesh = fresnel.build_mesh(slices, calib, max_points=args.max_points)
    except (OSError, ValueError) as exc:
        return _report_errors([f"{args.manifest}: {exc}"])

    name = args.name or args.manifest.stem
    atomic_write_text(cfg.out_dir / f"{name}.obj", fresnel.obj_text(mesh))
    return 0


def _parse_mesh_manifest(path: Path) -> list[tuple[float, Path]]:
    if not path.exists():
        raise ValueError("manifest not found")
    z_step = None
    entries: list[tuple[float | None, Path]] = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("z_step"):
            z_step = float(line.partition("=")[2])
            continue
        parts = line.split(None, 1)
        if len(parts) == 2:
            try:
                z = float(parts[0])
                entries.append((z, path.parent / parts[1]))
                continue
            except ValueError:
                pass
        entries.append((None, path.parent / line))
    out = []
    for index, (z, mask_path) in enumerate(entries):
        if z is None:
            if z_step is None:
                raise ValueError("manifest needs per-line z values or a z_step key")
            z = index * z_step
        out.append((z, mask_path))
    return out


def cmd_iou(args: argparse.Namespace, cfg: RunConfig) -> int:
    pairs = []
    try:
        for lineno, raw in enumerate(args.manifest.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or (lineno == 1 and line.lower().startswith("pred")):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) < 2:
                raise ValueError(f"line {lineno}: expected pred,truth[,class]")
            class_id = int(cells[2]) if len(cells) > 2 and cells[2] else 0
            base = args.manifest.parent
            pairs.append((base / cells[0], base / cells[1], class_id))
    except (OSError, ValueError) as exc:
        return _report_errors([f"{args.manifest}: {exc}"])

    records, summary, errors = evaluate.iou_batch(pairs, cfg.threshold)
    rows = [
        [r.image_id, r.class_id, r.intersection, r.union, r.iou, int(r.vacuous)]
        for r in records
    ]
    dump_csv(rows, ["image", "class", "intersection", "union", "iou", "vacuous"], cfg.out_dir / "iou_records.csv")
    dump_json({"per_class": summary.as_dict(), "errors": errors}, cfg.out_dir / "iou_summary.json")
    if cfg.figures and summary.per_class:
        from . import figures

        figures.iou_boxplot(summary.per_class, cfg.out_dir / "iou_box.png")
    return _report_errors(errors)


def _read_cd_csv(path: Path) -> dict[str, list[tuple[str, float]]]:
    by_cd: dict[str, list[tuple[str, float]]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or (lineno == 1 and line.lower().startswith("id")):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 3:
            raise ValueError(f"{path}:{lineno}: expected id,cd,value")
        by_cd.setdefault(cells[1], []).append((cells[0], float(cells[2])))
    return by_cd


def cmd_correlate(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        manual = _read_cd_csv(args.manual)
        extracted = _read_cd_csv(args.extracted)
    except (OSError, ValueError) as exc:
        return _report_errors([str(exc)])

    reports = []
    errors = []
    for cd_name in sorted(set(manual) | set(extracted)):
        if cd_name not in manual or cd_name not in extracted:
            errors.append(f"{cd_name}: present in only one input")
            continue
        try:
            report = evaluate.correlate(manual[cd_name], extracted[cd_name], cd_name=cd_name)
        except ValueError as exc:
            errors.append(f"{cd_name}: {exc}")
            continue
        reports.append(report)
        if cfg.figures:
            from . import figures

            matched = [i for i, _ in manual[cd_name] if i in dict(extracted[cd_name])]
            man = np.array([dict(manual[cd_name])[i] for i in matched])
            ext = np.array([dict(extracted[cd_name])[i] for i in matched])
            figures.correlation_plot(man, ext, report, cfg.out_dir / f"correlation_{cd_name}.png")

    dump_json({"reports": [r.as_dict() for r in reports], "errors": errors}, cfg.out_dir / "correlation.json")
    return _report_errors(errors)


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        values = parse_config_file(args.spec)
        spec = synth.spec_from_config(values)
        mask, truth = synth.generate(spec)
        if args.flip_prob:
            mask = synth.add_noise(mask, args.flip_prob, spec.seed)
            truth["flip_prob"] = args.flip_prob
    except (ConfigError, ValueError) as exc:
        return _report_errors([f"{args.spec}: {exc}"])

    name = args.name or args.spec.stem
    mask_path = cfg.out_dir / f"{name}.{args.mask_format}"
    _write_mask_atomic(mask, mask_path)
    dump_json(truth, cfg.out_dir / f"{name}.truth.json")
    print(mask_path)
    return 0


def cmd_overlay(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        img = raster.load_gray(args.image)
        mask = raster.clean(_load_mask(args.mask, cfg), cfg.min_area)
        contours = [raster.trace_contour(mask, c) for c in raster.connected_components(mask)]
        rgb = evaluate.overlay(img, contours)
    except (OSError, ValueError) as exc:
        return _report_errors([f"{args.mask}: {exc}"])
    _write_png(rgb, cfg.out_dir / f"{Path(args.image).stem}.overlay.png")
    return 0


def cmd_transitions(args: argparse.Namespace, cfg: RunConfig) -> int:
    errors = []
    for path in args.masks:
        try:
            mask = _load_mask(path, cfg)
            points = transitions.find_transition_points(mask)
        except (OSError, ValueError) as exc:
            errors.append(f"{path}: {exc}")
            continue
        rows = [
            [p.pos[0], p.pos[1], "|".join(s for s in transitions.SIDES if s in p.sides)]
            for p in points
        ]
        dump_csv(rows, ["col", "row", "sides"], cfg.out_dir / f"{Path(path).stem}.transitions.csv")
    return _report_errors(errors)


def _write_png(rgb: np.ndarray, path: Path) -> None:
    import io

    from PIL import Image

    buffer = io.BytesIO()
    Image.fromarray(rgb).save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())


def _write_mask_atomic(mask: np.ndarray, path: Path) -> None:
    import io

    from PIL import Image

    data = np.where(mask, 255, 0).astype(np.uint8)
    if path.suffix.lower() == ".pgm":
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
        atomic_write_bytes(path, header + data.tobytes())
        return
    buffer = io.BytesIO()
    Image.fromarray(data).save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())


_HANDLERS = {
    "srg": cmd_srg,
    "fresnel": cmd_fresnel,
    "ellipse": cmd_ellipse,
    "merged": lambda a, c: _units_command(a, c, "merged"),
    "islands": lambda a, c: _units_command(a, c, "islands"),
    "mesh": cmd_mesh,
    "iou": cmd_iou,
    "correlate": cmd_correlate,
    "synth": cmd_synth,
    "overlay": cmd_overlay,
    "transitions": cmd_transitions,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""
Chamfer-distance tables and cumulative error curves over restoration results.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.observability.emitter import emit_warning
from core.runtime.errors import MissingArtifactError, ParameterError
from core.schemas.contracts import EvalRecord, InstanceResult, MethodTag
from workers.restore.worker import load_result

RUNTIME = "evaluate"
DISPLAY_SCALE = 1e4
METHOD_ORDER = {tag: i for i, tag in enumerate(MethodTag)}
REPORT_COLUMNS = ["class", "method", "statistic", "cd_x1e4", "n", "outlier_dominated"]
SVG_WIDTH, SVG_HEIGHT, SVG_PAD = 640, 400, 48
SVG_COLORS = {MethodTag.INFERENCE_ONLY: "#1f77b4", MethodTag.WITH_TTT: "#d62728", MethodTag.BASELINE: "#7f7f7f"}


@dataclass(frozen=True)
class MethodSummary:
    class_name: str
    method: MethodTag
    n: int
    mean: float
    median: float
    restoration_mean: Optional[float] = None
    restoration_median: Optional[float] = None
    outlier_ratio: float = 3.0

    @property
    def outlier_dominated(self) -> bool:
        """Mean more than ``outlier_ratio`` times the median."""
        if self.median == 0:
            return self.mean > 0
        return self.mean / self.median > self.outlier_ratio


@dataclass(frozen=True)
class CumulativeCurve:
    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self) -> None:
        if len(self.thresholds) != len(self.fractions) or len(self.thresholds) == 0:
            raise ParameterError("curve needs matching, non-empty thresholds and fractions")


def record_from_result(result: InstanceResult) -> EvalRecord:
    return EvalRecord(
        instance_id=result.instance_id,
        class_name=result.class_name,
        method=result.method,
        cd=result.cd_complete,
        cd_restoration=result.cd_restoration,
        wall_seconds=float(sum(result.timings.values())),
    )


def load_records(results_dir: Path) -> List[EvalRecord]:
    """Every ``<method>/<instance>/result.json`` under ``results_dir``, sorted by method then id."""
    root = Path(results_dir)
    if not root.is_dir():
        raise MissingArtifactError(root, "results directory")
    records = []
    for path in sorted(root.glob("*/*/result.json")):
        records.append(record_from_result(load_result(path)))
    return sorted(records, key=lambda r: (r.class_name, METHOD_ORDER[r.method], r.instance_id))


def _median(values: np.ndarray) -> float:
    # np.median averages the two middle values for even counts
    return float(np.median(values))


def aggregate(
    records: Iterable[EvalRecord],
    *,
    classes: Optional[Sequence[str]] = None,
    methods: Optional[Sequence[MethodTag]] = None,
    outlier_ratio: float = 3.0,
) -> List[MethodSummary]:
    """Mean and median CD per (class, method); requested groups with no records are omitted."""
    groups: Dict[Tuple[str, MethodTag], List[EvalRecord]] = {}
    for record in records:
        groups.setdefault((record.class_name, record.method), []).append(record)
    wanted = set(groups)
    if classes is not None or methods is not None:
        class_set = classes if classes is not None else sorted({c for c, _ in groups})
        method_set = methods if methods is not None else sorted({m for _, m in groups}, key=METHOD_ORDER.get)
        wanted = {(c, m) for c in class_set for m in method_set}
    summaries = []
    for key in sorted(wanted, key=lambda k: (k[0], METHOD_ORDER[k[1]])):
        members = groups.get(key, [])
        if not members:
            emit_warning(runtime=RUNTIME, event_type="empty_group", payload={"class": key[0], "method": key[1].value})
            continue
        cds = np.array([r.cd for r in members], dtype=np.float64)
        restoration = np.array([r.cd_restoration for r in members if r.cd_restoration is not None], dtype=np.float64)
        summaries.append(
            MethodSummary(
                class_name=key[0],
                method=key[1],
                n=len(members),
                mean=float(cds.mean()),
                median=_median(cds),
                restoration_mean=float(restoration.mean()) if restoration.size else None,
                restoration_median=_median(restoration) if restoration.size else None,
                outlier_ratio=outlier_ratio,
            )
        )
    return summaries


def cumulative_curve(values: Iterable[float], n_thresholds: int = 50) -> CumulativeCurve:
    """Fraction of instances with CD <= t at log-spaced thresholds t from min to max."""
    cds = np.sort(np.asarray(list(values), dtype=np.float64))
    if cds.size == 0:
        raise ParameterError("cumulative curve needs at least one record")
    if n_thresholds < 2:
        raise ParameterError("cumulative curve needs at least two thresholds")
    lo, hi = float(cds[0]), float(cds[-1])
    if lo == hi:
        thresholds = np.array([hi])
    else:
        positive = cds[cds > 0]
        start = float(positive[0]) if lo <= 0 else lo
        thresholds = np.geomspace(start, hi, n_thresholds)
        if lo <= 0:
            thresholds = np.concatenate([[lo], thresholds])
    fractions = np.searchsorted(cds, thresholds, side="right") / cds.size
    return CumulativeCurve(thresholds=thresholds, fractions=fractions)


def curves_by_class(records: Sequence[EvalRecord], n_thresholds: int = 50) -> Dict[str, Dict[MethodTag, CumulativeCurve]]:
    out: Dict[str, Dict[MethodTag, CumulativeCurve]] = {}
    for record in records:
        out.setdefault(record.class_name, {})
    for class_name in out:
        for method in MethodTag:
            cds = [r.cd for r in records if r.class_name == class_name and r.method is method]
            if cds:
                out[class_name][method] = cumulative_curve(cds, n_thresholds)
    return out


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value * DISPLAY_SCALE:.6f}"


def _write_csv(path: Path, rows: List[Dict[str, str]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def _svg(class_name: str, curves: Dict[MethodTag, CumulativeCurve]) -> str:
    xs = np.concatenate([c.thresholds for c in curves.values()])
    xs = xs[xs > 0]
    lo = float(np.log10(xs.min())) if xs.size else -6.0
    hi = float(np.log10(xs.max())) if xs.size else 0.0
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    plot_w, plot_h = SVG_WIDTH - 2 * SVG_PAD, SVG_HEIGHT - 2 * SVG_PAD

    def sx(t: float) -> float:
        v = np.log10(t) if t > 0 else lo
        return SVG_PAD + plot_w * (v - lo) / (hi - lo)

    def sy(f: float) -> float:
        return SVG_HEIGHT - SVG_PAD - plot_h * f

    rows = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f"  <title>Cumulative Chamfer distance: {class_name}</title>",
        f'  <rect x="{SVG_PAD}" y="{SVG_PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000000"/>',
        f'  <text x="{SVG_WIDTH / 2:.1f}" y="{SVG_HEIGHT - 12}" text-anchor="middle" font-size="12">CD (log scale)</text>',
        f'  <text x="14" y="{SVG_HEIGHT / 2:.1f}" font-size="12" transform="rotate(-90 14 {SVG_HEIGHT / 2:.1f})">fraction of instances</text>',
    ]
    for decade in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        x = sx(10.0**decade)
        rows.append(f'  <text x="{x:.2f}" y="{SVG_HEIGHT - SVG_PAD + 16}" text-anchor="middle" font-size="10">1e{decade}</text>')
    for i, (method, curve) in enumerate(sorted(curves.items(), key=lambda kv: METHOD_ORDER[kv[0]])):
        # step function: flat from the left edge at 0, jumps at each threshold
        points = [(SVG_PAD, sy(0.0))]
        for t, f in zip(curve.thresholds, curve.fractions):
            x = sx(float(t))
            points.append((x, points[-1][1]))
            points.append((x, sy(float(f))))
        points.append((SVG_PAD + plot_w, points[-1][1]))
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        rows.append(f'  <polyline fill="none" stroke="{SVG_COLORS[method]}" stroke-width="2" points="{coords}"><title>{method.value}</title></polyline>')
        rows.append(
            f'  <text x="{SVG_PAD + 8}" y="{SVG_PAD + 16 + 14 * i}" font-size="11" fill="{SVG_COLORS[method]}">{method.value}</text>'
        )
    rows.append("</svg>")
    return "\n".join(rows) + "\n"


def render_report(
    summaries: Sequence[MethodSummary],
    curves: Dict[str, Dict[MethodTag, CumulativeCurve]],
    path: Path,
) -> List[Path]:
    """Write ``report.csv``, ``report_restoration.csv`` and one ``curves_<class>.svg`` per class."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    primary, restoration = [], []
    for s in summaries:
        flag = "yes" if s.outlier_dominated else "no"
        for statistic, value in (("mean", s.mean), ("median", s.median)):
            primary.append(
                {"class": s.class_name, "method": s.method.value, "statistic": statistic, "cd_x1e4": _fmt(value), "n": str(s.n), "outlier_dominated": flag}
            )
        if s.restoration_mean is not None:
            for statistic, value in (("restoration_mean", s.restoration_mean), ("restoration_median", s.restoration_median)):
                restoration.append(
                    {"class": s.class_name, "method": s.method.value, "statistic": statistic, "cd_x1e4": _fmt(value), "n": str(s.n), "outlier_dominated": flag}
                )
    written = [_write_csv(root / "report.csv", primary), _write_csv(root / "report_restoration.csv", restoration)]
    for class_name in sorted(curves):
        if not curves[class_name]:
            continue
        svg_path = root / f"curves_{class_name}.svg"
        svg_path.write_text(_svg(class_name, curves[class_name]), encoding="utf-8")
        written.append(svg_path)
    return written


def evaluate_results(results_dir: Path, out_dir: Path, *, n_thresholds: int = 50, outlier_ratio: float = 3.0) -> List[MethodSummary]:
    records = load_records(results_dir)
    summaries = aggregate(records, outlier_ratio=outlier_ratio)
    render_report(summaries, curves_by_class(records, n_thresholds), out_dir)
    return summaries

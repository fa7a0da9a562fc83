# hazelab display - Metric tables as CSV and aligned text

from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import pandas as pd
from tabulate import tabulate

from .models import MetricsReport

# Published full-scale numbers, for side-by-side comparison only.
PUBLISHED_BENCHMARKS: Dict[str, Dict[str, Tuple[float, float]]] = {
    "DCP": {"SOTS": (18.38, 0.819), "HSTS": (17.01, 0.803)},
    "Ours": {"SOTS": (27.24, 0.971), "HSTS": (27.24, 0.918)},
}
PUBLISHED_ABLATION: Dict[str, Tuple[float, float]] = {
    "Baseline* + L": (26.02, 0.925),
    "Baseline* + DWT & IWT": (26.28, 0.927),
    "Baseline* + Contrastive loss": (26.56, 0.929),
    "Ours": (26.76, 0.971),
}
REFERENCE_SUFFIX = " (reported)"


def metrics_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """One row per (method, dataset) with mean PSNR and SSIM."""
    return pd.DataFrame([r.row() for r in reports], columns=["method", "dataset", "psnr", "ssim"])


def per_image_frame(report: MetricsReport) -> pd.DataFrame:
    return pd.DataFrame([s.model_dump() for s in report.images], columns=["id", "psnr", "ssim"])


def comparison_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """Methods as rows, a PSNR/SSIM column pair per dataset, in first-seen order."""
    frame = metrics_frame(reports)
    methods = list(dict.fromkeys(frame["method"]))
    datasets = list(dict.fromkeys(frame["dataset"]))
    table = pd.DataFrame({"method": methods})
    for dataset in datasets:
        subset = frame[frame["dataset"] == dataset].set_index("method")
        table[f"{dataset} PSNR"] = table["method"].map(subset["psnr"])
        table[f"{dataset} SSIM"] = table["method"].map(subset["ssim"])
    return table


def ablation_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    frame = metrics_frame(reports)
    return frame[["method", "psnr", "ssim"]].rename(columns={"method": "variant"}).reset_index(drop=True)


def with_table1_reference(table: pd.DataFrame) -> pd.DataFrame:
    """Append the published rows for the datasets present in ``table``."""
    rows = []
    for method, per_dataset in PUBLISHED_BENCHMARKS.items():
        row: Dict[str, Union[str, float]] = {"method": method + REFERENCE_SUFFIX}
        for dataset, (p, s) in per_dataset.items():
            if f"{dataset} PSNR" in table.columns:
                row[f"{dataset} PSNR"] = p
                row[f"{dataset} SSIM"] = s
        if len(row) > 1:
            rows.append(row)
    return pd.concat([table, pd.DataFrame(rows, columns=table.columns)], ignore_index=True) if rows else table


def with_table2_reference(table: pd.DataFrame) -> pd.DataFrame:
    rows = [{"variant": label + REFERENCE_SUFFIX, "psnr": p, "ssim": s} for label, (p, s) in PUBLISHED_ABLATION.items()]
    return pd.concat([table, pd.DataFrame(rows)], ignore_index=True)


def _float_formats(columns: Sequence[str]) -> List[str]:
    return [".3f" if "ssim" in c.lower() else ".2f" for c in columns]


def render_table(table: pd.DataFrame, tablefmt: str = "simple") -> str:
    """Aligned text: PSNR with two decimals, SSIM with three."""
    rows = table.astype(object).where(table.notna(), None).values.tolist()
    return tabulate(
        rows,
        headers=list(table.columns),
        tablefmt=tablefmt,
        floatfmt=_float_formats(list(table.columns)),
        missingval="-",
    )


def write_table(table: pd.DataFrame, out_dir: Union[str, Path], stem: str) -> Mapping[str, Path]:
    """Write ``<stem>.csv`` and ``<stem>.txt``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    txt_path = out_dir / f"{stem}.txt"
    table.to_csv(csv_path, index=False)
    txt_path.write_text(render_table(table) + "\n", encoding="utf-8")
    return {"csv": csv_path, "txt": txt_path}

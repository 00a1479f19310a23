"""CSV datasets and the run manifest.

Lengths are written in nm relative to ``membrane.shift``, frequencies in MHz,
curvatures in MHz/nm^2 and couplings in Hz.  Floats use ``repr`` so a reader
gets the exact double back.
"""
from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

from cavity_perturb.exceptions import OutputError
from cavity_perturb.logger import get_logger
from cavity_perturb.metrics import write_metrics
from cavity_perturb.scan import ScanResult
from cavity_perturb.scan_config import ScanConfig

logger = get_logger("cavity_perturb.datasets")

NM = 1e-9  # m
MHZ = 1e6  # Hz
MHZ_PER_NM = MHZ / NM  # Hz/m
MHZ_PER_NM2 = MHZ / NM**2  # Hz/m^2
MRAD = 1e-3

BRANCH_FIELDS = ["z0_nm", "branch_id", "delta_nu_MHz", "dominant_mode"]
CROSSING_FIELDS = [
    "z0_nm",
    "gap_MHz",
    "upper_branch",
    "lower_branch",
    "upper_curvature_MHz_per_nm2",
    "lower_curvature_MHz_per_nm2",
    "modes",
]
COUPLING_FIELDS = [
    "location",
    "z0_nm",
    "branch_id",
    "slope_MHz_per_nm",
    "curvature_MHz_per_nm2",
    "G0_over_2pi_Hz",
    "G2_over_2pi_Hz",
]
SWEEP_FIELDS = ["alpha_x_mrad", "z0_nm", "gap_MHz", "upper_curvature_MHz_per_nm2", "lower_curvature_MHz_per_nm2"]


def _num(value: float) -> str:
    return repr(float(value))


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def branch_rows(result: ScanResult) -> tuple[list[str], list[dict]]:
    labels = result.labels
    fields = BRANCH_FIELDS + [f"c_{j + 1}" for j in range(len(labels))]
    rows = []
    if not result.branches:
        return fields, rows
    # z0-major so the file reads as successive spectra
    for k in range(len(result.branches[0])):
        for branch in result.branches:
            row = {
                "z0_nm": _num((branch.z0[k] - result.shift) / NM),
                "branch_id": branch.branch_id,
                "delta_nu_MHz": _num(branch.shifts[k] / MHZ),
                "dominant_mode": labels[int(branch.dominant[k])],
            }
            row.update({f"c_{j + 1}": _num(c) for j, c in enumerate(branch.vectors[k])})
            rows.append(row)
    return fields, rows


def crossing_rows(result: ScanResult) -> list[dict]:
    labels = result.labels
    return [
        {
            "z0_nm": _num((c.z0 - result.shift) / NM),
            "gap_MHz": _num(c.gap / MHZ),
            "upper_branch": c.upper_branch,
            "lower_branch": c.lower_branch,
            "upper_curvature_MHz_per_nm2": _num(c.upper_curvature / MHZ_PER_NM2),
            "lower_curvature_MHz_per_nm2": _num(c.lower_curvature / MHZ_PER_NM2),
            "modes": ";".join(labels[i] for i in c.modes),
        }
        for c in result.crossings
    ]


def coupling_rows(result: ScanResult) -> list[dict]:
    rows = []
    for report in result.couplings:
        # reports carry angular rates; the files use ordinary frequency
        rows.append(
            {
                "location": report.location,
                "z0_nm": _num((report.z0 - result.shift) / NM),
                "branch_id": report.branch_id,
                "slope_MHz_per_nm": _num(report.slope / (2.0 * math.pi) / MHZ_PER_NM),
                "curvature_MHz_per_nm2": _num(report.curvature / (2.0 * math.pi) / MHZ_PER_NM2),
                "G0_over_2pi_Hz": _num(report.g0_over_2pi),
                "G2_over_2pi_Hz": _num(report.g2_over_2pi),
            }
        )
    return rows


def sweep_rows(result: ScanResult) -> list[dict]:
    return [
        {
            "alpha_x_mrad": _num(row.alpha_x / MRAD),
            "z0_nm": _num(row.z0 / NM),
            "gap_MHz": _num(row.gap / MHZ),
            "upper_curvature_MHz_per_nm2": _num(row.upper_curvature / MHZ_PER_NM2),
            "lower_curvature_MHz_per_nm2": _num(row.lower_curvature / MHZ_PER_NM2),
        }
        for row in result.sweep or []
    ]


def emit_datasets(result: ScanResult, cfg: ScanConfig, out_dir: str | Path | None = None) -> list[Path]:
    """Write the CSVs requested by ``cfg.output`` plus manifest.json; returns the written paths."""
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in cfg.output.formats:
            fields, rows = branch_rows(result)
            written.append(_write_csv(out / "branches.csv", fields, rows))
            written.append(_write_csv(out / "crossings.csv", CROSSING_FIELDS, crossing_rows(result)))
            written.append(_write_csv(out / "couplings.csv", COUPLING_FIELDS, coupling_rows(result)))
            if result.sweep is not None:
                written.append(_write_csv(out / "sweep.csv", SWEEP_FIELDS, sweep_rows(result)))
        if "prometheus" in cfg.output.formats:
            written.append(write_metrics(out / "metrics.prom"))

        manifest = {
            "written_at": datetime.now(timezone.utc).isoformat(),
            "files": [path.name for path in written],
            "config": cfg.model_dump(mode="json"),
            **{key: value for key, value in result.provenance.items() if key != "config"},
        }
        manifest_path = out / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(manifest_path)
    except OSError as exc:
        raise OutputError(f"cannot write datasets to {out}: {exc}") from exc
    logger.info("wrote %s to %s", ", ".join(path.name for path in written), out)
    return written

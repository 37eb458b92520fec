"""
Trace repository - suite result files.
Part of Infrastructure layer.

Layout of a suite directory:
    manifest.json             resolved configuration, base points, f_star values
    traces/<cell slug>.csv    one file per (function, manifold, kernel, seed)
    summary.csv               one row per cell
    plot_data.csv             regret quartiles per kernel and iteration
"""
import csv
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from app.domain.entities.benchmark_spec import SuiteCell

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["seed", "iter", "phase", "point", "y", "best_y", "regret", "log10_regret"]
SUMMARY_COLUMNS = ["manifold", "kernel", "seed", "final_log_regret", "median_iter_to_threshold", "function"]
PLOT_COLUMNS = ["function", "manifold", "kernel", "iter", "n_seeds", "q25", "median", "q75", "median_iter_to_threshold"]

_SLUG = re.compile(r"^(?P<function>[^_].*?)__(?P<manifold>.+?)__(?P<kernel>.+)__seed(?P<seed>\d+)$")


def format_float(value: Optional[float]) -> str:
    """Shortest round-trip text; empty for missing values."""
    if value is None:
        return ""
    return repr(float(value))


def write_matrix_csv(path, matrix: Sequence[Sequence[float]]) -> Path:
    """
    Write a matrix as CSV under a header row of column indices.

    Args:
        path: Output file
        matrix: Rows of floats

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_cols = len(matrix[0]) if len(matrix) else 0
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(range(n_cols))
        writer.writerows([format_float(v) for v in row] for row in matrix)
    return path


class TraceRepository:
    """Repository for suite result files."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    @property
    def traces_dir(self) -> Path:
        return self.out_dir / "traces"

    @property
    def summary_path(self) -> Path:
        return self.out_dir / "summary.csv"

    @property
    def plot_data_path(self) -> Path:
        return self.out_dir / "plot_data.csv"

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / "manifest.json"

    def trace_path(self, cell: SuiteCell) -> Path:
        return self.traces_dir / f"{cell.slug}.csv"

    def _write_rows(self, path: Path, columns: List[str], rows: Iterable[Dict[str, Any]]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        tmp.replace(path)

    def _read_rows(self, path: Path) -> List[Dict[str, str]]:
        with path.open("r", newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))

    def write_trace(self, cell: SuiteCell, rows: Iterable[Dict[str, Any]]) -> Path:
        """
        Write one cell's trace.

        Args:
            cell: Cell identity
            rows: Dicts keyed by TRACE_COLUMNS

        Returns:
            Path of the written file
        """
        path = self.trace_path(cell)
        self._write_rows(path, TRACE_COLUMNS, rows)
        logger.debug(f"Wrote trace {path}")
        return path

    def read_trace(self, cell: SuiteCell) -> List[Dict[str, str]]:
        return self._read_rows(self.trace_path(cell))

    def list_cells(self) -> List[SuiteCell]:
        """Cells with a trace file, sorted."""
        if not self.traces_dir.is_dir():
            return []
        cells = []
        for path in self.traces_dir.glob("*.csv"):
            match = _SLUG.match(path.stem)
            if match is None:
                logger.warning(f"Ignoring unexpected file {path.name}")
                continue
            cells.append(
                SuiteCell(match["function"], match["manifold"], match["kernel"], int(match["seed"]))
            )
        return sorted(cells)

    def write_summary(self, rows: Iterable[Dict[str, Any]]) -> Path:
        self._write_rows(self.summary_path, SUMMARY_COLUMNS, rows)
        return self.summary_path

    def read_summary(self) -> List[Dict[str, str]]:
        return self._read_rows(self.summary_path)

    def write_plot_data(self, rows: Iterable[Dict[str, Any]]) -> Path:
        self._write_rows(self.plot_data_path, PLOT_COLUMNS, rows)
        return self.plot_data_path

    def read_plot_data(self) -> List[Dict[str, str]]:
        return self._read_rows(self.plot_data_path)

    def write_manifest(self, payload: Dict[str, Any]) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self.manifest_path

    def read_manifest(self) -> Dict[str, Any]:
        """
        Read manifest.json.

        Raises:
            FileNotFoundError: If the directory holds no suite
        """
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def threshold(self, default: float = -2.0) -> Tuple[float, bool]:
        """Regret threshold recorded in the manifest, with a flag telling whether it was found."""
        try:
            return float(self.read_manifest()["regret_threshold"]), True
        except (FileNotFoundError, KeyError):
            return default, False

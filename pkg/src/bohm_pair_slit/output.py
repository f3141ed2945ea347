"""
Run artifacts: summary.json plus CSV tables for external analysis and plotting.
Numbers in CSV files carry 17 significant digits so a float64 reads back exactly.
"""

import csv
import json
import logging
import math
import platform
from collections.abc import Iterable, Sequence
from datetime import UTC, datetime
from pathlib import Path

import numpy as np
import scipy

from bohm_pair_slit import __version__
from bohm_pair_slit.config import RunConfig
from bohm_pair_slit.ensemble import EnsembleResult
from bohm_pair_slit.jsonish import JObject
from bohm_pair_slit.scenarios import EnsembleReport, Histogram
from bohm_pair_slit.sqm import marginal_density

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
MARGINAL_HIST_FILE = "marginal_hist.csv"
COM_HIST_FILE = "com_hist.csv"
SQM_MARGINAL_FILE = "sqm_marginal.csv"
TRAJECTORIES_FILE = "trajectories.csv"
# The one summary field allowed to differ between identical runs.
TIMESTAMP_KEY = "created_at"

type Cell = str | int | float


def pretty_json_encode(v: object) -> str:
    return json.dumps(v, indent=4, sort_keys=True)


def format_number(value: float) -> str:
    return f"{value:.17g}"


def _cell(value: Cell) -> str:
    if isinstance(value, float):
        return format_number(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Cell]]) -> int:
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
            count += 1
    logger.debug("Wrote %d rows to %s", count, path)
    return count


def build_summary(run: RunConfig, report: EnsembleReport) -> JObject:
    return {
        "report": report.to_json(),
        "config": run.to_json(),
        "seed": run.scenario.sampler.seed,
        "versions": {
            "bohm_pair_slit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        TIMESTAMP_KEY: datetime.now(UTC).isoformat(timespec="seconds"),
    }


def write_summary(path: Path, summary: JObject) -> None:
    with open(path, "w") as f:
        _ = f.write(pretty_json_encode(summary))
        _ = f.write("\n")


def _histogram_rows(*histograms: Histogram) -> Iterable[tuple[Cell, ...]]:
    """
    One row per bin, between an underflow row opening at -inf and an overflow row
    closing at inf, so the counts of each column add up to the completed pairs.
    """
    edges = histograms[0].edges
    yield (-math.inf, float(edges[0]), *(h.underflow for h in histograms))
    for i in range(len(edges) - 1):
        yield (float(edges[i]), float(edges[i + 1]), *(int(h.counts[i]) for h in histograms))
    yield (float(edges[-1]), math.inf, *(h.overflow for h in histograms))


def write_marginal_histograms(path: Path, report: EnsembleReport) -> int:
    return write_csv(
        path,
        ("bin_lower", "bin_upper", "count_y1", "count_y2"),
        _histogram_rows(*report.marginal_histograms),
    )


def write_com_histogram(path: Path, report: EnsembleReport) -> int:
    return write_csv(
        path, ("bin_lower", "bin_upper", "count"), _histogram_rows(report.com_histogram)
    )


def write_sqm_marginal(path: Path, run: RunConfig) -> int:
    scenario = run.scenario
    curve = marginal_density(scenario.params, scenario.screen_time, scenario.screen.edges)
    centers = curve.centers
    return write_csv(
        path,
        ("bin_lower", "bin_upper", "center", "probability", "density"),
        (
            (
                float(curve.edges[i]),
                float(curve.edges[i + 1]),
                float(centers[i]),
                float(curve.mass[i]),
                float(curve.density[i]),
            )
            for i in range(len(curve.mass))
        ),
    )


def _trajectory_rows(
    result: EnsembleResult, stride: int
) -> Iterable[tuple[int, str, float, float, float]]:
    for pair in range(result.n_pairs):
        trajectory = result.batch.trajectory(pair)
        status = trajectory.status.label
        yield (pair, status, 0.0, trajectory.initial.y1, trajectory.initial.y2)
        samples = trajectory.samples
        kept = list(samples[stride - 1 :: stride])
        # the last state is always written
        if samples and (not kept or kept[-1] is not samples[-1]):
            kept.append(samples[-1])
        for state in kept:
            yield (pair, status, state.t, state.y1, state.y2)


def write_trajectories(path: Path, result: EnsembleResult, stride: int) -> int:
    return write_csv(
        path, ("pair", "status", "t", "y1", "y2"), _trajectory_rows(result, stride)
    )


def write_outputs(run: RunConfig, report: EnsembleReport) -> list[Path]:
    """Write every artifact of a run into the output directory; returns their paths."""
    out = run.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / MARGINAL_HIST_FILE
    _ = write_marginal_histograms(path, report)
    written.append(path)
    path = out / COM_HIST_FILE
    _ = write_com_histogram(path, report)
    written.append(path)
    path = out / SQM_MARGINAL_FILE
    _ = write_sqm_marginal(path, run)
    written.append(path)
    if run.emit_trajectories:
        assert report.ensemble is not None, "Report has no trajectory data to write"
        path = out / TRAJECTORIES_FILE
        rows = write_trajectories(path, report.ensemble, run.trajectory_sample_stride)
        logger.info("Wrote %d trajectory rows", rows)
        written.append(path)
    path = out / SUMMARY_FILE
    write_summary(path, build_summary(run, report))
    written.append(path)

    logger.info("Wrote %s to %s", ", ".join(p.name for p in written), out)
    return written
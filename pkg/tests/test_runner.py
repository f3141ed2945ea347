import csv
import json
import logging
import math
import tempfile
import unittest
from pathlib import Path
from sys import stderr
from time import perf_counter
from typing import override
from unittest.mock import patch

from summary_diff import (  # pyright: ignore[reportImplicitRelativeImport]
    diff_objects,
    formatted_diffs,
    timestamp_only,
)

from bohm_pair_slit import __main__ as cli
from bohm_pair_slit.config import RunConfig, config_from_object
from bohm_pair_slit.exceptions import AlreadyExecuted
from bohm_pair_slit.jsonish import JObject, j_array, j_object
from bohm_pair_slit.output import (
    COM_HIST_FILE,
    MARGINAL_HIST_FILE,
    SQM_MARGINAL_FILE,
    SUMMARY_FILE,
    TRAJECTORIES_FILE,
)
from bohm_pair_slit.runner import ExperimentRunner, execute


def smoke_doc(out_dir: Path, **changes: object) -> JObject:
    doc: JObject = {
        "case": "symmetric_3_1",
        "sigma0": 1,
        "Y": 0.1,
        "kx": 10,
        "D": 20,
        "seed": 42,
        "n_pairs": 100,
        "output": {"dir": str(out_dir)},
    }
    return doc | changes  # pyright: ignore[reportReturnType]


def read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def read_summary(out_dir: Path) -> JObject:
    with open(out_dir / SUMMARY_FILE) as f:
        return j_object(json.load(f))


class TestRunner(unittest.TestCase):
    @classmethod
    @override
    def setUpClass(cls):
        logging.basicConfig(
            format="%(levelname)s: %(message)s", style="%", stream=stderr, level="INFO"
        )

    @override
    def setUp(self):
        print(file=stderr)
        self._tmp: tempfile.TemporaryDirectory[str] = tempfile.TemporaryDirectory()
        self.tmp: Path = Path(self._tmp.name)

    @override
    def tearDown(self):
        self._tmp.cleanup()

    def run_config(self, name: str, **changes: object) -> RunConfig:
        return config_from_object(smoke_doc(self.tmp / name, **changes))

    def test_smoke_run(self):
        run = self.run_config("smoke")
        start = perf_counter()
        report = execute(run)
        self.assertLess(perf_counter() - start, 5.0)

        out = self.tmp / "smoke"
        for name in (SUMMARY_FILE, MARGINAL_HIST_FILE, COM_HIST_FILE, SQM_MARGINAL_FILE):
            self.assertTrue((out / name).is_file(), name)
        self.assertFalse((out / TRAJECTORIES_FILE).exists())

        n_bins = run.scenario.screen.n_bins
        # one row per bin plus the underflow and overflow rows
        marginal = read_rows(out / MARGINAL_HIST_FILE)
        self.assertEqual(len(marginal), n_bins + 2)
        self.assertEqual(float(marginal[0]["bin_lower"]), -math.inf)
        self.assertEqual(float(marginal[-1]["bin_upper"]), math.inf)
        for column in ("count_y1", "count_y2"):
            self.assertEqual(sum(int(row[column]) for row in marginal), report.n_completed)
        first, _second = report.marginal_histograms
        self.assertEqual(int(marginal[0]["count_y1"]), first.underflow)
        self.assertEqual(int(marginal[-1]["count_y1"]), first.overflow)
        com = read_rows(out / COM_HIST_FILE)
        self.assertEqual(len(com), n_bins + 2)
        self.assertEqual(sum(int(row["count"]) for row in com), report.n_completed)
        sqm = read_rows(out / SQM_MARGINAL_FILE)
        self.assertEqual(len(sqm), n_bins)
        self.assertAlmostEqual(sum(float(row["probability"]) for row in sqm), 1.0, delta=1e-4)

        summary = read_summary(out)
        self.assertEqual(summary["seed"], 42)
        self.assertIn("created_at", summary)
        self.assertEqual(j_object(summary["versions"])["bohm_pair_slit"], cli.__version__)
        summary_report = j_object(summary["report"])
        self.assertEqual(summary_report["n_completed"], report.n_completed)
        checks = j_array(summary_report["constraint_checks"])
        self.assertEqual(len(checks), len(report.constraint_checks))
        self.assertEqual(j_object(summary["config"])["n_pairs"], 100)

    def test_summary_is_reproducible(self):
        _ = execute(self.run_config("first"))
        _ = execute(self.run_config("second"))
        first = read_summary(self.tmp / "first")
        second = read_summary(self.tmp / "second")
        # only the output directories and the timestamp may differ
        j_object(first["config"])["output"] = None
        j_object(second["config"])["output"] = None
        ok, diffs = diff_objects(first, second, timestamp_only)
        self.assertTrue(ok, formatted_diffs(diffs))

        for name in (MARGINAL_HIST_FILE, COM_HIST_FILE, SQM_MARGINAL_FILE):
            self.assertEqual(
                (self.tmp / "first" / name).read_bytes(),
                (self.tmp / "second" / name).read_bytes(),
                name,
            )

    def test_trajectories(self):
        out = self.tmp / "paths"
        doc = smoke_doc(out, n_pairs=4)
        doc["output"] = {
            "dir": str(out),
            "emit_trajectories": True,
            "trajectory_sample_stride": 3,
        }
        report = execute(config_from_object(doc))
        rows = read_rows(out / TRAJECTORIES_FILE)
        self.assertEqual({row["pair"] for row in rows}, {"0", "1", "2", "3"})
        ensemble = report.ensemble
        assert ensemble is not None
        for pair in range(4):
            pair_rows = [row for row in rows if row["pair"] == str(pair)]
            self.assertEqual(float(pair_rows[0]["t"]), 0.0)
            self.assertEqual(float(pair_rows[-1]["t"]), ensemble.screen_time)
            self.assertEqual(float(pair_rows[-1]["y1"]), float(ensemble.batch.y1[pair]))
            self.assertTrue(all(row["status"] == "completed" for row in pair_rows))
            samples = len(ensemble.batch.trajectory(pair).samples)
            expected = 1 + samples // 3 + (0 if samples % 3 == 0 else 1)
            self.assertEqual(len(pair_rows), expected)

    def test_execute_once(self):
        runner = ExperimentRunner(self.run_config("once"))
        report = runner.execute()
        self.assertIs(runner.report, report)
        self.assertEqual(len(runner.written), 4)
        with self.assertRaises(AlreadyExecuted):
            _ = runner.execute()

    def run_main(self, *args: str) -> int:
        with patch("sys.argv", ["bohm-pair-slit", *args]):
            return cli.main()

    def write_doc(self, doc: JObject) -> Path:
        path = self.tmp / "run.json"
        _ = path.write_text(json.dumps(doc))
        return path

    def test_main_exit_codes(self):
        path = self.write_doc(smoke_doc(self.tmp / "unused"))
        out = self.tmp / "cli"
        self.assertEqual(self.run_main("-c", str(path), "-o", str(out), "--pairs", "50"), 0)
        self.assertEqual(j_object(read_summary(out)["report"])["n_pairs"], 50)

        bad = self.write_doc(smoke_doc(self.tmp / "bad", sigma0=-1))
        self.assertEqual(self.run_main("-c", str(bad)), cli.EXIT_CONFIG_ERROR)
        self.assertEqual(
            self.run_main("-c", str(self.tmp / "missing.json")), cli.EXIT_CONFIG_ERROR
        )

        starved = smoke_doc(
            self.tmp / "starved",
            case="selective_3_2",
            D=200,
            conditioning={"kind": "com_offset", "target_mean": 60.0},
        )
        self.assertEqual(
            self.run_main("-c", str(self.write_doc(starved))), cli.EXIT_REJECTED
        )

    def test_step_budget_losses_exit_rejected(self):
        out = self.tmp / "out-of-steps"
        doc = smoke_doc(out, n_pairs=200, integrator={"max_steps": 3})
        path = self.write_doc(doc)
        self.assertEqual(self.run_main("-c", str(path)), cli.EXIT_REJECTED)

        # the artifacts are still written, with no metrics over an empty ensemble
        report = j_object(read_summary(out)["report"])
        self.assertEqual(report["n_completed"], 0)
        self.assertEqual(j_object(report["status_counts"])["step_budget"], 200)
        self.assertEqual(report["rejection_fraction"], 1.0)
        self.assertIsNone(report["symmetry_metric"])
        self.assertIsNone(report["mean_terminal_com"])
        self.assertIsNone(report["bqm_mirror_fraction"])

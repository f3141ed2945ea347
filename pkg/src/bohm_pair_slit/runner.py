import logging
from pathlib import Path

from bohm_pair_slit.config import RunConfig
from bohm_pair_slit.ensemble import REJECTION_BUDGET
from bohm_pair_slit.exceptions import AlreadyExecuted
from bohm_pair_slit.integrate import TrajectoryStatus
from bohm_pair_slit.output import write_outputs
from bohm_pair_slit.scenarios import EnsembleReport, run_scenario

logger = logging.getLogger(__name__)


class ExperimentRunner:
    def __init__(self, run: RunConfig) -> None:
        self.run: RunConfig = run
        self.report: EnsembleReport | None = None
        self.written: list[Path] = []
        self._is_executed: bool = False

        scenario = run.scenario
        params = scenario.params
        logger.info("Case: %s", scenario.case)
        logger.info(
            "Source: sigma0=%g, Y=%g, kx=%g, ky=%g, hbar=%g, mass=%g",
            params.sigma0,
            params.slit_offset,
            params.kx,
            params.ky,
            params.hbar,
            params.mass,
        )
        logger.info(
            "Screen: D=%g (T=%g, s T=%g), detector size %g, histogram [%g, %g] in %d bins",
            scenario.screen.distance_d,
            scenario.screen_time,
            scenario.st,
            scenario.screen.bin_delta,
            scenario.screen.y_min,
            scenario.screen.y_max,
            scenario.screen.n_bins,
        )
        logger.info(
            "Ensemble: %d pairs, seed %d, conditioning %s",
            scenario.sampler.n_pairs,
            scenario.sampler.seed,
            scenario.sampler.conditioning.kind,
        )
        logger.info(
            "Integrator: %s, tol %g, initial step %g",
            scenario.integ.method,
            scenario.integ.tol,
            scenario.integ.dt_initial,
        )
        logger.info("Output directory: %s", run.output_dir)
        if run.emit_trajectories:
            logger.info(
                "Emitting trajectories, every %d step(s)", run.trajectory_sample_stride
            )

    def execute(self) -> EnsembleReport:
        """
        Run the configured experiment and write its artifacts. Raises
        RejectionBudgetExceeded after the artifacts are written when too many
        trajectories ended at a node or ran out of steps.
        """
        if self._is_executed:
            raise AlreadyExecuted("Experiment already executed (execute can only be run once)")
        self._is_executed = True

        logger.info("Running %s", self.run.scenario.case)
        report = run_scenario(self.run.scenario, record_samples=self.run.emit_trajectories)
        self.report = report
        self.written = write_outputs(self.run, report)

        unsatisfied = [c.name for c in report.constraint_checks if not c.satisfied]
        rejected = report.n_pairs - report.n_completed
        assert report.ensemble is not None, "Report must carry its ensemble"
        if report.rejection_fraction > REJECTION_BUDGET:
            logger.error(
                "Run completed with %d node rejection(s) and %d step budget stop(s),"
                " fraction %.3g over budget %g",
                report.status_counts[TrajectoryStatus.REJECTED_NODE.label],
                report.status_counts[TrajectoryStatus.STEP_BUDGET.label],
                report.rejection_fraction,
                REJECTION_BUDGET,
            )
            report.ensemble.check_rejection_budget()
        elif rejected or unsatisfied:
            logger.warning(
                "Run completed with %d pair(s) not reported and %d unsatisfied"
                " constraint(s)%s",
                rejected,
                len(unsatisfied),
                f": {', '.join(unsatisfied)}" if unsatisfied else "",
            )
        else:
            logger.info("Run completed successfully")
        return report


def execute(run: RunConfig) -> EnsembleReport:
    return ExperimentRunner(run).execute()

"""Seeded replication experiments: single fit, coverage, psi sweep and scheme comparison."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from constants.constants import (
    INSTRUMENTAL_UNIFORM,
    MAX_EXCLUDED_FRACTION,
    NORMING_MC,
    ROLE_DATA,
    ROLE_JOINT_MC,
    ROLE_MC,
)
from exceptions import ConfigError, EstimationError, InsufficientDataError, NoOracleError
from models.configs import ExperimentConfig
from models.reports import (
    STATUS_FAILED,
    STATUS_OK,
    CoverageAggregates,
    CoverageRecord,
    CoverageReport,
    FitReport,
    PsiSweepPoint,
    PsiSweepRecord,
    PsiSweepReport,
    SchemeComparisonPoint,
    SchemeComparisonRecord,
    SchemeComparisonReport,
)
from services.asymptotics_service import AsymptoticsCalculator
from services.estimator_service import attach_sandwich, fit_exact, fit_mcml
from services.importance_service import ImportanceSampler, Instrumental
from services.likelihood_service import LikelihoodCalculator
from services.model_core import check_theta, fisher_information, simulate_dataset
from services.models import Dataset, FitResult, ImportanceSample, JointImportanceSample
from services.validators import DataValidator
from util import group_covariates, replication_stream

logger = logging.getLogger(__name__)

T = TypeVar('T')


def describe_instrumental(instr: Instrumental) -> str:
    if instr.kind == INSTRUMENTAL_UNIFORM:
        return INSTRUMENTAL_UNIFORM
    covariate = '' if instr.covariate is None else f", x={[float(v) for v in instr.covariate]}"
    return f"{instr.kind}(psi={[float(v) for v in instr.psi]}{covariate})"


class ExperimentService:
    """
    Runs the harness experiments for one ExperimentConfig.

    Replication r draws its data from the (seed, r, ROLE_DATA) stream and its
    Monte Carlo sample from (seed, r, ROLE_MC), with a grid index appended for
    sweeps, so no replication's numbers depend on R or on the worker count.
    Records are merged by replication index.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.model = config.to_model()
        self.seed = DataValidator.validate_seed(config.seed)
        self.fit_options = config.to_fit_options()
        self.covariate_law = DataValidator.validate_covariate_law(config.covariates, self.model)
        self.sampler = ImportanceSampler(self.model)
        self.likelihood = LikelihoodCalculator(self.model)
        self.asymptotics = AsymptoticsCalculator(self.model)
        logger.info(f"🔧 Experiment for {self.model.label}: n={config.n}, m={config.m}, "
                    f"R={config.replications}, seed={self.seed}, workers={config.workers}")

    # =========================================================================
    # PLUMBING
    # =========================================================================

    @property
    def theta_star(self) -> np.ndarray:
        if self.config.theta_star is None:
            raise ConfigError("This experiment needs theta_star in the config")
        return check_theta(self.model, self.config.theta_star)

    def _map(self, task: Callable[[int], T], items: Iterable[int]) -> List[T]:
        """Apply task to every item, in a thread pool when workers > 1; results keep item order."""
        items = list(items)
        if self.config.workers == 1:
            return [task(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(task, items))

    def _timed(self, work: Callable[[], T]) -> T:
        start = time.perf_counter()
        record = work()
        if self.config.record_timing:
            record.seconds = time.perf_counter() - start
        return record

    def simulate(self, n: int, replication: int, *extra: int) -> Dataset:
        """X_i uniform over the covariate law, Y_i ~ p(.|X_i, theta_star)."""
        rng = replication_stream(self.seed, replication, ROLE_DATA, *extra)
        covariates = self.covariate_law[rng.integers(0, self.covariate_law.shape[0], size=n)]
        return simulate_dataset(self.model, covariates, self.theta_star, rng)

    def _mc_sample(self, instr: Instrumental, replication: int, *extra: int):
        rng = replication_stream(self.seed, replication, ROLE_MC, *extra)
        tag = ':'.join(str(v) for v in (self.seed, replication, ROLE_MC, *extra))
        return self.sampler.draw(instr, self.config.m, rng, seed_tag=tag)

    def _reference_covariate(self, instr: Instrumental) -> np.ndarray:
        if instr.covariate is not None:
            return self.model.check_covariate(instr.covariate)
        return self.model.default_covariate()

    # =========================================================================
    # FIT
    # =========================================================================

    def fit_with_sandwich(self, data: Dataset, instr: Instrumental, m: int, seed: int) -> FitResult:
        """MCML fit on a fresh sample from the (seed, 0, ROLE_MC) stream, with the sandwich attached."""
        rng = replication_stream(seed, 0, ROLE_MC)
        sample = self.sampler.draw(instr, m, rng, seed_tag=f"{seed}:0:{ROLE_MC}")
        fit = fit_mcml(data, sample, self.model, self.fit_options)
        parts = self.asymptotics.build_sandwich_parts(data, sample, fit.theta_hat, norming_source=NORMING_MC)
        return attach_sandwich(fit, parts)

    def run_fit(self, data: Dataset, instr: Optional[Instrumental] = None, m: Optional[int] = None,
                seed: Optional[int] = None, level: Optional[float] = None) -> FitReport:
        """
        Single MCML fit of a dataset.

        Args:
            data: Observed dataset
            instr: Instrumental; defaults to the configured one
            m: Monte Carlo sample size; defaults to config.m
            seed: Stream seed; defaults to config.seed
            level: Wald level; defaults to config.level

        Returns:
            FitReport with estimate, standard errors and intervals
        """
        DataValidator.validate_dataset(data, self.model)
        instr = instr or self.config.to_instrumental()
        m = self.config.m if m is None else m
        seed = self.seed if seed is None else DataValidator.validate_seed(seed)
        level = self.config.level if level is None else level
        DataValidator.validate_sizes(m=m)

        fit = self.fit_with_sandwich(data, instr, m, seed)
        region = self.asymptotics.confidence_region(fit.theta_hat, fit.covariance, level)
        logger.info(f"✅ Fit {self.model.label}: theta_hat={fit.theta_hat}, se={fit.standard_errors}")
        return FitReport(
            model=self.model.label,
            n=data.n,
            m=m,
            seed=seed,
            instrumental=describe_instrumental(instr),
            theta_hat=fit.theta_hat.tolist(),
            standard_errors=fit.standard_errors.tolist(),
            ci_lower=region.lower.tolist(),
            ci_upper=region.upper.tolist(),
            level=level,
            covariance=fit.covariance.tolist(),
            converged=fit.converged,
            iterations=fit.iterations,
            final_grad_norm=fit.final_grad_norm,
            diagnostics=list(fit.diagnostics),
        )

    # =========================================================================
    # COVERAGE
    # =========================================================================

    def coverage_replication(self, replication: int) -> CoverageRecord:
        """Simulate, fit, standardise against theta_star and record the CI hits."""
        config = self.config
        instr = config.to_instrumental()
        theta_star = self.theta_star

        def work() -> CoverageRecord:
            try:
                data = self.simulate(config.n, replication)
                sample = self._mc_sample(instr, replication)
                fit = fit_mcml(data, sample, self.model, self.fit_options)
                parts = self.asymptotics.build_sandwich_parts(data, sample, fit.theta_hat)
                attach_sandwich(fit, parts)
                z = self.asymptotics.standardize(fit.theta_hat, theta_star, parts)
                region = self.asymptotics.confidence_region(fit.theta_hat, fit.covariance, config.level)
                hits, inside = region.covers(theta_star)
            except EstimationError as e:
                logger.warning(f"❌ Replication {replication} excluded: {type(e).__name__}: {e}")
                return CoverageRecord(replication=replication, status=STATUS_FAILED,
                                      error=f"{type(e).__name__}: {e}")
            return CoverageRecord(
                replication=replication,
                status=STATUS_OK,
                theta_hat=fit.theta_hat.tolist(),
                z=z.tolist(),
                hits=[bool(h) for h in hits],
                ellipsoid_hit=inside,
                iterations=fit.iterations,
            )

        return self._timed(work)

    def run_coverage(self) -> CoverageReport:
        """R replications of the coverage / normality experiment."""
        if self.config.n < 2:
            raise InsufficientDataError("Coverage needs n >= 2 to estimate V")
        if self.config.theta_star is None:
            raise ConfigError("Coverage needs theta_star in the config")
        records = self._map(self.coverage_replication, range(self.config.replications))
        aggregates = CoverageAggregates.from_records(records, self.model.param_dim)
        if aggregates.invalid:
            logger.warning(f"⚠️ {aggregates.excluded} of {aggregates.replications} replications excluded; "
                           "report flagged invalid")
        logger.info(f"📊 Coverage {aggregates.coverage}, z mean {aggregates.z_mean}, z var {aggregates.z_var}")
        return CoverageReport(config=self.config, records=records, aggregates=aggregates)

    # =========================================================================
    # PSI SWEEP
    # =========================================================================

    def _psi_grid(self) -> List[List[float]]:
        if self.config.psi_grid:
            return [list(psi) for psi in self.config.psi_grid]
        return [list(self.config.to_instrumental().psi)]

    def psi_replication(self, psi_index: int, psi: List[float], replication: int) -> PsiSweepRecord:
        """psi - psi_hat^m, where psi_hat^m is the MLE computed from the draws of h = p(.|psi)."""
        instr = self.config.to_instrumental(psi)
        x_ref = self._reference_covariate(instr)

        def work() -> PsiSweepRecord:
            try:
                sample = self._mc_sample(instr, replication, psi_index)
                draws = Dataset(responses=sample.draws, covariates=np.tile(x_ref, (sample.m, 1)))
                psi_hat = fit_exact(draws, self.model, self.fit_options).theta_hat
            except EstimationError as e:
                logger.warning(f"❌ psi[{psi_index}] replication {replication} excluded: {e}")
                return PsiSweepRecord(psi_index=psi_index, replication=replication, status=STATUS_FAILED,
                                      error=f"{type(e).__name__}: {e}")
            return PsiSweepRecord(psi_index=psi_index, replication=replication, status=STATUS_OK,
                                  error_vector=(np.asarray(psi) - psi_hat).tolist())

        return self._timed(work)

    def run_psi_sweep(self) -> PsiSweepReport:
        """Empirical MC-error variance of psi_hat^m against diag(I(psi)^-1) / m over the psi grid."""
        if self.model.support is None:
            raise NoOracleError(f"{self.model.label}: the psi sweep needs an enumerable support")
        if not self.model.covariate_free and self.config.covariates is not None:
            raise ConfigError("The psi sweep runs at one fixed covariate; drop the covariate list")
        grid = self._psi_grid()
        R = self.config.replications
        tasks = [(j, r) for j in range(len(grid)) for r in range(R)]
        records = self._map(lambda i: self.psi_replication(tasks[i][0], grid[tasks[i][0]], tasks[i][1]),
                            range(len(tasks)))

        points = []
        for j, psi in enumerate(grid):
            instr = self.config.to_instrumental(psi)
            information = fisher_information(self.model, self._reference_covariate(instr), psi)
            theory = np.diag(np.linalg.inv(information)) / self.config.m
            points.append(PsiSweepPoint.from_records(psi, [rec for rec in records if rec.psi_index == j],
                                                     theory.tolist()))

        curve = [p.empirical_variance[0] if p.empirical_variance else np.inf for p in points]
        excluded = sum(p.excluded for p in points)
        invalid = excluded / len(records) > MAX_EXCLUDED_FRACTION
        if invalid:
            logger.warning(f"⚠️ psi sweep excluded {excluded} of {len(records)} replications; flagged invalid")
        logger.info(f"📊 psi sweep variances {curve}")
        return PsiSweepReport(config=self.config, records=records, points=points,
                              argmin_index=int(np.argmin(curve)), excluded=excluded, invalid=invalid)

    # =========================================================================
    # SCHEME COMPARISON
    # =========================================================================

    def _theory_log_weight_variance(self, instr: Instrumental, n: int) -> float:
        """n * E_X Var_{Y~h}[theta_star^T S(Y, X) - log h(Y)]."""
        log_h = instr.support_log_density(self.model)
        h = np.exp(log_h)
        per_site = []
        for x in self.covariate_law:
            log_ratio = self.model.support_statistics(self.model.check_covariate(x)) @ self.theta_star - log_h
            centred = log_ratio - h @ log_ratio
            per_site.append(float(h @ centred ** 2))
        return n * float(np.mean(per_site))

    def _mean_log_norming_error(self, data: Dataset, sample: ImportanceSample, theta: np.ndarray) -> float:
        """(1/n) sum_i r^m(X_i, theta); the MCML objective error is -n times this."""
        unique, _, counts = group_covariates(data.covariates)
        total = sum(count * self.sampler.log_norming_error(sample, x, theta) for x, count in zip(unique, counts))
        return float(total / data.n)

    def scheme_replication(self, n_index: int, n: int, replication: int) -> SchemeComparisonRecord:
        """Objective errors of both schemes at theta_star and the spread of the Cappe log-weights."""
        instr = self.config.to_instrumental()
        theta_star = self.theta_star

        def work() -> SchemeComparisonRecord:
            try:
                data = self.simulate(n, replication, n_index)
                sample = self._mc_sample(instr, replication, n_index)
                if n == 1:
                    joint = JointImportanceSample.from_shared(sample)
                else:
                    rng = replication_stream(self.seed, replication, ROLE_JOINT_MC, n_index)
                    joint = self.sampler.draw_joint(instr, n, self.config.m, rng,
                                                    seed_tag=f"{self.seed}:{replication}:{ROLE_JOINT_MC}:{n_index}")
                exact = self.likelihood.exact_loglik(data, theta_star).value
                log_weights = self.likelihood.cappe_log_weights(data, joint, theta_star)
                return SchemeComparisonRecord(
                    n_index=n_index,
                    n=n,
                    replication=replication,
                    status=STATUS_OK,
                    log_weight_variance=float(np.var(log_weights)),
                    mcml_error=float(self.likelihood.mc_loglik(data, sample, theta_star).value - exact),
                    mean_log_norming_error=self._mean_log_norming_error(data, sample, theta_star),
                    cappe_error=float(self.likelihood.cappe_loglik(data, joint, theta_star) - exact),
                )
            except EstimationError as e:
                logger.warning(f"❌ n={n} replication {replication} excluded: {e}")
                return SchemeComparisonRecord(n_index=n_index, n=n, replication=replication,
                                              status=STATUS_FAILED, error=f"{type(e).__name__}: {e}")

        return self._timed(work)

    def run_compare_schemes(self) -> SchemeComparisonReport:
        """Log-weight variance and objective errors of both schemes across the n grid at fixed m."""
        if self.model.support is None:
            raise NoOracleError(f"{self.model.label}: the scheme comparison needs the exact likelihood")
        instr = self.config.to_instrumental()
        n_grid = list(self.config.n_grid or [self.config.n])
        R = self.config.replications
        tasks = [(j, r) for j in range(len(n_grid)) for r in range(R)]
        records = self._map(lambda i: self.scheme_replication(tasks[i][0], n_grid[tasks[i][0]], tasks[i][1]),
                            range(len(tasks)))

        points = [
            SchemeComparisonPoint.from_records(
                n, [rec for rec in records if rec.n_index == j], self._theory_log_weight_variance(instr, n)
            )
            for j, n in enumerate(n_grid)
        ]
        usable = [(p.n, p.mean_log_weight_variance) for p in points if p.mean_log_weight_variance is not None]
        sizes = np.array([u[0] for u in usable], dtype=float)
        spreads = np.array([u[1] for u in usable], dtype=float)
        slope = float(sizes @ spreads / (sizes @ sizes)) if usable else 0.0
        if slope > 0:
            deviation = float(np.max(np.abs(spreads / (slope * sizes) - 1.0)))
        else:
            deviation = 0.0

        excluded = sum(p.excluded for p in points)
        invalid = excluded / len(records) > MAX_EXCLUDED_FRACTION
        if invalid:
            logger.warning(f"⚠️ scheme comparison excluded {excluded} of {len(records)} replications; flagged invalid")
        logger.info(f"📊 Cappe log-weight variance slope {slope:.4g} per observation "
                    f"(max deviation from linear {deviation:.2%})")
        return SchemeComparisonReport(config=self.config, records=records, points=points, slope=slope,
                                      max_linearity_deviation=deviation, excluded=excluded, invalid=invalid)

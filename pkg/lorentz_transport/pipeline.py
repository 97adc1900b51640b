import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from .check_report import CheckReport
from .cost import CostMatrix, assemble_cost_matrix
from .errors import (ConfigError, LorentzTransportError, MonotonicityViolatedError, NonFiniteNeighborhoodError,
                     NoTimelikeSolutionError, NotCausallyRelatedError)
from .formatting import format_float
from .hook import Hook
from .kantorovich import METHODS, PlanRecord, SolveResult, check_c2_monotone, compare_methods, solve
from .measures import PROFILES, WEIGHT_KINDS, Instance, generate_instance
from .potentials import PotentialPair, build_pi_solution, duality_gap, verify_pi_solution
from .regularity import REGULARITY_CHECKS, assess_regularity
from .transport import recover_map, verify_map_induces_coupling

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_HYPOTHESIS = 2

CUSTOM_PROFILE = "custom-file"
STAGES = ("instance", "solve", "potentials", "map", "regularity")
CHECKS = ("monotonicity", "pi_solution", "duality", "map") + REGULARITY_CHECKS
SWEEP_COLUMNS = ("seed", "profile", "exit_code", "total_cost", "duality_gap", "min_delta", "semiconvexity",
                 "agreement_rate")


@dataclass(frozen=True)
class Tolerances:
    pi_solution: float = 1e-8
    monotonicity: float = 1e-9
    duality_gap: float = 1e-8
    marginal: float = 1e-10
    tie: float = 1e-8
    snap: float = 1e-4
    twist: float = 1e-9

    def validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0.0):
                raise ConfigError(f"Tolerance {f.name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dimension: int = 1
    sizes: Tuple[int, int] = (20, 20)
    profile: str = "slices"
    instance_path: Optional[str] = None
    slab_time: float = 3.0
    radius: float = 1.0
    weights: str = WEIGHT_KINDS[0]
    method: str = METHODS[0]
    max_cycle_len: int = 4
    nodes: int = 33
    checks: FrozenSet[str] = frozenset(CHECKS)
    last_stage: str = STAGES[-1]
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str = "."
    workers: int = 1
    write_artifacts: bool = True

    def validate(self):
        self.tolerances.validate()
        if self.profile not in PROFILES + (CUSTOM_PROFILE,):
            raise ConfigError(f"Unknown profile {self.profile!r}; expected one of {PROFILES + (CUSTOM_PROFILE,)}")
        if self.profile == CUSTOM_PROFILE and self.instance_path is None:
            raise ConfigError("Profile custom-file needs an instance file")
        if self.dimension < 1:
            raise ConfigError(f"Spatial dimension must be at least 1, got {self.dimension}")
        if min(self.sizes) < 1:
            raise ConfigError(f"Measure sizes must be at least 1, got {self.sizes}")
        if self.nodes < 3:
            raise ConfigError(f"Regularity grids need at least 3 nodes per axis, got {self.nodes}")
        if self.max_cycle_len < 2:
            raise ConfigError(f"Cycle length must be at least 2, got {self.max_cycle_len}")
        if self.workers < 1:
            raise ConfigError(f"Worker count must be positive, got {self.workers}")
        if self.method not in METHODS:
            raise ConfigError(f"Unknown LP method {self.method!r}; expected one of {METHODS}")
        if self.weights not in WEIGHT_KINDS:
            raise ConfigError(f"Unknown weight kind {self.weights!r}; expected one of {WEIGHT_KINDS}")
        if self.last_stage not in STAGES:
            raise ConfigError(f"Unknown stage {self.last_stage!r}; expected one of {STAGES}")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigError(f"Unknown checks {sorted(unknown)}; expected a subset of {CHECKS}")

    def to_dict(self) -> Dict[str, Any]:
        """Everything that determines the results; output location and parallelism are left out."""
        return {"seed": self.seed, "dimension": self.dimension, "sizes": list(self.sizes), "profile": self.profile,
                "instance_path": self.instance_path, "slab_time": self.slab_time, "radius": self.radius,
                "weights": self.weights, "method": self.method, "max_cycle_len": self.max_cycle_len,
                "nodes": self.nodes, "checks": sorted(self.checks), "last_stage": self.last_stage,
                "tolerances": asdict(self.tolerances)}


class PipelineResult(NamedTuple):
    exit_code: int
    summary: Dict[str, Any]


def write_json(path: str, data: Dict[str, Any]):
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def load_instance(config: RunConfig) -> Instance:
    if config.profile == CUSTOM_PROFILE:
        return Instance.read(config.instance_path)
    model, mu, nu = generate_instance(config.seed, config.dimension, config.sizes, config.profile,
                                      slab_time=config.slab_time, radius=config.radius, weights=config.weights)
    return Instance(model, mu, nu, config.seed, config.profile)


class Pipeline:
    """
    Runs instance -> solve -> potentials -> map -> regularity and triages the outcome: failed
    checks mean a violated conclusion (exit 1), hypothesis flags a violated precondition (exit 2).
    """

    def __init__(self, config: RunConfig):
        config.validate()
        self.__config = config
        self.__reports: List[CheckReport] = []
        self.__values: Dict[str, Any] = {}
        self.__on_stage_completed_event = Hook()
        self.__on_check_failed_event = Hook()

    @property
    def config(self) -> RunConfig:
        return self.__config

    @property
    def on_stage_completed_event(self) -> Hook:
        return self.__on_stage_completed_event

    @property
    def on_check_failed_event(self) -> Hook:
        return self.__on_check_failed_event

    def __path(self, name: str) -> str:
        return os.path.join(self.__config.out_dir, name)

    def __enabled(self, check: str) -> bool:
        return check in self.__config.checks

    def __record(self, report: CheckReport):
        self.__reports.append(report)
        if not report.passed:
            for failure in report.failures:
                logger.error(f"[{failure.module}] {failure.property} {list(failure.indices)}: {failure.message}")
            self.__on_check_failed_event.call(report)
        for flag in report.hypothesis_flags:
            logger.warning(f"Hypothesis flag in {report.name}: {flag}")

    def __stage_done(self, stage: str, payload: Any) -> bool:
        logger.info(f"Stage {stage} completed")
        self.__on_stage_completed_event.call(stage, payload)
        return stage == self.__config.last_stage

    def run(self) -> PipelineResult:
        config = self.__config
        if config.write_artifacts:
            os.makedirs(config.out_dir, exist_ok=True)
        summary: Dict[str, Any] = {"config": config.to_dict()}
        error = None
        try:
            self.__run_stages()
        except NotCausallyRelatedError as e:
            error = {"type": type(e).__name__, "message": str(e), "hypothesis": True}
            logger.warning(f"Measures are not causally related: {e}")
        except (LorentzTransportError, OSError, ValueError) as e:
            error = {"type": type(e).__name__, "message": str(e), "hypothesis": False}
            logger.error(f"Pipeline aborted: {e}")
        except Exception as e:
            error = {"type": type(e).__name__, "message": str(e), "hypothesis": False}
            logger.exception(f"Pipeline aborted by an unexpected {type(e).__name__}")

        failed = any(not r.passed for r in self.__reports)
        flagged = any(r.flagged for r in self.__reports)
        if failed or (error is not None and not error["hypothesis"]):
            exit_code = EXIT_ERROR
        elif error is not None or flagged:
            exit_code = EXIT_HYPOTHESIS
        else:
            exit_code = EXIT_PASS
        summary.update({"exit_code": exit_code, "error": error, "values": dict(self.__values),
                        "checks": {r.name: r.to_dict() for r in self.__reports}})
        if config.write_artifacts:
            write_json(self.__path("summary.json"), summary)
        return PipelineResult(exit_code, summary)

    def __run_stages(self):
        config = self.__config
        instance = load_instance(config)
        self.__values["profile"] = instance.profile
        if config.write_artifacts:
            instance.write(self.__path("instance.json"))
        if self.__stage_done("instance", instance):
            return

        matrix = assemble_cost_matrix(instance.model, instance.mu.points, instance.nu.points, config.workers)
        result = solve(matrix, instance.mu, instance.nu, config.method)
        self.__values["total_cost"] = result.total_cost.value
        if config.write_artifacts:
            result.record().write(self.__path("plan.json"))
        if self.__enabled("monotonicity"):
            self.__record(self.__monotonicity_report(result, matrix))
        if self.__stage_done("solve", result):
            return

        pp = self.__potentials(result, matrix)
        if pp is None or self.__stage_done("potentials", pp):
            return

        self.__map(pp, result, matrix)
        if self.__stage_done("map", None):
            return

        regularity_checks = frozenset(config.checks) & frozenset(REGULARITY_CHECKS)
        verified = all(r.passed for r in self.__reports if r.name == "pi_solution")
        report = assess_regularity(pp, result, matrix, nodes=config.nodes, checks=regularity_checks,
                                   pi_solution_verified=verified)
        self.__values.update({"delta": report.delta, "semiconvexity": report.semiconvexity,
                              "near_optimal_diameter": report.diameter})
        self.__record(report.check)
        if config.write_artifacts:
            write_json(self.__path("regularity.json"), report.to_dict())
        self.__stage_done("regularity", report)

    def __monotonicity_report(self, result: SolveResult, matrix: CostMatrix) -> CheckReport:
        config = self.__config
        monotone = check_c2_monotone(result.support(), matrix, config.max_cycle_len, config.tolerances.monotonicity,
                                     seed=config.seed)
        report = CheckReport("monotonicity", values={"cycles_checked": monotone.cycles_checked,
                                                     "exhaustive": monotone.exhaustive})
        if not monotone:
            indices = [k for pair in monotone.witness for k in pair]
            report.fail("kantorovich", "c2-cyclical monotonicity of the optimal support", indices,
                        f"rotating {list(monotone.witness)} lowers the cost by {monotone.gain!r}",
                        "cyclical-monotonicity")
        return report

    def __potentials(self, result: SolveResult, matrix: CostMatrix) -> Optional[PotentialPair]:
        tol = self.__config.tolerances
        try:
            pp = build_pi_solution(result.support(), matrix)
        except MonotonicityViolatedError as e:
            report = CheckReport("pi_solution")
            report.fail("potentials", "finite chain supremum", e.cycle, str(e), "chain-construction")
            self.__record(report)
            return None
        if self.__config.write_artifacts:
            pp.to_csv(self.__path("potentials.csv"))
        if self.__enabled("pi_solution"):
            self.__record(verify_pi_solution(pp, result.coupling, matrix, tol.pi_solution))
        if self.__enabled("duality"):
            report = CheckReport("duality")
            coupling = result.coupling
            gap = duality_gap(pp, result, coupling.source, coupling.target)
            self.__values["duality_gap"] = gap
            report.values["gap"] = gap
            if abs(gap) > tol.duality_gap * max(1.0, abs(result.total_cost.value)):
                report.fail("potentials", "zero duality gap", (), f"dual value misses the optimal cost by {gap!r}",
                            "kantorovich-duality")
            self.__record(report)
        return pp

    def __map(self, pp: PotentialPair, result: SolveResult, matrix: CostMatrix):
        if not self.__enabled("map"):
            return
        tol = self.__config.tolerances
        report = CheckReport("map")
        try:
            tm = recover_map(pp, result, matrix, tol.tie, tol.snap, strict=False, twist_tolerance=tol.twist)
        except (NoTimelikeSolutionError, NonFiniteNeighborhoodError) as e:
            report.fail("transport", "twist inversion of the potential gradient", (), str(e), "twist-condition")
            self.__record(report)
            return
        if self.__config.write_artifacts:
            tm.to_csv(self.__path("map.csv"))
        induced = verify_map_induces_coupling(tm, result, tol.marginal)
        report.values.update(induced.values)
        self.__values["agreement_rate"] = tm.agreement_rate
        ambiguous = [e.source_index for e in tm.entries if e.ambiguous]
        if ambiguous:
            report.hypothesis_flags.append(f"argmax ties at source points {ambiguous}")
            report.hypothesis_flags.extend(f.message for f in induced.failures)
        else:
            report.failures.extend(induced.failures)
            for entry in tm.entries:
                if not entry.agrees_with_argmax:
                    report.fail("transport", "twist inversion agrees with the argmax target", (entry.source_index,),
                                f"T(x) = {entry.target}, argmax target index {entry.argmax_index}", "transport-map")
                bound = 1e-4 * (1.0 + (0.0 if entry.gradient is None else entry.gradient.norm()))
                if not entry.gradient_skipped and entry.residual > bound:
                    report.fail("transport", "twist equation residual", (entry.source_index,),
                                f"residual {entry.residual!r} exceeds {bound!r}", "twist-condition")
        self.__record(report)


def run_pipeline(config: RunConfig) -> PipelineResult:
    return Pipeline(config).run()


def verify_files(instance_path: str, plan_path: str, potentials_path: Optional[str] = None,
                 tolerances: Tolerances = Tolerances(), max_cycle_len: int = 4) -> Tuple[int, List[CheckReport]]:
    """Re-check stored artifacts: plan optimality against a fresh solve, monotonicity and potentials."""
    instance = Instance.read(instance_path)
    record = PlanRecord.read(plan_path)
    matrix = assemble_cost_matrix(instance.model, instance.mu.points, instance.nu.points)
    stored = SolveResult.from_record(record, instance.mu, instance.nu)
    reports = []

    plan = CheckReport("plan")
    fresh = solve(matrix, instance.mu, instance.nu)
    difference = abs(fresh.total_cost.value - record.total_cost)
    plan.values.update({"stored_cost": record.total_cost, "fresh_cost": fresh.total_cost.value})
    if difference > tolerances.duality_gap * max(1.0, abs(record.total_cost)):
        plan.fail("kantorovich", "optimality of the stored plan", (), f"fresh solve differs by {difference!r}",
                  "optimal-coupling")
    if any(not matrix.admissible[i, j] for i, j in stored.support()):
        plan.fail("kantorovich", "plan concentrated on J+", (), "stored plan charges a forbidden pair",
                  "optimal-coupling")
    reports.append(plan)

    monotone = check_c2_monotone(stored.support(), matrix, max_cycle_len, tolerances.monotonicity)
    report = CheckReport("monotonicity")
    if not monotone:
        report.fail("kantorovich", "c2-cyclical monotonicity of the optimal support",
                    [k for pair in monotone.witness for k in pair], f"gain {monotone.gain!r}", "cyclical-monotonicity")
    reports.append(report)

    if potentials_path is not None:
        pp = PotentialPair.read_csv(potentials_path)
    else:
        pp = build_pi_solution(stored.support(), matrix)
    reports.append(verify_pi_solution(pp, stored.coupling, matrix, tolerances.pi_solution))
    gap = CheckReport("duality")
    value = duality_gap(pp, stored, instance.mu, instance.nu)
    gap.values["gap"] = value
    if abs(value) > tolerances.duality_gap * max(1.0, abs(record.total_cost)):
        gap.fail("potentials", "zero duality gap", (), f"dual value misses the plan cost by {value!r}",
                 "kantorovich-duality")
    reports.append(gap)

    exit_code = EXIT_PASS if all(r.passed for r in reports) else EXIT_ERROR
    return exit_code, reports


def _sweep_row(config: RunConfig) -> Dict[str, Any]:
    result = run_pipeline(config)
    values = result.summary["values"]
    return {"seed": config.seed, "profile": values.get("profile", config.profile), "exit_code": result.exit_code,
            "total_cost": values.get("total_cost"), "duality_gap": values.get("duality_gap"),
            "min_delta": values.get("delta"), "semiconvexity": values.get("semiconvexity"),
            "agreement_rate": values.get("agreement_rate")}


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def sweep(template: RunConfig, seeds: Sequence[int], path: str, profiles: Optional[Sequence[str]] = None,
          workers: int = 1) -> List[Dict[str, Any]]:
    """One pipeline run per (profile, seed), without per-run artifacts; rows ordered by profile then seed."""
    template.validate()
    profiles = [template.profile] if profiles is None else list(profiles)
    configs = [replace(template, seed=seed, profile=profile, write_artifacts=False)
               for profile in profiles for seed in seeds]
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_sweep_row, configs))
    else:
        rows = [_sweep_row(c) for c in configs]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in SWEEP_COLUMNS])
    logger.info(f"Sweep wrote {len(rows)} rows to {path}")
    return rows


def compare_pivots(config: RunConfig, methods: Sequence[str] = ("highs-ds", "highs-ipm")) -> Dict[str, Any]:
    """Optimal values and plans of several LP backends on the configured instance."""
    config.validate()
    instance = load_instance(config)
    matrix = assemble_cost_matrix(instance.model, instance.mu.points, instance.nu.points, config.workers)
    comparison = compare_methods(matrix, instance.mu, instance.nu, methods)
    if config.write_artifacts:
        os.makedirs(config.out_dir, exist_ok=True)
        write_json(os.path.join(config.out_dir, "compare.json"), comparison)
    return comparison

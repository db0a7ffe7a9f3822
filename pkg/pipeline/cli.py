"""
Command-line pipeline: simulate -> extract -> fit-arcs -> plan -> verify.

Every subcommand is a pydantic-settings model whose ``cli_cmd`` does the work,
so options are validated like any other input document. Results go to files
(or stdout for ``verify`` and ``crosstalk``); logs go to stderr. Failures
print the standardized JSON error object to stderr and exit with the
exception's exit code.

Example:
    fluxcav gen --kind peaks --model model.json --noise 7,0.001,0 --out peaks.csv
    fluxcav fit-arcs --peaks peaks.csv --init init.json --out calib.json
    fluxcav plan --calib calib.json --targets 5.705,6.195,5.0 --out currents.json
    fluxcav verify --calib calib.json --currents currents.json
"""

import json
import logging
import sys
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, CliApp, CliSubCommand, SettingsConfigDict, SettingsError

from fluxcav import __version__
from fluxcav.core.exceptions import (
    FluxCavException,
    ValidationException,
    error_from_exception,
    from_validation_error,
)
from fluxcav.core.logging import setup_logging
from fluxcav.services.calibration import FitOptions, fit_arcs
from fluxcav.services.core_model import (
    crosstalk_report,
    currents_for_targets,
    plan_schedule,
    predicted_frequencies,
)
from fluxcav.services.optimizer import LeastSquaresOptions
from fluxcav.services.resonator_fit import fit_reflection, loaded_q
from fluxcav.services.spectrum_engine import ProbeRange, Sweep, simulate_map
from fluxcav.services.synth import (
    NoiseSpec,
    gen_peak_observations,
    gen_reflection_trace,
    gen_spectroscopy_map,
    per_coil_sweeps,
)
from pipeline.ingest import extract_peaks, label_tracks
from pipeline.load import (
    CalibrationDocument,
    CurrentsDocument,
    ModelDocument,
    PlannedPoint,
    PredictionDocument,
    ResonatorDocument,
    read_document,
    read_map,
    read_peaks,
    read_trace,
    write_document,
    write_map,
    write_peaks,
    write_trace,
)

logger = logging.getLogger(__name__)

COMMAND_CONFIG = SettingsConfigDict(cli_kebab_case=True, env_prefix="FLUXCAV_CLI_", extra="ignore")


def _numbers(text: str, count: int, what: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ValidationException(f"{what} must be {count} comma-separated numbers, got {text!r}") from e
    if len(values) != count:
        raise ValidationException(f"{what} must be {count} comma-separated numbers, got {text!r}")
    return values


def parse_sweep(text: str) -> Sweep:
    """``coil=J,start,stop,n`` (the ``coil=`` prefix is optional)."""
    head, _, rest = text.partition(",")
    if head.startswith("coil="):
        head = head[len("coil="):]
    coil, start, stop, points = _numbers(f"{head},{rest}", 4, "--sweep")
    return Sweep(coil=int(coil), start=start, stop=stop, points=int(points))


def parse_probe(text: str) -> ProbeRange:
    """``start,stop,n`` in GHz."""
    start, stop, points = _numbers(text, 3, "--probe")
    return ProbeRange(start=start, stop=stop, points=int(points))


def parse_noise(text: str) -> NoiseSpec:
    """``seed,sigma_frequency_ghz,sigma_amplitude``."""
    seed, jitter, amplitude = _numbers(text, 3, "--noise")
    return NoiseSpec(seed=int(seed), frequency_jitter_sigma=jitter, amplitude_noise_sigma=amplitude)


def _range(text: str, what: str) -> Tuple[float, float]:
    start, stop = _numbers(text, 2, what)
    return start, stop


def _emit(document) -> None:
    sys.stdout.write(document.model_dump_json(indent=2) + "\n")


class SimulateCommand(BaseSettings):
    """Render a noiseless two-tone spectroscopy map for one coil sweep."""

    model_config = COMMAND_CONFIG

    model: str = Field(..., description="Model document (JSON)")
    sweep: str = Field(..., description="coil=J,start_ma,stop_ma,points")
    probe: str = Field(..., description="start_ghz,stop_ghz,points")
    out: str = Field(..., description="Output map CSV")
    workers: Optional[int] = Field(None, ge=1, description="Thread count; defaults to WORKERS")

    def cli_cmd(self) -> None:
        document = read_document(self.model, ModelDocument)
        spectroscopy_map = simulate_map(document.model, parse_sweep(self.sweep), parse_probe(self.probe), self.workers)
        write_map(self.out, spectroscopy_map)


class GenCommand(BaseSettings):
    """Generate seeded synthetic data: a spectroscopy map, a reflection trace or a peak list."""

    model_config = COMMAND_CONFIG

    kind: Literal["map", "trace", "peaks"] = "map"
    out: str = Field(..., description="Output CSV")
    noise: str = Field("0,0,0", description="seed,sigma_frequency_ghz,sigma_amplitude")
    model: Optional[str] = Field(None, description="Model document; required for map and peaks")
    workers: Optional[int] = Field(None, ge=1)
    # map
    sweep: Optional[str] = Field(None, description="coil=J,start_ma,stop_ma,points")
    probe: Optional[str] = Field(None, description="start_ghz,stop_ghz,points")
    # peaks
    current_range: str = Field("-3,3", description="start_ma,stop_ma swept on every coil in turn")
    bias_points: int = Field(61, ge=2, description="Bias points per coil")
    # trace
    f0: float = Field(7.5905, gt=0, description="GHz")
    q_int: float = Field(102000.0, gt=0)
    q_ext: float = Field(100000.0, gt=0)
    span: Optional[float] = Field(None, gt=0, description="GHz; defaults to 10 loaded linewidths")
    points: int = Field(2001, ge=16)

    def _system(self):
        if self.model is None:
            raise ValidationException(f"gen --kind {self.kind} needs --model")
        return read_document(self.model, ModelDocument).model

    def cli_cmd(self) -> None:
        noise = parse_noise(self.noise)
        if self.kind == "map":
            if self.sweep is None or self.probe is None:
                raise ValidationException("gen --kind map needs --sweep and --probe")
            spectroscopy_map = gen_spectroscopy_map(
                self._system(), parse_sweep(self.sweep), parse_probe(self.probe), noise, self.workers
            )
            write_map(self.out, spectroscopy_map)
        elif self.kind == "peaks":
            system = self._system()
            start, stop = _range(self.current_range, "--current-range")
            biases = per_coil_sweeps(system.flux_map.n_coils, start, stop, self.bias_points)
            write_peaks(self.out, gen_peak_observations(system, biases, noise), n_coils=system.flux_map.n_coils)
        else:
            q_loaded = 1.0 / (1.0 / self.q_int + 1.0 / self.q_ext)
            span = self.span if self.span is not None else 10.0 * self.f0 / q_loaded
            write_trace(self.out, gen_reflection_trace(self.f0, self.q_int, self.q_ext, span, self.points, noise))


class ExtractCommand(BaseSettings):
    """Digitize one or more spectroscopy maps into an unassigned peak list."""

    model_config = COMMAND_CONFIG

    map: List[str] = Field(..., description="Map CSV; repeat for several coil sweeps")
    threshold: Optional[float] = Field(None, description="Defaults to PEAK_THRESHOLD")
    min_sep: Optional[float] = Field(None, description="GHz; defaults to PEAK_MIN_SEPARATION_GHZ")
    out: str

    def cli_cmd(self) -> None:
        peaks = []
        n_coils = None
        for path in self.map:
            spectroscopy_map = read_map(path)
            if n_coils is not None and spectroscopy_map.n_coils != n_coils:
                raise ValidationException(f"{path} has {spectroscopy_map.n_coils} coils, earlier maps {n_coils}")
            n_coils = spectroscopy_map.n_coils
            probe = spectroscopy_map.probe_frequencies
            logger.info("📄 %s: probe step %.6g GHz", path, (probe[-1] - probe[0]) / max(len(probe) - 1, 1))
            peaks.extend(extract_peaks(spectroscopy_map, self.threshold, self.min_sep))
        write_peaks(self.out, peaks, n_coils=n_coils)


class FitArcsCommand(BaseSettings):
    """Fit flux map and transmon parameters to a peak list."""

    model_config = COMMAND_CONFIG

    peaks: str = Field(..., description="Peak CSV")
    init: str = Field(..., description="Seed calibration document")
    out: str
    probe_step: Optional[float] = Field(None, gt=0, description="GHz; needed to track unassigned peaks")
    max_jump_steps: Optional[int] = Field(None, ge=1)
    min_sep: Optional[float] = Field(None, ge=0, description="GHz used by extract; defaults to PEAK_MIN_SEPARATION_GHZ")
    max_iterations: Optional[int] = Field(None, ge=1)
    tolerance: Optional[float] = Field(None, gt=0)
    allow_underdetermined: bool = False

    def cli_cmd(self) -> None:
        observations = read_peaks(self.peaks)
        seed = read_document(self.init, CalibrationDocument).calibration
        if any(o.qubit_index < 0 for o in observations):
            if self.probe_step is None:
                raise ValidationException("unassigned peaks need --probe-step to be tracked")
            observations = label_tracks(
                observations, seed, self.probe_step, self.max_jump_steps, min_separation=self.min_sep
            )
        options = FitOptions(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            allow_underdetermined=self.allow_underdetermined,
        )
        result = fit_arcs(observations, seed, options)
        write_document(self.out, CalibrationDocument(calibration=result))


class PlanCommand(BaseSettings):
    """Coil currents for target frequencies, or a hold-and-sweep schedule."""

    model_config = COMMAND_CONFIG

    calib: str
    out: str
    targets: Optional[List[float]] = Field(None, description="GHz per qubit")
    hold: Optional[Dict[int, float]] = Field(None, description="qubit=GHz pairs held fixed")
    sweep_qubit: Optional[int] = Field(None, ge=0)
    sweep_range: Optional[str] = Field(None, description="start_ghz,stop_ghz for the swept qubit")
    points: int = Field(30, ge=2)
    condition_limit: Optional[float] = Field(None, gt=0)

    def cli_cmd(self) -> None:
        calibration = read_document(self.calib, CalibrationDocument).calibration
        flux_map, params = calibration.flux_map, calibration.params

        if self.targets is not None:
            bias = currents_for_targets(flux_map, params, self.targets, self.condition_limit)
            document = CurrentsDocument(points=[PlannedPoint(targets=self.targets, currents=bias.currents)])
        elif self.hold is not None and self.sweep_qubit is not None and self.sweep_range is not None:
            start, stop = _range(self.sweep_range, "--sweep-range")
            schedule = plan_schedule(
                flux_map, params, self.hold, self.sweep_qubit, start, stop, self.points, self.condition_limit
            )
            swept = [start + (stop - start) * k / (self.points - 1) for k in range(self.points)]
            points = [
                PlannedPoint(targets=[self.hold.get(i, f) for i in range(flux_map.n_qubits)], currents=bias.currents)
                for f, bias in zip(swept, schedule)
            ]
            document = CurrentsDocument(points=points, held=self.hold, swept_qubit=self.sweep_qubit)
        else:
            raise ValidationException("plan needs --targets, or --hold with --sweep-qubit and --sweep-range")
        write_document(self.out, document)


class VerifyCommand(BaseSettings):
    """Predict qubit frequencies at planned currents and compare with their targets."""

    model_config = COMMAND_CONFIG

    calib: str
    currents: str
    out: Optional[str] = None

    def cli_cmd(self) -> None:
        calibration = read_document(self.calib, CalibrationDocument).calibration
        planned = read_document(self.currents, CurrentsDocument)
        predicted = [
            predicted_frequencies(calibration.flux_map, calibration.params, bias).tolist()
            for bias in planned.bias_points()
        ]
        deviation = max(
            (abs(f - t) for point, row in zip(planned.points, predicted) for f, t in zip(row, point.targets)),
            default=0.0,
        )
        document = PredictionDocument(points=planned.points, predicted=predicted, max_deviation_ghz=deviation)
        logger.info("📊 Max deviation from targets: %.3f MHz", deviation * 1e3)
        if self.out:
            write_document(self.out, document)
        _emit(document)


class CrosstalkCommand(BaseSettings):
    """Singular values, condition number and normalized crosstalk of a calibration."""

    model_config = COMMAND_CONFIG

    calib: str
    condition_limit: Optional[float] = Field(None, gt=0)

    def cli_cmd(self) -> None:
        calibration = read_document(self.calib, CalibrationDocument).calibration
        _emit(crosstalk_report(calibration.flux_map, self.condition_limit))


class FitResonatorCommand(BaseSettings):
    """Fit internal and external quality factors to a reflection trace."""

    model_config = COMMAND_CONFIG

    trace: str
    out: str
    max_iterations: Optional[int] = Field(None, ge=1)

    def cli_cmd(self) -> None:
        result = fit_reflection(read_trace(self.trace), LeastSquaresOptions(max_iterations=self.max_iterations))
        write_document(self.out, ResonatorDocument(result=result, q_loaded=loaded_q(result)))


class FluxCavCLI(BaseSettings):
    """Flux-tunable transmon calibration and cavity spectroscopy tools."""

    model_config = SettingsConfigDict(
        cli_kebab_case=True,
        cli_prog_name="fluxcav",
        env_prefix="FLUXCAV_CLI_",
        extra="ignore",
    )

    simulate: CliSubCommand[SimulateCommand]
    gen: CliSubCommand[GenCommand]
    extract: CliSubCommand[ExtractCommand]
    fit_arcs: CliSubCommand[FitArcsCommand]
    plan: CliSubCommand[PlanCommand]
    verify: CliSubCommand[VerifyCommand]
    crosstalk: CliSubCommand[CrosstalkCommand]
    fit_resonator: CliSubCommand[FitResonatorCommand]

    def cli_cmd(self) -> None:
        CliApp.run_subcommand(self)


def _fail(exc: FluxCavException) -> int:
    sys.stderr.write(json.dumps(error_from_exception(exc)) + "\n")
    return exc.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return the process exit code."""
    setup_logging(stream=sys.stderr)
    args = sys.argv[1:] if argv is None else argv
    logger.debug("fluxcav %s: %s", __version__, args)
    try:
        CliApp.run(FluxCavCLI, cli_args=args)
    except FluxCavException as e:
        logger.error("❌ %s", e.message)
        return _fail(e)
    except ValidationError as e:
        return _fail(from_validation_error(e))
    except SettingsError as e:
        return _fail(ValidationException(f"Invalid command line: {e}", {"argv": args}))
    except SystemExit as e:
        # argparse exits on --help (0) and on unknown or malformed options (2)
        if e.code in (0, None):
            return 0
        return _fail(ValidationException("Invalid command line; see fluxcav --help", {"argv": args}))
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

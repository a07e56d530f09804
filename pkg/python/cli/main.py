"""Main CLI entry point for mpbridge."""

import functools
import json
import logging
import sys
from typing import IO, Any, Callable

import click
import numpy as np

from cli.io import (
    emit_table,
    parse_floats,
    parse_ints,
    read_pair_measure,
    read_profile,
    read_words,
    resample_profile,
)
from cli.modelfile import Settings, load_model_file, load_settings
from mpbridge import __version__
from mpbridge.empirical import KWordMeasure, empirical_k, generalized_spatial
from mpbridge.exceptions import MpbridgeError, NoConvergence, SizeLimit, ValidationError
from mpbridge.internal.entropy import binary_entropy
from mpbridge.internal.report import ReportWriter
from mpbridge.perron import perron_finite
from mpbridge.rate_finite import RateOptions, pair_rate_dual, pair_rate_primal
from mpbridge.rate_tasep import Profile, ProfileOptions, rate_profile
from mpbridge.rational import RationalModel, Word, build_enlarged, measure_probability
from mpbridge.rational import sample_bridges as sample_rational_bridges
from mpbridge.tasep import (
    MU_B,
    MU_I,
    StepLaw,
    TasepParams,
    build_tasep,
    fluid_limit_ode,
    generator_stationary,
    sample_tasep_bridges,
    sample_tilted_batch,
    tasep_epsilon,
    tasep_probability,
)
from mpbridge.verify import ProfileBall, WordBall, enumerate_exact, ld_curve

log = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

# Pre-set tilt pairs of the fluid check: (gammaI, gammaB, z0).
FLUID_TILTS: dict[str, tuple[StepLaw, StepLaw, float]] = {
    "zero": (MU_I, MU_B, 0.3),
    "stick": (
        StepLaw.from_dict({(0, -1): 0.5, (0, 0): 0.2, (1, 0): 0.2, (1, 1): 0.1}),
        MU_B,
        0.2,
    ),
}
FLUID_THRESHOLD = 0.02


def _error_record(error: str, message: str, command: str | None) -> None:
    record = {"error": error, "message": message, "command": command}
    click.echo(json.dumps(record, sort_keys=True), err=True)


class MpbridgeGroup(click.Group):
    """Click group that maps usage errors to exit code 1."""

    def main(self, *args: Any, **kwargs: Any) -> Any:
        kwargs["standalone_mode"] = False
        try:
            return super().main(*args, **kwargs)
        except click.ClickException as e:
            e.show()
            _error_record(type(e).__name__, e.format_message(), None)
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)


def reports_errors(func: Callable[..., None]) -> Callable[..., None]:
    """Turn mpbridge errors into an exit code and a JSON record on stderr."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        command = click.get_current_context().info_name
        try:
            func(*args, **kwargs)
        except ValidationError as e:
            _error_record(type(e).__name__, str(e), command)
            sys.exit(EXIT_VALIDATION)
        except MpbridgeError as e:
            _error_record(type(e).__name__, str(e), command)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


NUMERIC_OPTIONS = {
    "seed": click.option("--seed", type=int, default=None, help="Random seed (default: config)"),
    "bins": click.option("--bins", type=int, default=None, help="Spatial bins L (default: config)"),
    "grid": click.option("--grid", type=int, default=None, help="Grid cells (default: config)"),
    "tol": click.option(
        "--tol", type=float, default=None, help="Solver tolerance (default: config)"
    ),
    "bmax": click.option(
        "--bmax", type=str, default=None, help="TASEP truncation bound or 'auto'"
    ),
}


def numeric_options(*names: str) -> Callable[[Callable[..., None]], Callable[..., None]]:
    """Attach the named numeric flags; unset values come from the settings."""

    def decorator(func: Callable[..., None]) -> Callable[..., None]:
        for name in reversed(names):
            func = NUMERIC_OPTIONS[name](func)
        return func

    return decorator


def source_options(func: Callable[..., None]) -> Callable[..., None]:
    """MODEL_FILE or --tasep --alpha A --beta B."""
    options = [
        click.argument("model_file", required=False, type=click.Path(dir_okay=False)),
        click.option("--tasep", is_flag=True, default=False, help="Use the TASEP model"),
        click.option("--alpha", type=float, default=None, help="TASEP injection rate"),
        click.option("--beta", type=float, default=None, help="TASEP extraction rate"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _settings() -> Settings:
    obj = click.get_current_context().find_root().obj
    return obj["settings"] if obj else Settings()


def _resolve(name: str, value: Any) -> Any:
    return getattr(_settings(), name) if value is None else value


def _bmax(value: str | None) -> int | None:
    raw = value if value is not None else _settings().bmax
    if raw is None or raw == "auto":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"--bmax must be an integer or 'auto', got {raw!r}") from None


def _source(
    model_file: str | None, tasep: bool, alpha: float | None, beta: float | None, N: int = 1
) -> RationalModel | TasepParams:
    if tasep:
        if model_file is not None:
            raise click.UsageError("give either MODEL_FILE or --tasep, not both")
        if alpha is None or beta is None:
            raise click.UsageError("--tasep needs --alpha and --beta")
        return TasepParams(alpha, beta, N)
    if model_file is None:
        raise click.UsageError("MODEL_FILE is required unless --tasep is given")
    return load_model_file(model_file).build(N)


def _open_output(output: str | None, output_format: str) -> IO[Any]:
    if output:
        return open(output, "wb" if output_format == "msgpack" else "w")
    if output_format == "msgpack":
        return click.get_binary_stream("stdout")
    return sys.stdout


@click.group(cls=MpbridgeGroup)
@click.version_option(version=__version__, prog_name="mpbridge")
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Settings file (default: $MPBRIDGE_CONFIG, else built-in defaults)",
)
@click.option("--verbose", "-v", is_flag=True, default=False, help="Log at DEBUG level")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """mpbridge - Matrix-product measures, Markov bridges and their large deviations."""
    try:
        settings = load_settings(config_path)
    except ValidationError as e:
        _error_record(type(e).__name__, str(e), None)
        sys.exit(EXIT_VALIDATION)
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    ctx.obj = {"settings": settings}


@cli.command()
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.option("--enlarged", is_flag=True, default=False, help="Also print ε and 𝔖")
@click.option("--n", "N", type=int, default=1, help="System size for TASEP model files")
@numeric_options("tol", "bmax")
@reports_errors
def perron(
    model_file: str,
    enlarged: bool,
    N: int,
    tol: float | None,
    bmax: str | None,
) -> None:
    """
    Print the Perron value and vector of M = Σ_a M^(a).

    Examples:

        mpbridge perron model.yaml

        mpbridge perron model.yaml --enlarged
    """
    source = load_model_file(model_file).build(N)
    out = sys.stdout
    if isinstance(source, TasepParams):
        # Closed form: λ = 4, e(b) = b + 1, ε(a,b) = (2a + 2b + 1)/4.
        truncated = build_tasep(source, bmax=_bmax(bmax))
        emit_table(out, ["lambda", "residual", "iterations"], [(4.0, 0.0, 0)])
        emit_table(out, ["b", "e"], [(b, float(b + 1)) for b in range(truncated.bmax + 1)])
        if enlarged:
            eps = tasep_epsilon(truncated.bmax)
            emit_table(
                out,
                ["a", "b", "epsilon"],
                [(a, b, eps[a, b]) for a in range(2) for b in range(truncated.bmax + 1)],
            )
        return

    pd = perron_finite(source.total, tol=_resolve("tol", tol))
    emit_table(out, ["lambda", "residual", "iterations"], [(pd.value, pd.residual, pd.iterations)])
    emit_table(out, ["b", "e"], list(enumerate(pd.right_vector.tolist())))
    if enlarged:
        chain = build_enlarged(source)
        grid_eps = chain.epsilon_grid
        emit_table(
            out,
            ["a", "b", "epsilon"],
            [(a, b, grid_eps[a, b]) for a in range(chain.alphabet_size) for b in range(chain.dim)],
        )
        S = chain.S_frak.entries
        rows = [
            (*chain.state(s), *chain.state(t), S[s, t])
            for s in range(S.shape[0])
            for t in range(S.shape[1])
            if S[s, t] > 0
        ]
        emit_table(out, ["a", "b", "a_next", "b_next", "S"], rows)


@cli.command()
@source_options
@click.option("--n", "N", type=int, default=None, help="Word length N")
@click.option("--word", type=str, default=None, help="Compact word such as 0110")
@click.option("--enumerate", "enumerate_all", is_flag=True, default=False, help="Full table")
@numeric_options("bmax")
@reports_errors
def measure(
    model_file: str | None,
    tasep: bool,
    alpha: float | None,
    beta: float | None,
    N: int | None,
    word: str | None,
    enumerate_all: bool,
    bmax: str | None,
) -> None:
    """
    Print μ_N(η) for one word or for every word of length N.

    Examples:

        mpbridge measure model.yaml --word 0110

        mpbridge measure --tasep --alpha 1 --beta 1 --n 1 --enumerate
    """
    if (word is None) == (not enumerate_all):
        raise click.UsageError("give exactly one of --word or --enumerate")
    if word is not None:
        N = len(word.strip()) if N is None else N
    if N is None:
        raise click.UsageError("--n is required with --enumerate")
    source = _source(model_file, tasep, alpha, beta, N)
    size = source.alphabet_size if isinstance(source, RationalModel) else 2

    if word is not None:
        eta = Word.parse(word, size)
        if len(eta) != N:
            raise ValidationError(f"word has length {len(eta)} but --n is {N}")
        if isinstance(source, TasepParams):
            probability = tasep_probability(build_tasep(source, bmax=_bmax(bmax)), eta)
        else:
            probability = measure_probability(source, eta)
        emit_table(sys.stdout, ["word", "probability"], [(str(eta), probability)])
        return

    cap = _settings().enumerate_cap
    if N * np.log2(max(size, 2)) > cap:
        raise SizeLimit(f"enumeration of {size}^{N} words exceeds the cap 2^{cap}")
    dist = enumerate_exact(source, N, workers=_settings().workers)
    emit_table(
        sys.stdout,
        ["word", "probability"],
        [("".join(str(s) for s in w), p) for w, p in zip(dist.words.tolist(), dist.probs)],
    )


@cli.command("sample-bridge")
@source_options
@click.option("--n", "N", type=int, required=True, help="Word length N")
@click.option("--samples", type=int, default=1, help="Number of trajectories")
@click.option("--summary", is_flag=True, default=False, help="Emit word counts only")
@click.option(
    "--format",
    "-f",
    "output_format",
    type=click.Choice(["jsonl", "msgpack"]),
    default="jsonl",
    help="Output format (default: jsonl)",
)
@click.option(
    "--output",
    "-o",
    type=click.Path(dir_okay=False, writable=True),
    help="Output file path. Defaults to stdout if not specified.",
)
@numeric_options("seed", "bmax")
@reports_errors
def sample_bridge(
    model_file: str | None,
    tasep: bool,
    alpha: float | None,
    beta: float | None,
    N: int,
    samples: int,
    summary: bool,
    output_format: str,
    output: str | None,
    seed: int | None,
    bmax: str | None,
) -> None:
    """
    Draw exact bridge trajectories of the enlarged chain.

    Examples:

        mpbridge sample-bridge --tasep --alpha 0.75 --beta 0.75 --n 6 --samples 10

        mpbridge sample-bridge model.yaml --n 8 --samples 1000 --summary -f msgpack -o out.bin
    """
    if samples < 1:
        raise ValidationError("--samples must be at least 1")
    source = _source(model_file, tasep, alpha, beta, N)
    seed = _resolve("seed", seed)
    if isinstance(source, TasepParams):
        eta, zeta = sample_tasep_bridges(source, samples, seed, bmax=_bmax(bmax))
    else:
        chain = build_enlarged(source)
        paths = sample_rational_bridges(chain.bridge(N), samples, seed)
        eta, zeta = np.divmod(paths, chain.dim)

    stream = _open_output(output, output_format)
    writer = ReportWriter(stream, output_format)
    params = {"N": N, "samples": samples, "seed": seed}
    if summary:
        words, counts = np.unique(eta[:, :N], axis=0, return_counts=True)
        writer.write(
            {
                "command": "sample-bridge",
                "params": params,
                "counts": {"".join(map(str, w)): int(c) for w, c in zip(words.tolist(), counts)},
            }
        )
    else:
        for i in range(samples):
            writer.write(
                {
                    "command": "sample-bridge",
                    "params": params,
                    "sample": i,
                    "word": "".join(map(str, eta[i, :N].tolist())),
                    "eta": eta[i],
                    "zeta": zeta[i],
                }
            )
    if output:
        stream.close()
        click.echo(f"Trajectories written to {output}", err=True)


@cli.command()
@click.argument("word_file", type=click.Path(dir_okay=False))
@click.option("--k", "k", type=int, default=1, help="Block order k")
@click.option("--alphabet", type=int, default=2, help="Alphabet size |A|")
@click.option("--spatial", is_flag=True, default=False, help="Bin the blocks over [0, 1]")
@numeric_options("bins")
@reports_errors
def empirical(
    word_file: str,
    k: int,
    alphabet: int,
    spatial: bool,
    bins: int | None,
) -> None:
    """
    Compute ν̂^k (or Π̂^k with --spatial) for every word in WORD_FILE.

    Examples:

        mpbridge empirical words.csv --k 2

        mpbridge empirical words.csv --k 1 --spatial --bins 4
    """
    words = read_words(word_file, alphabet)
    if spatial:
        L = _resolve("bins", bins)
        rows = []
        for index, word in enumerate(words):
            measure = generalized_spatial(word, k, L)
            for j in range(L):
                for code, mass in enumerate(measure.masses[j]):
                    rows.append((index, j + 1, _block(code, k, alphabet), float(mass)))
        emit_table(sys.stdout, ["word_index", "bin", "block", "mass"], rows)
        return
    rows = []
    for index, word in enumerate(words):
        nu = empirical_k(word, k)
        for block, weight in nu.items():
            rows.append((index, "".join(map(str, block)), weight))
    emit_table(sys.stdout, ["word_index", "block", "weight"], rows)


def _block(code: int, k: int, size: int) -> str:
    digits = []
    for _ in range(k):
        code, digit = divmod(code, size)
        digits.append(str(digit))
    return "".join(reversed(digits))


@cli.command("rate-pair")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("nu2_file", type=click.Path(dir_okay=False))
@numeric_options("tol")
@reports_errors
def rate_pair(
    model_file: str,
    nu2_file: str,
    tol: float | None,
) -> None:
    """
    Evaluate the pair rate functional I²(ν²) with both solvers.

    Example:

        mpbridge rate-pair model.yaml nu2.yaml
    """
    source = load_model_file(model_file).build()
    if not isinstance(source, RationalModel):
        raise ValidationError("rate-pair needs an explicit model file")
    nu2 = read_pair_measure(nu2_file)
    opts = RateOptions(tol=_resolve("tol", tol))
    header = [
        "solver", "value", "gap", "iterations", "converged", "boundary", "constraint_residual"
    ]
    reports = {
        "primal": pair_rate_primal(source, nu2, opts),
        "dual": pair_rate_dual(source, nu2, opts),
    }
    emit_table(
        sys.stdout,
        header,
        [
            (name, r.value, r.gap, r.iterations, r.converged, r.boundary, r.constraint_residual)
            for name, r in reports.items()
        ],
    )
    tilt = reports["dual"].minimizer
    if tilt is not None:
        emit_table(
            sys.stdout,
            ["a", "a_next", "p"],
            [(a, a2, tilt[a, a2]) for a in range(tilt.shape[0]) for a2 in range(tilt.shape[1])],
        )


@cli.command("rate-profile")
@click.argument("profile_csv", type=click.Path(dir_okay=False))
@click.option("--alpha", type=float, required=True, help="TASEP injection rate")
@click.option("--beta", type=float, required=True, help="TASEP extraction rate")
@numeric_options("grid", "tol")
@reports_errors
def rate_profile_command(
    profile_csv: str,
    alpha: float,
    beta: float,
    grid: int | None,
    tol: float | None,
) -> None:
    """
    Evaluate the TASEP density-profile rate functional.

    The profile is resampled onto --grid cells. The solver stops once its
    gap bound falls to --tol.

    Example:

        mpbridge rate-profile profile.csv --alpha 0.75 --beta 0.75 --grid 1000
    """
    params = TasepParams(alpha, beta)
    _, rho = read_profile(profile_csv)
    profile = Profile(resample_profile(rho, _resolve("grid", grid)))
    report = rate_profile(profile, params, ProfileOptions(gap_tol=_resolve("tol", tol)))
    if report.minimizer is None:
        raise NoConvergence("profile solver returned no minimizer", iterations=report.iterations)
    L = profile.L
    G = np.concatenate(([0.0], np.cumsum(report.minimizer) / L))
    integrand = binary_entropy(profile.rho) + binary_entropy(report.minimizer)
    emit_table(
        sys.stdout,
        ["x", "rho", "F", "G_opt", "integrand"],
        [
            ((j + 1) / L, profile.rho[j], profile.F[j + 1], G[j + 1], integrand[j])
            for j in range(L)
        ],
    )
    emit_table(
        sys.stdout,
        ["value", "argmin_x", "iterations", "gap"],
        [(report.value, report.extra["argmin_x"], report.iterations, report.gap)],
    )


@cli.command("verify-ldp")
@source_options
@click.option("--ns", required=True, help="Comma-separated system sizes, e.g. 8,10,12")
@click.option("--center", required=True, help="Comma-separated ball center")
@click.option("--radius", type=float, default=0.1, help="ℓ¹ radius (default: 0.1)")
@click.option("--k", "k", type=int, default=2, help="Block order of a word ball")
@click.option("--profile", "profile_ball", is_flag=True, default=False, help="Profile ball")
@click.option("--samples", type=int, default=100_000, help="Monte Carlo samples per N")
@click.option(
    "--format",
    "-f",
    "output_format",
    type=click.Choice(["jsonl", "msgpack"]),
    default="jsonl",
    help="Output format (default: jsonl)",
)
@numeric_options("seed")
@reports_errors
def verify_ldp(
    model_file: str | None,
    tasep: bool,
    alpha: float | None,
    beta: float | None,
    ns: str,
    center: str,
    radius: float,
    k: int,
    profile_ball: bool,
    samples: int,
    output_format: str,
    seed: int | None,
) -> None:
    """
    Estimate −(1/N) log P(ball) for a sequence of N.

    Examples:

        mpbridge verify-ldp scalar.yaml --ns 8,10,12 --center 1,0,0,0 --radius 0.1

        mpbridge verify-ldp --tasep --alpha 0.75 --beta 0.75 --ns 8,10 --profile --center 0.5,0.5
    """
    Ns = parse_ints(ns)
    source = _source(model_file, tasep, alpha, beta, max(Ns, default=1))
    weights = parse_floats(center)
    if profile_ball:
        event: WordBall | ProfileBall = ProfileBall(weights, radius)
    else:
        size = source.alphabet_size if isinstance(source, RationalModel) else 2
        if weights.size != size**k:
            raise ValidationError(f"center needs {size**k} weights for k={k}, got {weights.size}")
        event = WordBall(KWordMeasure(weights.reshape((size,) * k)), radius)
    seed = _resolve("seed", seed)
    estimate = ld_curve(
        source,
        Ns,
        event,
        n_samples=samples,
        seed=seed,
        enumerate_cap=_settings().enumerate_cap,
        workers=_settings().workers,
    )
    writer = ReportWriter(_open_output(None, output_format), output_format)
    params = {"ns": Ns, "radius": radius, "seed": seed}
    for record in estimate.to_records():
        writer.write({"command": "verify-ldp", "params": params, **record})


@cli.command("stationary-check")
@click.option("--alpha", type=float, required=True, help="TASEP injection rate")
@click.option("--beta", type=float, required=True, help="TASEP extraction rate")
@click.option("--n", "N", type=int, required=True, help="System size N")
@numeric_options("tol", "bmax")
@reports_errors
def stationary_check(
    alpha: float,
    beta: float,
    N: int,
    tol: float | None,
    bmax: str | None,
) -> None:
    """
    Compare the matrix-product measure with the generator's stationary law.

    Example:

        mpbridge stationary-check --alpha 0.75 --beta 0.75 --n 5
    """
    params = TasepParams(alpha, beta, N)
    exact = enumerate_exact(build_tasep(params, bmax=_bmax(bmax)), N)
    oracle = generator_stationary(params)
    deviation = float(np.max(np.abs(exact.probs - oracle)))
    tol = _resolve("tol", tol)
    log.info("[cli] stationary-check N=%d max deviation %.3g", N, deviation)
    emit_table(
        sys.stdout,
        ["N", "max_deviation", "tol", "within_tol"],
        [(N, deviation, tol, deviation <= tol)],
    )


@cli.command("fluid-check")
@click.option("--runs", type=int, default=200, help="Monte Carlo runs")
@click.option("--n", "N", type=int, default=10_000, help="Walk length N")
@click.option(
    "--tilt",
    type=click.Choice(sorted(FLUID_TILTS)),
    default="zero",
    help="Pre-set tilt pair (default: zero)",
)
@numeric_options("seed", "grid")
@reports_errors
def fluid_check(
    runs: int,
    N: int,
    tilt: str,
    seed: int | None,
    grid: int | None,
) -> None:
    """
    Compare tilted-walk paths with the fluid-limit ODE.

    The ODE takes --grid Euler steps and is interpolated to the walk times.

    Example:

        mpbridge fluid-check --runs 200 --n 10000 --tilt stick
    """
    gammaI, gammaB, z0 = FLUID_TILTS[tilt]
    seed = _resolve("seed", seed)
    z0_index = int(round(z0 * N))
    _, zeta = sample_tilted_batch(gammaI, gammaB, N, z0_index, runs, seed)
    ode = fluid_limit_ode(gammaI, gammaB, z0_index / N, _resolve("grid", grid))
    fluid = np.interp(np.arange(N + 1) / N, ode.x, ode.z)
    distances = np.max(np.abs(zeta / N - fluid[None, :]), axis=1)
    emit_table(sys.stdout, ["run", "sup_distance"], list(enumerate(distances.tolist())))
    emit_table(
        sys.stdout,
        ["runs", "grid", "threshold", "fraction_below", "max_sup_distance"],
        [
            (
                runs,
                len(ode.x) - 1,
                FLUID_THRESHOLD,
                float(np.mean(distances < FLUID_THRESHOLD)),
                float(distances.max()),
            )
        ],
    )


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return its exit code."""
    try:
        cli.main(args=argv, prog_name="mpbridge")
    except SystemExit as e:
        return int(e.code or 0)
    return 0


if __name__ == "__main__":
    cli()

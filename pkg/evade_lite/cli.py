#!/usr/bin/env python3
"""
evade-lite - command-line pipeline.

Each subcommand runs one stage of a campaign described by a JSON run config
and exchanges artifacts with the other stages through the run's output
directory::

    evade-lite prepare  -c configs/iris.json
    evade-lite train    -c configs/iris.json
    evade-lite explain  -c configs/iris.json
    evade-lite analyze  -c configs/iris.json
    evade-lite attack   -c configs/iris.json --mode targeted --eps 0.3,0.4,0.5,0.6
    evade-lite evaluate -c configs/iris.json
    evade-lite report   -c configs/iris.json

Tables go to stdout, logs to stderr.
"""

import functools
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from evade_lite import __version__
from evade_lite.domain.analysis import build_conversion_table, build_ssd, condense_ssd
from evade_lite.domain.attack import l2_distance
from evade_lite.domain.entities import (
    ConversionTable,
    EfficacyRecord,
    EfficacyReport,
    PreprocessorState,
    ProcessedDataset,
)
from evade_lite.domain.evaluation import (
    accuracy_impact,
    run_epsilon_search,
    run_targeted,
    run_untargeted,
    saturation_point,
    saturation_sweep,
    stratum_record,
    targeted_sweep,
    untargeted_sweep,
)
from evade_lite.domain.explain import (
    beeswarm_export,
    feature_ranking,
    sample_background,
    shap_values,
)
from evade_lite.domain.interfaces import Predictor, accuracy
from evade_lite.infrastructure.classifiers import train_model
from evade_lite.infrastructure.dataset import (
    fit_preprocessor,
    inverse_transform,
    load_csv,
    split_indices,
    subsample_indices,
    transform,
)
from evade_lite.infrastructure.remote import connect
from evade_lite.infrastructure.report_generator import (
    export_report,
    global_importance_frame,
    local_importance_frame,
    plot_beeswarm,
    plot_efficacy,
    plot_global_importance,
    plot_saturation,
    summary_rows,
)
from evade_lite.infrastructure.repositories import (
    CONVERSION_TABLE,
    SHAP_BASE,
    TEST,
    TRAIN,
    ArtifactRepository,
)
from evade_lite.schemas import RunConfig
from evade_lite.utils.config import get_settings, load_run_config
from evade_lite.utils.exceptions import ConfigurationError, EvadeException
from evade_lite.utils.logging import PerformanceLogger, get_logger, setup_logging

logger = get_logger(__name__)
perf_logger = PerformanceLogger(__name__)

console = Console()
err_console = Console(stderr=True)

ATTACK_MODES = ("targeted", "untargeted", "optimal-epsilon")
REPORT_FAMILIES = ("efficacy_targeted", "efficacy_untargeted", "saturation", "accuracy")


class Campaign:
    """Validated config, artifact store and worker count of one invocation."""

    def __init__(self, config: RunConfig, workers: int):
        self.config = config
        self.workers = workers
        root = config.output_dir or get_settings().output_root / config.name
        self.repo = ArtifactRepository(root)

    def predictor(self) -> Predictor:
        """The target model: the trained artifact, or an attached remote endpoint."""
        spec = self.config.model
        if spec.kind == "remote":
            predictor: Predictor = connect(spec.remote)
        else:
            predictor = self.repo.load_model()
        predictor.name = spec.display_name
        return predictor

    def datasets(self) -> Tuple[PreprocessorState, ProcessedDataset, ProcessedDataset]:
        state = self.repo.load_state()
        return (
            state,
            self.repo.load_processed(TRAIN, state),
            self.repo.load_processed(TEST, state),
        )

    def attack_set(self, test: ProcessedDataset) -> Tuple[List[int], ProcessedDataset]:
        """Seeded subsample of the test split that campaigns attack."""
        indices = subsample_indices(
            len(test), self.config.dataset.attack_subsample, self.config.subsample_seed
        )
        return indices, test.take(indices)


def handle_errors(fn: Callable[..., None]) -> Callable[..., None]:
    """Report toolkit errors on stderr and exit non-zero."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            fn(*args, **kwargs)
        except ConfigurationError as e:
            err_console.print(f"[red]Configuration error:[/red] {e.message}")
            sys.exit(2)
        except EvadeException as e:
            logger.error("Command failed", error_code=e.error_code, message=e.message, **e.details)
            err_console.print(f"[red]{e.error_code}:[/red] {e.message}")
            sys.exit(1)

    return wrapper


def _parse_eps(value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        return [float(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"Invalid epsilon list: {value!r}", setting="epsilons") from None


def campaign_options(fn: Callable[..., None]) -> Callable[..., None]:
    """Options shared by every pipeline subcommand."""
    fn = click.option("--workers", type=int, help="Parallel sample-level jobs")(fn)
    fn = click.option(
        "--output", "-o", type=click.Path(path_type=Path), help="Output directory override"
    )(fn)
    fn = click.option("--seed", type=int, help="Top-level seed override")(fn)
    fn = click.option(
        "--config", "-c", "config_path", required=True,
        type=click.Path(path_type=Path), help="JSON run configuration",
    )(fn)
    return fn


def open_campaign(
    config_path: Path,
    seed: Optional[int],
    output: Optional[Path],
    workers: Optional[int],
    eps: Optional[str] = None,
) -> Campaign:
    overrides: Dict[str, Any] = {"seed": seed, "epsilons": _parse_eps(eps)}
    if output is not None:
        overrides["output_dir"] = str(output.resolve())
    config = load_run_config(config_path, overrides)
    n_workers = workers or config.workers or get_settings().workers
    if n_workers < 1:
        raise ConfigurationError("--workers must be at least 1", setting="workers")
    return Campaign(config, n_workers)


def print_table(title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    table = Table(title=title)
    for column in columns:
        table.add_column(str(column))
    for row in rows:
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


# --- Pipeline stages ---


def stage_prepare(campaign: Campaign) -> Tuple[ProcessedDataset, ProcessedDataset]:
    cfg = campaign.config.dataset
    raw = load_csv(
        cfg.path,
        header_mode=cfg.header,
        delimiter=cfg.delimiter,
        label_column=cfg.label_column,
        categorical=cfg.categorical,
        categories=cfg.categories,
    )
    train_idx, test_idx = split_indices(len(raw), cfg.test_fraction, cfg.split_seed)
    state = fit_preprocessor(raw.take(train_idx))
    train = transform(state, raw.take(train_idx))
    test = transform(state, raw.take(test_idx))

    repo = campaign.repo
    repo.save_state(state)
    repo.save_split(train_idx, test_idx, cfg.split_seed, cfg.test_fraction)
    repo.save_processed(TRAIN, train)
    repo.save_processed(TEST, test)
    return train, test


def _concat(first: ProcessedDataset, second: ProcessedDataset) -> ProcessedDataset:
    return ProcessedDataset(
        matrix=np.vstack([first.matrix, second.matrix]),
        labels=np.concatenate([first.labels, second.labels]),
        n_classes=first.n_classes,
        schema=first.schema,
        class_names=first.class_names,
    )


def explain_pool(split: str, train: ProcessedDataset, test: ProcessedDataset) -> ProcessedDataset:
    """Rows eligible for explanation; train rows come first for ``all``."""
    if split == "train":
        return train
    if split == "test":
        return test
    return _concat(train, test)


def explained_rows(
    campaign: Campaign, train: ProcessedDataset, test: ProcessedDataset
) -> Tuple[ProcessedDataset, List[int]]:
    """Seeded subset of the explain pool whose explanations feed the conversion table."""
    pool = explain_pool(campaign.config.explain.split, train, test)
    indices = subsample_indices(
        len(pool), campaign.config.explain.max_instances, campaign.config.shap.seed
    )
    return pool.take(indices), indices


def stage_explain(campaign: Campaign, predictor: Predictor) -> None:
    config = campaign.config
    _, train, test = campaign.datasets()
    rows, indices = explained_rows(campaign, train, test)
    background = sample_background(train.matrix, config.shap.background_size, config.background_seed)

    tensor = shap_values(
        predictor, rows.matrix, background, config.shap, campaign.workers, rows.feature_names
    )
    repo = campaign.repo
    repo.save_tensor(tensor, {"split": config.explain.split, "indices": indices})
    repo.write_frame("global_importance.csv", global_importance_frame(tensor))
    repo.write_frame("local_importance.csv", local_importance_frame(tensor, range(len(rows))))
    repo.write_frame("beeswarm.csv", beeswarm_export(tensor, rows))


def stage_analyze(campaign: Campaign) -> ConversionTable:
    config = campaign.config
    tensor, sidecar = campaign.repo.load_tensor()
    _, train, test = campaign.datasets()
    if sidecar.get("split") != config.explain.split:
        logger.warning(
            "SHAP values were computed for another split",
            explained=sidecar.get("split"),
            configured=config.explain.split,
        )
    pool = explain_pool(sidecar.get("split", config.explain.split), train, test)
    rows = pool.take(sidecar["indices"])

    ssd = build_ssd(rows, tensor, config.thresholds, config.neutral_band)
    concise = condense_ssd(ssd)
    table = build_conversion_table(
        concise, feature_ranking(tensor), fallback=config.conversion_fallback
    )
    campaign.repo.save_analysis(concise, table)
    return table


def ensure_table(campaign: Campaign, predictor: Predictor, feature_names: List[str]) -> ConversionTable:
    """Load the conversion table, building it from the model when absent."""
    repo = campaign.repo
    if repo.exists(CONVERSION_TABLE):
        return repo.load_table(feature_names)
    logger.info("Conversion table missing, building it", output=str(repo.root))
    if not repo.exists(SHAP_BASE):
        stage_explain(campaign, predictor)
    return stage_analyze(campaign)


def _timed(operation: str, fn: Callable[[], Any]) -> Any:
    start = time.perf_counter()
    result = fn()
    perf_logger.log_operation_time(operation, time.perf_counter() - start)
    return result


def _attack_record(
    state: PreprocessorState,
    original: np.ndarray,
    sample_index: int,
    outcome: Any,
    epsilon: Optional[float],
) -> Dict[str, Any]:
    """One JSON-lines record; ``sample_index`` is the row index in the test split."""
    if hasattr(outcome, "epsilon_optimal"):
        row = outcome.best_adversarial
        record: Dict[str, Any] = {
            "sample_index": sample_index,
            "c_from": outcome.c_from,
            "c_to": outcome.c_to,
            "epsilon_optimal": outcome.epsilon_optimal,
            "success": outcome.success,
            "distance": outcome.least_distance,
            "iterations": outcome.iterations,
        }
    else:
        row = outcome.adversarial_row
        record = {
            "sample_index": sample_index,
            "c_from": outcome.c_from,
            "c_to": outcome.c_to,
            "epsilon": epsilon,
            "success": outcome.success,
            "distance": outcome.distance,
            "modified_features": list(outcome.modified_features),
        }
    record["l2_distance"] = l2_distance(original, row)
    record["queries"] = outcome.queries
    record["adversarial_row"] = np.asarray(row, dtype=float).tolist()
    record["raw_adversarial_row"] = inverse_transform(state, row)
    return record


# --- CLI ---


@click.group()
@click.version_option(version=__version__)
@click.option("--log-level", default=None, help="Log level (defaults to EVADE_LOG_LEVEL)")
def cli(log_level: Optional[str]) -> None:
    """
    evade-lite - explanation-guided evasion attacks on tabular classifiers.
    """
    setup_logging(log_level)


@cli.command()
@campaign_options
@handle_errors
def prepare(config_path: Path, seed: Optional[int], output: Optional[Path], workers: Optional[int]) -> None:
    """Load the CSV, split it, and write scaled train/test matrices."""
    campaign = open_campaign(config_path, seed, output, workers)
    train, test = _timed("prepare", lambda: stage_prepare(campaign))
    print_table(
        "Prepared dataset",
        ["split", "rows", "features", "classes"],
        [
            ["train", len(train), train.n_features, train.n_classes],
            ["test", len(test), test.n_features, test.n_classes],
        ],
    )
    console.print(f"Artifacts written to {campaign.repo.root}")


@cli.command()
@campaign_options
@handle_errors
def train(config_path: Path, seed: Optional[int], output: Optional[Path], workers: Optional[int]) -> None:
    """Train the built-in target model, or check that the remote model answers."""
    campaign = open_campaign(config_path, seed, output, workers)
    spec = campaign.config.model
    _, train_set, test_set = campaign.datasets()

    if spec.kind == "remote":
        predictor = campaign.predictor()
        try:
            if predictor.n_features != train_set.n_features:
                raise ConfigurationError(
                    f"Remote model expects {predictor.n_features} features, "
                    f"dataset has {train_set.n_features}",
                    setting="model.remote",
                )
            rows = [["test accuracy", accuracy(predictor, test_set)]]
        finally:
            predictor.close()
    else:
        predictor = _timed(
            "train", lambda: train_model(spec.kind, train_set, spec.train, name=spec.display_name)
        )
        campaign.repo.save_model(predictor)
        rows = [
            ["train accuracy", accuracy(predictor, train_set)],
            ["test accuracy", accuracy(predictor, test_set)],
        ]
    print_table(f"Model {spec.display_name} ({spec.kind})", ["metric", "value"], rows)


@cli.command()
@campaign_options
@handle_errors
def explain(config_path: Path, seed: Optional[int], output: Optional[Path], workers: Optional[int]) -> None:
    """Compute Kernel SHAP values and importance exports."""
    campaign = open_campaign(config_path, seed, output, workers)
    predictor = campaign.predictor()
    try:
        _timed("explain", lambda: stage_explain(campaign, predictor))
    finally:
        if hasattr(predictor, "close"):
            predictor.close()
    frame = campaign.repo.read_frame("global_importance.csv")
    print_table(
        "Global importance (top 5 per class)",
        list(frame.columns),
        frame[frame["rank"] <= 5].values.tolist(),
    )


@cli.command()
@campaign_options
@handle_errors
def analyze(config_path: Path, seed: Optional[int], output: Optional[Path], workers: Optional[int]) -> None:
    """Build the concise SHAP summary and the conversion table."""
    campaign = open_campaign(config_path, seed, output, workers)
    table = _timed("analyze", lambda: stage_analyze(campaign))
    print_table(
        "Conversion table",
        ["from", "to", "features with targets"],
        [[i, j, sum(1 for cats in table.rules_for(i, j) if cats)] for i, j in table.pairs],
    )


@cli.command()
@campaign_options
@click.option("--mode", type=click.Choice(ATTACK_MODES), default="targeted", show_default=True)
@click.option("--eps", help="Comma-separated epsilon list, e.g. 0.3,0.4,0.5,0.6")
@handle_errors
def attack(
    config_path: Path,
    seed: Optional[int],
    output: Optional[Path],
    workers: Optional[int],
    mode: str,
    eps: Optional[str],
) -> None:
    """Run an evasion campaign and write its JSON-lines records and efficacy CSV."""
    campaign = open_campaign(config_path, seed, output, workers, eps)
    config = campaign.config
    state, _, test = campaign.datasets()
    indices, attacked = campaign.attack_set(test)

    predictor = campaign.predictor()
    try:
        table = ensure_table(campaign, predictor, attacked.feature_names)
        start = time.perf_counter()
        records, report = _run_campaign(
            campaign, predictor, table, state, attacked, indices, mode
        )
        perf_logger.log_operation_time(
            "attack", time.perf_counter() - start, {"mode": mode, "queries": predictor.query_count}
        )
    finally:
        if hasattr(predictor, "close"):
            predictor.close()

    slug = mode.replace("-", "_")
    campaign.repo.write_jsonl(f"campaign_{slug}.jsonl", records)
    export_report(report, campaign.repo.path(f"efficacy_{slug}.csv"))
    print_table(f"Efficacy ({mode}, {config.model.display_name})", *summary_rows(report))


def _run_campaign(
    campaign: Campaign,
    predictor: Predictor,
    table: ConversionTable,
    state: PreprocessorState,
    test: ProcessedDataset,
    indices: List[int],
    mode: str,
) -> Tuple[List[Dict[str, Any]], EfficacyReport]:
    config = campaign.config

    def record(position: int, outcome: Any, epsilon: Optional[float]) -> Dict[str, Any]:
        return _attack_record(state, test.matrix[position], indices[position], outcome, epsilon)

    model = config.model.display_name
    records: List[Dict[str, Any]] = []
    report = EfficacyReport()

    if mode == "optimal-epsilon":
        search = config.search
        for target in range(test.n_classes):
            outcomes = run_epsilon_search(
                predictor, table, test, target, search, config.attack, campaign.workers
            )
            records.extend(record(i, o, None) for i, o in outcomes)
            evaded = sum(1 for _, o in outcomes if o.success)
            report.records.append(
                EfficacyRecord(model=model, epsilon=search.eps_high, target_class=target,
                               n=len(outcomes), evaded=evaded)
            )
        return records, report

    for epsilon in config.epsilons:
        cfg = config.attack.with_epsilon(epsilon)
        if mode == "targeted":
            strata = [
                (target, run_targeted(predictor, table, test, target, cfg, campaign.workers))
                for target in range(test.n_classes)
            ]
        else:
            strata = [(None, run_untargeted(predictor, table, test, cfg, campaign.workers))]
        for target, outcomes in strata:
            records.extend(record(i, o, epsilon) for i, o in outcomes)
            report.records.append(stratum_record(model, epsilon, target, outcomes))
    return records, report


@cli.command()
@campaign_options
@click.option("--eps", help="Comma-separated epsilon list")
@handle_errors
def evaluate(
    config_path: Path,
    seed: Optional[int],
    output: Optional[Path],
    workers: Optional[int],
    eps: Optional[str],
) -> None:
    """Efficacy sweeps, saturation curves and accuracy impact over the epsilon list."""
    campaign = open_campaign(config_path, seed, output, workers, eps)
    config = campaign.config
    _, _, test = campaign.datasets()
    _, attacked = campaign.attack_set(test)
    model = config.model.display_name

    predictor = campaign.predictor()
    try:
        table = ensure_table(campaign, predictor, attacked.feature_names)
        args = (predictor, table, attacked, config.epsilons, config.attack, model, campaign.workers)
        reports = {
            "efficacy_targeted": _timed("targeted_sweep", lambda: targeted_sweep(*args)),
            "efficacy_untargeted": _timed("untargeted_sweep", lambda: untargeted_sweep(*args)),
            "saturation": _timed("saturation_sweep", lambda: saturation_sweep(*args)),
            "accuracy": _timed("accuracy_impact", lambda: accuracy_impact(*args)),
        }
    finally:
        if hasattr(predictor, "close"):
            predictor.close()

    for family, report in reports.items():
        export_report(report, campaign.repo.path(f"{family}.csv"))
    for family in ("efficacy_targeted", "efficacy_untargeted", "accuracy"):
        print_table(family.replace("_", " ").title(), *summary_rows(reports[family]))

    saturation = reports["saturation"]
    print_table(
        "Saturation points",
        ["epsilon", "k*", "features"],
        [[e, saturation_point(saturation.curve(e)), test.n_features] for e in saturation.epsilons],
    )


@cli.command()
@campaign_options
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--charts/--no-charts", default=True, show_default=True, help="Render SVG charts")
@handle_errors
def report(
    config_path: Path,
    seed: Optional[int],
    output: Optional[Path],
    workers: Optional[int],
    fmt: str,
    charts: bool,
) -> None:
    """Collect sweep tables into reports/ and render the charts."""
    campaign = open_campaign(config_path, seed, output, workers)
    repo = campaign.repo
    families = [f for f in REPORT_FAMILIES if repo.exists(f"{f}.csv")]
    if not families:
        repo.require("efficacy_targeted.csv")

    frames = {family: repo.read_frame(f"{family}.csv") for family in families}
    for family, frame in frames.items():
        if fmt == "csv":
            repo.write_frame(f"reports/{family}.csv", frame)
        else:
            repo.write_json(f"reports/{family}.json", frame.to_dict(orient="records"))
        print_table(family.replace("_", " ").title(), list(frame.columns), frame.values.tolist())

    if charts:
        for family in ("efficacy_targeted", "efficacy_untargeted"):
            if family in frames:
                plot_efficacy(frames[family], repo.path(f"reports/{family}.svg"))
        if "saturation" in frames:
            plot_saturation(frames["saturation"], repo.path("reports/saturation.svg"))
        if repo.exists(SHAP_BASE):
            tensor, _ = repo.load_tensor()
            plot_global_importance(tensor, repo.path("reports/global_importance.svg"))
        if repo.exists("beeswarm.csv"):
            plot_beeswarm(repo.read_frame("beeswarm.csv"), repo.path("reports/beeswarm.svg"))
    console.print(f"Reports written to {repo.path('reports')}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(path_type=Path), help="Saved model JSON")
@click.option("--constant-class", type=int, help="Answer every row with this class")
@click.option("--n-features", type=int, default=4, show_default=True)
@click.option("--n-classes", type=int, default=3, show_default=True)
@click.option("--request-log", type=click.Path(path_type=Path), help="JSON-lines request log")
@click.option("--http", "use_http", is_flag=True, help="Serve over HTTP instead of stdin/stdout")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@handle_errors
def serve(
    model_path: Optional[Path],
    constant_class: Optional[int],
    n_features: int,
    n_classes: int,
    request_log: Optional[Path],
    use_http: bool,
    host: str,
    port: int,
) -> None:
    """Serve a saved model through the wire protocol."""
    from evade_lite.infrastructure.model_server import RequestLog, build_served_model, serve_stdio

    predictor = build_served_model(model_path, constant_class, n_features, n_classes)
    log = RequestLog(request_log)
    if use_http:
        from evade_lite.main import run

        run(predictor, host=host, port=port, request_log=log)
    else:
        serve_stdio(predictor, request_log=log)


if __name__ == "__main__":
    cli()

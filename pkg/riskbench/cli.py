#!/usr/bin/env python
"""
Module exposes the benchmark pipeline on the command line

    riskbench profile --data gb1.csv
    riskbench tune --config bench.json
    riskbench run --config bench.json --jobs 8 [--tune]
    riskbench report --config bench.json --top 10 [--charts]

Exit codes: 0 success, 1 validation error, 2 partial failure
"""
import logging
import os
from typing import Dict, List, Optional, Tuple

from plumbum import cli
from tqdm import tqdm

from riskbench import __version__
from riskbench.config import BenchmarkConfig, load_config
from riskbench.encodings import ONE_HOT, EncodingMatrix, encode_one_hot, load_embeddings
from riskbench.errors import BenchmarkError, ConfigError, SearchFailureError
from riskbench.landscape_analysis import profile
from riskbench.landscape_store import Landscape, generate_synthetic, load_landscape, make_split
from riskbench.campaign import CampaignContext, run_grid
from riskbench.metrics import build_metric_table
from riskbench.parallel_iter import iter_threaded
from riskbench.reporting import header_lines, profiles_frame, read_profiles, write_frame, write_report
from riskbench.run_store import RunStore
from riskbench.surrogates import SURROGATE_KINDS, GridSearchCache, grid_search

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARTIAL = 2

PROFILES_NAME = "profiles.csv"
REPORT_DIR_NAME = "report"


class RiskBench(cli.Application):
    """
    Benchmark Bayesian-optimization models on protein fitness landscapes by mean and tail risk
    """
    PROGNAME = "riskbench"
    VERSION = __version__

    config_path: Optional[str] = None
    data_files: Tuple[str, ...] = ()
    out_dir: Optional[str] = None
    jobs: Optional[int] = None
    seed: Optional[int] = None
    log_level: int = logging.INFO

    @cli.switch(["-c", "--config"], str, help="JSON benchmark configuration")
    def get_config(self, path):
        """
        Set configuration file
        """
        self.config_path = path

    @cli.switch(["-d", "--data"], str, list=True, help="Landscape CSV, may be repeated")
    def get_data(self, paths):
        """
        Add landscape files on top of the configuration
        """
        self.data_files = tuple(str(path) for path in paths)

    @cli.switch(["-o", "--out"], str, help="Output directory")
    def get_out(self, path):
        """
        Set output directory
        """
        self.out_dir = path

    @cli.switch(["-j", "--jobs"], cli.Range(1, 4096), help="Worker threads, default 1")
    def get_jobs(self, jobs):
        """
        Set number of worker threads
        """
        self.jobs = jobs

    @cli.switch(["-s", "--seed"], cli.Range(0, 2 ** 32 - 1), help="Global seed for splits and bootstraps")
    def get_seed(self, seed):
        """
        Set global seed
        """
        self.seed = seed

    @cli.switch(["-v", "--verbose"], excludes=["--quiet"], help="Log debug detail")
    def set_verbose(self):
        """
        Log at DEBUG
        """
        self.log_level = logging.DEBUG

    @cli.switch(["-q", "--quiet"], excludes=["--verbose"], help="Log warnings and errors only")
    def set_quiet(self):
        """
        Log at WARNING
        """
        self.log_level = logging.WARNING

    def load(self, top: Optional[int] = None) -> BenchmarkConfig:
        """ Configuration file with command-line overrides, validated

        :param top: Rows per ranking file
        :raises: ConfigError
        :return: BenchmarkConfig
        """
        config = load_config(self.config_path).with_overrides(data=self.data_files, out=self.out_dir, jobs=self.jobs,
                                                               seed=self.seed, top=top)
        config.validate()
        return config

    # pylint: disable=arguments-differ
    def main(self):
        """
        Configure logging; print help when no subcommand is given
        """
        logging.basicConfig(level=self.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        if self.nested_command is None:
            self.help()
            return EXIT_INVALID
        return EXIT_OK


def load_landscapes(config: BenchmarkConfig) -> Tuple[List[Landscape], Dict[str, str]]:
    """ Every configured landscape; failures are collected rather than raised

    :param config: Validated configuration
    :return: Loaded landscapes and {source: error message}
    """
    landscapes, failures = [], {}
    for source in config.landscapes:
        try:
            landscapes.append(load_landscape(source.path, name=source.name, wild_type=source.wild_type,
                                             fixed_positions=source.fixed_positions, alphabet=source.alphabet,
                                             sequence_column=source.sequence_column,
                                             fitness_column=source.fitness_column))
        except (BenchmarkError, OSError) as err:
            logger.error("%s: %s", source.path, err)
            failures[source.path] = str(err)
    for spec in config.synthetic:
        try:
            landscapes.append(generate_synthetic(spec))
        except BenchmarkError as err:
            logger.error("synthetic %s: %s", spec.label, err)
            failures[spec.label] = str(err)
    return landscapes, failures


def build_context(landscape: Landscape, config: BenchmarkConfig, cache: GridSearchCache) -> CampaignContext:
    """ Split and encodings of one landscape

    :param landscape: Landscape
    :param config: Configuration
    :param cache: Shared grid-search cache
    :return: CampaignContext
    """
    encodings: Dict[str, EncodingMatrix] = {}
    files = config.embeddings.get(landscape.name, {})
    for encoding_id in config.encoding_ids(landscape.name):
        if encoding_id == ONE_HOT:
            encodings[ONE_HOT] = encode_one_hot(landscape)
        else:
            encodings[encoding_id] = load_embeddings(landscape, files[encoding_id], name=encoding_id)
    return CampaignContext(landscape=landscape, split=make_split(landscape, config.seed), encodings=encodings,
                           cache=cache)


def build_contexts(config: BenchmarkConfig) -> Tuple[List[CampaignContext], Dict[str, str]]:
    landscapes, failures = load_landscapes(config)
    cache = GridSearchCache(config.grid_cache_path)
    contexts = []
    for landscape in landscapes:
        try:
            contexts.append(build_context(landscape, config, cache))
        except BenchmarkError as err:
            logger.error("%s: %s", landscape.name, err)
            failures[landscape.name] = str(err)
    return contexts, failures


@RiskBench.subcommand("profile")
class Profile(cli.Application):
    """
    Compute complexity properties of every landscape
    """

    def main(self):
        """
        Write one profile row per landscape
        """
        try:
            config = self.parent.load()
        except ConfigError as err:
            logger.error("%s", err)
            return EXIT_INVALID
        landscapes, failures = load_landscapes(config)
        profiles = []
        runner = iter_threaded(config.jobs, landscape=landscapes)(profile)
        for result in tqdm(runner() if landscapes else (), total=len(landscapes), desc="profiles",
                           disable=self.parent.log_level > logging.INFO):
            for name, reason in result.errors.items():
                logger.warning("%s: %s undefined: %s", result.landscape, name, reason)
            profiles.append(result)
        path = os.path.join(config.output_dir, PROFILES_NAME)
        write_frame(profiles_frame(profiles), path, header_lines(config.digest()))
        print("profiled %d landscape(s), %d failed -> %s" % (len(profiles), len(failures), path))
        return EXIT_PARTIAL if failures else EXIT_OK


@RiskBench.subcommand("tune")
class Tune(cli.Application):
    """
    Grid-search every surrogate on every landscape and encoding
    """

    def main(self):
        """
        Fill the grid-search cache
        """
        try:
            config = self.parent.load()
            contexts, failures = build_contexts(config)
        except BenchmarkError as err:
            logger.error("%s", err)
            return EXIT_INVALID
        kinds = config.models.surrogates or SURROGATE_KINDS
        tuned = hits = 0
        cells = [(context, kind, encoding) for context in contexts for kind in kinds
                 for encoding in context.encodings.values()]
        for context, kind, encoding in tqdm(cells, desc="tuning", disable=self.parent.log_level > logging.INFO):
            if context.cache.get(context.landscape.digest(), encoding.name, kind) is not None:
                hits += 1
                continue
            try:
                grid_search(kind, context.landscape, context.split, encoding, cache=context.cache, rng_seed=config.seed,
                            jobs=config.jobs)
                tuned += 1
            except SearchFailureError as err:
                logger.error("%s / %s / %s: %s", context.landscape.name, encoding.name, kind, err)
                failures["%s/%s/%s" % (context.landscape.name, encoding.name, kind)] = str(err)
        print("tuned %d cell(s), %d cached, %d failed" % (tuned, hits, len(failures)))
        return EXIT_PARTIAL if failures else EXIT_OK


@RiskBench.subcommand("run")
class Run(cli.Application):
    """
    Run every model campaign and paired random baseline, resuming from the run store
    """
    tune = cli.Flag(["-t", "--tune"], help="Grid-search surrogates missing from the cache first")

    def main(self):
        """
        Append new run records to the store
        """
        try:
            config = self.parent.load()
            contexts, failures = build_contexts(config)
            store = RunStore(config.runs_dir)
            before = len(store.load())
            records = run_grid(config.enumerate_models(), contexts, config.campaign, store=store, jobs=config.jobs,
                               tune=self.tune, progress=self.parent.log_level <= logging.INFO)
        except BenchmarkError as err:
            logger.error("%s", err)
            return EXIT_INVALID
        failed = sum(1 for record in records if not record.completed)
        new = len(store.load()) - before
        print("%d new runs; %d completed, %d failed of %d in the grid" % (new, len(records) - failed, failed,
                                                                           len(records)))
        return EXIT_PARTIAL if failed or failures else EXIT_OK


@RiskBench.subcommand("report")
class Report(cli.Application):
    """
    Turn the run store into metric, ranking, bootstrap, Pareto and curve files
    """
    top = cli.SwitchAttr(["-n", "--top"], cli.Range(1, 100000), default=None, help="Rows per ranking scope")
    charts = cli.Flag(["--charts"], help="Also write PNG charts")

    def main(self):
        """
        Write every report file under <output_dir>/report
        """
        try:
            config = self.parent.load(top=self.top)
            landscapes, failures = load_landscapes(config)
            store = RunStore(config.runs_dir)
            by_name = {landscape.name: landscape for landscape in landscapes}
            records = [record for name in sorted(by_name) for record in store.load(name)]
        except BenchmarkError as err:
            logger.error("%s", err)
            return EXIT_INVALID
        if not records:
            logger.error("run store %s holds no runs for the configured landscapes", config.runs_dir)
            return EXIT_INVALID
        splits = {name: make_split(landscape, config.seed) for name, landscape in by_name.items()}
        table = build_metric_table(records, by_name, splits, config.cost, config.analysis.percentile)
        if not len(table):
            logger.error("no completed, paired model runs to report")
            return EXIT_INVALID
        profiles_path = os.path.join(config.output_dir, PROFILES_NAME)
        profiles = read_profiles(profiles_path) if os.path.isfile(profiles_path) else None
        written = write_report(table, config, os.path.join(config.output_dir, REPORT_DIR_NAME), config.digest(),
                               profiles=profiles, charts=self.charts,
                               progress=self.parent.log_level <= logging.INFO)
        print("wrote %d report file(s) for %d model(s) on %d landscape(s)" % (len(written), len(table.models),
                                                                               len(table.landscapes)))
        return EXIT_PARTIAL if failures else EXIT_OK


if __name__ == "__main__":
    RiskBench.run()

import contextlib
import io
import json
import os
import shutil
import tempfile
from unittest import TestCase

from riskbench.cli import EXIT_INVALID, EXIT_OK, RiskBench
from riskbench.records import BASELINE_ID
from riskbench.run_store import RunStore


def invoke(*argv):
    stdout = io.StringIO()
    with contextlib.redirect_stdout(stdout):
        _, code = RiskBench.run(["riskbench", "-q"] + list(argv), exit=False)
    return code, stdout.getvalue()


class TestEndToEnd(TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.out = os.path.join(self.directory, "out")
        self.config = os.path.join(self.directory, "bench.json")
        with open(self.config, "w", encoding="utf-8") as handle:
            json.dump({"synthetic": [{"model": "additive", "length": 3, "alphabet_size": 4, "name": "toy"}],
                       "models": {"surrogates": ["random_forest"], "acquisitions": ["ei", "greedy"]},
                       "campaign": {"n_init": 8, "batch_size": 4, "n_cycles": 2, "n_seeds": 3},
                       "analysis": {"n_bootstrap": 20, "top": 5},
                       "output_dir": self.out}, handle)

    def tearDown(self):
        shutil.rmtree(self.directory)

    def report_files(self):
        root = os.path.join(self.out, "report")
        contents = {}
        for directory, _, names in os.walk(root):
            for name in names:
                path = os.path.join(directory, name)
                with open(path, "rb") as stream:
                    contents[os.path.relpath(path, root)] = stream.read()
        return contents

    def test_profile_run_report(self):
        code, output = invoke("-c", self.config, "profile")
        self.assertEqual(EXIT_OK, code)
        self.assertTrue(os.path.isfile(os.path.join(self.out, "profiles.csv")))
        self.assertIn("profiled 1 landscape(s)", output)

        code, output = invoke("-c", self.config, "run")
        self.assertEqual(EXIT_OK, code)
        self.assertIn("9 new runs", output)
        records = RunStore(os.path.join(self.out, "runs")).load()
        self.assertEqual(3, sum(record.model_id == BASELINE_ID for record in records))
        self.assertEqual(6, sum(record.model_id != BASELINE_ID for record in records))

        code, output = invoke("-c", self.config, "run")
        self.assertEqual(EXIT_OK, code)
        self.assertIn("0 new runs", output)

        self.assertEqual(EXIT_OK, invoke("-c", self.config, "report")[0])
        first = self.report_files()
        for name in ("metrics.csv", "bootstrap.json", "pareto.csv", "payoff_curves.csv",
                     os.path.join("rankings", "final_fitness_mean.csv")):
            self.assertIn(name, first)
        self.assertTrue(first["metrics.csv"].startswith(b"# riskbench "))
        self.assertEqual(EXIT_OK, invoke("-c", self.config, "report")[0])
        self.assertEqual(first, self.report_files())

    def test_parallel_profiles_match_serial(self):
        config = os.path.join(self.directory, "three.json")
        with open(config, "w", encoding="utf-8") as handle:
            json.dump({"synthetic": [{"model": "additive", "length": 3, "alphabet_size": 4, "name": "toy"},
                                     {"model": "nk", "length": 3, "alphabet_size": 4, "k": 1, "name": "rugged"},
                                     {"model": "random", "length": 2, "alphabet_size": 5, "seed": 2}]}, handle)
        contents = []
        for jobs in ("1", "3"):
            out = os.path.join(self.directory, "jobs" + jobs)
            code, output = invoke("-c", config, "-o", out, "-j", jobs, "profile")
            self.assertEqual(EXIT_OK, code)
            self.assertIn("profiled 3 landscape(s)", output)
            with open(os.path.join(out, "profiles.csv"), "rb") as stream:
                contents.append(stream.read())
        self.assertEqual(contents[0], contents[1])

    def test_report_without_runs(self):
        self.assertEqual(EXIT_INVALID, invoke("-c", self.config, "report")[0])

    def test_missing_landscape_file(self):
        missing = os.path.join(self.directory, "absent.csv")
        code, _ = invoke("-d", missing, "-o", self.out, "profile")
        self.assertEqual(EXIT_INVALID, code)
        self.assertFalse(os.path.exists(os.path.join(self.out, "profiles.csv")))

    def test_no_subcommand(self):
        code, output = invoke()
        self.assertEqual(EXIT_INVALID, code)
        self.assertIn("Usage", output)

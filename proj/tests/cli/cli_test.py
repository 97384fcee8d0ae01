"""End-to-end checks of the cng command line on small synthetic corpora.

Usage: cli_test.py <path to cng> <repository root>
"""

import json
import math
import pathlib
import subprocess
import sys
import tempfile
import unittest

import jsonschema
import referencing

CNG = None
ROOT = None


def run(*args, expect=0):
    proc = subprocess.run([CNG, *map(str, args), "--quiet"], capture_output=True, text=True)
    if proc.returncode != expect:
        raise AssertionError(
            f"cng {' '.join(map(str, args))} exited {proc.returncode}, wanted {expect}\n{proc.stderr}")
    return proc


def load(path):
    return json.loads(pathlib.Path(path).read_text())


def schema_validator(name):
    registry = referencing.Registry()
    for f in (ROOT / "schemas").glob("*.schema.json"):
        doc = json.loads(f.read_text())
        registry = registry.with_resource(doc["$id"], referencing.Resource.from_contents(doc))
    schema = json.loads((ROOT / "schemas" / f"{name}_report.schema.json").read_text())
    return jsonschema.Draft202012Validator(schema, registry=registry)


def validate(report, name):
    errors = sorted(schema_validator(name).iter_errors(report), key=str)
    if errors:
        raise AssertionError(f"{name} report: " + "; ".join(e.message for e in errors[:5]))


class Pipeline(unittest.TestCase):
    """Synth, train, causal, distill and eval with the default config."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = pathlib.Path(cls.tmp.name)
        cls.conf = ROOT / "configs" / "default.conf"
        cls.corpus = cls.dir / "toy.jsonl"
        run("synth", "--config", cls.conf, "--corpus", cls.corpus, "--out", cls.dir / "a", "--set", "synth_size=100")
        cls.a = cls.dir / "a"
        run("train", "--config", cls.conf, "--corpus", cls.corpus, "--out", cls.a)
        run("causal", "--config", cls.conf, "--corpus", cls.corpus, "--out", cls.a,
            "--checkpoint", cls.a / "classifier.ckpt", "--set", "report_csv=True")
        run("distill", "--config", cls.conf, "--corpus", cls.corpus, "--out", cls.a,
            "--checkpoint", cls.a / "classifier.ckpt", "--checkpoint", cls.a / "estimator.ckpt",
            "--set", "distill_scope=all", "--set", "report_csv=True")
        run("eval", "--corpus", cls.corpus, "--out", cls.a, "--checkpoint", cls.a / "classifier.ckpt")

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_reports_match_schemas(self):
        for name in ("synth", "train", "causal", "distill", "eval"):
            with self.subTest(report=name):
                validate(load(self.a / f"{name}_report.json"), name)

    def test_train_emits_checkpoint_and_report(self):
        report = load(self.a / "train_report.json")
        self.assertTrue((self.a / "classifier.ckpt").exists())
        self.assertEqual(report["counts"]["documents"], 100)
        self.assertEqual(report["counts"]["train"] + report["counts"]["held_out"], 100)
        self.assertEqual(len(report["history"]), 10)
        self.assertTrue(report["empty_graph_check"]["passed"])
        self.assertEqual(report["manifest"]["config"]["embedding_dim"], "768")

    def test_manifest_digests_match_files(self):
        import hashlib
        report = load(self.a / "train_report.json")
        for f in report["manifest"]["inputs"] + report["manifest"]["outputs"]:
            self.assertEqual(hashlib.sha256(pathlib.Path(f["path"]).read_bytes()).hexdigest(), f["sha256"])

    def test_causal_report_contents(self):
        report = load(self.a / "causal_report.json")
        m = report["metrics"]
        for key in ("pehe", "ate_estimated", "ate_true", "ate_error"):
            self.assertIn(key, m)
        self.assertAlmostEqual(m["ate_error"], abs(m["ate_estimated"] - m["ate_true"]), places=12)
        counts = report["counts"]
        self.assertEqual(counts["records"], 2 * counts["nodes"])
        self.assertEqual(counts["train_records"] + counts["held_out_records"], counts["records"])
        self.assertTrue(report["freezing"]["unchanged"])
        rows = (self.a / "causal_records.csv").read_text().splitlines()
        self.assertEqual(len(rows) - 1, counts["nodes"])

    def test_distill_bounds_and_classes(self):
        report = load(self.a / "distill_report.json")
        self.assertEqual(len(report["documents"]), 100)
        for doc in report["documents"]:
            self.assertGreaterEqual(doc["compression_rate"], 0.0)
            self.assertLessEqual(doc["compression_rate"], 100.0)
            kept = len(doc["v_remaining"])
            expected = 0.0 if doc["num_nodes"] == 0 else 100.0 * (1 - kept / doc["num_nodes"])
            self.assertAlmostEqual(doc["compression_rate"], expected, places=9)
        summary = report["summary"]
        self.assertIsNotNone(summary["mean_critical"])
        self.assertIsNotNone(summary["mean_conspiracy"])
        rows = (self.a / "distill_results.csv").read_text().splitlines()
        self.assertEqual(len(rows), 101)

    def test_eval_counts(self):
        report = load(self.a / "eval_report.json")
        cm = report["metrics"]["confusion_matrix"]
        self.assertEqual(sum(cm.values()), 100)

    def test_same_seed_same_digests(self):
        b = self.dir / "b"
        run("train", "--config", self.conf, "--corpus", self.corpus, "--out", b)
        run("causal", "--config", self.conf, "--corpus", self.corpus, "--out", b, "--checkpoint", b / "classifier.ckpt",
            "--set", "report_csv=True")
        for name in ("train", "causal"):
            self.assertEqual(load(self.a / f"{name}_report.json")["content_digest"],
                             load(b / f"{name}_report.json")["content_digest"])
        for ckpt in ("classifier.ckpt", "estimator.ckpt"):
            self.assertEqual((self.a / ckpt).read_bytes(), (b / ckpt).read_bytes())

    def test_seed_changes_digest(self):
        c = self.dir / "c"
        run("train", "--config", self.conf, "--corpus", self.corpus, "--out", c, "--seed", "1", "--set", "epochs=1")
        self.assertNotEqual(load(self.a / "train_report.json")["content_digest"],
                            load(c / "train_report.json")["content_digest"])

    def test_unknown_key_is_usage_error(self):
        bad = self.dir / "bad.conf"
        bad.write_text(self.conf.read_text() + "enricher_heads = 4\n")
        proc = run("train", "--config", bad, "--corpus", self.corpus, "--out", self.dir / "x", expect=1)
        self.assertIn("enricher_heads", proc.stderr)
        proc = run("train", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x",
                   "--set", "hidden_size=3", expect=1)
        self.assertIn("hidden_size", proc.stderr)

    def test_bad_values_are_usage_errors(self):
        for setting in ("gumbel_sigmoid_tau=0.5 -> 0", "optimizer=SGD", "batch_size=0", "gumbel_sigmoid_hard=yes"):
            with self.subTest(setting=setting):
                proc = run("train", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x",
                           "--set", setting, expect=1)
                self.assertIn(setting.split("=")[0], proc.stderr)

    def test_missing_arguments_are_usage_errors(self):
        run("train", "--corpus", self.corpus, expect=1)
        run("causal", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x", expect=1)
        run("frobnicate", expect=1)

    def test_missing_checkpoint_is_data_error(self):
        run("causal", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x",
            "--checkpoint", self.dir / "nope.ckpt", expect=2)
        run("distill", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x",
            "--checkpoint", self.a / "classifier.ckpt", expect=2)

    def test_width_mismatch_is_data_error(self):
        narrow = self.dir / "narrow.jsonl"
        run("synth", "--corpus", narrow, "--out", self.dir / "n", "--set", "synth_size=20",
            "--set", "embedding_dim=32")
        run("eval", "--corpus", narrow, "--out", self.dir / "x", "--checkpoint", self.a / "classifier.ckpt", expect=2)
        run("train", "--config", self.conf, "--corpus", narrow, "--out", self.dir / "x", expect=2)

    def test_incompatible_estimator_is_data_error(self):
        e = self.dir / "e"
        run("train", "--config", self.conf, "--corpus", self.corpus, "--out", e,
            "--set", "entity_dim=8", "--set", "epochs=1")
        run("causal", "--config", self.conf, "--corpus", self.corpus, "--out", e,
            "--checkpoint", e / "classifier.ckpt", "--set", "entity_dim=8", "--set", "causal_epochs=1")
        proc = run("distill", "--config", self.conf, "--corpus", self.corpus, "--out", self.dir / "x",
                   "--checkpoint", self.a / "classifier.ckpt", "--checkpoint", e / "estimator.ckpt", expect=2)
        self.assertIn("entity_dim", proc.stderr)

    def test_ablation_records_both_configurations(self):
        d = self.dir / "abl"
        run("train", "--config", self.conf, "--corpus", self.corpus, "--out", d,
            "--set", "ablation_enricher=True", "--set", "epochs=2")
        report = load(d / "train_report.json")
        validate(report, "train")
        self.assertEqual(sorted(x["enricher_enabled"] for x in report["ablation"]), [False, True])


class Synth(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = pathlib.Path(cls.tmp.name)
        for name in ("one", "two"):
            run("synth", "--corpus", cls.dir / f"{name}.jsonl", "--out", cls.dir / name,
                "--seed", "11", "--set", "embedding_dim=8")

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def docs(self):
        lines = (self.dir / "one.jsonl").read_text().splitlines()
        return json.loads(lines[0])["header"], [json.loads(line) for line in lines[1:]]

    def test_byte_identical_for_same_seed(self):
        self.assertEqual((self.dir / "one.jsonl").read_bytes(), (self.dir / "two.jsonl").read_bytes())

    def test_positive_count_within_three_sigma(self):
        _, docs = self.docs()
        n, p = 2000, 0.35
        positives = sum(d["label"] for d in docs)
        self.assertEqual(len(docs), n)
        self.assertLessEqual(abs(positives - n * p), 3 * math.sqrt(n * p * (1 - p)))

    def test_header_records_generator(self):
        header, _ = self.docs()
        self.assertEqual(header["size"], 2000)
        self.assertEqual(header["trigger_rate"], 0.35)
        self.assertEqual(header["seed"], 11)
        self.assertEqual(header["width"], 8)

    def test_labels_follow_trigger_pattern(self):
        header, docs = self.docs()
        trigger_words = set()
        for d in docs:
            if d["label"] == 1:
                pos = d["trigger_positions"]
                self.assertEqual(len(pos), header["pattern_length"])
                self.assertEqual(pos, list(range(pos[0], pos[0] + len(pos))))
                trigger_words.update(d["words"][i] for i in pos)
        for d in docs:
            if d["label"] == 0:
                self.assertFalse(d.get("trigger_positions"))
                self.assertFalse(trigger_words & set(d["words"]), d["doc_id"])


if __name__ == "__main__":
    CNG = sys.argv[1]
    ROOT = pathlib.Path(sys.argv[2])
    unittest.main(argv=sys.argv[:1], verbosity=2)

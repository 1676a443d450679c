import logging
import tempfile
import unittest
from pathlib import Path

from rrlbs_unmix.core import RejectedInputError
from rrlbs_unmix.io import ParseError
from rrlbs_unmix.manifest import (
    MANIFEST_NAME,
    RunManifest,
    manifest_path_for,
    write_manifest,
)


class TestManifest(unittest.TestCase):
    def setUp(self) -> None:
        self._td = tempfile.TemporaryDirectory()
        self.tmp = Path(self._td.name)
        self.logger = logging.getLogger("test.manifest")
        self.logger.addHandler(logging.NullHandler())

    def tearDown(self) -> None:
        self._td.cleanup()

    def _manifest(self) -> RunManifest:
        return RunManifest(
            subcommand="unmix",
            argv=["unmix", "--input", "my scene/cube.hsc", "--out", "est"],
            seed=4,
            config={"k": "3", "lam": "0.10000000000000001"},
            inputs={"cube": "my scene/cube.hsc"},
            results={"iterations": "12"},
        )

    def test_save_load_round_trip(self) -> None:
        out = self.tmp / "est"
        out.mkdir()
        artifact = out / "M.csv"
        artifact.write_text("1,2\n")
        path = write_manifest(self._manifest(), out / MANIFEST_NAME, [artifact], self.logger)
        loaded = RunManifest.load(path)
        self.assertEqual(loaded.argv[2], "my scene/cube.hsc")
        self.assertEqual(loaded.seed, 4)
        self.assertEqual(loaded.config, {"k": "3", "lam": "0.10000000000000001"})
        self.assertEqual(loaded.results, {"iterations": "12"})
        self.assertEqual(list(loaded.checksums), ["M.csv"])
        self.assertTrue(loaded.reproducible)

    def test_same_inputs_give_same_bytes(self) -> None:
        first = self._manifest().save(self.tmp / "a.txt").read_bytes()
        second = self._manifest().save(self.tmp / "b.txt").read_bytes()
        self.assertEqual(first, second)

    def test_verify_detects_changes(self) -> None:
        artifact = self.tmp / "h.csv"
        artifact.write_text("0.1\n")
        path = write_manifest(self._manifest(), self.tmp / MANIFEST_NAME, [artifact])
        manifest = RunManifest.load(path)
        self.assertEqual(manifest.verify(path, self.logger), [])
        artifact.write_text("0.2\n")
        self.assertEqual(manifest.verify(path, self.logger), ["h.csv"])
        artifact.unlink()
        self.assertEqual(manifest.verify(path), ["h.csv"])

    def test_missing_artifact_rejected(self) -> None:
        with self.assertRaises(RejectedInputError):
            write_manifest(self._manifest(), self.tmp / MANIFEST_NAME, [self.tmp / "nope.csv"])

    def test_unreproducible_flag(self) -> None:
        manifest = RunManifest(subcommand="bench", argv=["bench"], reproducible=False)
        loaded = RunManifest.load(manifest.save(self.tmp / MANIFEST_NAME))
        self.assertFalse(loaded.reproducible)
        self.assertIsNone(loaded.seed)

    def test_load_rejects_unknown_version(self) -> None:
        path = self.tmp / MANIFEST_NAME
        path.write_text("version = 9\nsubcommand = unmix\nargv = unmix\n")
        with self.assertRaises(ParseError):
            RunManifest.load(path)

    def test_manifest_path_for(self) -> None:
        self.assertEqual(manifest_path_for(Path("runs/est"), True), Path("runs/est/manifest.txt"))
        self.assertEqual(
            manifest_path_for(Path("runs/report.txt"), False),
            Path("runs/report.txt.manifest.txt"),
        )


if __name__ == "__main__":
    unittest.main()

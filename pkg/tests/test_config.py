import tempfile
import unittest
from pathlib import Path

from rrlbs_unmix.config import (
    SolverConfig,
    config_defaults_table,
    load_user_config,
    solver_overrides_from_user_config,
)
from rrlbs_unmix.core import RejectedInputError


class TestSolverConfig(unittest.TestCase):
    def test_defaults(self) -> None:
        config = SolverConfig().validate()
        self.assertEqual(config.k, 3)
        self.assertEqual(config.lam, 0.1)
        self.assertEqual(config.loss, "l21")
        self.assertEqual(config.sparsity, "learned")
        self.assertEqual(config.xi, 1e-6)
        self.assertEqual(config.eps_guard, 1e-8)
        self.assertEqual(config.phi, 1e-8)
        self.assertEqual(config.q, 10)
        self.assertEqual(config.max_inner, 300)
        self.assertEqual(config.max_outer, 10)
        self.assertEqual(config.norm_mode, "l1_rows")
        self.assertEqual(config.inner_stop, "cadence")

    def test_overrides_skip_none(self) -> None:
        config = SolverConfig().with_overrides(k=5, lam=None, loss="l2p", p=0.9)
        self.assertEqual(config.k, 5)
        self.assertEqual(config.lam, 0.1)
        self.assertEqual(config.loss, "l2p")
        self.assertEqual(config.p, 0.9)

    def test_unknown_override(self) -> None:
        with self.assertRaises(RejectedInputError):
            SolverConfig().with_overrides(lambda_=1.0)

    def test_validate_names_field(self) -> None:
        bad = [
            {"k": 0},
            {"lam": -1.0},
            {"loss": "huber"},
            {"p": 1.5},
            {"fixed_p": 0.4},
            {"xi": 0.0},
            {"q": 0},
            {"norm_mode": "max"},
            {"init": "vca"},
            {"seed": -1},
        ]
        for override in bad:
            name = next(iter(override))
            with self.subTest(field=name):
                with self.assertRaises(RejectedInputError) as ctx:
                    SolverConfig().with_overrides(**override).validate()
                self.assertIn(name, str(ctx.exception))

    def test_effective_lambda(self) -> None:
        self.assertEqual(SolverConfig(lam=0.5, sparsity="none").effective_lam, 0.0)
        self.assertEqual(SolverConfig(lam=0.5, sparsity="fixed").effective_lam, 0.5)


class TestUserConfig(unittest.TestCase):
    def test_missing_file(self) -> None:
        self.assertEqual(load_user_config(Path("/nonexistent/rrlbs/config.ini")), {})

    def test_reads_section_and_coerces(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "config.ini"
            path.write_text(
                "[rrlbs-unmix]\nlam = 0.05\nmax_outer = 4\nloss = l2p\nworkers = 3\n",
                encoding="utf-8",
            )
            user_cfg = load_user_config(path)
        self.assertEqual(user_cfg["workers"], "3")
        overrides = solver_overrides_from_user_config(user_cfg)
        self.assertEqual(overrides, {"lam": 0.05, "loss": "l2p", "max_outer": 4})

    def test_bad_value(self) -> None:
        with self.assertRaises(RejectedInputError):
            solver_overrides_from_user_config({"max_outer": "many"})

    def test_other_section_ignored(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "config.ini"
            path.write_text("[other]\nlam = 1\n", encoding="utf-8")
            self.assertEqual(load_user_config(path), {})


class TestDefaultsTable(unittest.TestCase):
    def test_lists_every_field(self) -> None:
        table = config_defaults_table()
        for name in SolverConfig.__dataclass_fields__:
            self.assertIn(name, table)
        self.assertIn("log_dir", table)


if __name__ == "__main__":
    unittest.main()

import json

import numpy as np
import pandas as pd
import pytest

import rmtlab
from constants import EXIT_PASS, EXIT_CEILING, EXIT_CONFIG, EXIT_SOLVER
from matrix_core import Matrix, load_matrix, save_matrix


def write_config(path, **overrides):
    data = {
        "experiment": "main_bound",
        "dims": [[10, 10, 20]],
        "distribution": {"kind": "rademacher", "params": {}, "normalization": "none"},
        "b_factor": {"kind": "orthogonal_projection", "params": {}},
        "trials": 4,
        "base_seed": 3,
    }
    data.update(overrides)
    path.write_text(json.dumps(data))
    return path


class TestSampleAndNorm:
    def test_sample_writes_matrix(self, tmp_path, capsys):
        out = tmp_path / "a.txt"
        code = rmtlab.main(['sample', '--dist', '{"kind": "gaussian"}', '--rows', '3', '--cols', '4',
                            '--seed', '5', '--out', str(out)])
        assert code == EXIT_PASS
        assert load_matrix(out).shape == (3, 4)
        assert "Sampled 3x4" in capsys.readouterr().out

    def test_sample_is_seeded(self, tmp_path):
        for name in ("x.txt", "y.txt"):
            rmtlab.main(['sample', '--dist', '{"kind": "rademacher"}', '--rows', '5', '--cols', '5',
                         '--seed', '9', '--out', str(tmp_path / name)])
        assert (tmp_path / "x.txt").read_bytes() == (tmp_path / "y.txt").read_bytes()

    def test_sample_from_file(self, tmp_path):
        dist = tmp_path / "dist.json"
        dist.write_text('{"kind": "sparse_sign", "params": {"p": 0.5}}')
        code = rmtlab.main(['sample', '--dist', str(dist), '--rows', '2', '--cols', '2',
                            '--out', str(tmp_path / "a.txt")])
        assert code == EXIT_PASS

    def test_bad_distribution(self, tmp_path, capsys):
        code = rmtlab.main(['sample', '--dist', '{"kind": "cauchy"}', '--rows', '2', '--cols', '2',
                            '--out', str(tmp_path / "a.txt")])
        assert code == EXIT_CONFIG
        assert "Unknown distribution kind" in capsys.readouterr().out

    def test_invalid_json(self, tmp_path):
        code = rmtlab.main(['sample', '--dist', '{kind', '--rows', '2', '--cols', '2',
                            '--out', str(tmp_path / "a.txt")])
        assert code == EXIT_CONFIG

    @pytest.mark.parametrize("method", ["power", "full"])
    def test_norm(self, tmp_path, capsys, method):
        path = tmp_path / "w.txt"
        save_matrix(Matrix(np.diag([3.0, 1.0])), path)
        assert rmtlab.main(['norm', '--in', str(path), '--method', method]) == EXIT_PASS
        line = capsys.readouterr().out.splitlines()[0]
        assert float(line.split()[2]) == pytest.approx(3.0, abs=1e-9)

    def test_norm_verbose_lists_singular_values(self, tmp_path, capsys):
        path = tmp_path / "w.txt"
        save_matrix(Matrix(np.diag([3.0, 1.0])), path)
        rmtlab.main(['-v', 'norm', '--in', str(path), '--method', 'full'])
        assert "singular values" in capsys.readouterr().out

    def test_solver_failure(self, tmp_path, capsys, monkeypatch):
        path = tmp_path / "w.txt"
        save_matrix(Matrix(np.diag([3.0, 1.0])), path)

        def stalled(m):
            raise RuntimeError("Jacobi did not reach off-diagonal mass")

        monkeypatch.setattr(rmtlab, 'singular_values_full', stalled)
        assert rmtlab.main(['norm', '--in', str(path), '--method', 'full']) == EXIT_SOLVER
        assert "Solver failure" in capsys.readouterr().out

    def test_missing_matrix(self, tmp_path):
        assert rmtlab.main(['norm', '--in', str(tmp_path / "absent.txt")]) == EXIT_CONFIG


class TestExperimentCommands:
    def test_run_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", ceiling=10.0)
        out = tmp_path / "report.csv"
        assert rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(out)]) == EXIT_PASS
        df = pd.read_csv(out)
        assert len(df) == 4
        assert "fitted C" in capsys.readouterr().out

    def test_run_above_ceiling(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", ceiling=1e-3)
        code = rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "r.csv")])
        assert code == EXIT_CEILING

    def test_run_invalid_config(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", trials=0)
        code = rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "r.csv")])
        assert code == EXIT_CONFIG

    def test_run_missing_config(self, tmp_path):
        code = rmtlab.main(['experiment', 'run', '--config', str(tmp_path / "none.json"),
                            '--out', str(tmp_path / "r.csv")])
        assert code == EXIT_CONFIG

    def test_run_rejected_distribution(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json",
                           distribution={"kind": "symmetric_pareto", "params": {"alpha": 3.5}})
        code = rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "r.csv")])
        assert code == EXIT_CONFIG

    def test_run_inequality_violation(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json",
                           b_factor={"kind": "diagonal_column_norms", "params": {"value": 1.5}})
        code = rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "r.csv")])
        assert code == EXIT_CEILING
        assert "Inequality violated" in capsys.readouterr().out

    def test_workers_match_serial(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "a.csv")])
        rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(tmp_path / "b.csv"),
                     '--workers', '4'])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_fit(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "report.csv"
        rmtlab.main(['experiment', 'run', '--config', str(cfg), '--out', str(out)])
        ratios = pd.read_csv(out, float_precision='round_trip')['ratio']
        capsys.readouterr()
        assert rmtlab.main(['experiment', 'fit', '--in', str(out), '--quantile', '1.0']) == EXIT_PASS
        assert f"{ratios.max():.17g}" in capsys.readouterr().out
        assert rmtlab.main(['experiment', 'fit', '--in', str(out), '--ceiling', '1e-6']) == EXIT_CEILING


class TestAuditAndList:
    def test_audit(self, tmp_path):
        out = tmp_path / "tails.csv"
        code = rmtlab.main(['audit', '--trials', '2000', '--seed', '1', '--ts', '2', '3', '--out', str(out)])
        df = pd.read_csv(out)
        assert set(df['audit']) == {'bennett', 'gaussian', 'exp_sum', 'talagrand'}
        assert code == (EXIT_PASS if df['dominated'].all() else EXIT_CEILING)

    def test_list(self, capsys):
        assert rmtlab.main(['list']) == EXIT_PASS
        out = capsys.readouterr().out
        assert "main_bound" in out
        assert "variance_audit" in out

    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            rmtlab.main([])

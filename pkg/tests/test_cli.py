import io
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from goalforge import cli
from goalforge.harness import CONFIGURATIONS, SEARCH_GRIDS
from goalforge.results import RESULTS_ENV_VAR

SMALL = ["--hidden", "8,8", "--cycles", "1", "--batches", "1", "--test-rollouts", "1",
         "--horizon", "10", "--batch-size", "16"]
SVG_NS = "{http://www.w3.org/2000/svg}"


def run(argv):
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def series_ids(svg: Path):
    root = ET.parse(svg).getroot()
    return {el.get("id") for el in root.iter() if el.get("id")}


def snapshot(root: Path, pattern: str):
    return {p: p.read_bytes() for p in sorted(root.rglob(pattern))}


@pytest.fixture(scope="module")
def bench_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    code, _ = run(["bench", "--env", "PointReach", "--seeds", "3", "--epochs", "2",
                   "--results", str(root), *SMALL])
    assert code == 0
    return root


class TestTrain:
    def test_creates_rows(self, tmp_path):
        code, out = run(["train", "--env", "PointReach", "--reward", "sparse", "--her", "on",
                         "--seeds", "1", "--epochs", "5", "--results", str(tmp_path), *SMALL])
        assert code == 0
        progress = tmp_path / "PointReach" / "her-sparse" / "seed_0" / "progress.csv"
        assert len(progress.read_text().splitlines()) == 1 + 5
        assert out.splitlines()[0] == "env,config,seed,epoch,success_rate"
        assert len(out.splitlines()) == 6

    def test_unknown_env(self, tmp_path, capsys):
        code, _ = run(["train", "--env", "Nope", "--results", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert "PointReach" in err and "PoseRotateZ" in err

    def test_bad_flag(self, tmp_path):
        assert run(["train", "--env", "PointReach", "--her", "maybe"])[0] == 1
        assert run(["train", "--env", "PointReach", "--random-eps", "2"])[0] == 1
        assert run(["frobnicate"])[0] == 1

    def test_same_seed_same_bytes(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            root = tmp_path / name
            code, _ = run(["train", "--env", "PointReach", "--workers", "1", "--seed", "7",
                           "--epochs", "3", "--results", str(root), *SMALL])
            assert code == 0
            outputs.append((root / "PointReach/her-sparse/seed_7/progress.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_results_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(RESULTS_ENV_VAR, str(tmp_path / "env-root"))
        code, _ = run(["train", "--env", "PointReach", "--her", "off", "--reward", "dense",
                       "--epochs", "1", *SMALL])
        assert code == 0
        assert (tmp_path / "env-root/PointReach/ddpg-dense/seed_0/progress.csv").exists()


class TestConfigFile:
    def test_file_then_flags(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# desk profile\nepochs=4\nhidden=8,8\nrandom-eps=0.1\nseed=3\n")
        args = cli.parse_args(["train", "--env", "PointReach", "--config", str(cfg),
                               "--epochs", "2"])
        assert args.epochs == 2  # command line wins
        assert args.hidden == (8, 8) and args.random_eps == 0.1 and args.seed == 3

    def test_defaults_match_hyperparameters(self):
        args = cli.parse_args(["train", "--env", "PointReach"])
        assert (args.actor_lr, args.critic_lr, args.polyak, args.batch_size, args.random_eps,
                args.noise_eps, args.action_l2, args.her_probability, args.buffer_size,
                args.hidden) == (1e-3, 1e-3, 0.95, 256, 0.3, 0.2, 1.0, 0.8, 10**6,
                                 (256, 256, 256))
        assert (args.workers, args.rollouts, args.cycles, args.batches, args.test_rollouts) == (
            2, 2, 50, 40, 10)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus=1\n")
        assert run(["train", "--env", "PointReach", "--config", str(cfg)])[0] == 1

    def test_bad_value(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=many\n")
        assert run(["train", "--env", "PointReach", "--config", str(cfg)])[0] == 1

    def test_missing_file(self, tmp_path):
        assert run(["train", "--env", "PointReach", "--config", str(tmp_path / "no")])[0] == 1


class TestBench:
    def test_svg_has_four_series(self, bench_root):
        svg = bench_root / "PointReach" / "PointReach.svg"
        ids = series_ids(svg)
        for label in CONFIGURATIONS:
            assert f"median-{label}" in ids and f"iqr-{label}" in ids

    def test_summary_rows(self, bench_root):
        for label in CONFIGURATIONS:
            rows = (bench_root / "PointReach" / label / "summary.csv").read_text().splitlines()
            assert rows[0] == "epoch,median,q1,q3" and len(rows) == 1 + 2

    def test_resume_skips_completed(self, bench_root):
        before = snapshot(bench_root, "progress.csv")
        mtimes = {p: p.stat().st_mtime_ns for p in before}
        code, _ = run(["bench", "--env", "PointReach", "--seeds", "3", "--epochs", "2",
                       "--resume", "--results", str(bench_root), *SMALL])
        assert code == 0
        assert {p: p.stat().st_mtime_ns for p in before} == mtimes


class TestReport:
    def test_one_line_and_band_per_config(self, bench_root):
        code, out = run(["report", "--results", str(bench_root)])
        assert code == 0
        root = ET.parse(bench_root / "PointReach" / "PointReach.svg").getroot()
        for label in CONFIGURATIONS:
            line = root.find(f".//{SVG_NS}g[@id='median-{label}']")
            band = root.find(f".//{SVG_NS}g[@id='iqr-{label}']")
            assert len(line.findall(f"{SVG_NS}path")) == 1
            assert len(band.findall(f".//{SVG_NS}path")) == 1
        assert "PointReach" in out

    def test_pure_and_idempotent(self, bench_root):
        raw = snapshot(bench_root, "progress.csv")
        run(["report", "--results", str(bench_root)])
        first = {**snapshot(bench_root, "summary.csv"), **snapshot(bench_root, "*.svg")}
        run(["report", "--results", str(bench_root)])
        second = {**snapshot(bench_root, "summary.csv"), **snapshot(bench_root, "*.svg")}
        assert snapshot(bench_root, "progress.csv") == raw
        assert first == second

    def test_missing_seed_named(self, tmp_path, capsys):
        code, _ = run(["train", "--env", "PointReach", "--seeds", "2", "--epochs", "1",
                       "--results", str(tmp_path), *SMALL])
        assert code == 0
        (tmp_path / "PointReach/her-sparse/seed_1/progress.csv").unlink()
        assert run(["report", "--results", str(tmp_path)])[0] == 2
        assert "seed 1" in capsys.readouterr().err

    def test_ragged_run_named(self, tmp_path, capsys):
        run(["train", "--env", "PointReach", "--seeds", "2", "--epochs", "2",
             "--results", str(tmp_path), *SMALL])
        path = tmp_path / "PointReach/her-sparse/seed_0/progress.csv"
        path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
        assert run(["report", "--results", str(tmp_path)])[0] == 2
        assert "seed 0" in capsys.readouterr().err

    def test_no_results(self, tmp_path):
        assert run(["report", "--results", str(tmp_path / "absent")])[0] == 2


class TestSearch:
    def test_smoke_table(self, tmp_path):
        code, out = run(["search", "--env", "PointReach", "--samples", "2", "--seeds", "1",
                         "--epochs", "2", "--configs", "her-sparse", "--results", str(tmp_path),
                         *SMALL])
        assert code == 0
        rows = out.splitlines()
        assert rows[0].split(",") == ["rank", "sample", "score", *SEARCH_GRIDS]
        body = [r.split(",") for r in rows[1:]]
        assert len(body) == 2
        scores = [float(r[2]) for r in body]
        assert scores == sorted(scores, reverse=True)
        for r in body:
            for key, text in zip(SEARCH_GRIDS, r[3:]):
                assert any(str(v) == text for v in SEARCH_GRIDS[key])
        assert (tmp_path / "PointReach" / "search.csv").read_text() == out


def test_list_envs():
    code, out = run(["list-envs"])
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 1 + 20
    assert "PenFull-sparse,13,7,6,pose_ignore_z,0.05,0.1" in lines

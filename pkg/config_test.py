# config_test.py
import json
import logging
from pathlib import Path

import pandas as pd
import pytest

from src.main import main
from src.schemas.run_config import RunConfig
from src.services.export_service import ExportService
from src.utils.cli_parser import CLIParser
from src.utils.env_loader import load_env_overrides
from src.utils.errors import ConfigError
from src.utils.logger import setup_logger
from src.utils.result_store import ResultStore

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

TEMPLATES = Path(__file__).parent / "src" / "templates"


def test_defaults_match_eckart_setup():
    config = RunConfig()
    assert config.model.kind == "eckart"
    assert config.model.A == 49.25
    assert config.expansion.alpha == pytest.approx(1.25)
    cfg = config.expansion_config()
    assert cfg.r_grid == [0.5]


def test_ini_round_trip(tmp_path):
    config = RunConfig.from_ini(str(TEMPLATES / "free_particle.ini"))
    assert config.model.kind == "free"
    assert config.expansion.r_values == [0.25, 0.5, 1.0, 2.0]
    assert config.schedule.times == [0.0, 1.0, 10.0]
    assert config.cn.dt is None

    path = tmp_path / "copy.ini"
    config.to_ini(str(path))
    assert RunConfig.from_ini(str(path)) == config


def test_all_templates_load():
    for path in sorted(TEMPLATES.glob("*.ini")):
        config = RunConfig.from_ini(str(path))
        logger.info(f"{path.name}: 模型 {config.model.kind}")


def test_invalid_ini_raises_config_error(tmp_path):
    cases = {
        "unknown_key.ini": "[expansion]\nbeta = 1.0\n",
        "negative_alpha.ini": "[expansion]\nalpha = -1.0\n",
        "bad_times.ini": "[schedule]\nt_min = 10\nt_max = 1\n",
        "missing_table.ini": "[model]\nkind = tabulated\n",
        "not_finite.ini": "[expansion]\nk_max = inf\n",
    }
    for name, text in cases.items():
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        with pytest.raises(ConfigError):
            RunConfig.from_ini(str(path))
    with pytest.raises(ConfigError):
        RunConfig.from_ini(str(tmp_path / "absent.ini"))


def test_overrides():
    config = RunConfig().with_overrides({('expansion', 'alpha'): 2.0, ('output', 'quiet'): None})
    assert config.expansion.alpha == 2.0
    assert config.output.quiet is False
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({('expansion', 'gamma'): 1.0})
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({('expansion', 'precision'): 10})


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("DECAY_ALPHA", "1.5")
    monkeypatch.setenv("DECAY_PRECISION", "30")
    monkeypatch.setenv("DECAY_OUT", "  ")
    overrides = load_env_overrides()
    assert overrides[('expansion', 'alpha')] == 1.5
    assert overrides[('expansion', 'precision')] == 30
    assert ('output', 'out_dir') not in overrides

    monkeypatch.setenv("DECAY_KMAX", "many")
    with pytest.raises(ConfigError):
        load_env_overrides()


def test_cli_overrides_take_precedence(monkeypatch):
    parser = CLIParser()
    args = parser.parse_args(["evolve", "--alpha", "2.5", "--r", "0.5,1.0", "--quiet", "-c", "4"])
    overrides = parser.overrides(args)
    assert overrides[('expansion', 'alpha')] == 2.5
    assert overrides[('expansion', 'r_values')] == [0.5, 1.0]
    assert overrides[('expansion', 'workers')] == 4
    assert overrides[('output', 'quiet')] is True
    assert ('expansion', 'k_max') not in overrides

    monkeypatch.setenv("DECAY_ALPHA", "1.5")
    config = RunConfig().with_overrides(load_env_overrides()).with_overrides(overrides)
    assert config.expansion.alpha == 2.5


def test_cli_rejects_bad_arguments(tmp_path):
    parser = CLIParser()
    with pytest.raises(ConfigError):
        parser.parse_args(["poles", "--config", str(tmp_path / "absent.ini")])
    with pytest.raises(ConfigError):
        parser.parse_args(["poles", "-c", "0"])
    with pytest.raises(ConfigError):
        parser.parse_args(["evolve", "--times", "1.0,-2.0"])
    with pytest.raises(SystemExit):
        parser.parse_args(["plot"])


@pytest.mark.asyncio
async def test_export_is_byte_deterministic(tmp_path):
    frame = pd.DataFrame({'t': [0.1, 1.0], 're_psi': [1 / 3, -2e-20], 'marker': ["", "t_alg"]})
    service = ExportService(digits=15)
    first = await service.export_frame(frame, str(tmp_path / "a.csv"))
    second = await service.export_frame(frame, str(tmp_path / "b"))
    assert second.endswith("b.csv")
    data = Path(first).read_bytes()
    assert data == Path(second).read_bytes()
    assert data.splitlines()[0] == b"t,re_psi,marker"
    assert b"3.33333333333333e-01" in data
    with pytest.raises(ValueError):
        await service.export_frame(frame, str(tmp_path / "missing" / "c.csv"))


def test_result_store_round_trip(tmp_path):
    store = ResultStore(str(tmp_path))
    path = store.save_result("poles", {'k0': 2 - 0.5j, 'count': 3})
    assert json.loads(Path(path).read_text(encoding='utf-8'))['k0'] == [2.0, -0.5]
    assert store.load_result("poles") == {'count': 3, 'k0': [2.0, -0.5]}
    assert store.load_result("report") is None


def test_logger_is_idempotent(tmp_path):
    root = logging.getLogger()
    before = len(root.handlers)
    setup_logger("DEBUG", log_dir=str(tmp_path))
    once = len(root.handlers)
    setup_logger("DEBUG", log_dir=str(tmp_path))
    assert len(root.handlers) == once
    setup_logger("INFO", log_dir=str(tmp_path), quiet=True)
    assert len(root.handlers) == once - 1
    for handler in list(root.handlers)[before:]:
        root.removeHandler(handler)
        handler.close()


@pytest.mark.asyncio
async def test_main_report_on_free_model(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = await main(["report", "--config", str(TEMPLATES / "free_particle.ini"),
                       "--out", str(tmp_path / "out"), "--r", "0.5", "--quiet"])
    assert code == 0
    text = (tmp_path / "out" / "report.txt").read_text(encoding='utf-8')
    assert "psi_inf" in text
    summary = ResultStore(str(tmp_path / "out")).load_result("report")
    assert summary['reports'][0]['k0'] is None


@pytest.mark.asyncio
async def test_main_exit_codes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert await main(["report", "--config", str(tmp_path / "absent.ini")]) == ConfigError.exit_code
    assert await main(["poles", "--alpha", "-1", "--out", str(tmp_path), "--quiet"]) == ConfigError.exit_code


FREE_ARGS = ["--config", str(TEMPLATES / "free_particle.ini"), "--kmax", "8", "--r", "0.5",
             "--times", "0.5,2.0", "--quiet"]


@pytest.mark.asyncio
async def test_main_poles_on_free_model(tmp_path, monkeypatch):
    """poles 子命令：自由粒子只有辅助极点"""
    monkeypatch.chdir(tmp_path)
    assert await main(["poles", "--out", str(tmp_path / "out")] + FREE_ARGS) == 0
    frame = pd.read_csv(tmp_path / "out" / "poles.csv")
    assert set(frame['kind']) <= {"aux1", "aux2", "aux3"}
    summary = ResultStore(str(tmp_path / "out")).load_result("poles")
    assert summary['resonance_count'] == 0
    assert summary['aux_count'] == len(frame)
    assert summary['k0'] is None


@pytest.mark.asyncio
async def test_main_evolve_on_free_model(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert await main(["evolve", "--out", str(tmp_path / "out")] + FREE_ARGS) == 0
    frame = pd.read_csv(tmp_path / "out" / "evolve.csv")
    assert sorted(frame['t'].unique()) == [0.5, 2.0]
    assert set(frame['r']) == {0.5}
    summary = ResultStore(str(tmp_path / "out")).load_result("evolve")
    assert summary['asymptotics'][0]['t_alg'] is None
    assert summary['asymptotics'][0]['empirical_crossover'] is None
    assert summary['sum_rules'][0]['r'] == 0.5


@pytest.mark.asyncio
async def test_main_survival_on_free_model(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert await main(["survival", "--out", str(tmp_path / "out")] + FREE_ARGS) == 0
    frame = pd.read_csv(tmp_path / "out" / "survival.csv")
    assert list(frame.columns) == ['t', 'S', 'truncation', 'asymptote', 'P']
    assert frame['S'].between(0.0, 1.0).all()
    assert (frame['P'] <= 1.0).all()
    summary = ResultStore(str(tmp_path / "out")).load_result("survival")
    assert summary['exponential_rate'] is None


@pytest.mark.asyncio
async def test_main_compare_cn_on_free_model(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = tmp_path / "free_cn.ini"
    config.write_text("[model]\nkind = free\n\n[state]\nkind = trapped_gaussian\nrho = 1.0\n\n"
                      "[expansion]\nalpha = 1.25\nk_max = 16.0\nr_values = 0.5\n\n"
                      "[cn]\ndr = 0.025\nL = 40.0\nt_end = 0.5\nr_compare = 5.0\n",
                      encoding='utf-8')
    code = await main(["compare-cn", "--config", str(config), "--out", str(tmp_path / "out"), "--quiet"])
    assert code == 0
    frame = pd.read_csv(tmp_path / "out" / "compare_cn.csv")
    assert frame['r'].max() <= 5.0
    comparison = ResultStore(str(tmp_path / "out")).load_result("compare-cn")['comparisons'][0]
    assert comparison['t'] == pytest.approx(0.5)
    assert comparison['relative_l2'] < 2e-2

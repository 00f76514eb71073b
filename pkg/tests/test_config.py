import pytest

from condspec.conditional_mc import ScenarioConfig, TestSpec
from condspec.config import GciSweepConfig, ScenarioSweep, config_digest, load_config, parse_config, with_seed
from condspec.errors import ConfigError, ParseError, ValidationError

BASIC = """
# DID scenario
dgp.family = DID
dgp.rho = 0.5
tests.list = pretrends:F
mc.n = 500
mc.reps = 20
mc.master_seed = 7
"""


class TestParse:
    def test_scenario(self):
        cfg = parse_config(BASIC)
        assert isinstance(cfg, ScenarioConfig)
        assert cfg.dgp.family == "DID" and cfg.dgp.rho == 0.5
        assert cfg.tests == (TestSpec("pretrends", kind="F"),)
        assert (cfg.n, cfg.reps, cfg.master_seed) == (500, 20, 7)
        assert cfg.scenario_id == "scenario"

    def test_defaults(self):
        cfg = parse_config("dgp.family = LinearConstant")
        assert (cfg.n, cfg.reps, cfg.alpha_spec, cfg.critical) == (2000, 1000, (0.05,), "simulate")

    def test_quotes_and_comments(self):
        cfg = parse_config('dgp.family = "DID"  # trailing\nmc.scenario_id = "a # b"\n')
        assert cfg.scenario_id == "a # b"

    def test_lists(self):
        cfg = parse_config("dgp.family = IV\ntests.list = balance, intervals\ntests.alpha_spec = 0.05, 0.1")
        assert cfg.alpha_spec == (0.05, 0.1)
        assert [t.block for t in cfg.tests] == ["balance", "intervals"]

    def test_sweep(self):
        sweep = parse_config(BASIC.replace("dgp.rho = 0.5", "sweep.key = dgp.rho\nsweep.values = 0, 0.5, 0.9"))
        assert isinstance(sweep, ScenarioSweep)
        assert [c.dgp.rho for c in sweep.configs] == [0.0, 0.5, 0.9]
        assert sweep.configs[2].scenario_id == "scenario[rho=0.9]"

    def test_gci(self):
        cfg = parse_config("gci.dim_max = 4\ngci.cases = 10")
        assert cfg == GciSweepConfig(dim_max=4, cases=10)

    def test_load(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(BASIC)
        assert load_config(path) == parse_config(BASIC)


class TestErrors:
    def test_duplicate_key(self):
        with pytest.raises(ParseError) as info:
            parse_config("dgp.family = DID\nmc.n = 10\nmc.n = 20")
        assert info.value.line == 3

    def test_malformed_line(self):
        with pytest.raises(ParseError) as info:
            parse_config("dgp.family = DID\njust words")
        assert info.value.line == 2

    @pytest.mark.parametrize("text,key", [
        ("dgp.family = DID\ninference.alpha_inference = 1.5", "alpha_inference"),
        ("dgp.family = DID\nmc.colour = red", "mc.colour"),
        ("dgp.family = DID\nmc.n = many", "mc.n"),
        ("dgp.family = DID\ndgp.rho = 2", "dgp.rho"),
        ("mc.n = 10", "dgp.family"),
        ("gci.dim_max = 12", "gci.dim_max"),
        ("gci.cases = 3\nmc.n = 4", "mc.n"),
        ("dgp.family = DID\nsweep.key = dgp.rho", "sweep.values"),
    ])
    def test_validation(self, text, key):
        with pytest.raises(ValidationError) as info:
            parse_config(text)
        assert key in info.value.key or key in str(info.value)

    def test_alpha_message(self):
        with pytest.raises(ConfigError, match=r"alpha_inference must lie in \(0,1\)"):
            parse_config("dgp.family = DID\ninference.alpha_inference = 1.5")


class TestDigest:
    def test_formatting_invariance(self):
        reordered = "mc.master_seed=7\n\n  mc.reps = 20\nmc.n = 500\ntests.list = pretrends:F\n" \
                    "dgp.rho = 0.50\ndgp.family = DID  # again\n"
        assert config_digest(parse_config(reordered)) == config_digest(parse_config(BASIC))

    def test_sensitive_to_values(self):
        assert config_digest(parse_config(BASIC)) != config_digest(parse_config(BASIC.replace("0.5", "0.6")))

    def test_seed_override(self):
        cfg = with_seed(parse_config(BASIC), 99)
        assert cfg.master_seed == 99
        assert config_digest(cfg) != config_digest(parse_config(BASIC))

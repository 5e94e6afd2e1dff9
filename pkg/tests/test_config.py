import pytest

from limitquant.config import SCHEMA, ParseError, ValidationError, load_scenario, parse_scenario
from limitquant.harness import builtin_scenarios, resolve_scenario

MINIMAL = """
lambda = [1e3, 1e4, 1e5]

[scenario]
experiment = "limit-spectrum"
"""


def test_defaults():
    sc = parse_scenario(MINIMAL, "mini")
    assert sc.name == "mini"
    assert sc["hbar"] == (1.0,)
    assert sc["grid.n_s"] == 128
    assert sc["grid.n_r"] == 96
    assert sc["grid.order"] == 4
    assert sc["tolerance.exponent"] == -0.5
    assert sc.explicit == {"lambda", "scenario.experiment"}
    assert set(sc.values) == set(SCHEMA)


def test_too_few_lambdas():
    text = MINIMAL.replace("[1e3, 1e4, 1e5]", "[1e3, 1e4]")
    with pytest.raises(ValidationError, match="need >= 3") as exc:
        parse_scenario(text)
    assert exc.value.key == "lambda"


def test_lambda_must_ascend():
    with pytest.raises(ValidationError, match="ascending"):
        parse_scenario(MINIMAL.replace("[1e3, 1e4, 1e5]", "[1e3, 1e5, 1e4]"))


def test_unknown_key_suggestion():
    with pytest.raises(ValidationError, match="did you mean 'confinement.omega0'"):
        parse_scenario(MINIMAL + "\n[confinment]\nomega0 = [1.0]\n")


def test_unknown_experiment_suggestion():
    with pytest.raises(ValidationError, match="did you mean 'limit-spectrum'"):
        parse_scenario(MINIMAL.replace('"limit-spectrum"', '"limit-spectrm"'))


def test_parse_error_has_line_number():
    with pytest.raises(ParseError) as exc:
        parse_scenario(MINIMAL + "\n[grid]\nn_s = = 3\n")
    assert exc.value.line == 8


def test_type_errors():
    with pytest.raises(ValidationError, match="integer"):
        parse_scenario(MINIMAL + "\n[grid]\nn_s = 64.5\n")
    with pytest.raises(ValidationError, match="grid.order"):
        parse_scenario(MINIMAL + "\n[grid]\norder = 3\n")
    with pytest.raises(ValidationError, match="tuned"):
        parse_scenario(MINIMAL + "\n[confinement]\ntune = false\n")


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "absent.toml")


def test_hash_is_stable_and_sensitive():
    a, b = parse_scenario(MINIMAL), parse_scenario(MINIMAL)
    assert a.hash == b.hash
    assert a.with_overrides(grid__n_s=64).hash != a.hash


@pytest.mark.parametrize("name", sorted(builtin_scenarios()))
def test_builtin_scenarios_validate(name):
    sc = resolve_scenario(name)
    assert sc.name == name

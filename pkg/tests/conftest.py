import pytest

from flatcircle.rotation import cf_target_value, tune_parameter

GOLDEN_BITS = 256


@pytest.fixture(scope="session")
def golden_value():
    return cf_target_value([1], precision_bits=GOLDEN_BITS)


@pytest.fixture(scope="session")
def silver_value():
    return cf_target_value([2], precision_bits=GOLDEN_BITS)


@pytest.fixture(scope="session")
def golden3(golden_value):
    """Golden-mean map, exponent 3, tuned deep enough for level-20 structure."""
    return tune_parameter(0.5, 3, 3, golden_value, tol=1e-11, precision_bits=GOLDEN_BITS)


@pytest.fixture(scope="session")
def golden4(golden_value):
    return tune_parameter(0.5, 4, 4, golden_value, tol=1e-11, precision_bits=GOLDEN_BITS)


@pytest.fixture(scope="session")
def silver3(silver_value):
    return tune_parameter(0.5, 3, 3, silver_value, tol=1e-9, precision_bits=GOLDEN_BITS)


@pytest.fixture(scope="session")
def evaluator_g34(golden3, golden4):
    from flatcircle.conjugacy import ConjugacyEvaluator

    return ConjugacyEvaluator(golden3, golden4, resolution=2.0**-20, max_level=24)


@pytest.fixture(scope="session")
def cli_maps(tmp_path_factory):
    """Pre-tuned map JSON files for CLI tests (cheaper tolerance)."""
    from flatcircle.cli import main

    d = tmp_path_factory.mktemp("maps")
    g3 = d / "g3.json"
    g4 = d / "g4.json"
    assert main([
        "tune", "--target-cf", "1", "--depth", "22",
        "--ell-left", "3", "--ell-right", "3", "--out", str(g3),
    ]) == 0
    assert main([
        "tune", "--target-cf", "1", "--depth", "22",
        "--ell-left", "4", "--ell-right", "4", "--out", str(g4),
    ]) == 0
    return {"g3": g3, "g4": g4, "dir": d}

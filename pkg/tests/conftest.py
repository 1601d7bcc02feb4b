import sys
from pathlib import Path

import pytest

from fairlend.data import LabeledData, ScenarioConfig, generate_scenario, load_csv, split

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def tradeoff():
    """Credit-score fixture where cutoff 600 vs 700 trades accuracy for AIR."""
    ds, groups = load_csv(FIXTURES / "cutoff_tradeoff_100.csv", group_column="group")
    return LabeledData(ds, groups)


@pytest.fixture(scope="session")
def german():
    ds, groups = load_csv(FIXTURES / "german_style_200.csv", group_column="group",
                          id_column="applicant_id")
    return LabeledData(ds, groups)


@pytest.fixture(scope="session")
def default_split():
    """Default proxy scenario (seed 0) split 70/30."""
    ds, groups = generate_scenario(ScenarioConfig())
    return split(ds, groups, 0.7, 0)


@pytest.fixture(scope="session")
def wide_gap_split():
    """Proxy scenario with base rates 0.45 / 0.15, where the baseline shows adverse impact."""
    ds, groups = generate_scenario(ScenarioConfig(base_rate_protected=0.45))
    return split(ds, groups, 0.7, 0)

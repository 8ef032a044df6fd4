import pytest

from synret.config import RunConfig
from synret.dataset import synthetic_bundles
from synret.params import init_params

GOLDEN_NAMES = [
    "adj_root",
    "aux_only",
    "deep_chain",
    "orphan_noun",
    "pronoun",
    "propn",
    "punct_only",
    "simple",
    "two_verbs",
    "verbless",
]


@pytest.fixture(scope="session")
def golden_dir(request):
    return request.config.rootpath / "tests" / "golden"


@pytest.fixture(scope="session")
def small_setup():
    """Shared tiny model + data: d=8, 4 pairs, 4 frames, 9 patches."""
    bundles = synthetic_bundles(7, 4, 6, 4, 9, 8)
    params = init_params(3, 8, max_frames=4)
    cfg = RunConfig(d=8, max_frames=4, seed=3)
    return bundles, params, cfg

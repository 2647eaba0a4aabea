import pytest

from quadsub.catalog import catalog, get_entry
from quadsub.singular_space import singular_report


def test_catalog_names():
    assert sorted(entry.name for entry in catalog()) == ["chain", "davies", "degenerate", "harmonic", "kfp"]


@pytest.mark.parametrize("entry", catalog(), ids=lambda e: e.name)
def test_expected_k0_matches_rank_test(entry):
    assert singular_report(entry.symbol).k0 == entry.expected_k0


def test_get_entry_unknown_name():
    with pytest.raises(ValueError, match="Available symbols"):
        get_entry("airy")


def test_entry_serializes_symbol():
    data = get_entry("davies").to_dict()
    assert data["expected_k0"] == 1
    assert data["symbol"] == {"n": 1, "Q_re": [[0.0, 0.0], [0.0, 1.0]], "Q_im": [[1.0, 0.0], [0.0, 0.0]]}

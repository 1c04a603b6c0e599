import pytest

from enfgrid.labels import (ALL_KEYS, KNOWN_GRIDS, GridLabel, NominalFreq, RecType, SubDatasetKey,
                            grids_for, nominal_for, parse_label, route)


def test_grid_nominals():
    assert list(grids_for(60)) == [GridLabel.A, GridLabel.C, GridLabel.I]
    assert [str(g) for g in grids_for(50)] == list("BDEFGH")
    assert nominal_for("C") is NominalFreq.HZ60
    assert nominal_for(GridLabel.H) is NominalFreq.HZ50


def test_known_grids_exclude_n():
    assert GridLabel.N not in KNOWN_GRIDS
    assert len(KNOWN_GRIDS) == 9


@pytest.mark.parametrize("text, expected", [("A", GridLabel.A), ("?", None), ("", None), (" i ", GridLabel.I)])
def test_parse_label(text, expected):
    assert parse_label(text) == expected


def test_parse_label_rejects_garbage():
    with pytest.raises(ValueError):
        parse_label("Z")


def test_rectype_parse():
    assert RecType.parse("power") is RecType.POWER
    assert RecType.parse("Audio") is RecType.AUDIO
    with pytest.raises(ValueError):
        RecType.parse("video")


def test_subdataset_keys():
    names = sorted(k.name for k in ALL_KEYS)
    assert names == ["audio50", "audio60", "power50", "power60"]
    key = SubDatasetKey.from_name("power50")
    assert key.n_classes == 6
    assert route("Audio", 60).n_classes == 3
    assert route(RecType.POWER, NominalFreq.HZ50) == key

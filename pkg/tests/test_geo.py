from earnkit.geo import (DIVISION_STATES, HOURS_REPORTING_STATES,
                         INDUSTRY_SECTORS, SECTOR_LETTERS, STATE_TO_DIVISION)


def test_divisions_partition_states():
    assert set(DIVISION_STATES) == set(range(1, 10))
    all_states = [s for states in DIVISION_STATES.values() for s in states]
    assert len(all_states) == len(set(all_states))
    assert len(all_states) == 51           # 50 states + DC
    for d, states in DIVISION_STATES.items():
        for s in states:
            assert STATE_TO_DIVISION[s] == d


def test_sector_letters_complete():
    assert list(SECTOR_LETTERS) == sorted(INDUSTRY_SECTORS)
    assert len(SECTOR_LETTERS) == 20
    assert SECTOR_LETTERS[0] == "A"


def test_hours_reporting_states_known():
    assert set(HOURS_REPORTING_STATES) == {"WA", "OR", "RI", "MN"}
    for s in HOURS_REPORTING_STATES:
        assert s in STATE_TO_DIVISION

import numpy as np
import pytest

from fairlend.exceptions import FairlendError, InstanceTooLargeError
from fairlend.impossibility import (MAX_ROWS, default_instance_family, feasibility_table,
                                    impossibility_search, make_instance)
from fairlend.metrics import check_three_conditions


def test_equal_base_rates_witness_is_common_rate():
    inst = make_instance(4, 1, 4, 1)
    witness = impossibility_search(inst.outcomes, np.array(inst.is_protected), 20)
    assert witness is not None
    assert np.allclose(witness, 0.25)


def test_perfect_prediction_witness_equals_outcomes():
    inst = make_instance(4, 2, 4, 0, layout="split")
    assert inst.perfect_prediction and not inst.equal_base_rates
    witness = impossibility_search(inst.outcomes, np.array(inst.is_protected), 20,
                                   cells=inst.cells)
    assert witness is not None
    assert witness.tolist() == [float(y) for y in inst.outcomes]


def test_unequal_base_rates_have_no_witness():
    inst = make_instance(4, 1, 4, 2)
    assert impossibility_search(inst.outcomes, np.array(inst.is_protected), 20, 1e-9) is None


def test_witness_passes_the_checker():
    inst = make_instance(4, 2, 4, 2, layout="split")
    prot = np.array(inst.is_protected)
    witness = impossibility_search(inst.outcomes, prot, 20, cells=inst.cells)
    assert check_three_conditions(witness, inst.outcomes, prot).all


def test_first_witness_in_lexicographic_order():
    # nobody defaults, so the very first grid point (all zeros) is already a witness
    inst = make_instance(2, 0, 2, 0)
    witness = impossibility_search(inst.outcomes, np.array(inst.is_protected), 4)
    assert witness.tolist() == [0.0] * 4


def test_refuses_large_instances():
    y = [0, 1] * (MAX_ROWS // 2 + 1)
    prot = [True, False] * (MAX_ROWS // 2 + 1)
    with pytest.raises(InstanceTooLargeError, match="40"):
        impossibility_search(y, prot)
    with pytest.raises(InstanceTooLargeError):
        impossibility_search([0, 1], [True, False], score_grid_steps=101)
    with pytest.raises(InstanceTooLargeError, match="assignments"):
        impossibility_search([0, 1] * 8, [True, False] * 8, 20, cells=list(range(16)))


def test_rejects_bad_tolerance_and_cells():
    with pytest.raises(FairlendError):
        impossibility_search([0, 1], [True, False], tol=0)
    with pytest.raises(FairlendError):
        impossibility_search([0, 1], [True, False], cells=[0])


def test_make_instance_validation():
    with pytest.raises(FairlendError):
        make_instance(4, 5, 4, 1)
    with pytest.raises(FairlendError):
        make_instance(4, 1, 4, 1, layout="grid")


def test_family_covers_enough_base_rate_combinations():
    family = default_instance_family()
    combos = {inst.base_rates for inst in family}
    assert len(family) == 101 and len(combos) >= 25
    assert all(sum(inst.is_protected) <= 8 and len(inst.outcomes) - sum(inst.is_protected) <= 8
               for inst in family)


def test_feasibility_table_rows():
    rows = feasibility_table([make_instance(2, 1, 2, 1), make_instance(2, 0, 2, 1)])
    assert [r["witness_found"] for r in rows] == [True, False]
    assert rows[0]["base_rate_protected"] == 0.5 and rows[1]["witness"] is None

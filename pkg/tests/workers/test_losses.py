"""
Tests for the occupancy loss terms.
"""
import math

import numpy as np
import pytest

from autodiff.tape import Tensor
from core.runtime.errors import DimensionError
from models.decoder import compose
from workers.train.losses import fracture_loss, loss_terms, restoration_loss

O_C = np.array([1, 1, 0, 0], dtype=np.uint8)
O_B = np.array([1, 0, 1, 0], dtype=np.uint8)


@pytest.fixture
def halves():
    """Both decoders undecided: o_C = o_B = 0.5, so o_F = o_R = 0.25."""
    return compose(Tensor(np.full((4, 1), 0.5)), Tensor(np.full((4, 1), 0.5)))


class TestLossTerms:
    """BCE per term with derived fractured and restoration targets."""

    def test_values(self, halves):
        """Undecided outputs cost ln 2 on C and B; F and R see one positive in four."""
        terms = loss_terms(halves, O_C, O_B).values()
        derived = (math.log(4) + 3 * math.log(4 / 3)) / 4
        assert terms["l_c"] == pytest.approx(math.log(2), rel=1e-5)
        assert terms["l_b"] == pytest.approx(math.log(2), rel=1e-5)
        assert terms["l_f"] == pytest.approx(derived, rel=1e-5)
        assert terms["l_r"] == pytest.approx(derived, rel=1e-5)
        assert terms["total"] == pytest.approx(2 * math.log(2) + 2 * derived, rel=1e-5)

    def test_total_tensor_matches_values(self, halves):
        """The summed tensor agrees with the float breakdown."""
        terms = loss_terms(halves, O_C, O_B)
        assert terms.total.item() == pytest.approx(terms.values()["total"], rel=1e-5)

    def test_single_term_losses_agree(self, halves):
        """L_F and L_R alone equal the terms of the full breakdown."""
        terms = loss_terms(halves, O_C, O_B)
        assert fracture_loss(halves, O_C * O_B).item() == pytest.approx(terms.l_f.item())
        assert restoration_loss(halves, O_C * (1 - O_B)).item() == pytest.approx(terms.l_r.item())

    def test_label_count_mismatch(self, halves):
        """Labels must cover every prediction."""
        with pytest.raises(DimensionError):
            loss_terms(halves, O_C[:3], O_B)
        with pytest.raises(DimensionError):
            fracture_loss(halves, np.zeros(5))

import pytest

import ctcstream as cs


@pytest.fixture
def ab_alphabet():
    return cs.Alphabet(["A", "B"])


@pytest.fixture
def abc_alphabet():
    return cs.Alphabet(["A", "B", "C"])

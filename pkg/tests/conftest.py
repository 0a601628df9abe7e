import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

from modgrad import gallery


@pytest.fixture(scope="session")
def ex21():
    return gallery.example_2_1()


@pytest.fixture(scope="session")
def ex22():
    return gallery.example_2_2(20)


@pytest.fixture(scope="session")
def ex31():
    return gallery.example_3_1()

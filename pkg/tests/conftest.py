import pytest

import clockclosure as cc


@pytest.fixture(scope="session")
def yb_table():
    return cc.load_level_table(cc.bundled_data_dir() / "yb_i.csv")


@pytest.fixture(scope="session")
def ra_table():
    return cc.load_level_table(cc.bundled_data_dir() / "ra_ii.csv")


@pytest.fixture(scope="session")
def ca_table():
    return cc.load_level_table(cc.bundled_data_dir() / "ca_ii.csv")

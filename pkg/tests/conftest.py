import numpy as np
from pytest import fixture

from ews_signatures import ingest_csv

from .datasets import df_scalar, df_zigzag


@fixture
def zigzag():
    return df_zigzag()


@fixture
def zigzag_path():
    return ingest_csv("tests/data/zigzag.csv")


@fixture
def scalar_path():
    return ingest_csv("tests/data/scalar.csv")


@fixture
def rng():
    return np.random.default_rng(2024)

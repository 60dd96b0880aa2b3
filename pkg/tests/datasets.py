import numpy as np
import pandas as pd

from ews_signatures.path_model import time_augment
from ews_signatures.run_checks import random_operator, random_path


# --------------------
# Paths to use as test cases.
# CSVs are small hand-made polylines with header t,x1,...,xd.
# --------------------
def df_zigzag():
    return pd.read_csv("tests/data/zigzag.csv")


def df_scalar():
    return pd.read_csv("tests/data/scalar.csv")


def df_chord():
    return pd.read_csv("tests/data/chord.csv")


# --------------------
# Random instances, seeded so every run sees the same values
# --------------------
def random_polyline(seed, channels=2, segments=10):
    return random_path(np.random.default_rng(seed), channels=channels, segments=segments)


def random_general_operator(seed, dim=3, norm=3.0):
    return random_operator(np.random.default_rng(seed), dim, norm)


def brownian_polyline(seed, steps=200, horizon=1.0):
    rng = np.random.default_rng(seed)
    W = np.vstack(
        [np.zeros((1, 2)), np.cumsum(rng.standard_normal((steps, 2)) * np.sqrt(horizon / steps), axis=0)]
    )
    return time_augment(W, np.linspace(0.0, horizon, steps + 1))

"""Operator pairs on the 3-dimensional time-augmented zigzag path,
one per structural class, to test in batch"""

import numpy as np

from ews_signatures import OperatorPair

from .datasets import random_general_operator


def operator_zero():
    return OperatorPair.zero(3)


def operator_efm():
    return OperatorPair.diagonal([0.5, 0.3, 0.8])


def operator_clock_compatible():
    return OperatorPair(
        np.array([[0.5, 0.0, 0.0], [0.3, 1.0, -2.0], [-0.1, 2.0, 1.0]]),
        structure="clock_compatible",
    )


def operator_general():
    return random_general_operator(7)


def operator_rotation():
    # eigenvalues -0.5 ± 5.2i and 0.8, as in the expressivity target
    return OperatorPair(
        np.array([[0.8, 0.0, 0.0], [0.0, -0.5, 5.2], [0.0, -5.2, -0.5]]),
        structure="clock_compatible",
    )

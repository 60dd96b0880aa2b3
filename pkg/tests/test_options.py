import pandas as pd
import pytest

from ews_signatures import options


def test_set_format():
    options.set_format(precision=3, use_emojis=False)
    assert pd.get_option("ews.precision") == 3
    assert pd.get_option("ews.use_emojis") == False
    options.reset_format()


def test_reset_format():
    options.set_format(precision=5, check_text_tag="h1")
    options.reset_format()
    assert pd.get_option("ews.precision") == 6
    assert pd.get_option("ews.check_text_tag") == "h5"
    assert pd.get_option("ews.use_emojis") == True


def test_reset_format_keeps_compute_options():
    options.set_compute(substeps=8)
    options.reset_format()
    assert pd.get_option("ews.substeps") == 8
    options.set_compute(substeps=32)  # Reset


def test_set_compute():
    options.set_compute(substeps=4, threads=2)
    assert options.get_compute() == {"substeps": 4, "threads": 2, "float_digits": 17}
    options.set_compute(substeps=32, threads=0)  # Reset


def test_get_compute_defaults():
    assert options.get_compute() == {"substeps": 32, "threads": 0, "float_digits": 17}


@pytest.mark.parametrize("substeps", [0, -3, 2.5, True])
def test_substeps_must_be_a_positive_int(substeps):
    with pytest.raises(ValueError):
        options.set_compute(substeps=substeps)
    assert pd.get_option("ews.substeps") == 32


def test_threads_must_be_non_negative():
    with pytest.raises(ValueError):
        options.set_compute(threads=-1)


def test_unknown_option():
    with pytest.raises(AttributeError, match="No EWS Signatures option for ews.colour"):
        options.set_format(colour="red")


def test_enable_and_disable_output():
    options.disable_output()
    assert pd.get_option("ews.verbose") == False
    options.enable_output()
    assert pd.get_option("ews.verbose") == True


def test_describe_options(capsys):
    options.describe_options()
    out = capsys.readouterr().out
    assert "ews.substeps" in out
    assert "ews.float_digits" in out


def test_register_option_valid():
    options._register_option("test_option", 10, "", lambda x: isinstance(x, int))
    assert pd.get_option("ews.test_option") == 10


def test_register_option_existing():
    options._set_option("precision", 17)
    options._register_option("precision", 10, "", lambda x: isinstance(x, int))
    assert pd.get_option("ews.precision") == 10
    options.reset_format()

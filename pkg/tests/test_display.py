import pandas as pd
import pytest

import ews_signatures as ews
from ews_signatures.display import (
    _display_check,
    _display_line,
    _display_outcome,
    _filter_emojis,
    _format_background_color,
    _lead_in,
    _warning,
)


def test_filter_emojis():
    original = "Scan 🧪"
    no_emojis = "Scan"
    ews.set_format(use_emojis=True)
    assert _filter_emojis(original) == original
    ews.set_format(use_emojis=False)
    assert _filter_emojis(original) == no_emojis
    ews.set_format(use_emojis=True)  # Reset for later tests


@pytest.mark.parametrize(
    "color, expected",
    [
        ("red", "on_red"),
        ("on_green", "on_green"),
        (None, None),
    ],
)
def test_format_background_color(color, expected):
    assert _format_background_color(color) == expected


@pytest.mark.parametrize(
    "lead_in, foreground, background, expected",
    [
        (
            "Hello",
            "red",
            "green",
            "<span style='color:red; background-color:green'>Hello</span>:",
        ),
        (None, "red", "green", ""),
    ],
)
def test_lead_in(lead_in, foreground, background, expected):
    assert _lead_in(lead_in, foreground, background) == expected


def test_display_line(capsys):
    _display_line("Hello")
    assert capsys.readouterr().out == "\nHello\n"


def test_display_line_with_lead_in(capsys):
    _display_line("Hello", lead_in="Greeting")
    assert capsys.readouterr().out == "\nGreeting: Hello\n"


def test_warning(capsys):
    _warning("Test warning")
    assert capsys.readouterr().out == "\n📐 EWS warning: Test warning\n"


@pytest.mark.parametrize("passed, mark, default", [(True, "✔️", "passed"), (False, "ㄨ", "failed")])
def test_display_outcome(passed, mark, default, capsys):
    _display_outcome(passed, "chen")
    out = capsys.readouterr().out
    assert mark in out
    assert out.rstrip().endswith(f"chen : {default}")


def test_display_check_table(capsys):
    _display_check(pd.Series([1.5, 2.0], index=["()", "(1)"]), "EWS")
    out = capsys.readouterr().out
    assert out.startswith("\nEWS\n")
    assert "    ()" in out


def test_display_check_scalar(capsys):
    _display_check(0.25, "deviation")
    assert capsys.readouterr().out == "\ndeviation: 0.25\n"


def test_quiet_output(capsys):
    ews.disable_output()
    _display_line("Hello")
    _warning("Test warning")
    _display_check(pd.DataFrame({"a": [1]}), "Table")
    assert capsys.readouterr().out == ""
    ews.enable_output()  # Reset

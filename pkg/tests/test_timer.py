import pytest

from ews_signatures.timer import print_time_elapsed, start_timer, time_elapsed


def test_start_timer_returns_time():
    start_time = start_timer(verbose=True)
    assert isinstance(start_time, float)


def test_start_timer_verbose(capsys):
    start_timer(verbose=True)
    assert "Started timer at" in capsys.readouterr().out
    start_timer()
    assert capsys.readouterr().out == ""


def test_time_elapsed():
    start_time = start_timer()
    assert time_elapsed(start_time) >= 0.0


@pytest.mark.parametrize(
    "units_outputcontains",
    (
        ("auto", "milliseconds"),
        ("milliseconds", "milliseconds"),
        ("ms", "ms"),
        ("seconds", "seconds"),
        ("s", "s"),
        ("minutes", "minutes"),
        ("m", "m"),
        ("hours", "hours"),
        ("h", "h"),
    ),
)
def test_print_time_elapsed_valid_units(units_outputcontains, capsys):
    """Runtimes vary, so only the units are checked"""
    units = units_outputcontains[0]
    output_contains = units_outputcontains[1]
    print_time_elapsed(start_time=start_timer(), units=units)
    assert output_contains in capsys.readouterr().out


def test_print_time_elapsed_lead_in(capsys):
    print_time_elapsed(start_timer(), lead_in="Scan")
    assert capsys.readouterr().out.startswith("\nScan: ")


def test_print_time_elapsed_invalid_units():
    with pytest.raises(ValueError):
        print_time_elapsed(1000.0, units="parsecs")

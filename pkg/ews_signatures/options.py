"""Utilities for configuring EWS Signatures options.

This module provides functions for setting and managing global options for
EWS Signatures: the default sub-discretisation, the worker cap, numeric output
precision, and how results are displayed.
"""

from typing import Any, Callable, Dict, List, Union

import pandas as pd
import pandas._config.config as cf


# -----------------------
# Helpers
# -----------------------
def _set_option(option: str, value: Any) -> None:
    """Updates the value of an EWS Signatures option in the global Pandas option registry.

    Args:
        option: The name of the option to set.
        value: The value to set for the option.

    Returns:
        None

    Raises:
        AttributeError: If `option` is not a valid EWS Signatures option.
    """
    ews_option = option if option.startswith("ews.") else "ews." + option
    if ews_option in pd._config.config._select_options("ews"):
        pd.set_option(ews_option, value)
    else:
        raise AttributeError(
            f"No EWS Signatures option for {ews_option}. Available options: {pd._config.config._select_options('ews')}"
        )


def _register_option(
    name: str, default_value: Any, description: str, validator: Callable
) -> None:
    """Registers an EWS Signatures option in the global Pandas option registry.

    If the option has already been registered, reset its value.

    Args:
        name: The name of the option to register.
        default_value: The default value for the option.
        description: A description of the option.
        validator: A function to validate the option value.

    Returns:
        None

    Note:
        For more details on the arguments, see the documentation for
        pandas._config.config.register_option()
    """
    key_name = name if "ews." not in name else name.replace("ews.", "")

    # Option already registered?
    try:
        pd.get_option(f"ews.{key_name}")
        pd.set_option(f"ews.{key_name}", default_value)  # Reset its value
    # Option not registered yet?
    except pd.errors.OptionError:
        with cf.config_prefix("ews"):
            cf.register_option(key_name, default_value, description, validator)


def _is_positive_int(value: Any) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"Expected a positive integer, received {value!r}")


# -----------------------
# Formatting
# -----------------------


def set_format(**kwargs: Any) -> None:
    """Configures selected formatting options for EWS Signatures. Run ews_signatures.describe_options() to see a list of available options.

    For example, set_format(check_text_tag="h1", use_emojis=False)
    will display text results as H1 headings and remove all emojis.

    Args:
        **kwargs: Pairs of setting name and its new value.

    Returns:
        None
    """
    for arg, value in kwargs.items():
        _set_option(arg, value)


def reset_format() -> None:
    """Globally restores all formatting options to their default "factory" settings.

    Returns:
        None
    """
    _initialize_format_options()


def _initialize_format_options(options: Union[List[str], None] = None) -> None:
    """Initializes or resets formatting options.

    Args:
        options: A list of option names to initialize or reset.
            If None, all formatting options will be initialized or reset.

    Returns:
        None
    """
    option_keys = [option.replace("ews.", "") for option in options] if options else []
    if "precision" in option_keys or options is None:
        _register_option(
            name="precision",
            default_value=6,
            description="""
    : int
    Places after the decimal point when tables are rendered in IPython/Jupyter.
    Files written by EWS Signatures always use ``ews.float_digits`` significant digits.
    """,
            validator=cf.is_nonnegative_int,
        )
    if "table_row_hover_style" in option_keys or options is None:
        _register_option(
            name="table_row_hover_style",
            default_value={
                "selector": "tr:hover",
                "props": [("background-color", "#2986cc")],
            },
            description="""
    : dict
    The background color to show when hovering over a table row in IPython/Jupyter.
    """,
            validator=cf.is_instance_factory(dict),
        )
    if "use_emojis" in option_keys or options is None:
        _register_option(
            name="use_emojis",
            default_value=True,
            description="""
    : bool
    Whether displayed text keeps emojis.
    """,
            validator=cf.is_instance_factory(bool),
        )
    if "indent_table_terminal" in option_keys or options is None:
        _register_option(
            name="indent_table_terminal",
            default_value=4,
            description="""
    : int
    Number of spaces to indent tables in terminal display.
    """,
            validator=cf.is_instance_factory(int),
        )
    if "indent_table_plot_ipython" in option_keys or options is None:
        _register_option(
            name="indent_table_plot_ipython",
            default_value=30,
            description="""
    : int
    Number of pixels to indent tables in IPython/Jupyter display.
    """,
            validator=cf.is_instance_factory(int),
        )
    if "check_text_tag" in option_keys or options is None:
        _register_option(
            name="check_text_tag",
            default_value="h5",
            description="""
    : str
    A single HTML tag (h1, h5, p, etc) used when displaying lines of text.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "table_title_tag" in option_keys or options is None:
        _register_option(
            name="table_title_tag",
            default_value="h5",
            description="""
    : str
    A single HTML tag (h1, h5, p, etc) used for the titles of tables.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "fail_message_fg_color" in option_keys or options is None:
        _register_option(
            name="fail_message_fg_color",
            default_value="white",
            description="""
    : str
    The foreground color of the lead-in text when a self-test check fails.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "fail_message_bg_color" in option_keys or options is None:
        _register_option(
            name="fail_message_bg_color",
            default_value="red",
            description="""
    : str
    The background color of the lead-in text when a self-test check fails.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "pass_message_fg_color" in option_keys or options is None:
        _register_option(
            name="pass_message_fg_color",
            default_value="black",
            description="""
    : str
    The foreground color of the lead-in text when a self-test check passes.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "pass_message_bg_color" in option_keys or options is None:
        _register_option(
            name="pass_message_bg_color",
            default_value="green",
            description="""
    : str
    The background color of the lead-in text when a self-test check passes.
    """,
            validator=cf.is_instance_factory(str),
        )


# -----------------------
# General options
# -----------------------
def describe_options() -> None:
    """Prints all global options for EWS Signatures, their default values, and current values.

    Returns:
        None
    """
    for option in pd._config.config._select_options("ews"):
        print()
        pd.describe_option(option)


def set_compute(
    substeps: Union[int, None] = None, threads: Union[int, None] = None
) -> None:
    """Configures the computational defaults globally.

    Args:
        substeps: Default number of Van Loan sub-steps M per path segment.
        threads: Maximum number of worker threads. 0 means all available cores.

    Returns:
        None
    """
    if substeps is not None:
        _set_option("substeps", substeps)
    if threads is not None:
        _set_option("threads", threads)


def get_compute() -> Dict[str, int]:
    """Returns the current computational defaults.

    Returns:
        A dictionary with the current `substeps`, `threads` and `float_digits`.
    """
    return {
        "substeps": pd.get_option("ews.substeps"),
        "threads": pd.get_option("ews.threads"),
        "float_digits": pd.get_option("ews.float_digits"),
    }


def enable_output() -> None:
    """Turns on displayed output (progress lines, self-test results, tables).

    Returns:
        None
    """
    _set_option("verbose", True)


def disable_output() -> None:
    """Turns off displayed output. Computations and files are unaffected.

    Returns:
        None
    """
    _set_option("verbose", False)


def _initialize_options() -> None:
    """Initializes (or resets) all EWS Signatures options to their default values.

    Returns:
        None

    Note:
        Separate from _initialize_format_options() so the user can reset formatting without
        touching the computational defaults.
    """
    _register_option(
        name="substeps",
        default_value=32,
        description="""
    : int
    Default sub-discretisation M of every linear segment when the re-weighted path is
    sampled for the signature computation.
    """,
        validator=_is_positive_int,
    )
    _register_option(
        name="threads",
        default_value=0,
        description="""
    : int
    Maximum number of worker threads used for per-trajectory work. 0 means all available
    cores. Results do not depend on this value.
    """,
        validator=cf.is_nonnegative_int,
    )
    _register_option(
        name="float_digits",
        default_value=17,
        description="""
    : int
    Significant digits used for every number written to JSON or CSV.
    """,
        validator=_is_positive_int,
    )
    _register_option(
        name="verbose",
        default_value=True,
        description="""
    : bool
    Whether progress lines, tables and self-test results are displayed.
    """,
        validator=cf.is_instance_factory(bool),
    )
    _initialize_format_options()

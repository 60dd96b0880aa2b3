from nox_poetry import Session, session


@session(python=["3.9", "3.10", "3.11", "3.12"])
def tests(session: Session) -> None:
    """Run the test suite, skipping the desk-scale experiments."""

    session.install(".")  # Install ews-signatures
    session.install("pytest", "pytest-cases")  # Install test packages

    session.run("pytest", "-m", "not slow")


@session(python="3.11")
def selftest(session: Session) -> None:
    """Run the oracle suites through the command line."""

    session.install(".")
    session.run("ews", "selftest")

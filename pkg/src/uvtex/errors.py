"""Error taxonomy shared across the package.

Data-shaped failures (bad files, bad shapes, bad parameters) raise the
module-local ValueError subclasses; numeric failures during optimization
or sampling raise NumericError so the CLI can map them to exit code 4.
"""


class NumericError(RuntimeError):
    """Non-finite values encountered in an optimization or sampling loop."""

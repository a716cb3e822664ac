"""Part-based explanations for image classifiers."""

from ._holmes import *  # noqa: F401,F403
from ._holmes import (
    BackendError,
    ConvStack,
    HolmesError,
    ParseError,
    PipelineError,
    ResolutionError,
    ValidationError,
    run_cli,
)


def main(argv=None):
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code

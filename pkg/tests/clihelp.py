"""Run the CLI in-process and capture what it prints."""
import contextlib
import io
import sys

from qdetect.cli import main


def run(*argv, stdin: str | None = None):
    out, err = io.StringIO(), io.StringIO()
    old_stdin = sys.stdin
    if stdin is not None:
        sys.stdin = io.StringIO(stdin)
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main([str(a) for a in argv])
    finally:
        sys.stdin = old_stdin
    return code, out.getvalue(), err.getvalue()


TINY = [
    "--set", "d_model=8", "--set", "n_heads=2", "--set", "n_layers=1", "--set", "d_ff=16",
    "--set", "max_len=16", "--set", "head_sizes=[8,4]", "--set", "batch_size=16",
]

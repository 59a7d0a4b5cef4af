"""Command-line front end."""

from cli.commands import run
from cli.theorem_check import TheoremCheckConfig, theorem_check

__all__ = ["run", "TheoremCheckConfig", "theorem_check"]

"""`python3 -m vpkl` runs the command line interface."""

from vpkl.cli import main

main(prog_name="vpkl")

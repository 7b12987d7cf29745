"""Command-line front end for ps-solve."""

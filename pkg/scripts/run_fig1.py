#!/usr/bin/env python3
"""Sweep the indicator-profile endpoint b and locate the zero of the second
coupling coefficient (L=1, c=50, a=0, beta0=1).

Writes fig1.csv (b, gamma_2) and prints the sign-change location.
"""

import sys

from waveheat.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["fig1", "--points", "400", "--out", "fig1.csv"]
                          + sys.argv[1:]))

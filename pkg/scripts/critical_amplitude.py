"""Critical laser-pulse amplitude from the pointwise criteria, with and without pressure.

    python scripts/critical_amplitude.py
"""
import math

import numpy as np

from coldplasma.characteristics import delta
from coldplasma.diagnostics import critical_amplitude, text_table
from coldplasma.state import make_initial_data


def main():
    x = np.linspace(-10, 10, 400_001)
    rows = []
    for sign in (1.0, -1.0):
        for alpha, gamma in [(0.0, 2.0), (1.0, 2.0), (1.0, 3.0), (5.0, 2.0)]:
            a = critical_amplitude(alpha, gamma, sign=sign, x=x)
            d = make_initial_data("laser_pulse", a=a, sign=sign)
            xs = x[np.argmax(delta(d.v0(x), d.e0(x)))]
            rows.append((sign, alpha, gamma, a, abs(xs)))
    print(text_table(rows, ["sign", "alpha", "gamma", "a_crit", "|argmax x|"]))
    print(f"closed forms: exp(1.5)/8 = {math.exp(1.5) / 8:.6f}, sqrt(1.5) = {math.sqrt(1.5):.6f}, 1/4 for sign -1")


if __name__ == "__main__":
    main()

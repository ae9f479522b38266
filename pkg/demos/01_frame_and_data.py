"""Dyadic frame, the modulated data family and its critical norms.

Builds the frequency partition, checks that it sums to one, assembles the
data ``u0`` for a few values of ``N`` and prints its Lebesgue, Besov and
modulation norms.  The Besov norm normalised by ``R delta^{1/d}`` stays in a
narrow corridor while ``R = 1/log N`` drives the norm itself to zero.

Run:  python demos/01_frame_and_data.py
"""

import numpy as np

from nsinflation.construction import DataFamilyParams, build_initial_data, initial_besov_check
from nsinflation.field_rep import GridSpec
from nsinflation.lp_frame import build_lp_frame
from nsinflation.norms import lp_norm, modulation_norm


def main():
    frame = build_lp_frame(-10, 10, 2)
    r = 2.0 ** np.random.default_rng(0).uniform(-10, 10, 10_000)
    print(f"partition of unity: max deviation {np.max(np.abs(frame.partition_sum(r) - 1)):.1e}")

    delta, d = 0.25, 2
    print(f"\ndata family, d={d}, delta={delta}")
    print(f"{'N':>3} {'atoms':>5} {'R':>8} {'L^d':>10} {'B^0_{d,1}':>10} {'ratio':>8} {'M_3,1':>10}")
    for N in range(3, 8):
        p = DataFamilyParams(N, delta, d)
        u0 = build_initial_data(p, GridSpec(tail_tol=1e-4))
        besov, ratio = initial_besov_check(p, GridSpec(tail_tol=1e-4))
        print(f"{N:>3} {len(u0.atoms):>5} {p.R:8.4f} {lp_norm(u0, d):10.4g} {besov:10.4g} "
              f"{ratio:8.4f} {modulation_norm(u0).total:10.4g}")


if __name__ == "__main__":
    main()

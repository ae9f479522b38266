"""The quadratic temperature term produced by the viscous dissipation.

For each ``N`` the data is evolved by the Lame flow, its dissipation is fed
through the heat Duhamel integral, and the low-frequency part of the result
is compared with the cross terms between different scales.  The diagonal
(same-scale) part dominates, which is what makes the temperature inflate.

Run:  python demos/02_model_temperature.py
"""

import warnings

from nsinflation.construction import DataFamilyParams, cross_term_report, theta2_lower_report


def main():
    warnings.simplefilter("ignore", RuntimeWarning)
    d, delta = 2, 0.5
    print(f"model temperature term, d={d}, delta={delta} (outside the certified regime)")
    print(f"{'N':>3} {'main F':>11} {'F/(eps0 delta R^2)':>19} {'low-freq':>11} "
          f"{'cross total':>12} {'diag/cross':>11}")
    for N in range(3, 6):
        p = DataFamilyParams(N, delta, d)
        cross = cross_term_report(p)
        rep = theta2_lower_report(p, cross=cross)
        print(f"{N:>3} {rep.main_F:11.4e} {rep.ratio_F:19.5f} {rep.lowfreq:11.4e} "
              f"{cross.total():12.4e} {rep.dominance:11.3g}")


if __name__ == "__main__":
    main()

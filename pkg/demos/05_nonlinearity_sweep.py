"""The near-Gaussianity sweep: filter error tracks the measured defect.

Runs the default scenario family from the near-linear member (delta = 0)
to a strongly nonlinear one and tabulates the measured projection defect
eps against the worst-case errors of the mean-field EnKF and the Gaussian
projected filter.
"""

from filtermaps.verify import measure_sweep


def main():
    rows = measure_sweep()
    print(f"{'delta':>6} {'eps':>10} {'err_enkf':>10} {'err_gpf':>10} {'err/eps':>8}")
    for row in rows:
        ratio = max(row["err_enkf"], row["err_gpf"]) / row["eps_measured"]
        print(f"{row['delta']:>6.2f} {row['eps_measured']:>10.4f} "
              f"{row['err_enkf']:>10.4f} {row['err_gpf']:>10.4f} {ratio:>8.3f}")
    print("\nboth errors shrink toward zero with eps and grow monotonically")
    print("with it; the bounded err/eps column is the empirical stand-in for")
    print("the non-constructive constant in the error estimates.")


if __name__ == "__main__":
    main()

"""Grid densities and the weighted total-variation metric.

Builds a bimodal density on a 1-D grid, compares its Gaussian projection,
and shows that moment differences between two densities are controlled by
their weighted-TV distance.
"""

import numpy as np

from filtermaps.density import (
    dg_distance,
    from_gaussian,
    gaussian_projection,
    moments,
    normalized,
    tv_distance,
)


def bimodal(x, split):
    vals = np.exp(-0.5 * (x - split) ** 2 / 0.3) + np.exp(-0.5 * (x + split) ** 2 / 0.3)
    return vals


def main():
    x = np.linspace(-12, 12, 3072)
    mu = normalized([-12], [12], bimodal(x, 1.5), expect_unit_mass=False, context="demo")
    mom = moments(mu)
    print(f"bimodal density: mean {mom.mean[0]:+.4f}, variance {mom.cov[0, 0]:.4f}")

    proj = gaussian_projection(mu)
    grid_proj = from_gaussian(proj, box_lo=[-12], box_hi=[12], shape=(3072,))
    print(f"Gaussian projection keeps the moments: mean {proj.mean[0]:+.4f}, "
          f"var {proj.cov[0, 0]:.4f}")
    print(f"  plain TV to the projection   {tv_distance(mu, grid_proj):.4f}")
    print(f"  weighted TV (d_g) is larger  {dg_distance(mu, grid_proj):.4f}")

    print("\nmoment differences are controlled by d_g:")
    print(f"{'split':>6} {'d_g':>10} {'|mean diff|':>12} {'bound d_g/2':>12}")
    for split in (0.5, 1.0, 1.5, 2.0):
        nu = normalized([-12], [12], bimodal(x, split) * (x < 0.2), expect_unit_mass=False,
                        context="demo")
        dg = dg_distance(mu, nu)
        dm = abs(moments(mu).mean[0] - moments(nu).mean[0])
        print(f"{split:>6.1f} {dg:>10.4f} {dm:>12.4f} {dg / 2:>12.4f}")


if __name__ == "__main__":
    main()

"""Closed-form Gaussian tools: conditioning, KL divergence, distance bounds.

Shows the exact block conditioning of a joint Gaussian against a brute-force
quadrature of the same slice, then the closed-form weighted-TV bound and the
generalized Pinsker inequality against quadrature ground truth.
"""

import numpy as np

from filtermaps.density import dg_distance, from_gaussian
from filtermaps.gaussian import (
    BlockStructure,
    GaussianMeasure,
    condition,
    dg_upper_bound,
    g2_moment,
    kl_divergence,
)


def main():
    joint = GaussianMeasure([0.4, -0.2], [[1.5, 0.7], [0.7, 0.9]])
    blocks = BlockStructure(1, 1)
    y_dagger = np.array([0.5])
    post = condition(joint, blocks, y_dagger)
    print("conditioning a 2x2 joint on y = 0.5")
    print(f"  closed form: mean {post.mean[0]:+.6f}, var {post.cov[0, 0]:.6f}")

    # brute-force check: slice the joint density on a fine axis and integrate
    u = np.linspace(-6, 6, 20001)
    pts = np.column_stack([u, np.full_like(u, y_dagger[0])])
    diff = pts - joint.mean
    quad = np.einsum("ni,ij,nj->n", diff, np.linalg.inv(joint.cov), diff)
    slc = np.exp(-0.5 * quad)
    slc /= np.trapezoid(slc, u)
    mean = np.trapezoid(u * slc, u)
    var = np.trapezoid((u - mean) ** 2 * slc, u)
    print(f"  quadrature : mean {mean:+.6f}, var {var:.6f}")

    g1 = GaussianMeasure([0.0], [[1.0]])
    g2 = GaussianMeasure([0.8], [[1.6]])
    kl12, kl21 = kl_divergence(g1, g2), kl_divergence(g2, g1)
    print("\nKL divergence is asymmetric:")
    print(f"  KL(g1 || g2) = {kl12:.6f}   KL(g2 || g1) = {kl21:.6f}")

    grid1 = from_gaussian(g1, box_lo=[-9], box_hi=[9], shape=(4096,))
    grid2 = from_gaussian(g2, box_lo=[-9], box_hi=[9], shape=(4096,))
    dg = dg_distance(grid1, grid2)
    bound = dg_upper_bound(g1, g2)
    print("\nweighted total variation d_g between them:")
    print(f"  quadrature value {dg:.6f} <= closed-form bound {bound:.6f}")

    pinsker = 2.0 * (g2_moment(g1) + g2_moment(g2)) * kl12
    print(f"  d_g^2 = {dg**2:.6f} <= 2 (mu1[g^2] + mu2[g^2]) KL = {pinsker:.6f}")


if __name__ == "__main__":
    main()

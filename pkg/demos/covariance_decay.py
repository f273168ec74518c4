"""Decay of the covariance between distant spatial windows.

Two windows of the averaged field decorrelate super-polynomially as the
separation grows; for white noise at t=1 the true covariance falls below
any realistic Monte Carlo noise floor already around separation 6.  The
probe therefore averages over many shifted copies of the window pair on a
wide grid and fits a weighted slope on the log scale.  For constant sigma
the exact covariance is also available from quadrature, shown alongside.
"""

from ldplab import (EquationSpec, GridConfig, WHITE, covariance_decay_probe,
                    covariance_oracle, sigma_const)


def main():
    t, L, R = 1.0, 4.0, 4.0
    thetas = [2.0, 4.0, 6.0]
    eq = EquationSpec(kind="heat", sigma=sigma_const(1.0), c_h=0.0)
    grid = GridConfig(dx=0.4, dt=0.125, T=1.0, R_max=408.0, pad=6.4)

    print("exact covariance (quadrature, constant sigma):")
    for th in thetas + [8.0]:
        print(f"  theta={th:4.1f}  cov={covariance_oracle(eq, WHITE, t, L, R, th):.3e}")

    print("\nMonte Carlo probe (16 shifted copies, 40000 paths):")
    res = covariance_decay_probe(eq, WHITE, grid, t, L, R, thetas,
                                 n_paths=40_000, seed=11, n_shifts=16,
                                 shift_stride=26.0)
    for r in res["rows"]:
        print(f"  theta={r['theta']:4.1f}  cov={r['cov']:+.3e}"
              f"  se={r['se']:.3e}")
    print(f"fitted slope vs theta^{res['fit_exponent']:.0f}:"
          f" {res['fit_slope']:+.4f}  monotone={res['monotone']}"
          f"  inconclusive={res['inconclusive']}  passed={res['passed']}")


if __name__ == "__main__":
    main()

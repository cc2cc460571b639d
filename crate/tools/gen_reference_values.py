#!/usr/bin/env python3
"""Generate frozen reference values for the core crate's oracle tests.

Solves the subordination system for free convolutions of Bernoulli(y_t)
measures by plain fixed-point iteration in high-precision arithmetic:

    omega_t <- z + sum_{s != t} (F_s(omega_s) - omega_s)

with continuation in Im z and warm starts. This deliberately shares no
algorithm with the library's solvers (scalar Newton on the
m-parameterization, k-dimensional Newton on the defect system), so the
frozen values are an independent check. Run from the repo root:

    python3 tools/gen_reference_values.py
"""

import mpmath as mp


def f_recip(y, w):
    return w - y + y * (1 - y) / (1 - y - w)


def m_bernoulli(y, w):
    return y / (1 - w) - (1 - y) / w


def picard(ys, z, omega, tol, max_iter=600000):
    k = len(ys)
    for _ in range(max_iter):
        h = [f_recip(ys[t], omega[t]) - omega[t] for t in range(k)]
        total = sum(h)
        new = [z + total - h[t] for t in range(k)]
        res = max(abs(new[t] - omega[t]) for t in range(k))
        omega = new
        if res < tol:
            return omega
    raise RuntimeError(f"no convergence at z={z}, res={res}")


def solve(ys, z, omega=None, steps=12, tol=None):
    """Continuation from large Im z down to the query point."""
    z = mp.mpc(z)
    if tol is None:
        tol = mp.mpf(10) ** (-(mp.mp.dps - 12))
    if omega is None:
        im_start = 10 * (1 + sum(ys))
        omega = [mp.mpc(z.real, im_start)] * len(ys)
        for j in range(1, steps + 1):
            frac = mp.mpf(j) / steps
            im = im_start * (max(z.imag, mp.mpf("1e-8")) / im_start) ** frac
            zj = mp.mpc(z.real, max(im, z.imag))
            omega = picard(ys, zj, omega, tol=mp.mpf(10) ** (-20))
    omega = picard(ys, z, omega, tol=tol)
    m = m_bernoulli(ys[0], omega[0])
    k = len(ys)
    fvals = [f_recip(ys[t], omega[t]) for t in range(k)]
    res = max(abs((k - 1) * fvals[t] - sum(omega) + z) for t in range(k))
    mres = max(abs(m - m_bernoulli(ys[t], omega[t])) for t in range(k))
    assert res < tol * 100, (z, res)
    assert mres < tol * 100, (z, mres)
    return m, omega


def show(label, value):
    print(f"{label} = {mp.nstr(value, 22)}")


def main():
    mp.mp.dps = 50

    print("# k=2, y=(0.2,0.3), z=2+0.1i")
    m, omega = solve([mp.mpf("0.2"), mp.mpf("0.3")], mp.mpc(2, "0.1"))
    show("m", m)
    show("omega1", omega[0])
    show("omega2", omega[1])

    print("\n# k=2, y=(0.2,0.3), z=1+1i")
    m, omega = solve([mp.mpf("0.2"), mp.mpf("0.3")], mp.mpc(1, 1))
    show("m", m)
    show("omega1", omega[0])
    show("omega2", omega[1])

    ys3 = [mp.mpf("0.2"), mp.mpf("0.3"), mp.mpf("0.1")]
    for z in [mp.mpc("0.5", "0.5"), mp.mpc("1.5", "0.1"), mp.mpc("-0.4", "0.8"),
              mp.mpc("2.5", "0.05"), mp.mpc(0, 1), mp.mpc("0.9", "0.01")]:
        print(f"\n# k=3, y=(0.2,0.3,0.1), z={z}")
        m, omega = solve(ys3, z)
        show("m", m)
        for t, w in enumerate(omega):
            show(f"omega{t + 1}", w)

    print("\n# k=6, y=(0.05,0.1,0.15,0.2,0.12,0.08), z=1.1+0.2i")
    ys6 = [mp.mpf(v) for v in ("0.05", "0.1", "0.15", "0.2", "0.12", "0.08")]
    m, omega = solve(ys6, mp.mpc("1.1", "0.2"))
    show("m", m)
    for t, w in enumerate(omega):
        show(f"omega{t + 1}", w)

    print("\n# density values Im m(x+i*1e-3)/pi for y=(0.2,0.3,0.1)")
    for x in ["0.3", "0.6", "0.9", "1.2", "1.5"]:
        m, _ = solve(ys3, mp.mpc(x, "1e-3"))
        show(f"rho({x})", m.imag / mp.pi)

    print("\n# support scan for y=(0.2,0.3,0.1): atom-corrected rho at Im z = 2e-3, step 0.01")
    # The distribution has a single atom: mass 1 - sum(y) = 0.4 at x = 0.
    # Subtract its exact Stieltjes term -0.4/z so the threshold sees only
    # the absolutely continuous part.
    mp.mp.dps = 25
    scan_eps = mp.mpf("2e-3")
    atom_mass = 1 - sum(ys3)
    omega = None
    edges = []
    prev_inside = False
    x = mp.mpf("0.02")
    mass, mean, second = mp.mpf(0), mp.mpf(0), mp.mpf(0)
    step = mp.mpf("0.01")
    while x < mp.mpf("3.0"):
        z = mp.mpc(x, scan_eps)
        if omega is None:
            _, omega = solve(ys3, z)
        else:
            omega = picard(ys3, z, omega, tol=mp.mpf("1e-15"))
        m_ac = m_bernoulli(ys3[0], omega[0]) + atom_mass / z
        rho = m_ac.imag / mp.pi
        mass += rho * step
        mean += x * rho * step
        second += x * x * rho * step
        inside = rho > mp.mpf("0.05")
        if inside != prev_inside:
            edges.append((x - step, x))
        prev_inside = inside
        x += step
    for lo, hi in edges:
        print(f"edge bracket: ({mp.nstr(lo, 8)}, {mp.nstr(hi, 8)})")
    print(f"scan ac mass ~ {mp.nstr(mass, 8)} (expect ~0.6)")
    print(f"scan m1 ~ {mp.nstr(mean, 8)} (expect ~0.6)")
    print(f"scan m2 ~ {mp.nstr(second, 8)} (expect ~0.82)")


if __name__ == "__main__":
    main()

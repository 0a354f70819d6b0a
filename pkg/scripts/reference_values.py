"""Where on the chi(lambda) curve do given chi values sit?

For each target value, solve chi(lambda) = target for the two branches
around the minimizer -sqrt(a) and list the nearest exact eigenvalues of
the graph. Useful to see which lambda a quoted threshold corresponds to.

    python3 scripts/reference_values.py dumbbell 10,5,1 4.96489
"""

import argparse
import math

import numpy as np
from scipy.optimize import brentq

from graphtaxis.spectrum import secular_spectrum
from graphtaxis.stability import ModelParams, chi_of_lambda, chi_star, critical_lambda


def branches(target, p):
    lam_c = critical_lambda(p)
    if target < chi_of_lambda(lam_c, p):
        return []
    f = lambda lam: chi_of_lambda(lam, p) - target  # noqa: E731
    right = brentq(f, lam_c, -1e-12) if f(-1e-12) > 0 else None
    lo = 2 * lam_c
    while f(lo) < 0:
        lo *= 2
    left = brentq(f, lo, lam_c)
    return [x for x in (left, right) if x is not None]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("family")
    ap.add_argument("lengths", type=lambda s: [float(x) for x in s.split(",")])
    ap.add_argument("targets", type=float, nargs="+")
    ap.add_argument("--a", type=float, default=1.5)
    ap.add_argument("--b", type=float, default=1.5)
    args = ap.parse_args(argv)
    p = ModelParams(args.a, args.b)
    spec = secular_spectrum(args.family, args.lengths, 3.0)
    value, index = chi_star(spec, p)
    print(f"exact chi* = {value:.10g} at eigenvalue {index} (lambda = {spec.eigenvalues[index]:.8g})")
    lam = spec.eigenvalues
    for target in args.targets:
        for x in branches(target, p):
            j = int(np.argmin(np.abs(lam - x)))
            print(f"chi = {target}: lambda = {x:.6f}; nearest eigenvalue {j}: {lam[j]:.6f} "
                  f"(chi there {chi_of_lambda(lam[j], p) if lam[j] < 0 else math.inf:.6f})")


if __name__ == "__main__":
    main()

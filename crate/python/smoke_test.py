"""Smoke test for the pyblaschke extension module."""

import json
import math

import pyblaschke as pb


def main():
    a = pb.DiskPoint(0.3, 0.4)
    b = pb.DiskPoint(-0.2, 0.1)
    assert abs(a.beta(b) - math.atanh(a.rho(b))) < 1e-12
    c = pb.DiskPoint(0.5, -0.1)
    assert abs(a.mobius(c).rho(b.mobius(c)) - a.rho(b)) < 1e-12
    assert abs(abs(a) - 0.5) < 1e-15

    zeros = pb.generate("cluster(30, 0.5, 1.0)", seed=7)
    assert len(zeros) == 30
    assert zeros == pb.generate("cluster(30, 0.5, 1.0)", seed=7)
    bp = pb.BlaschkeProduct(zeros)
    assert bp.degree == 30
    prod = math.prod(math.hypot(x, y) for x, y in zeros)
    assert abs(bp.modulus(0.0, 0.0) - prod) <= 1e-12 * prod
    assert abs(math.exp(bp.log_modulus(0.1, 0.2)) - bp.modulus(0.1, 0.2)) < 1e-12
    re, im = bp(0.1, 0.2)
    assert abs(math.hypot(re, im) - bp.modulus(0.1, 0.2)) < 1e-12

    build = json.loads(bp.contour(k=0.5, d_max=10))
    assert "contour" in build and "delta" in build

    rec = json.loads(pb.run("radial(10, 0.5)", walks=1000))
    assert rec["failure"] is None
    assert rec["verification"]["sup_passes"]
    assert rec["digest"] == json.loads(pb.run("radial(10, 0.5)", walks=1000))["digest"]

    try:
        pb.DiskPoint(1.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("boundary point accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the Python bindings.

Build first, e.g.  maturin develop -m crates/py/Cargo.toml
"""

import json
import math

import isac_planner_py as ip


def tetrahedron(d):
    s = d / math.sqrt(3.0)
    return ip.Deployment([[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]])


def main():
    unit = ip.SensingParams(beta=2.0, kappa_s=1.0)
    for d in (10.0, 100.0):
        got = ip.crlb_point([0.0, 0.0, 0.0], tetrahedron(d), unit)
        want = 9.0 / 32.0 * d**4
        assert abs(got / want - 1.0) < 1e-9, (got, want)

    f = ip.fisher_matrix([0.0, 0.0, 0.0], tetrahedron(10.0), unit)
    assert all(abs(f[r][c] - f[c][r]) < 1e-15 for r in range(3) for c in range(3))

    single = ip.Deployment([[10.0, 0.0, 5.0]])
    assert math.isinf(ip.crlb_point([0.0, 0.0, 0.0], single, unit))

    region = json.dumps({"kind": "segment", "anchor_m": [0, 0, 0], "length_m": 400})
    points, weights = ip.sample_region(region, [9])
    assert len(points) == 9 and abs(sum(weights) - 1.0) < 1e-12

    dep = ip.Deployment([[50, 20, 30], [150, -20, 40], [250, 25, 35], [350, -15, 30]])
    base = ip.area_crlb(points, dep, unit)
    scaled = ip.area_crlb([[3 * c for c in p] for p in points],
                          ip.Deployment([[3 * c for c in p] for p in dep.positions]), unit)
    assert abs(scaled / base - 81.0) < 1e-9 * 81.0

    comm = ip.CommParams()
    surrogate = ip.area_rate(points, dep, comm)
    mc = ip.area_rate(points, dep, comm, mc_draws=5000, seed=1)
    assert mc <= surrogate
    assert ip.rate_point([0.0, 0.0, 0.0], dep, comm) > 0.0

    try:
        ip.Deployment([[0, 0, 0], [0, 0, 0]])
    except ValueError:
        pass
    else:
        raise AssertionError("duplicate positions accepted")

    scenario = ip.Scenario.from_json(json.dumps({
        "sensing_region": {"kind": "segment", "anchor_m": [0, 0, 0], "length_m": 400},
        "sensing_samples": [16], "user_samples": [8], "n_bs": 4, "seed": 2,
    }))
    init = scenario.initial_deployment()
    best, trace, converged = scenario.optimize(init=init, max_sweeps=20)
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    a_crlb, rate = scenario.evaluate(best)
    assert abs(a_crlb - trace[-1]) <= 1e-12 * trace[-1]

    cat = ip.Catalog()
    cat.add(scenario, best, optimizer="mm")
    bigger = ip.Scenario.from_json(json.dumps({
        "sensing_region": {"kind": "segment", "anchor_m": [0, 0, 0], "length_m": 800},
        "sensing_samples": [16], "n_bs": 4,
    }))
    mapped, predicted = cat.query(bigger)
    assert abs(predicted / a_crlb - 16.0) < 1e-9 * 16.0
    assert len(mapped) == 4

    print(f"ok: A-CRLB {trace[0]:.4e} -> {a_crlb:.4e} in {len(trace) - 1} steps, "
          f"rate {rate:.3f} bit/s/Hz, converged={converged}")


if __name__ == "__main__":
    main()

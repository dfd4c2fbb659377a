"""Smoke test for the gbbsemi extension module.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/gbbsemi-*.whl
"""

import math

import gbbsemi


def main():
    v = gbbsemi.Valuation(0.3, 0.7)
    a = gbbsemi.PricePair.diagonal(0.5)
    assert gbbsemi.trade_indicator(v, a)
    assert math.isclose(gbbsemi.gft(v, a), 0.4)
    assert gbbsemi.profit(v, a) == 0.0
    assert not gbbsemi.trade_indicator(v, gbbsemi.PricePair(0.5, 0.8))

    try:
        gbbsemi.Valuation(1.2, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range value accepted")

    p = gbbsemi.Params(1_000_000)
    assert (p.K, p.gamma, p.beta) == (4, 0.2, 600000.0)
    assert abs(p.eta - 5.266e-4) < 1e-6

    assert math.isclose(gbbsemi.surrogate_gft(v, 2, 5), 0.6)
    p_star, gft_star = gbbsemi.best_fixed_price([(0.2, 0.8), (0.5, 0.6)])
    assert p_star == 0.5 and math.isclose(gft_star, 0.7)
    assert gbbsemi.k_star(0.35, 4) == 2

    seq = gbbsemi.realize("diagonal-hard", 50, 3)
    assert len(seq) == 50 and all(0 <= s <= 1 and 0 <= b <= 1 for s, b in seq)

    run = gbbsemi.simulate("gbb-semi", "diagonal-hard", 20_000, 7, rounds=True)
    assert run["final_profit"] >= 0
    assert len(run["rounds"]) == 20_000
    again = gbbsemi.simulate("gbb-semi", "diagonal-hard", 20_000, 7, rounds=True)
    assert again == run

    p2 = gbbsemi.simulate("gbb-semi", "interior-spike", 10_000, 1, phase2_only=True)
    assert p2["T_prime"] == 0

    report = gbbsemi.lemma_suite(2000, 1)
    assert all(r["passed"] for r in report), report

    print("gbbsemi smoke test passed")


if __name__ == "__main__":
    main()

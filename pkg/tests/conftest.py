from __future__ import annotations

import pytest

from storval.market import MarketPrices
from storval.wind_process import Beta, TruncatedNormal, Uniform, WindProcessSpec


@pytest.fixture
def uniform24() -> WindProcessSpec:
    return WindProcessSpec.iid(Uniform(), 24)


@pytest.fixture
def beta24() -> WindProcessSpec:
    return WindProcessSpec.iid(Beta(2.0, 5.0), 24)


@pytest.fixture
def two_regime() -> WindProcessSpec:
    return WindProcessSpec.nonstationary([Beta(2.0, 5.0)] * 12 + [TruncatedNormal(0.6, 0.2)] * 12)


@pytest.fixture
def symmetric() -> MarketPrices:
    return MarketPrices(0.0, 1.0, 1.0)

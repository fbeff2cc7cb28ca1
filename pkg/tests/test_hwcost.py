import pytest

from efflif.errors import ConfigError, DivisibilityError
from efflif.hwcost import (HwConfig, dram_membrane_writes, dram_reduction, dram_traffic,
                           lif_unit_count, spike_gen_cycles)
from efflif.network import dense_net, toy4
from efflif.sharing import Kind, SharingScheme

L = SharingScheme(Kind.LAYER)


@pytest.mark.parametrize("ratio, units", [(4, 32), (1, 128), (2, 64), (8, 16)])
def test_lif_units(ratio, units):
    hw = HwConfig(128, ratio)
    assert lif_unit_count(hw) == units
    assert spike_gen_cycles(hw) == ratio
    assert lif_unit_count(hw) * ratio == 128


def test_indivisible():
    with pytest.raises(DivisibilityError):
        lif_unit_count(HwConfig(128, 3))
    with pytest.raises(ConfigError):
        HwConfig(0)


def test_dram_writes():
    spec = toy4()
    assert dram_membrane_writes(spec, 5, None, 1) == 20
    assert dram_membrane_writes(spec, 5, L, 1) == 5
    assert dram_membrane_writes(spec, 5, L, 64) == 64 * 5
    one = dense_net(3, [4], 2, timesteps=1)
    assert dram_membrane_writes(one) == dram_membrane_writes(one, scheme=L) == 1


def test_traffic_reduction_grows_with_batch():
    spec = toy4()
    r = [dram_reduction(spec, L, b, 5) for b in (1, 8, 64, 1024)]
    assert all(a < b for a, b in zip(r, r[1:]))
    assert 0 < r[0] < r[-1] < 0.75
    t = dram_traffic(spec, 5, L, 2)
    assert t.membrane == 2 * 4000 * 5 * 2
